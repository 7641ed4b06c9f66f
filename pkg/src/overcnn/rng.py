"""Counter-based random streams.

All randomness in the package flows from an integer seed through Philox
counter-based generators keyed by SHA-256 of ``(seed, label)``.  A value at a
fixed position of a fixed stream is a pure function of ``(seed, label,
position)``, so results never depend on evaluation order or thread count.

Bulk sampling assigns each logical index (a sample, a trial) a fixed row of a
two-dimensional block.  Rows are padded to a multiple of four doubles because
one Philox counter increment yields four 64-bit outputs; ``row_stream`` can
then reproduce any single row independently via ``advance``.
"""

import hashlib

import numpy as np
from numpy.random import Generator, Philox

__all__ = ["stream", "substream", "block", "row_stream", "derive_seed"]


def _key(seed: int, label: str) -> np.ndarray:
    digest = hashlib.sha256(f"{int(seed)}|{label}".encode()).digest()
    return np.frombuffer(digest[:16], dtype=np.uint64).copy()


def stream(seed: int, label: str) -> Generator:
    """Independent generator for one (seed, purpose-label) pair."""
    return Generator(Philox(key=_key(seed, label)))


def substream(seed: int, label: str, index: int) -> Generator:
    """Independent generator for one indexed unit of work (trial, replication)."""
    return Generator(Philox(key=_key(seed, f"{label}#{int(index)}")))


def _stride(width: int) -> int:
    return 4 * ((width + 3) // 4)


def block(seed: int, label: str, n: int, width: int) -> np.ndarray:
    """(n, width) uniforms in [0, 1); row i is the fixed per-index slice.

    Row i occupies counter positions [i * stride, i * stride + width) of the
    (seed, label) stream, stride = width rounded up to a multiple of 4.
    """
    s = _stride(width)
    out = stream(seed, label).random((n, s))
    return out[:, :width] if s != width else out


def row_stream(seed: int, label: str, index: int, width: int) -> Generator:
    """Generator positioned at row ``index`` of the corresponding block."""
    bg = Philox(key=_key(seed, label))
    bg.advance(int(index) * (_stride(width) // 4))
    return Generator(bg)


def derive_seed(seed: int, label: str) -> int:
    """64-bit child seed for a named sub-experiment."""
    digest = hashlib.sha256(f"{int(seed)}|seed|{label}".encode()).digest()
    return int.from_bytes(digest[:8], "little")
