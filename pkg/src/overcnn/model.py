"""Domain types: images, network topology, weight vectors, hyperparameters.

The weight layout fixes one canonical flattening used everywhere (files,
gradients, updates): outer weights first (sub-network index ascending), then
all convolution filters ordered by (layer, sub-network, out-channel,
in-channel, window row, window column), then all biases ordered by (layer,
sub-network, out-channel).
"""

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from .errors import DomainError

INT64_MAX = 2**63 - 1


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    a.flags.writeable = False
    return a


# ---------------------------------------------------------------------------
# images and datasets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Image:
    """Grey-scale image; ``pixels[i, j]`` is column i, row j, values in [0, 1]."""

    pixels: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.pixels, dtype=np.float64)
        if p.ndim != 2 or p.shape[0] < 2 or p.shape[1] < 2:
            raise DomainError("pixels must be a d1 x d2 array with d1, d2 > 1")
        if not np.all(np.isfinite(p)) or p.min() < 0.0 or p.max() > 1.0:
            raise DomainError("pixel values must lie in [0, 1]")
        object.__setattr__(self, "pixels", _readonly(p))

    @property
    def d1(self) -> int:
        return self.pixels.shape[0]

    @property
    def d2(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True)
class Dataset:
    """Labelled images with provenance (generator identifier, seed, n)."""

    pixels: np.ndarray          # (n, d1, d2) float64
    labels: np.ndarray          # (n,) integers in {0, 1}
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        p = np.asarray(self.pixels, dtype=np.float64)
        y = np.asarray(self.labels)
        if p.ndim != 3:
            raise DomainError("pixels must have shape (n, d1, d2)")
        if y.shape != (p.shape[0],):
            raise DomainError("labels must have shape (n,)")
        if y.size and not np.all((y == 0) | (y == 1)):
            raise DomainError("labels must be exactly 0 or 1")
        object.__setattr__(self, "pixels", _readonly(p))
        object.__setattr__(self, "labels", _readonly(y.astype(np.float64)))

    @property
    def n(self) -> int:
        return self.pixels.shape[0]

    @property
    def d1(self) -> int:
        return self.pixels.shape[1]

    @property
    def d2(self) -> int:
        return self.pixels.shape[2]

    def __getitem__(self, i: int):
        return Image(self.pixels[i]), int(self.labels[i])


# ---------------------------------------------------------------------------
# topology
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Topology:
    """Layer count L, window sizes M_1..M_{L+1}, channels k_0..k_L, K parallel
    sub-networks, input dimensions, patch size kappa."""

    L: int
    M: tuple
    k: tuple
    K: int
    d1: int
    d2: int
    kappa: int

    def __post_init__(self):
        object.__setattr__(self, "M", tuple(int(m) for m in self.M))
        object.__setattr__(self, "k", tuple(int(c) for c in self.k))

    @classmethod
    def theorem1(cls, kappa: int, L: int, K: int, d1: int, d2: int) -> "Topology":
        """Topology with M_1 = M_{L+1} = kappa, M_2..M_L = 1, inner channels 2*kappa^2."""
        M = (kappa,) + (1,) * (L - 1) + (kappa,)
        k = (1,) + (2 * kappa * kappa,) * (L - 1) + (1,)
        return cls(L=L, M=M, k=k, K=K, d1=d1, d2=d2, kappa=kappa)

    @property
    def pool_window(self) -> int:
        return self.M[self.L]

    @property
    def pool_shape(self) -> tuple:
        m = self.pool_window
        return (self.d1 - m + 1, self.d2 - m + 1)

    def to_json_dict(self) -> dict:
        return {"L": self.L, "M": list(self.M), "k": list(self.k),
                "K": self.K, "d1": self.d1, "d2": self.d2, "kappa": self.kappa}

    @classmethod
    def from_json_dict(cls, d: dict) -> "Topology":
        return cls(L=int(d["L"]), M=tuple(d["M"]), k=tuple(d["k"]), K=int(d["K"]),
                   d1=int(d["d1"]), d2=int(d["d2"]), kappa=int(d["kappa"]))


def validate_topology(t: Topology, theorem1_mode: bool = True) -> list:
    """Structural errors as a list of strings; empty means valid.

    With ``theorem1_mode`` the window/channel pattern M_1 = M_{L+1} = kappa,
    M_2 = ... = M_L = 1, k_1 = ... = k_{L-1} = 2*kappa^2 is enforced on top of
    the basic range checks.
    """
    errors = []
    if t.L < 2:
        errors.append("L must be at least 2")
    if t.K < 1:
        errors.append("K must be at least 1")
    if t.d1 < 2 or t.d2 < 2:
        errors.append("d1 and d2 must exceed 1")
    if len(t.M) != t.L + 1:
        errors.append("M must have L+1 entries")
    if len(t.k) != t.L + 1:
        errors.append("k must have L+1 entries")
    dmin = min(t.d1, t.d2)
    if t.kappa < 1 or t.kappa > dmin:
        errors.append("kappa exceeds min(d1, d2)" if t.kappa >= 1 else "kappa must be positive")
    if any(m < 1 or m > dmin for m in t.M):
        errors.append("window sizes must lie in {1..min(d1, d2)}")
    if len(t.k) == t.L + 1 and (t.k[0] != 1 or t.k[t.L] != 1):
        errors.append("k_0 and k_L must equal 1")
    if theorem1_mode and len(t.M) == t.L + 1 and len(t.k) == t.L + 1:
        if t.M[0] != t.kappa or t.M[t.L] != t.kappa:
            errors.append("M_1 and M_{L+1} must equal kappa")
        if any(m != 1 for m in t.M[1:t.L]):
            errors.append("M_2..M_L must equal 1")
        if any(c != 2 * t.kappa * t.kappa for c in t.k[1:t.L]):
            errors.append("k_1..k_{L-1} must equal 2*kappa^2")
    return errors


def parameter_count(t: Topology) -> int:
    """Total length of the flattened weight vector."""
    total = t.K
    for r in range(1, t.L + 1):
        total += t.K * (t.M[r - 1] ** 2 * t.k[r - 1] * t.k[r] + t.k[r])
    return total


def layer_slices(t: Topology):
    """(filter_slices, bias_slices) into the flat vector, per layer r = 1..L.

    Filter block r reshapes to (K, k_r, k_{r-1}, M_r, M_r); bias block r to
    (K, k_r).
    """
    filters, biases = [], []
    off = t.K
    for r in range(1, t.L + 1):
        size = t.K * t.M[r - 1] ** 2 * t.k[r - 1] * t.k[r]
        filters.append(slice(off, off + size))
        off += size
    for r in range(1, t.L + 1):
        size = t.K * t.k[r]
        biases.append(slice(off, off + size))
        off += size
    return filters, biases


# ---------------------------------------------------------------------------
# weight vectors
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WeightVector:
    """All network weights as one flat float64 vector plus structured views."""

    topology: Topology
    data: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float64)
        expected = parameter_count(self.topology)
        if d.shape != (expected,):
            raise DomainError(
                f"flat weight vector must have length {expected}, got {d.shape}")
        object.__setattr__(self, "data", _readonly(d))

    @classmethod
    def zeros(cls, topology: Topology) -> "WeightVector":
        return cls(topology, np.zeros(parameter_count(topology)))

    @classmethod
    def from_parts(cls, topology: Topology, outer, filters, biases) -> "WeightVector":
        t = topology
        parts = [np.asarray(outer, dtype=np.float64).reshape(t.K)]
        for r in range(1, t.L + 1):
            shape = (t.K, t.k[r], t.k[r - 1], t.M[r - 1], t.M[r - 1])
            parts.append(np.asarray(filters[r - 1], dtype=np.float64).reshape(shape).ravel())
        for r in range(1, t.L + 1):
            parts.append(np.asarray(biases[r - 1], dtype=np.float64).reshape(t.K, t.k[r]).ravel())
        return cls(topology, np.concatenate(parts))

    @property
    def outer(self) -> np.ndarray:
        return self.data[:self.topology.K]

    @property
    def filters(self) -> tuple:
        t = self.topology
        fs, _ = layer_slices(t)
        return tuple(
            self.data[fs[r - 1]].reshape(t.K, t.k[r], t.k[r - 1], t.M[r - 1], t.M[r - 1])
            for r in range(1, t.L + 1))

    @property
    def biases(self) -> tuple:
        t = self.topology
        _, bs = layer_slices(t)
        return tuple(self.data[bs[r - 1]].reshape(t.K, t.k[r]) for r in range(1, t.L + 1))


class Gradient(WeightVector):
    """Gradient of the penalized risk; shares the weight-vector layout."""


# ---------------------------------------------------------------------------
# hyperparameters
# ---------------------------------------------------------------------------

DEFAULT_CONSTANTS = {"c2": 1.0, "c3": 1.0, "c4": 0.1, "c5": 5.0}


@dataclass(frozen=True)
class HyperParams:
    n: int
    kappa: int
    L: int
    tau: float
    K_n: int
    L_n: int
    t_n: int
    c2: float = 1.0
    c3: float = 1.0
    c4: float = 0.1
    c5: float = 5.0
    mode: str = "desk"

    def __post_init__(self):
        if self.c4 <= 0 or self.c5 <= 0:
            raise DomainError("c4 and c5 must be positive")
        if Fraction(self.c5) < 1 / (2 * Fraction(self.c4)):
            raise DomainError("c5 must be at least 1/(2*c4)")
        if self.L_n < 1 or self.K_n < 1 or self.t_n < 0:
            raise DomainError("K_n, L_n must be positive and t_n nonnegative")

    @property
    def lambda_n(self) -> float:
        """Step size 1/L_n as a float64 (used verbatim in the update)."""
        return 1.0 / self.L_n

    @property
    def lambda_exact(self) -> Fraction:
        """Exact step size; lambda_exact * L_n == 1 identically."""
        return Fraction(1, self.L_n)

    @classmethod
    def desk(cls, n, kappa, L, K_n, L_n, t_n, tau=None, **constants) -> "HyperParams":
        c = dict(DEFAULT_CONSTANTS)
        c.update(constants)
        if tau is None:
            tau = 1.0 / (1.0 + kappa * kappa)
        return cls(n=int(n), kappa=int(kappa), L=int(L), tau=float(tau),
                   K_n=int(K_n), L_n=int(L_n), t_n=int(t_n), mode="desk", **c)

    def to_json_dict(self) -> dict:
        return {"n": self.n, "kappa": self.kappa, "L": self.L, "tau": self.tau,
                "K_n": self.K_n, "L_n": self.L_n, "lambda_n": self.lambda_n,
                "t_n": self.t_n, "c2": self.c2, "c3": self.c3, "c4": self.c4,
                "c5": self.c5, "mode": self.mode}

    @classmethod
    def from_json_dict(cls, d: dict) -> "HyperParams":
        return cls(n=int(d["n"]), kappa=int(d["kappa"]), L=int(d["L"]),
                   tau=float(d["tau"]), K_n=int(d["K_n"]), L_n=int(d["L_n"]),
                   t_n=int(d["t_n"]), c2=float(d["c2"]), c3=float(d["c3"]),
                   c4=float(d["c4"]), c5=float(d["c5"]), mode=str(d["mode"]))


def _ceil_int_times_float(big: int, x: float) -> int:
    """ceil(big * x) computed exactly (x taken at its binary64 value)."""
    return math.ceil(big * Fraction(x))


def derive_theorem1_hyperparams(n: int, kappa: int, L: int,
                                constants: Optional[dict] = None) -> HyperParams:
    """Theory-mode schedule: tau = 1/(1+kappa^2), K_n = ceil(n^(2 kappa^2 + 7) log n),
    L_n = ceil((log n)^(6L+2) K_n^(3/2)), lambda_n = 1/L_n, t_n = ceil(c5 log(n) L_n).

    All intermediate arithmetic is exact (integer/rational); quantities beyond
    the 64-bit integer range raise OverflowError instead of wrapping.
    """
    c = dict(DEFAULT_CONSTANTS)
    if constants:
        c.update(constants)
    if n < 3:
        raise DomainError("n must be at least 3 so that log n > 1")
    if kappa < 1:
        raise DomainError("kappa must be a positive integer")
    if L < 2:
        raise DomainError("L must be at least 2")
    if Fraction(c["c5"]) < 1 / (2 * Fraction(c["c4"])):
        raise DomainError("c5 must be at least 1/(2*c4)")

    log_n = Fraction(math.log(n))
    tau = 1.0 / (1.0 + kappa * kappa)

    K_n = math.ceil(n ** (2 * kappa * kappa + 7) * log_n)
    if K_n > INT64_MAX:
        raise OverflowError(f"K_n = {K_n} exceeds the 64-bit integer range")

    # L_n = ceil(f * K_n^(3/2)) with f rational: smallest m with m^2 >= f^2 K_n^3.
    f2_num, f2_den = (log_n ** (2 * (6 * L + 2))).as_integer_ratio()
    target_num = f2_num * K_n ** 3
    m = math.isqrt(target_num // f2_den)
    while m * m * f2_den < target_num:
        m += 1
    L_n = m
    if L_n > INT64_MAX:
        raise OverflowError(f"L_n = {L_n} exceeds the 64-bit integer range")

    t_n = math.ceil(Fraction(c["c5"]) * log_n * L_n)
    if t_n > INT64_MAX:
        raise OverflowError(f"t_n = {t_n} exceeds the 64-bit integer range")

    return HyperParams(n=n, kappa=kappa, L=L, tau=tau, K_n=K_n, L_n=L_n,
                       t_n=t_n, mode="theory", **c)
