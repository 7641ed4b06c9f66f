"""Deterministic file formats.

JSON documents render floats with 17 significant digits (``.16e``), so files
round-trip exactly and rerunning a command yields byte-identical output.  The
binary weight dump is a 16-byte header (magic ``OCNNWTS1`` plus the parameter
count as little-endian uint64) followed by the flat float64 vector.
"""

import json
import struct

import numpy as np

from .errors import DomainError
from .model import Topology, WeightVector

__all__ = ["dumps_json", "weights_to_json", "weights_from_json",
           "write_weights_binary", "read_weights_binary"]

MAGIC = b"OCNNWTS1"


def dumps_json(obj) -> str:
    """JSON text with floats at 17 significant digits, insertion-ordered keys."""
    def render(o):
        if isinstance(o, dict):
            return "{" + ", ".join(f"{json.dumps(str(k))}: {render(v)}"
                                   for k, v in o.items()) + "}"
        if isinstance(o, (list, tuple, np.ndarray)):
            return "[" + ", ".join(render(v) for v in o) + "]"
        if isinstance(o, (bool, np.bool_)):
            return "true" if o else "false"
        if isinstance(o, (int, np.integer)):
            return str(int(o))
        if isinstance(o, (float, np.floating)):
            return format(float(o), ".16e")
        if o is None:
            return "null"
        return json.dumps(o)
    return render(obj)


def weights_to_json(weights: WeightVector) -> str:
    t = weights.topology
    doc = {"topology": t.to_json_dict(),
           "outer": list(weights.outer),
           "filters": [v for f in weights.filters for v in f.ravel()],
           "biases": [v for b in weights.biases for v in b.ravel()]}
    return dumps_json(doc) + "\n"


def weights_from_json(text: str) -> WeightVector:
    doc = json.loads(text)
    t = Topology.from_json_dict(doc["topology"])
    flat = np.concatenate([np.asarray(doc["outer"], dtype=np.float64),
                           np.asarray(doc["filters"], dtype=np.float64),
                           np.asarray(doc["biases"], dtype=np.float64)])
    return WeightVector(t, flat)


def write_weights_binary(path, weights: WeightVector):
    data = weights.data.astype("<f8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", data.size))
        fh.write(data.tobytes())


def read_weights_binary(path, topology: Topology) -> WeightVector:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != MAGIC:
            raise DomainError(f"bad magic {magic!r}; expected {MAGIC!r}")
        (count,) = struct.unpack("<Q", fh.read(8))
        flat = np.frombuffer(fh.read(count * 8), dtype="<f8").astype(np.float64)
    return WeightVector(topology, flat)
