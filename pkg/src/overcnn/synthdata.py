"""Synthetic (X, Y) distributions whose a posteriori probability is an
average-pooling model: eta(x) is the mean of a fixed patch function over all
kappa x kappa patch positions, and labels are Bernoulli(eta(X)).

The built-in patch-function family maps [0,1]^(kappa x kappa) into [0,1], so
eta is automatically a probability.  Each kind documents its Hoelder exponent
p and constant C:

* ``constant``        f = c                                  p = 1, C = 1
* ``patch-mean``      f = mean(z)                            p = 1, C = 1/kappa
* ``clipped-affine``  f = sigma(<a, z> + b)                  p = 1, C = ||a||/4
* ``holder-bump``     f = c * min(1, ||z - z0||^(1/2))       p = 1/2, C = c
* ``corner-contrast`` f = (mean(upper-left half-patch)
                           - mean(lower-right) + 1) / 2      p = 1, C = 1/ceil(kappa/2)

Pixel laws: ``uniform-iid`` draws every pixel independently uniform on [0,1];
``smooth-field`` bilinearly interpolates a coarse uniform control grid, which
produces low-frequency, image-like inputs.
"""

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .errors import DimensionError, DomainError
from .model import Dataset, Image

__all__ = ["PatchFunctionSpec", "make_patch_spec", "AvgPoolDistribution",
           "eta", "eta_batch", "eta_loop", "sample_images", "sample_dataset",
           "bayes_classify", "bayes_classifier", "bayes_risk_mc",
           "write_dataset_file", "read_dataset_file"]

MC_IMAGE_LABEL = "risk-mc-images"


@dataclass(frozen=True)
class PatchFunctionSpec:
    """One realized patch function with declared smoothness (p, C)."""

    kind: str
    kappa: int
    params: dict = field(default_factory=dict)
    p: float = 1.0
    C: float = 1.0

    def __call__(self, patches: np.ndarray) -> np.ndarray:
        """Evaluate on an array of patches (..., kappa, kappa) -> (...)."""
        z = np.asarray(patches, dtype=np.float64)
        if z.shape[-2:] != (self.kappa, self.kappa):
            raise DimensionError(
                f"patches must end in ({self.kappa}, {self.kappa}), got {z.shape}")
        if self.kind == "constant":
            return np.full(z.shape[:-2], self.params["value"])
        if self.kind == "patch-mean":
            return z.mean(axis=(-2, -1))
        if self.kind == "clipped-affine":
            a = np.asarray(self.params["a"], dtype=np.float64)
            s = (z * a).sum(axis=(-2, -1)) + self.params["b"]
            e = np.exp(-np.abs(s))
            return np.where(s >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
        if self.kind == "holder-bump":
            z0 = np.asarray(self.params["z0"], dtype=np.float64)
            dist = np.sqrt(((z - z0) ** 2).sum(axis=(-2, -1)))
            return self.params["c"] * np.minimum(1.0, np.sqrt(dist))
        if self.kind == "corner-contrast":
            h = (self.kappa + 1) // 2
            m1 = z[..., :h, :h].mean(axis=(-2, -1))
            m2 = z[..., -h:, -h:].mean(axis=(-2, -1))
            return (m1 - m2 + 1.0) / 2.0
        if self.kind == "custom":
            out = np.asarray(self.params["func"](z), dtype=np.float64)
            if out.min() < 0.0 or out.max() > 1.0:
                warnings.warn("custom patch function left [0, 1]; clamping")
                out = np.clip(out, 0.0, 1.0)
            return out
        raise DomainError(f"unknown patch function kind {self.kind!r}")

    def to_json_dict(self) -> dict:
        if self.kind == "custom":
            raise DomainError("custom patch functions are not serializable")
        params = {k: (v.tolist() if isinstance(v, np.ndarray) else v)
                  for k, v in self.params.items()}
        return {"kind": self.kind, "kappa": self.kappa, "params": params,
                "p": self.p, "C": self.C}


def make_patch_spec(kind: str, kappa: int, **params) -> PatchFunctionSpec:
    """Build a built-in patch function with its documented (p, C)."""
    if kind == "constant":
        v = float(params.get("value", 0.5))
        if not 0.0 <= v <= 1.0:
            raise DomainError("constant value must lie in [0, 1]")
        return PatchFunctionSpec(kind, kappa, {"value": v}, p=1.0, C=1.0)
    if kind == "patch-mean":
        return PatchFunctionSpec(kind, kappa, {}, p=1.0, C=1.0 / kappa)
    if kind == "clipped-affine":
        a = np.asarray(params["a"], dtype=np.float64).reshape(kappa, kappa)
        b = float(params.get("b", 0.0))
        return PatchFunctionSpec(kind, kappa, {"a": a, "b": b},
                                 p=1.0, C=float(np.linalg.norm(a)) / 4.0)
    if kind == "holder-bump":
        z0 = np.asarray(params.get("z0", np.full((kappa, kappa), 0.5)),
                        dtype=np.float64).reshape(kappa, kappa)
        c = float(params.get("c", 1.0))
        if not 0.0 < c <= 1.0:
            raise DomainError("holder-bump scale c must lie in (0, 1]")
        return PatchFunctionSpec(kind, kappa, {"z0": z0, "c": c}, p=0.5, C=c)
    if kind == "corner-contrast":
        return PatchFunctionSpec(kind, kappa, {}, p=1.0,
                                 C=1.0 / ((kappa + 1) // 2))
    if kind == "custom":
        return PatchFunctionSpec(kind, kappa, {"func": params["func"]},
                                 p=float(params.get("p", 1.0)),
                                 C=float(params.get("C", 1.0)))
    raise DomainError(f"unknown patch function kind {kind!r}")


@dataclass(frozen=True)
class AvgPoolDistribution:
    """Distribution of (X, Y) with eta given by the average-pooling model."""

    d1: int
    d2: int
    patch: PatchFunctionSpec
    pixel_law: str = "uniform-iid"
    law_params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.d1 < 2 or self.d2 < 2:
            raise DomainError("d1 and d2 must exceed 1")
        if self.kappa > min(self.d1, self.d2):
            raise DomainError("kappa exceeds min(d1, d2)")
        if self.pixel_law not in ("uniform-iid", "smooth-field"):
            raise DomainError(f"unknown pixel law {self.pixel_law!r}")

    @property
    def kappa(self) -> int:
        return self.patch.kappa

    @property
    def positions(self) -> int:
        return (self.d1 - self.kappa + 1) * (self.d2 - self.kappa + 1)

    def to_json_dict(self) -> dict:
        return {"d1": self.d1, "d2": self.d2, "patch": self.patch.to_json_dict(),
                "pixel_law": self.pixel_law, "law_params": dict(self.law_params)}

    @classmethod
    def from_json_dict(cls, d: dict) -> "AvgPoolDistribution":
        pd = d["patch"]
        patch = make_patch_spec(pd["kind"], int(pd["kappa"]), **pd.get("params", {}))
        return cls(d1=int(d["d1"]), d2=int(d["d2"]), patch=patch,
                   pixel_law=d.get("pixel_law", "uniform-iid"),
                   law_params=d.get("law_params", {}))


# ---------------------------------------------------------------------------
# the regression function eta
# ---------------------------------------------------------------------------

def eta_batch(dist: AvgPoolDistribution, pixels: np.ndarray) -> np.ndarray:
    """Exact eta for a batch (B, d1, d2) -> (B,): patch-function position mean."""
    x = np.asarray(pixels, dtype=np.float64)
    if x.shape[-2:] != (dist.d1, dist.d2):
        raise DimensionError(f"pixel shape {x.shape} does not match ({dist.d1}, {dist.d2})")
    windows = np.lib.stride_tricks.sliding_window_view(
        x, (dist.kappa, dist.kappa), axis=(-2, -1))
    vals = dist.patch(windows)            # (..., d1-kappa+1, d2-kappa+1)
    return vals.mean(axis=(-2, -1))


def eta(dist: AvgPoolDistribution, image) -> float:
    """A posteriori probability of one image (the ground-truth oracle)."""
    p = image.pixels if isinstance(image, Image) else np.asarray(image, dtype=np.float64)
    return float(eta_batch(dist, p[None])[0])


def eta_loop(dist: AvgPoolDistribution, image) -> float:
    """Reference single-pass loop over patches; second code path for tests."""
    p = image.pixels if isinstance(image, Image) else np.asarray(image, dtype=np.float64)
    if p.shape != (dist.d1, dist.d2):
        raise DimensionError("image does not match distribution dimensions")
    kap = dist.kappa
    total = 0.0
    for i in range(dist.d1 - kap + 1):
        for j in range(dist.d2 - kap + 1):
            total += float(dist.patch(p[i:i + kap, j:j + kap]))
    return total / dist.positions


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def _row_width(dist: AvgPoolDistribution) -> int:
    if dist.pixel_law == "uniform-iid":
        return dist.d1 * dist.d2 + 1
    g = int(dist.law_params.get("grid", 3))
    return g * g + 1


def _images_from_rows(dist: AvgPoolDistribution, rows: np.ndarray) -> np.ndarray:
    if dist.pixel_law == "uniform-iid":
        return rows.reshape(-1, dist.d1, dist.d2)
    g = int(dist.law_params.get("grid", 3))
    control = rows.reshape(-1, g, g)
    u = np.arange(dist.d1) * (g - 1) / (dist.d1 - 1)
    v = np.arange(dist.d2) * (g - 1) / (dist.d2 - 1)
    i0 = np.minimum(u.astype(np.int64), g - 2)
    j0 = np.minimum(v.astype(np.int64), g - 2)
    fu = (u - i0)[None, :, None]
    fv = (v - j0)[None, None, :]
    c00 = control[:, i0][:, :, j0]
    c10 = control[:, i0 + 1][:, :, j0]
    c01 = control[:, i0][:, :, j0 + 1]
    c11 = control[:, i0 + 1][:, :, j0 + 1]
    return ((1 - fu) * (1 - fv) * c00 + fu * (1 - fv) * c10
            + (1 - fu) * fv * c01 + fu * fv * c11)


def sample_images(dist: AvgPoolDistribution, m: int, seed: int,
                  label: str = MC_IMAGE_LABEL) -> np.ndarray:
    """m images from the pixel law; image i is a fixed function of (seed, i)."""
    rows = rng.block(seed, label, m, _row_width(dist))
    return _images_from_rows(dist, rows[:, :-1])


def sample_dataset(dist: AvgPoolDistribution, n: int, seed: int) -> Dataset:
    """n i.i.d. pairs (X_i, Y_i) with Y_i ~ Bernoulli(eta(X_i))."""
    if n < 1:
        raise DomainError("n must be at least 1")
    rows = rng.block(seed, "dataset", n, _row_width(dist))
    pixels = _images_from_rows(dist, rows[:, :-1])
    labels = (rows[:, -1] < eta_batch(dist, pixels)).astype(np.int64)
    meta = {"generator": dist.to_json_dict(), "seed": int(seed), "n": int(n)}
    return Dataset(pixels=pixels, labels=labels, meta=meta)


# ---------------------------------------------------------------------------
# Bayes classifier and risk
# ---------------------------------------------------------------------------

def bayes_classify(dist: AvgPoolDistribution, image) -> int:
    """1 iff eta(x) > 1/2 (strict; the boundary maps to class 0)."""
    return int(eta(dist, image) > 0.5)


def bayes_classifier(dist: AvgPoolDistribution):
    """Batch classifier callable (B, d1, d2) -> (B,) for the evaluation module."""
    def classify_pixels(pixels):
        return (eta_batch(dist, pixels) > 0.5).astype(np.int64)
    return classify_pixels


def bayes_risk_mc(dist: AvgPoolDistribution, m: int, seed: int):
    """Monte-Carlo Bayes risk: mean of min(eta, 1 - eta) over m fresh images."""
    if m < 100:
        raise DomainError("m must be at least 100")
    e = eta_batch(dist, sample_images(dist, m, seed))
    vals = np.minimum(e, 1.0 - e)
    return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(m))


# ---------------------------------------------------------------------------
# dataset files: one JSON header line, one CSV header, one row per sample
# ---------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return format(float(x), ".16e")


def write_dataset_file(path, data: Dataset, header_extra: dict = None):
    cols = [f"p_{i}_{j}" for i in range(1, data.d1 + 1) for j in range(1, data.d2 + 1)]
    header = {"spec": data.meta.get("generator"), "seed": data.meta.get("seed"),
              "n": data.n, "d1": data.d1, "d2": data.d2}
    if header_extra:
        header.update(header_extra)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        fh.write("label," + ",".join(cols) + "\n")
        for i in range(data.n):
            row = data.pixels[i].ravel()
            fh.write(str(int(data.labels[i])) + "," + ",".join(map(_fmt, row)) + "\n")


def read_dataset_file(path) -> Dataset:
    with open(path, "r", encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        fh.readline()                      # column header
        labels, pix = [], []
        for line in fh:
            parts = line.rstrip("\n").split(",")
            labels.append(int(parts[0]))
            pix.append([float(v) for v in parts[1:]])
    d1, d2 = int(header["d1"]), int(header["d2"])
    pixels = np.asarray(pix, dtype=np.float64).reshape(-1, d1, d2)
    meta = {"generator": header.get("spec"), "seed": header.get("seed"),
            "n": int(header["n"])}
    return Dataset(pixels=pixels, labels=np.asarray(labels), meta=meta)
