"""Forward evaluation of the parallel CNN, truncation, plug-in classification.

Each of the K sub-networks applies L convolutional layers with the logistic
squasher to the full pixel grid (windows reaching past the grid edge drop the
out-of-grid terms, i.e. zero padding), averages the last layer over the valid
pooling positions, and the network output is the outer-weighted sum of the K
pooled values, accumulated with Kahan compensation in ascending k order.

Internally activations are laid out as (K, channels, B, d1, d2) so that per
sub-network channel mixing is a single contiguous matrix product.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, TopologyError
from .model import Image, Topology, WeightVector

__all__ = ["logistic", "truncate", "forward", "forward_batch", "forward_subnetwork",
           "classify", "classify_batch", "patch_response_oracle", "ActivationCache"]


def logistic(x):
    """Numerically stable 1/(1 + exp(-x)); no overflow for any finite input."""
    arr = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(arr))
    out = np.where(arr >= 0.0, 1.0 / (1.0 + e), e / (1.0 + e))
    return float(out) if np.isscalar(x) or arr.ndim == 0 else out


def _sigmoid_inplace(pre: np.ndarray) -> np.ndarray:
    """Overwrite ``pre`` with its sigmoid via 0.5 tanh(x/2) + 0.5 (one libm
    pass, saturates cleanly, agrees with ``logistic`` to one ulp)."""
    pre *= 0.5
    np.tanh(pre, out=pre)
    pre *= 0.5
    pre += 0.5
    return pre


def truncate(z, beta: float):
    """Clamp to [-beta, beta] (the truncation operator at level beta)."""
    if np.isscalar(z):
        return min(beta, max(-beta, z))
    return np.clip(z, -beta, beta)


def _check_image(pixels: np.ndarray, topology: Topology):
    if pixels.ndim != 2 or pixels.shape != (topology.d1, topology.d2):
        raise DimensionError(
            f"image shape {pixels.shape} does not match topology "
            f"({topology.d1}, {topology.d2})")


def _as_pixels(image, topology: Topology) -> np.ndarray:
    p = image.pixels if isinstance(image, Image) else np.asarray(image, dtype=np.float64)
    _check_image(p, topology)
    return p


def _layer_forward(o_prev, w_r, b_r, d1: int, d2: int):
    """One convolutional layer for all sub-networks.

    o_prev: (K, p, B, d1, d2) activations of the previous layer, or the pixel
    grid (B, d1, d2) for layer 1 (implicit K axis, p = 1).
    w_r: (K, q, p, M, M); b_r: (K, q).  Returns pre-activations (K, q, B, d1, d2).
    """
    K, q, p, M, _ = w_r.shape
    layer1 = o_prev.ndim == 3
    B = o_prev.shape[0] if layer1 else o_prev.shape[2]
    if M == 1:
        if layer1:
            pre = w_r[:, :, 0, 0, 0].reshape(K, q, 1, 1, 1) * o_prev[None, None]
        else:
            flat = o_prev.reshape(K, p, B * d1 * d2)
            pre = np.matmul(w_r[:, :, :, 0, 0], flat).reshape(K, q, B, d1, d2)
    else:
        if layer1:
            pad = np.zeros((B, d1 + M - 1, d2 + M - 1))
            pad[:, :d1, :d2] = o_prev
            pre = np.zeros((K, q, B, d1, d2))
            for t1 in range(M):
                for t2 in range(M):
                    sl = pad[:, t1:t1 + d1, t2:t2 + d2]
                    pre += w_r[:, :, 0, t1, t2].reshape(K, q, 1, 1, 1) * sl[None, None]
        else:
            pad = np.zeros((K, p, B, d1 + M - 1, d2 + M - 1))
            pad[:, :, :, :d1, :d2] = o_prev
            pre = np.zeros((K, q, B, d1, d2))
            for t1 in range(M):
                for t2 in range(M):
                    sl = np.ascontiguousarray(
                        pad[:, :, :, t1:t1 + d1, t2:t2 + d2]).reshape(K, p, B * d1 * d2)
                    pre += np.matmul(w_r[:, :, :, t1, t2], sl).reshape(K, q, B, d1, d2)
    pre += b_r.reshape(K, q, 1, 1, 1)
    return pre


def _run_subnetworks(weights: WeightVector, pixels: np.ndarray, keep: bool = False,
                     keep_pre: bool = False):
    """Pooled sub-network outputs (K, B) for a batch of images (B, d1, d2).

    With ``keep`` also returns the per-layer activations (each
    (K, k_r, B, d1, d2)) needed for backpropagation, and with ``keep_pre``
    additionally the pre-activation sums.
    """
    t = weights.topology
    filters, biases = weights.filters, weights.biases
    o = pixels
    pres, os_ = [], []
    for r in range(1, t.L + 1):
        pre = _layer_forward(o, filters[r - 1], biases[r - 1], t.d1, t.d2)
        if keep_pre:
            pres.append(pre)
            o = _sigmoid_inplace(pre.copy())
        else:
            o = _sigmoid_inplace(pre)
        if keep:
            os_.append(o)
    p1, p2 = t.pool_shape
    pooled = o[:, 0, :, :p1, :p2].mean(axis=(2, 3))
    if keep or keep_pre:
        return pooled, pres, os_
    return pooled


def _kahan_weighted_sum(values: np.ndarray, w: np.ndarray) -> np.ndarray:
    """sum_k w[k] * values[k, :] with Kahan compensation, ascending k."""
    B = values.shape[1]
    s = np.zeros(B)
    c = np.zeros(B)
    for k in range(values.shape[0]):
        y = w[k] * values[k] - c
        tmp = s + y
        c = (tmp - s) - y
        s = tmp
    return s


def forward_batch(weights: WeightVector, pixels: np.ndarray, topology: Topology,
                  chunk: int = 4096) -> np.ndarray:
    """Network values for a batch of images (B, d1, d2) -> (B,)."""
    pixels = np.asarray(pixels, dtype=np.float64)
    if pixels.ndim != 3 or pixels.shape[1:] != (topology.d1, topology.d2):
        raise DimensionError(
            f"pixel batch shape {pixels.shape} does not match topology "
            f"({topology.d1}, {topology.d2})")
    B = pixels.shape[0]
    out = np.empty(B)
    for lo in range(0, B, chunk):
        hi = min(lo + chunk, B)
        pooled = _run_subnetworks(weights, pixels[lo:hi])
        out[lo:hi] = _kahan_weighted_sum(pooled, weights.outer)
    return out


def forward(weights: WeightVector, image, topology: Topology) -> float:
    """Network value f_w(x): outer-weighted sum of the K pooled sub-networks."""
    p = _as_pixels(image, topology)
    return float(forward_batch(weights, p[None], topology)[0])


@dataclass(frozen=True)
class ActivationCache:
    """Per-layer activations of one sub-network on one image.

    ``o[r]`` has shape (d1, d2, k_r) for r = 0..L (``o[0]`` is the pixel grid
    with its single channel); ``pre[r-1]`` holds the sums fed to the squasher
    in layer r.
    """

    o: tuple
    pre: tuple


def forward_subnetwork(weights: WeightVector, k: int, image, topology: Topology):
    """Pooled output of sub-network ``k`` plus its full activation cache."""
    p = _as_pixels(image, topology)
    sub_topology = Topology(L=topology.L, M=topology.M, k=topology.k, K=1,
                            d1=topology.d1, d2=topology.d2, kappa=topology.kappa)
    sub = WeightVector.from_parts(
        sub_topology, np.zeros(1),
        [f[k:k + 1] for f in weights.filters],
        [b[k:k + 1] for b in weights.biases])
    pooled, pres, os_ = _run_subnetworks(sub, p[None], keep=True, keep_pre=True)
    o_list = (p[:, :, None],) + tuple(
        np.ascontiguousarray(np.moveaxis(o[0, :, 0], 0, -1)) for o in os_)
    pre_list = tuple(np.ascontiguousarray(np.moveaxis(q[0, :, 0], 0, -1)) for q in pres)
    return float(pooled[0, 0]), ActivationCache(o=o_list, pre=pre_list)


def classify_batch(weights: WeightVector, pixels: np.ndarray, topology: Topology) -> np.ndarray:
    """Plug-in labels: 1 where f_w(x) >= 1/2, else 0."""
    return (forward_batch(weights, pixels, topology) >= 0.5).astype(np.int64)


def classify(weights: WeightVector, image, topology: Topology) -> int:
    """Plug-in classifier; the boundary value 1/2 maps to class 1."""
    return int(forward(weights, image, topology) >= 0.5)


def patch_response_oracle(weights: WeightVector, k: int, patch, topology: Topology) -> float:
    """Sub-network output as a pure function of one kappa x kappa patch.

    Valid only when the inner windows are all 1x1 (then every pooled term at
    an interior position depends on exactly one patch).  Layer 1 acts as a
    dense map of the patch entries, layers 2..L as 1x1 channel mixes.  Serves
    as the independent oracle for the patch-locality property of
    ``forward_subnetwork``.
    """
    t = topology
    if any(m != 1 for m in t.M[1:t.L]):
        raise TopologyError("patch response requires M_2..M_L = 1")
    z = np.asarray(patch, dtype=np.float64)
    m1 = t.M[0]
    if z.shape != (m1, m1):
        raise DimensionError(f"patch shape {z.shape} must be ({m1}, {m1})")
    w1 = weights.filters[0][k, :, 0]               # (k_1, M1, M1)
    pre = np.zeros(t.k[1])
    for t1 in range(m1):
        for t2 in range(m1):
            pre += w1[:, t1, t2] * z[t1, t2]
    o = logistic(pre + weights.biases[0][k])
    for r in range(2, t.L + 1):
        o = logistic(weights.filters[r - 1][k, :, :, 0, 0] @ o + weights.biases[r - 1][k])
    return float(o[0])
