"""Penalized empirical risk, its exact gradient, and independent oracles.

The gradient is assembled by reverse accumulation through the convolution
recursion, reusing one forward activation cache per sample chunk.  Outer
weights receive (2/n) sum_i (f(X_i) - Y_i) * subnet_k(X_i) + 2 c4 w_k; inner
weights receive the residual-weighted, outer-weight-scaled adjoints of the
pooled output, so with all outer weights zero every inner partial is exactly
zero.

``fd_gradient`` is the independent central-difference oracle.  Coordinates
whose double-precision difference quotient is too small to be trusted (the
cancellation noise of F at h = 1e-5 is ~1e-11) are recomputed with an
80-bit extended-precision risk evaluation built on a separate, non-padded
forward implementation.
"""

import warnings

import numpy as np

from . import rng
from .errors import DomainError, EmptyDatasetError
from .model import Dataset, Gradient, Topology, WeightVector, layer_slices, parameter_count
from .network import _kahan_weighted_sum, _run_subnetworks, forward_batch

__all__ = ["empirical_risk", "penalized_risk", "grad_penalized_risk", "risk_and_grad",
           "fd_gradient", "estimate_gradient_lipschitz", "lipschitz_estimate"]

_CHUNK = 1024


def _check(data: Dataset, topology: Topology):
    if data.n == 0:
        raise EmptyDatasetError("dataset has no samples")
    if (data.d1, data.d2) != (topology.d1, topology.d2):
        raise DomainError("dataset dimensions do not match topology")


def empirical_risk(weights: WeightVector, data: Dataset, topology: Topology) -> float:
    """Mean squared error (1/n) sum |Y_i - f_w(X_i)|^2."""
    _check(data, topology)
    preds = forward_batch(weights, data.pixels, topology)
    return float(np.mean((data.labels - preds) ** 2))


def penalized_risk(weights: WeightVector, data: Dataset, topology: Topology,
                   c4: float) -> float:
    """Empirical risk plus the ridge penalty c4 * sum_k w_k^2 on outer weights."""
    outer = weights.outer
    return empirical_risk(weights, data, topology) + c4 * float(outer @ outer)


def risk_and_grad(weights: WeightVector, data: Dataset, topology: Topology,
                  c4: float):
    """Penalized risk and its full gradient from one forward/backward sweep.

    Non-finite values (weights far outside the stable region) propagate to the
    output, where the training loop turns them into ``NonFiniteError``.
    """
    _check(data, topology)
    with np.errstate(over="ignore", invalid="ignore"):
        return _risk_and_grad_impl(weights, data, topology, c4)


def _risk_and_grad_impl(weights: WeightVector, data: Dataset, topology: Topology,
                        c4: float):
    t = topology
    n = data.n
    flat = np.zeros(parameter_count(t))
    fslices, bslices = layer_slices(t)
    g_filters = [flat[s].reshape(t.K, t.k[r + 1], t.k[r], t.M[r], t.M[r])
                 for r, s in enumerate(fslices)]
    g_biases = [flat[s].reshape(t.K, t.k[r + 1]) for r, s in enumerate(bslices)]
    g_outer = flat[:t.K]

    filters = weights.filters
    sq_sum = 0.0
    p1, p2 = t.pool_shape
    npool = p1 * p2
    for lo in range(0, n, _CHUNK):
        hi = min(lo + _CHUNK, n)
        x = data.pixels[lo:hi]
        y = data.labels[lo:hi]
        B = hi - lo
        pooled, _, os_ = _run_subnetworks(weights, x, keep=True)
        resid = _kahan_weighted_sum(pooled, weights.outer) - y
        sq_sum += float(resid @ resid)
        g_outer += (2.0 / n) * (pooled @ resid)

        # adjoint of the pooled sub-network outputs
        alpha = (2.0 / n) * weights.outer[:, None] * resid[None, :]   # (K, B)
        adj = np.zeros((t.K, 1, B, t.d1, t.d2))
        adj[:, 0, :, :p1, :p2] = (alpha / npool)[:, :, None, None]
        for r in range(t.L, 0, -1):
            o_r = os_[r - 1]
            adj_pre = 1.0 - o_r
            adj_pre *= o_r
            adj_pre *= adj                                             # (K, q, B, d1, d2)
            g_biases[r - 1] += adj_pre.sum(axis=(2, 3, 4))
            q, p, M = t.k[r], t.k[r - 1], t.M[r - 1]
            ap_flat = adj_pre.reshape(t.K, q, B * t.d1 * t.d2)
            if r == 1:
                if M == 1:
                    g_filters[0][:, :, 0, 0, 0] += ap_flat @ x.ravel()
                else:
                    pad = np.zeros((B, t.d1 + M - 1, t.d2 + M - 1))
                    pad[:, :t.d1, :t.d2] = x
                    for t1 in range(M):
                        for t2 in range(M):
                            sl = pad[:, t1:t1 + t.d1, t2:t2 + t.d2].ravel()
                            g_filters[0][:, :, 0, t1, t2] += ap_flat @ sl
                break
            o_prev = os_[r - 2]
            op_flat = o_prev.reshape(t.K, p, B * t.d1 * t.d2)
            w_r = filters[r - 1]
            if M == 1:
                g_filters[r - 1][:, :, :, 0, 0] += np.matmul(
                    ap_flat, op_flat.transpose(0, 2, 1))
                adj = np.matmul(w_r[:, :, :, 0, 0].transpose(0, 2, 1),
                                ap_flat).reshape(t.K, p, B, t.d1, t.d2)
            else:
                opad = np.zeros((t.K, p, B, t.d1 + M - 1, t.d2 + M - 1))
                opad[:, :, :, :t.d1, :t.d2] = o_prev
                adj_pad = np.zeros_like(opad)
                for t1 in range(M):
                    for t2 in range(M):
                        sl = np.ascontiguousarray(
                            opad[:, :, :, t1:t1 + t.d1, t2:t2 + t.d2]).reshape(
                                t.K, p, B * t.d1 * t.d2)
                        g_filters[r - 1][:, :, :, t1, t2] += np.matmul(
                            ap_flat, sl.transpose(0, 2, 1))
                        adj_pad[:, :, :, t1:t1 + t.d1, t2:t2 + t.d2] += np.matmul(
                            w_r[:, :, :, t1, t2].transpose(0, 2, 1), ap_flat).reshape(
                                t.K, p, B, t.d1, t.d2)
                adj = np.ascontiguousarray(adj_pad[:, :, :, :t.d1, :t.d2])

    g_outer += 2.0 * c4 * weights.outer
    value = sq_sum / n + c4 * float(weights.outer @ weights.outer)
    return value, Gradient(t, flat)


def grad_penalized_risk(weights: WeightVector, data: Dataset, topology: Topology,
                        c4: float) -> Gradient:
    """Exact gradient of the penalized risk (reverse accumulation)."""
    return risk_and_grad(weights, data, topology, c4)[1]


# ---------------------------------------------------------------------------
# independent finite-difference oracle
# ---------------------------------------------------------------------------

def naive_penalized_risk(flat: np.ndarray, data: Dataset, topology: Topology,
                         c4: float, dtype=np.float64) -> float:
    """Straight-line reimplementation of the penalized risk, any float dtype.

    Per-sample, per-sub-network evaluation using slice arithmetic instead of
    padding; kept structurally independent of the main engine so it can serve
    as a second opinion (and run in extended precision).
    """
    _check(data, topology)
    t = topology
    w = WeightVector(t, np.asarray(flat, dtype=np.float64))
    filters = [f.astype(dtype) for f in w.filters]
    biases = [b.astype(dtype) for b in w.biases]
    outer = w.outer.astype(dtype)
    p1, p2 = t.pool_shape
    total = dtype(0.0)
    with np.errstate(over="ignore"):
        for i in range(data.n):
            x = data.pixels[i].astype(dtype)
            f_val = dtype(0.0)
            for k in range(t.K):
                o = x[:, :, None]
                for r in range(1, t.L + 1):
                    M = t.M[r - 1]
                    pre = np.zeros((t.d1, t.d2, t.k[r]), dtype=dtype) + biases[r - 1][k]
                    for t1 in range(M):
                        for t2 in range(M):
                            pre[:t.d1 - t1, :t.d2 - t2, :] += (
                                o[t1:, t2:, :] @ filters[r - 1][k, :, :, t1, t2].T)
                    o = 1.0 / (1.0 + np.exp(-pre))
                o_val = o[:p1, :p2, 0].mean(dtype=dtype)
                f_val = f_val + outer[k] * o_val
            r_i = dtype(data.labels[i]) - f_val
            total = total + r_i * r_i
    # returned at full working precision so differences keep their accuracy
    return total / dtype(data.n) + dtype(c4) * (outer @ outer)


def fd_gradient(weights: WeightVector, data: Dataset, topology: Topology, c4: float,
                h: float, refine_below: float = 1e-3) -> Gradient:
    """Central differences (F(w + h e_p) - F(w - h e_p)) / (2h) per parameter.

    Coordinates whose double-precision quotient has magnitude below
    ``refine_below`` are recomputed with the extended-precision naive risk
    (set ``refine_below=0`` to disable).  Cost is O(P) risk evaluations;
    intended for small parameter counts.
    """
    if not 1e-8 <= h <= 1e-3:
        raise DomainError("h must lie in [1e-8, 1e-3]")
    P = parameter_count(topology)
    if P > 10**5:
        warnings.warn(f"fd_gradient over {P} parameters will be very slow")
    base = weights.data
    out = np.empty(P)
    for p in range(P):
        wp = base.copy()
        wp[p] = base[p] + h
        wm = base.copy()
        wm[p] = base[p] - h
        fp = penalized_risk(WeightVector(topology, wp), data, topology, c4)
        fm = penalized_risk(WeightVector(topology, wm), data, topology, c4)
        out[p] = (fp - fm) / (2.0 * h)
    if refine_below > 0:
        for p in np.nonzero(np.abs(out) < refine_below)[0]:
            wp = base.copy()
            wp[p] = base[p] + h
            wm = base.copy()
            wm[p] = base[p] - h
            fp = naive_penalized_risk(wp, data, topology, c4, dtype=np.longdouble)
            fm = naive_penalized_risk(wm, data, topology, c4, dtype=np.longdouble)
            out[p] = float((fp - fm) / np.longdouble(2.0 * h))
    return Gradient(topology, out)


# ---------------------------------------------------------------------------
# empirical Lipschitz estimation
# ---------------------------------------------------------------------------

def lipschitz_estimate(grad_fn, center: np.ndarray, trials: int, radius: float,
                       seed: int) -> float:
    """max ||grad(a) - grad(b)|| / ||a - b|| over sampled pairs in the ball.

    Each trial probes one random base point with a random direction, the
    gradient direction (where descent steps actually move), and two power-
    iteration refinements of the local curvature direction; the estimate is
    the max over all probes.  It is a lower bound on the true ball constant
    and is monotone in ``trials``.
    """
    if trials < 1:
        raise DomainError("trials must be at least 1")
    center = np.asarray(center, dtype=np.float64)
    P = center.size
    best = 0.0
    for trial in range(trials):
        g = rng.substream(seed, "lipschitz", trial)
        direction = g.standard_normal(P)
        norm = np.linalg.norm(direction)
        while norm == 0.0:
            direction = g.standard_normal(P)
            norm = np.linalg.norm(direction)
        a = center + radius * (g.random() ** (1.0 / P)) * direction / norm
        ga = grad_fn(a)
        eps = radius * 10.0 ** g.uniform(-4.0, -1.0)

        def probe(d):
            nonlocal best
            nd = np.linalg.norm(d)
            if nd == 0.0:
                return None
            b = a + eps * d / nd
            shift = b - center
            sn = np.linalg.norm(shift)
            if sn > radius:
                b = center + radius * shift / sn
            delta = np.linalg.norm(b - a)
            if delta == 0.0:
                return None
            gb = grad_fn(b)
            best = max(best, float(np.linalg.norm(gb - ga) / delta))
            return gb

        d = g.standard_normal(P)
        while np.linalg.norm(d) == 0.0:
            d = g.standard_normal(P)
        gb = probe(d)
        probe(-ga)
        for _ in range(2):
            if gb is None:
                break
            d = gb - ga
            gb = probe(d)
    return best


def estimate_gradient_lipschitz(weights: WeightVector, data: Dataset,
                                topology: Topology, c4: float, trials: int,
                                radius: float, seed: int) -> float:
    """Empirical local Lipschitz constant of the penalized-risk gradient."""
    def grad_fn(flat):
        return risk_and_grad(WeightVector(topology, flat), data, topology, c4)[1].data
    return lipschitz_estimate(grad_fn, weights.data, trials, radius, seed)
