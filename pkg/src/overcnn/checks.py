"""Reusable verification batteries behind both the CLI ``check`` command and
the acceptance suite.

Each battery returns a JSON-friendly report with a top-level ``passed`` flag.
The desk fixture used by the trajectory batteries: a 4x4 grid, kappa = 1,
L = 2, K = 64 sub-networks, n = 100 samples of the patch-mean target on
uniform pixels, 500 descent steps at step size 1/L_n with L_n four times the
empirical Lipschitz estimate around the initialization.
"""

import math
import time

import numpy as np

from . import rng
from .evaluation import check_lemma1
from .gradients import estimate_gradient_lipschitz, fd_gradient, grad_penalized_risk
from .model import Dataset, HyperParams, Topology, WeightVector, parameter_count
from .synthdata import AvgPoolDistribution, make_patch_spec, sample_dataset
from .training import audit_lemma2, init_weights, pl_inequality_check, train

__all__ = ["gradient_check_suite", "lemma7_suite", "lemma2_suite", "lemma1_suite",
           "ks_uniform", "initialization_check", "desk_fixture", "SUITES"]


# ---------------------------------------------------------------------------
# gradient oracle battery
# ---------------------------------------------------------------------------

def _random_config(g, max_P: int):
    """One random small configuration with moderate pre-activations.

    Outer weights are bounded away from zero and pixels away from the cube
    edges so no gradient coordinate is degenerate for the finite-difference
    comparison.
    """
    while True:
        kappa = int(g.integers(1, 3))
        d1 = int(g.integers(max(2, kappa), 5))
        d2 = int(g.integers(max(2, kappa), 5))
        L = int(g.integers(2, 4))
        K = int(g.integers(1, 9))
        n = int(g.integers(1, 17))
        t = Topology.theorem1(kappa=kappa, L=L, K=K, d1=d1, d2=d2)
        if parameter_count(t) <= max_P:
            break
    P = parameter_count(t)
    flat = g.uniform(-0.8, 0.8, P)
    signs = np.where(g.random(K) < 0.5, -1.0, 1.0)
    flat[:K] = signs * g.uniform(0.3, 1.2, K)
    weights = WeightVector(t, flat)
    pixels = g.uniform(0.1, 0.9, (n, d1, d2))
    labels = (g.random(n) < 0.5).astype(np.int64)
    data = Dataset(pixels=pixels, labels=labels, meta={"generator": "gradcheck"})
    c4 = float(g.uniform(0.02, 0.5))
    return weights, data, t, c4


def gradient_check_suite(n_configs: int = 100, seed: int = 7021, h: float = 1e-5,
                         tol: float = 1e-6, max_P: int = 2000) -> dict:
    """Analytic gradient against central differences on random configurations."""
    t0 = time.perf_counter()
    worst = 0.0
    configs = []
    for i in range(n_configs):
        g = rng.substream(seed, "gradcheck", i)
        weights, data, topo, c4 = _random_config(g, max_P)
        analytic = grad_penalized_risk(weights, data, topo, c4).data
        fd = fd_gradient(weights, data, topo, c4, h).data
        denom = np.maximum(1e-8, np.abs(analytic) + np.abs(fd))
        rel = float(np.max(np.abs(analytic - fd) / denom))
        worst = max(worst, rel)
        configs.append({"index": i, "P": parameter_count(topo),
                        "n": data.n, "max_rel_error": rel, "passed": rel < tol})
    return {"suite": "gradients", "configs": configs, "n_configs": n_configs,
            "h": h, "tol": tol, "max_rel_error": worst,
            "seconds": time.perf_counter() - t0,
            "passed": bool(worst < tol)}


# ---------------------------------------------------------------------------
# PL-inequality battery (the lemma7 suite)
# ---------------------------------------------------------------------------

def lemma7_suite(n_instances: int = 50, seed: int = 7027) -> dict:
    """PL inequality on random ridge instances plus the closed-form scalar case."""
    t0 = time.perf_counter()
    results = []
    # scalar case: B = 1, y = 1, c27 = 1; optimum 1/2; at a = 0 LHS 4 >= RHS 2
    scalar = pl_inequality_check(np.ones((1, 1)), np.ones(1), 1.0,
                                 [np.zeros(1), np.full(1, 0.5)])
    scalar_probe = scalar["probes"][0]
    scalar_ok = (scalar["passed"] and scalar_probe["lhs"] == 4.0
                 and scalar_probe["rhs"] == 2.0 and scalar["F_opt"] == 0.5)
    results.append({"instance": "scalar", "passed": bool(scalar_ok),
                    "lhs": scalar_probe["lhs"], "rhs": scalar_probe["rhs"]})
    for i in range(n_instances):
        g = rng.substream(seed, "lemma7", i)
        n = int(g.integers(1, 21))
        K = int(g.integers(1, 21))
        B = g.uniform(-2.0, 2.0, (n, K))
        y = g.uniform(0.0, 1.0, n)
        c27 = float(g.uniform(0.05, 2.0))
        probes = [g.normal(0.0, s, K) for s in (0.3, 1.0, 3.0)]
        rep = pl_inequality_check(B, y, c27, probes)
        results.append({"instance": i, "passed": rep["passed"],
                        "oracle_residual": rep["oracle_residual"]})
    return {"suite": "lemma7", "instances": results,
            "seconds": time.perf_counter() - t0,
            "passed": all(r["passed"] for r in results)}


# ---------------------------------------------------------------------------
# desk fixture and trajectory batteries
# ---------------------------------------------------------------------------

def desk_fixture(seed: int, n: int = 100, K: int = 64, t_n: int = 500,
                 kappa: int = 1, L: int = 2, d: int = 4,
                 target: str = "patch-mean", lipschitz_trials: int = 200,
                 L_n: int = None, ln_factor: float = 4.0):
    """Sample data, size L_n from the Lipschitz estimate, and train."""
    patch = make_patch_spec(target, kappa) if target != "constant" \
        else make_patch_spec("constant", kappa, value=0.3)
    dist = AvgPoolDistribution(d1=d, d2=d, patch=patch)
    data = sample_dataset(dist, n, rng.derive_seed(seed, "fixture-data"))
    topology = Topology.theorem1(kappa=kappa, L=L, K=K, d1=d, d2=d)
    hp0 = HyperParams.desk(n=n, kappa=kappa, L=L, K_n=K, L_n=1, t_n=0)
    w0 = init_weights(topology, hp0, rng.derive_seed(seed, "fixture-init"))
    lip = estimate_gradient_lipschitz(
        w0, data, topology, hp0.c4, trials=lipschitz_trials, radius=1.0,
        seed=rng.derive_seed(seed, "fixture-lipschitz"))
    if L_n is None:
        L_n = max(1, math.ceil(ln_factor * lip))
    hp = HyperParams.desk(n=n, kappa=kappa, L=L, K_n=K, L_n=L_n, t_n=t_n)
    weights, trace = train(data, topology, hp, rng.derive_seed(seed, "fixture-init"))
    return {"dist": dist, "data": data, "topology": topology, "hp": hp,
            "weights": weights, "trace": trace, "lipschitz": lip}


def lemma2_suite(n_runs: int = 10, seed: int = 7022, t_n: int = 500,
                 L_n: int = None, ln_factor: float = 4.0) -> dict:
    """Audit the descent-lemma inequalities on seeded desk training runs."""
    t0 = time.perf_counter()
    runs = []
    for i in range(n_runs):
        fx = desk_fixture(rng.derive_seed(seed, f"lemma2:{i}"), t_n=t_n,
                          L_n=L_n, ln_factor=ln_factor)
        rep = audit_lemma2(fx["trace"], fx["hp"].L_n)
        entry = {"run": i, "L_n": fx["hp"].L_n,
                 "lipschitz_estimate": fx["lipschitz"],
                 "initial_risk": float(fx["trace"].risk[0]),
                 "final_risk": float(fx["trace"].risk[-1]),
                 "passed": rep["passed"]}
        if not rep["passed"]:
            entry["audit"] = {k: rep[k] for k in
                              ("descent", "displacement", "squared_steps")}
            if "interpretation" in rep:
                entry["interpretation"] = rep["interpretation"]
        runs.append(entry)
    return {"suite": "lemma2", "runs": runs,
            "seconds": time.perf_counter() - t0,
            "passed": all(r["passed"] for r in runs)}


def lemma1_suite(seed: int = 7023, m: int = 100000) -> dict:
    """Plug-in bound on trained fixtures and the zero-weight estimate."""
    t0 = time.perf_counter()
    entries = []
    for name, target in (("trained-patch-mean", "patch-mean"),
                         ("trained-constant", "constant")):
        fx = desk_fixture(rng.derive_seed(seed, name), target=target,
                          lipschitz_trials=50)
        rep = check_lemma1(fx["weights"], fx["topology"], fx["dist"], m,
                           rng.derive_seed(seed, f"{name}-eval"))
        entries.append({"fixture": name, **rep})
    dist = AvgPoolDistribution(d1=4, d2=4, patch=make_patch_spec("constant", 1, value=0.3))
    topo = Topology.theorem1(kappa=1, L=2, K=8, d1=4, d2=4)
    rep = check_lemma1(WeightVector.zeros(topo), topo, dist, m,
                       rng.derive_seed(seed, "zero-eval"))
    entries.append({"fixture": "zero-weights-constant", **rep})
    return {"suite": "lemma1", "fixtures": entries, "m": m,
            "seconds": time.perf_counter() - t0,
            "passed": all(e["passed"] for e in entries)}


# ---------------------------------------------------------------------------
# initialization distribution check
# ---------------------------------------------------------------------------

def ks_uniform(values: np.ndarray, lo: float, hi: float) -> float:
    """Kolmogorov-Smirnov distance of a sample to Uniform[lo, hi]."""
    x = np.sort(np.asarray(values, dtype=np.float64))
    n = x.size
    cdf = (x - lo) / (hi - lo)
    up = np.arange(1, n + 1) / n
    down = np.arange(0, n) / n
    return float(max(np.max(up - cdf), np.max(cdf - down)))


def initialization_check(seed: int = 7026, min_samples: int = 10**6) -> dict:
    """Outer weights exactly zero; layer groups uniform in their stated ranges."""
    kappa, L = 2, 3
    t_probe = Topology.theorem1(kappa=kappa, L=L, K=1, d1=4, d2=4)
    per_subnet = parameter_count(t_probe) - 1
    K = -(-min_samples // per_subnet)
    t = Topology.theorem1(kappa=kappa, L=L, K=K, d1=4, d2=4)
    n = 1000
    hp = HyperParams.desk(n=n, kappa=kappa, L=L, K_n=K, L_n=1, t_n=0)
    w = init_weights(t, hp, seed)
    log_n2 = math.log(n) ** 2
    b1 = hp.c3 * log_n2 * n ** hp.tau
    bdeep = hp.c2 * log_n2
    layer1 = np.concatenate([w.filters[0].ravel(), w.biases[0].ravel()])
    deep = np.concatenate([w.filters[r].ravel() for r in range(1, L)]
                          + [w.biases[r].ravel() for r in range(1, L)])
    report = {
        "sampled": int(layer1.size + deep.size),
        "outer_all_zero": bool(np.all(w.outer == 0.0)),
        "layer1_in_range": bool(np.all(np.abs(layer1) <= b1)),
        "deep_in_range": bool(np.all(np.abs(deep) <= bdeep)),
        "layer1_ks": ks_uniform(layer1, -b1, b1),
        "deep_ks": ks_uniform(deep, -bdeep, bdeep),
        "layer1_bound": b1, "deep_bound": bdeep,
    }
    report["passed"] = (report["outer_all_zero"] and report["layer1_in_range"]
                        and report["deep_in_range"]
                        and report["layer1_ks"] < 0.01 and report["deep_ks"] < 0.01)
    return report


SUITES = {"gradients": gradient_check_suite, "lemma7": lemma7_suite,
          "lemma2": lemma2_suite, "lemma1": lemma1_suite}
