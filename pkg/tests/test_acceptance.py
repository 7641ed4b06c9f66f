"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s``.  The rate study (criterion
7) is marked ``slow``; everything else finishes in a few minutes.
"""

import json
import time

import numpy as np
import pytest

from overcnn import (AvgPoolDistribution, DeskRule, Image, Topology, WeightVector,
                     cli, forward, forward_batch, forward_subnetwork,
                     make_patch_spec, parameter_count, patch_response_oracle,
                     rate_study, truncate)
from overcnn.checks import (gradient_check_suite, initialization_check,
                            lemma1_suite, lemma2_suite, lemma7_suite)


def report(name, passed, detail):
    print(f"\n[ACCEPTANCE] {name}: {'PASS' if passed else 'FAIL'} ({detail})")
    assert passed, f"{name}: {detail}"


# 1 ------------------------------------------------------------------------
def test_criterion_1_gradient_oracle():
    t0 = time.perf_counter()
    rep = gradient_check_suite(n_configs=100, seed=7021, h=1e-5, tol=1e-6,
                               max_P=2000)
    seconds = time.perf_counter() - t0
    ok = rep["passed"] and seconds < 120
    report("criterion-1 gradient-oracle",
           ok, f"max_rel={rep['max_rel_error']:.3g}, {seconds:.0f}s")


# 2 ------------------------------------------------------------------------
def test_criterion_2_pl_inequality():
    t0 = time.perf_counter()
    rep = lemma7_suite(n_instances=50, seed=7027)
    seconds = time.perf_counter() - t0
    scalar = rep["instances"][0]
    ok = (rep["passed"] and seconds < 10
          and scalar["lhs"] == 4.0 and scalar["rhs"] == 2.0)
    report("criterion-2 pl-inequality",
           ok, f"instances={len(rep['instances'])}, {seconds:.1f}s")


# 3 ------------------------------------------------------------------------
def test_criterion_3_descent_audit():
    t0 = time.perf_counter()
    rep = lemma2_suite(n_runs=10, seed=7022, t_n=500, ln_factor=4.0)
    seconds = time.perf_counter() - t0
    ok = rep["passed"] and seconds < 300
    lns = [r["L_n"] for r in rep["runs"]]
    report("criterion-3 descent-audit",
           ok, f"runs=10, L_n range {min(lns)}..{max(lns)}, {seconds:.0f}s")


# 4 ------------------------------------------------------------------------
def test_criterion_4_plug_in_bound():
    t0 = time.perf_counter()
    rep = lemma1_suite(seed=7023, m=100000)
    seconds = time.perf_counter() - t0
    per_fixture = seconds / max(1, len(rep["fixtures"]))
    ok = rep["passed"] and per_fixture < 120
    detail = "; ".join(f"{e['fixture']}: excess={e['excess']:.4f} "
                       f"bound={e['bound']:.4f}" for e in rep["fixtures"])
    report("criterion-4 plug-in-bound", ok, f"{detail}; {seconds:.0f}s")


# 5 ------------------------------------------------------------------------
def test_criterion_5_structural_invariants():
    t0 = time.perf_counter()
    g = np.random.default_rng(7025)
    failures = []
    for trial in range(20):
        kappa = int(g.integers(1, 3))
        L = int(g.integers(2, 4))
        d = int(g.integers(max(2, kappa), 5))
        K = int(g.integers(1, 7))
        t = Topology.theorem1(kappa=kappa, L=L, K=K, d1=d, d2=d)
        flat = g.uniform(-0.8, 0.8, parameter_count(t))
        flat[:K] = g.uniform(-2.0, 2.0, K)
        w = WeightVector(t, flat)
        px = g.random((d, d))
        img = Image(px)
        # activation range and pooled-value bounds
        for k in range(K):
            v, cache = forward_subnetwork(w, k, img, t)
            if not all(np.all(o > 0) and np.all(o < 1) for o in cache.o[1:]):
                failures.append((trial, "activation range"))
            if not abs(v) < 1.0:
                failures.append((trial, "subnet bound"))
        if not abs(forward(w, img, t)) <= np.abs(w.outer).sum():
            failures.append((trial, "forward bound"))
        # patch locality against the oracle
        for k in range(K):
            pooled, _ = forward_subnetwork(w, k, img, t)
            vals = [patch_response_oracle(w, k, px[i:i + kappa, j:j + kappa], t)
                    for i in range(d - kappa + 1) for j in range(d - kappa + 1)]
            if abs(pooled - np.mean(vals)) > 1e-12:
                failures.append((trial, "patch locality"))
        # permutation invariance
        perm = g.permutation(K)
        w2 = WeightVector.from_parts(t, w.outer[perm],
                                     [f[perm] for f in w.filters],
                                     [b[perm] for b in w.biases])
        if abs(forward(w, img, t) - forward(w2, img, t)) > 1e-12:
            failures.append((trial, "permutation"))
        # flattening round trip
        rebuilt = WeightVector.from_parts(t, w.outer, list(w.filters),
                                          list(w.biases))
        if not np.array_equal(rebuilt.data, w.data):
            failures.append((trial, "flattening"))
    # truncation / plug-in label equivalence on 1e4 random values
    z = g.uniform(-5, 5, 10**4)
    if not np.array_equal(z >= 0.5, truncate(z, 1.0) >= 0.5):
        failures.append(("global", "truncation labels"))
    seconds = time.perf_counter() - t0
    ok = not failures and seconds < 60
    report("criterion-5 structural-invariants",
           ok, f"failures={failures[:3]}, {seconds:.0f}s")


# 6 ------------------------------------------------------------------------
def test_criterion_6_initialization_contract():
    t0 = time.perf_counter()
    rep = initialization_check(seed=7026, min_samples=10**6)
    seconds = time.perf_counter() - t0
    ok = rep["passed"] and seconds < 30
    report("criterion-6 initialization",
           ok, f"ks_layer1={rep['layer1_ks']:.4f}, ks_deep={rep['deep_ks']:.4f}, "
               f"sampled={rep['sampled']}, {seconds:.0f}s")


# 7 ------------------------------------------------------------------------
@pytest.mark.slow
def test_criterion_7_rate_study():
    t0 = time.perf_counter()
    rule = DeskRule()
    dist = AvgPoolDistribution(d1=4, d2=4, patch=make_patch_spec("patch-mean", 1))
    res = rate_study(dist, 1, [500, 1000, 2000, 4000], 5, rule,
                     seed=20240801, eval_m=20000, threads=2)
    means = [res.mean_excess[n] for n in (500, 1000, 2000, 4000)]
    dist_c = AvgPoolDistribution(d1=4, d2=4,
                                 patch=make_patch_spec("constant", 1, value=0.3))
    res_c = rate_study(dist_c, 1, [500, 1000, 4000], 3, rule,
                       seed=20240802, eval_m=20000, threads=2)
    seconds = time.perf_counter() - t0
    decreasing = all(b < a for a, b in zip(means, means[1:]))
    ok = (decreasing and res.slope < 0.0
          and res_c.mean_excess[4000] < 0.02 and seconds < 1800)
    report("criterion-7 rate-study",
           ok, f"means={[round(m, 5) for m in means]}, slope={res.slope:.3f}, "
               f"const@4000={res_c.mean_excess[4000]:.5f}, {seconds:.0f}s")


# 8 ------------------------------------------------------------------------
def test_criterion_8_cli_determinism(tmp_path):
    t0 = time.perf_counter()
    dist = {"d1": 4, "d2": 4,
            "patch": {"kind": "patch-mean", "kappa": 1, "params": {}},
            "pixel_law": "uniform-iid", "law_params": {}}

    def cfg(name, doc):
        p = tmp_path / name
        p.write_text(json.dumps(doc, indent=1))
        return str(p)

    outputs = {}

    def run_twice(args, files, threads_variant=False):
        variants = [args, args]
        if threads_variant:
            variants.append(args + ["--threads", "2"])
        snapshots = []
        for v in variants:
            assert cli.main(v) == 0
            snapshots.append([open(f, "rb").read() for f in files])
        ok = all(s == snapshots[0] for s in snapshots[1:])
        outputs[" ".join(args[:1])] = ok
        return ok

    data_path = tmp_path / "data.csv"
    gen = cfg("gen.json", {"dist": dist, "n": 60, "seed": 5,
                           "out": str(data_path), "bayes_m": 200})
    ok = run_twice(["gen-data", "--config", gen], [data_path])

    wpath, tpath = tmp_path / "w.json", tmp_path / "trace.csv"
    train = cfg("train.json", {
        "dataset": str(data_path), "seed": 9,
        "hyperparams": {"mode": "desk", "kappa": 1, "L": 2, "K_n": 6,
                        "L_n": 30, "t_n": 6},
        "weights_out": str(wpath), "trace_out": str(tpath)})
    ok &= run_twice(["train", "--config", train], [wpath, tpath])

    rpath = tmp_path / "report.json"
    ev = cfg("eval.json", {"weights": str(wpath), "dist": dist, "m": 300,
                           "seed": 4, "report_out": str(rpath)})
    ok &= run_twice(["eval", "--config", ev], [rpath])

    cpath = tmp_path / "check.json"
    chk = cfg("chk.json", {"n_instances": 5, "seed": 3, "out": str(cpath)})
    ok &= run_twice(["check", "--suite", "lemma7", "--config", chk], [cpath])

    csvp, sump = tmp_path / "rows.csv", tmp_path / "summary.json"
    rs = cfg("rs.json", {"dist": dist, "kappa": 1, "n_grid": [16, 24, 32],
                         "replications": 3, "seed": 8, "eval_m": 200,
                         "rule": {"kn_scale": 1.0, "tn_cap": 6,
                                  "lipschitz_trials": 2,
                                  "lipschitz_subsample": 16},
                         "csv_out": str(csvp), "summary_out": str(sump)})
    ok &= run_twice(["rate-study", "--config", rs], [csvp, sump],
                    threads_variant=True)

    seconds = time.perf_counter() - t0
    ok = ok and seconds < 300
    report("criterion-8 cli-determinism", ok,
           f"commands={len(outputs)}, {seconds:.0f}s")
