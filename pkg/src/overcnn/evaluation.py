"""Risk estimation, plug-in excess-risk bound verification, and the
rate-of-convergence study.

Risk estimates are Rao-Blackwellized: with eta known exactly, the conditional
error eta 1{g=0} + (1-eta) 1{g=1} is averaged over fresh images, removing all
label-sampling variance.  All estimators for one comparison share the same
image stream (common random numbers), so the Bayes classifier reproduces
``bayes_risk_mc`` exactly and excess-risk differences are paired.

The rate study is qualitative: it reports mean excess risk over a sample-size
grid and the fitted log-log slope.  No claim is made that the slope matches
the theoretical exponent; the theory regime (K_n growing faster than
n^(2 kappa^2 + 7)) is far beyond desk scale.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .errors import DomainError, NonFiniteError
from .gradients import estimate_gradient_lipschitz
from .model import Dataset, HyperParams, Topology, WeightVector
from .network import forward_batch, truncate
from .synthdata import (AvgPoolDistribution, MC_IMAGE_LABEL, bayes_classifier,
                        eta_batch, sample_dataset, sample_images)
from .training import init_weights, train

__all__ = ["misclassification_risk_mc", "l2_risk_mc", "check_lemma1",
           "network_classifier", "constant_classifier", "fit_loglog_slope",
           "DeskRule", "default_desk_rule", "rate_study", "RateStudyResult"]


def network_classifier(weights: WeightVector, topology: Topology):
    """Plug-in classifier of the trained network as a batch callable."""
    def classify_pixels(pixels):
        return (forward_batch(weights, pixels, topology) >= 0.5).astype(np.int64)
    return classify_pixels


def constant_classifier(label: int):
    def classify_pixels(pixels):
        return np.full(pixels.shape[0], int(label), dtype=np.int64)
    return classify_pixels


def _conditional_error(dist, classifier, pixels) -> np.ndarray:
    e = eta_batch(dist, pixels)
    g = np.asarray(classifier(pixels))
    return np.where(g == 0, e, 1.0 - e)


def misclassification_risk_mc(classifier, dist: AvgPoolDistribution, m: int,
                              seed: int, label: str = MC_IMAGE_LABEL):
    """Rao-Blackwellized misclassification risk over m fresh images."""
    if m < 100:
        raise DomainError("m must be at least 100")
    pixels = sample_images(dist, m, seed, label)
    vals = _conditional_error(dist, classifier, pixels)
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(m))


def l2_risk_mc(weights: WeightVector, topology: Topology, dist: AvgPoolDistribution,
               m: int, seed: int, label: str = MC_IMAGE_LABEL):
    """Monte-Carlo mean of (T_1 f_w(X) - eta(X))^2 over m fresh images."""
    if m < 100:
        raise DomainError("m must be at least 100")
    pixels = sample_images(dist, m, seed, label)
    vals = (truncate(forward_batch(weights, pixels, topology), 1.0)
            - eta_batch(dist, pixels)) ** 2
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(m))


def check_lemma1(weights: WeightVector, topology: Topology, dist: AvgPoolDistribution,
                 m: int, seed: int) -> dict:
    """Excess misclassification risk against 2 sqrt(L2 risk), common images.

    Passes iff excess <= bound + 3 * propagated standard error.
    """
    if m < 100:
        raise DomainError("m must be at least 100")
    pixels = sample_images(dist, m, seed)
    e_plug = _conditional_error(dist, network_classifier(weights, topology), pixels)
    e_bayes = _conditional_error(dist, bayes_classifier(dist), pixels)
    diff = e_plug - e_bayes
    excess = float(diff.mean())
    se_excess = float(diff.std(ddof=1) / math.sqrt(m))
    sq = (truncate(forward_batch(weights, pixels, topology), 1.0)
          - eta_batch(dist, pixels)) ** 2
    v = float(sq.mean())
    se_v = float(sq.std(ddof=1) / math.sqrt(m))
    bound = 2.0 * math.sqrt(v)
    se_bound = se_v / math.sqrt(v) if v > 0 else 0.0
    se = math.sqrt(se_excess ** 2 + se_bound ** 2)
    return {"excess": excess, "excess_stderr": se_excess, "l2_risk": v,
            "l2_stderr": se_v, "bound": bound, "stderr": se, "m": m,
            "passed": bool(excess <= bound + 3.0 * se)}


def fit_loglog_slope(ns, values):
    """Least-squares slope/intercept/R^2 of log(values) against log(ns)."""
    x = np.log(np.asarray(ns, dtype=np.float64))
    y = np.log(np.asarray(values, dtype=np.float64))
    xm, ym = x.mean(), y.mean()
    sxx = float(((x - xm) ** 2).sum())
    slope = float(((x - xm) * (y - ym)).sum() / sxx)
    intercept = float(ym - slope * xm)
    resid = y - (intercept + slope * x)
    sstot = float(((y - ym) ** 2).sum())
    r2 = 1.0 - float((resid ** 2).sum()) / sstot if sstot > 0 else 1.0
    return slope, intercept, r2


# ---------------------------------------------------------------------------
# desk-mode hyperparameter rule
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DeskRule:
    """Feasible schedule: K_n = ceil(kn_scale sqrt(n)), L_n = ln_factor times
    an empirical smoothness estimate around the initialization, t_n =
    ceil(log(n) L_n) capped at tn_cap.  All knobs are emitted with results.

    The smoothness estimate is the max of the sampled-pair Lipschitz probe and
    the exact top curvature of the outer-weight block at the initialization
    (power iteration on (2/n) B^T B + 2 c4 I, with B the sub-network outputs);
    the latter floors the probe so an unlucky trial set cannot produce a step
    size in the unstable region.
    """

    kn_scale: float = 1.0
    ln_factor: float = 1.0
    tn_cap: int = 600
    L: int = 2
    lipschitz_trials: int = 48
    lipschitz_radius: float = 1.0
    lipschitz_subsample: int = 256

    def derive(self, data: Dataset, kappa: int, seed: int):
        n = data.n
        K_n = math.ceil(self.kn_scale * math.sqrt(n))
        topology = Topology.theorem1(kappa=kappa, L=self.L, K=K_n,
                                     d1=data.d1, d2=data.d2)
        hp0 = HyperParams.desk(n=n, kappa=kappa, L=self.L, K_n=K_n, L_n=1, t_n=0)
        w0 = init_weights(topology, hp0, rng.derive_seed(seed, "lipschitz-init"))
        sub = data
        if data.n > self.lipschitz_subsample:
            sub = Dataset(pixels=data.pixels[:self.lipschitz_subsample],
                          labels=data.labels[:self.lipschitz_subsample],
                          meta=dict(data.meta))
        lip = estimate_gradient_lipschitz(
            w0, sub, topology, hp0.c4, trials=self.lipschitz_trials,
            radius=self.lipschitz_radius, seed=rng.derive_seed(seed, "lipschitz"))
        lip = max(lip, _outer_block_top_curvature(w0, sub, hp0.c4))
        L_n = max(1, math.ceil(self.ln_factor * lip))
        t_n = min(math.ceil(math.log(n) * L_n), self.tn_cap)
        hp = HyperParams.desk(n=n, kappa=kappa, L=self.L, K_n=K_n, L_n=L_n, t_n=t_n)
        return topology, hp

    def descriptor(self) -> dict:
        return {"kn_scale": self.kn_scale, "ln_factor": self.ln_factor,
                "tn_cap": self.tn_cap, "L": self.L,
                "lipschitz_trials": self.lipschitz_trials,
                "lipschitz_radius": self.lipschitz_radius,
                "lipschitz_subsample": self.lipschitz_subsample,
                "outer_block_floor": True}


def _outer_block_top_curvature(weights: WeightVector, data: Dataset,
                               c4: float, iterations: int = 40) -> float:
    from .network import _run_subnetworks
    pooled = _run_subnetworks(weights, data.pixels)        # (K, n)
    n = pooled.shape[1]
    v = np.full(pooled.shape[0], 1.0 / math.sqrt(pooled.shape[0]))
    lam = 0.0
    for _ in range(iterations):
        hv = (2.0 / n) * (pooled @ (pooled.T @ v)) + 2.0 * c4 * v
        lam = float(np.linalg.norm(hv))
        if lam == 0.0:
            return 0.0
        v = hv / lam
    return lam


default_desk_rule = DeskRule()


# ---------------------------------------------------------------------------
# rate-of-convergence study
# ---------------------------------------------------------------------------

RATE_CSV_HEADER = "n,rep,excess_risk,excess_stderr,l2_risk,l2_stderr,K_n,L_n,t_n,seed"


@dataclass(frozen=True)
class RateStudyResult:
    rows: tuple
    slope: float
    intercept: float
    r2: float
    mean_excess: dict
    rule: dict
    meta: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        lines = [RATE_CSV_HEADER]
        for r in self.rows:
            lines.append(
                f"{r['n']},{r['rep']},{format(r['excess_risk'], '.16e')},"
                f"{format(r['excess_stderr'], '.16e')},{format(r['l2_risk'], '.16e')},"
                f"{format(r['l2_stderr'], '.16e')},{r['K_n']},{r['L_n']},{r['t_n']},"
                f"{r['seed']}")
        return "\n".join(lines) + "\n"

    def summary(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept, "r2": self.r2,
                "mean_excess": {str(k): v for k, v in self.mean_excess.items()},
                "rule": self.rule,
                "note": ("qualitative study: the theoretical regime is not "
                         "reachable at these sizes; only the sign and "
                         "monotonicity of the trend are meaningful"),
                **self.meta}


def _rate_one(dist, kappa, n, rep, rule, seed, eval_m, eval_seed):
    # the run seed depends on the replication only, so for one replication the
    # datasets along the n-grid are nested prefixes (common random numbers:
    # grid comparisons are paired, each row is still an i.i.d. draw)
    run_seed = rng.derive_seed(seed, f"rate-rep:{rep}")
    data = sample_dataset(dist, n, rng.derive_seed(run_seed, "data"))
    topology, hp = rule.derive(data, kappa, rng.derive_seed(run_seed, "rule"))
    try:
        weights, _ = train(data, topology, hp, rng.derive_seed(run_seed, "train"))
    except NonFiniteError as exc:
        raise NonFiniteError(f"run (n={n}, rep={rep}): {exc}", step=exc.step) from exc
    pixels = sample_images(dist, eval_m, eval_seed)
    e_plug = _conditional_error(dist, network_classifier(weights, topology), pixels)
    e_bayes = _conditional_error(dist, bayes_classifier(dist), pixels)
    diff = e_plug - e_bayes
    sq = (truncate(forward_batch(weights, pixels, topology), 1.0)
          - eta_batch(dist, pixels)) ** 2
    return {"n": n, "rep": rep, "excess_risk": float(diff.mean()),
            "excess_stderr": float(diff.std(ddof=1) / math.sqrt(eval_m)),
            "l2_risk": float(sq.mean()),
            "l2_stderr": float(sq.std(ddof=1) / math.sqrt(eval_m)),
            "K_n": hp.K_n, "L_n": hp.L_n, "t_n": hp.t_n, "seed": run_seed}


def rate_study(dist: AvgPoolDistribution, kappa: int, n_grid, replications: int,
               desk_hp_rule: DeskRule, seed: int, eval_m: int = 20000,
               threads: int = 1) -> RateStudyResult:
    """Train over a sample-size grid and fit the excess-risk trend.

    One shared evaluation image set (common random numbers) is used for every
    run; per-run excess risks are paired against the Bayes classifier.  The
    result table is ordered by (n, rep) regardless of execution schedule.
    """
    n_grid = [int(n) for n in n_grid]
    if len(n_grid) < 3 or any(b <= a for a, b in zip(n_grid, n_grid[1:])):
        raise DomainError("n_grid must be ascending with at least 3 points")
    if replications < 3:
        raise DomainError("replications must be at least 3")
    eval_seed = rng.derive_seed(seed, "rate-eval")
    jobs = [(n, rep) for n in n_grid for rep in range(replications)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(
                lambda nr: _rate_one(dist, kappa, nr[0], nr[1], desk_hp_rule,
                                     seed, eval_m, eval_seed), jobs))
    else:
        rows = [_rate_one(dist, kappa, n, rep, desk_hp_rule, seed, eval_m, eval_seed)
                for n, rep in jobs]
    rows.sort(key=lambda r: (r["n"], r["rep"]))
    mean_excess = {}
    for n in n_grid:
        vals = [r["excess_risk"] for r in rows if r["n"] == n]
        mean_excess[n] = float(np.mean(vals))
    # clip at zero for the log fit only; raw values stay in the rows
    fit_vals = [max(mean_excess[n], 1e-12) for n in n_grid]
    slope, intercept, r2 = fit_loglog_slope(n_grid, fit_vals)
    return RateStudyResult(rows=tuple(rows), slope=slope, intercept=intercept,
                           r2=r2, mean_excess=mean_excess,
                           rule=desk_hp_rule.descriptor(),
                           meta={"eval_m": eval_m, "seed": int(seed),
                                 "replications": replications})
