"""Random initialization, full-batch gradient descent, trajectory auditing.

Initialization: outer weights start at exactly zero; layer-1 filters and
biases are i.i.d. uniform on [-c3 (log n)^2 n^tau, c3 (log n)^2 n^tau]; all
deeper filters and biases uniform on [-c2 (log n)^2, c2 (log n)^2].  Values
are drawn as one counter-based stream indexed by the canonical flat parameter
order, so the result is bitwise reproducible under any parallelism.

The descent loop runs exactly t_n steps of w <- w - lambda_n grad F_n(w) with
no early stopping; if the risk increases at some step (step size above the
local smoothness constant) the loop continues and the audit records it.
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .errors import DomainError, NonFiniteError, SingularityError
from .gradients import risk_and_grad
from .model import Dataset, HyperParams, Topology, WeightVector, layer_slices, parameter_count

__all__ = ["TrainTrace", "init_weights", "gd_step", "train",
           "audit_lemma2", "pl_inequality_check"]

TRACE_CSV_HEADER = "step,risk,grad_norm,displacement,lambda"


@dataclass(frozen=True)
class TrainTrace:
    """Per-step record of one gradient-descent run.

    ``risk[t]`` is F_n(w^(t)) for t = 0..t_n; ``grad_norm[t-1]`` is
    ||grad F_n(w^(t-1))|| and ``displacement[t-1]`` is ||w^(t) - w^(0)|| for
    t = 1..t_n.
    """

    risk: np.ndarray
    grad_norm: np.ndarray
    displacement: np.ndarray
    lam: float
    seed: int
    hyperparams: HyperParams
    wall_clock_s: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def t_n(self) -> int:
        return len(self.grad_norm)

    def to_csv(self) -> str:
        lines = [TRACE_CSV_HEADER]
        lam = format(self.lam, ".16e")
        lines.append(f"0,{format(self.risk[0], '.16e')},nan,{format(0.0, '.16e')},{lam}")
        for t in range(1, self.t_n + 1):
            lines.append(
                f"{t},{format(self.risk[t], '.16e')},"
                f"{format(self.grad_norm[t - 1], '.16e')},"
                f"{format(self.displacement[t - 1], '.16e')},{lam}")
        return "\n".join(lines) + "\n"


def init_weights(topology: Topology, hp: HyperParams, seed: int) -> WeightVector:
    """Random initialization per the estimate's definition (outer weights zero)."""
    P = parameter_count(topology)
    K = topology.K
    log_n2 = math.log(hp.n) ** 2
    bound1 = hp.c3 * log_n2 * hp.n ** hp.tau
    bound_deep = hp.c2 * log_n2
    bounds = np.empty(P - K)
    fslices, bslices = layer_slices(topology)
    for r in range(1, topology.L + 1):
        b = bound1 if r == 1 else bound_deep
        fs, bs = fslices[r - 1], bslices[r - 1]
        bounds[fs.start - K:fs.stop - K] = b
        bounds[bs.start - K:bs.stop - K] = b
    u = rng.stream(seed, "init").random(P - K)
    flat = np.concatenate([np.zeros(K), (2.0 * u - 1.0) * bounds])
    return WeightVector(topology, flat)


def gd_step(weights: WeightVector, data: Dataset, topology: Topology, c4: float,
            lam: float) -> WeightVector:
    """One full-batch update w - lam * grad F_n(w) over all parameters."""
    g = risk_and_grad(weights, data, topology, c4)[1]
    with np.errstate(over="ignore", invalid="ignore"):
        new = weights.data - lam * g.data
    if not np.all(np.isfinite(new)):
        raise NonFiniteError("gradient step produced non-finite weights")
    return WeightVector(topology, new)


def train(data: Dataset, topology: Topology, hp: HyperParams, seed: int):
    """init_weights followed by t_n gradient-descent steps; returns final
    weights and the trajectory trace.  Deterministic given the seed."""
    t0 = time.perf_counter()
    lam = hp.lambda_n
    w = init_weights(topology, hp, seed)
    start = w.data
    risk = np.empty(hp.t_n + 1)
    grad_norm = np.empty(hp.t_n)
    displacement = np.empty(hp.t_n)
    for t in range(hp.t_n):
        value, g = risk_and_grad(w, data, topology, hp.c4)
        risk[t] = value
        grad_norm[t] = np.linalg.norm(g.data)
        with np.errstate(over="ignore", invalid="ignore"):
            new = w.data - lam * g.data
        if not np.all(np.isfinite(new)):
            raise NonFiniteError(f"non-finite weights at step {t + 1}", step=t + 1)
        displacement[t] = np.linalg.norm(new - start)
        w = WeightVector(topology, new)
    risk[hp.t_n] = risk_and_grad(w, data, topology, hp.c4)[0]
    trace = TrainTrace(risk=risk, grad_norm=grad_norm, displacement=displacement,
                       lam=lam, seed=int(seed), hyperparams=hp,
                       wall_clock_s=time.perf_counter() - t0)
    return w, trace


def audit_lemma2(trace: TrainTrace, L_used: float) -> dict:
    """Check the three descent-lemma conclusions on a recorded trajectory.

    (i)  F(w^k) <= F(w^(k-1)) - ||grad F(w^(k-1))||^2 / (2 L)
    (ii) ||w^k - w^0|| <= sqrt(2 k (F(w^0) - F(w^k)) / L)
    (iii) sum_(j<s) ||w^(j+1) - w^j||^2 <= 2 (F(w^0) - F(w^s)) / L

    all up to tol = 1e-9 * max(1, F(w^0)).  Failures of (i) indicate a step
    size above the local smoothness constant (L_used too small), not a code
    defect; the report says so.
    """
    F = trace.risk
    gn = trace.grad_norm
    tol = 1e-9 * max(1.0, F[0])
    report = {"L_used": float(L_used), "tol": tol, "steps": trace.t_n}
    viol_descent, viol_disp, viol_sq = [], [], []
    step_sq = (trace.lam * gn) ** 2          # ||w^(j+1) - w^j||^2, exact update identity
    acc = 0.0
    for k in range(1, trace.t_n + 1):
        rhs = F[k - 1] - gn[k - 1] ** 2 / (2.0 * L_used)
        if F[k] > rhs + tol:
            viol_descent.append({"step": k, "lhs": float(F[k]), "rhs": float(rhs)})
        bound = math.sqrt(2.0 * k / L_used * max(F[0] - F[k], 0.0))
        if trace.displacement[k - 1] > bound + tol:
            viol_disp.append({"step": k, "lhs": float(trace.displacement[k - 1]),
                              "rhs": bound})
        acc += step_sq[k - 1]
        rhs_sq = 2.0 / L_used * (F[0] - F[k])
        if acc > rhs_sq + tol:
            viol_sq.append({"step": k, "lhs": float(acc), "rhs": float(rhs_sq)})
    report["descent"] = {"passed": not viol_descent, "violations": viol_descent}
    report["displacement"] = {"passed": not viol_disp, "violations": viol_disp}
    report["squared_steps"] = {"passed": not viol_sq, "violations": viol_sq}
    report["passed"] = not (viol_descent or viol_disp or viol_sq)
    if viol_descent:
        report["interpretation"] = ("descent inequality failed: L_used is below the "
                                    "local smoothness constant along the trajectory")
    return report


def pl_inequality_check(basis_values: np.ndarray, labels: np.ndarray, c27: float,
                        probes) -> dict:
    """Verify ||grad F(a)||^2 >= 4 c27 (F(a) - F(a_opt)) on the ridge problem
    F(a) = (1/n)||B a - y||^2 + c27 ||a||^2, with a_opt from an exact
    normal-equations solve (the independent oracle)."""
    B = np.asarray(basis_values, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if B.ndim != 2 or y.shape != (B.shape[0],):
        raise DomainError("basis_values must be (n, K) and labels (n,)")
    n, K = B.shape
    if n > 200 or K > 200:
        raise DomainError("exact oracle restricted to n, K <= 200")
    if c27 <= 0:
        raise DomainError("c27 must be positive")

    def F(a):
        r = B @ a - y
        return float(r @ r) / n + c27 * float(a @ a)

    def grad(a):
        return (2.0 / n) * (B.T @ (B @ a - y)) + 2.0 * c27 * a

    A = B.T @ B / n + c27 * np.eye(K)
    try:
        a_opt = np.linalg.solve(A, B.T @ y / n)
    except np.linalg.LinAlgError as exc:     # unreachable for c27 > 0
        raise SingularityError(str(exc)) from exc
    F_opt = F(a_opt)
    residual = float(np.linalg.norm(grad(a_opt)))
    results = []
    for a in probes:
        a = np.asarray(a, dtype=np.float64).reshape(K)
        Fa = F(a)
        lhs = float(np.linalg.norm(grad(a)) ** 2)
        rhs = 4.0 * c27 * (Fa - F_opt)
        tol = 1e-9 * max(1.0, Fa)
        results.append({"F": Fa, "lhs": lhs, "rhs": rhs,
                        "passed": bool(lhs >= rhs - tol)})
    return {"a_opt": a_opt, "F_opt": F_opt, "oracle_residual": residual,
            "oracle_ok": residual <= 1e-8, "probes": results,
            "passed": bool(residual <= 1e-8 and all(r["passed"] for r in results))}
