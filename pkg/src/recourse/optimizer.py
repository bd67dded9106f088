"""Reduced objective construction, projected gradient descent and the
perturbation benchmark.

The decision variable is the delta z over the direct features; the objective
g(z) is the classifier probability of the undesired class with the indirect
features re-estimated from the moved direct values.  Both optimizers run
either on one instance or vectorized across a batch of independent rows.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field

import numpy as np

from recourse.core import FeaturePartition, Instance, OptimizationError
from recourse.indirect import (
    IndirectModel,
    estimate_indirect_batch,
    jacobian_indirect_batch,
)
from recourse.projection import FeasibleSetSpec, project, project_batch


class TerminationReason(enum.Enum):
    TOLERANCE = "tolerance"
    MAX_ITER = "max_iter"
    ZERO_STEP = "zero_step"


@dataclass(frozen=True)
class OptimizerConfig:
    """Step-size policy and stopping rules for the gradient method.

    step is "auto" for Armijo backtracking from eta0, "lipschitz" for a fixed
    step 1/L with L estimated by sampling gradient differences, or a positive
    number for a user-fixed step.
    """

    step: float | str = "auto"
    max_iter: int = 1000
    tol: float = 1e-6
    backtrack_shrink: float = 0.5
    sufficient_decrease: float = 1e-4
    eta0: float = 1.0
    max_backtracks: int = 60
    lipschitz_pairs: int = 100
    lipschitz_seed: int = 0

    def __post_init__(self):
        if isinstance(self.step, str):
            if self.step not in ("auto", "lipschitz"):
                raise ValueError(f"unknown step policy {self.step!r}")
        elif not self.step > 0:
            raise ValueError("fixed step size must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")


@dataclass
class TraceRecord:
    t: int
    z: np.ndarray
    g: float
    cost: float
    step: float


@dataclass
class OptimizationTrace:
    records: list[TraceRecord] = field(default_factory=list)
    reason: TerminationReason | None = None

    @property
    def iterations(self):
        return max(0, len(self.records) - 1)

    def g_values(self):
        return [r.g for r in self.records]

    def to_jsonl(self) -> str:
        lines = [
            json.dumps(
                {"t": r.t, "z": r.z.tolist(), "g": r.g, "cost": r.cost, "step": r.step}
            )
            for r in self.records
        ]
        if self.reason is not None:
            lines.append(json.dumps({"termination": self.reason.value}))
        return "\n".join(lines)

    def summary(self) -> dict:
        return {
            "iterations": self.iterations,
            "termination": self.reason.value if self.reason else None,
            "g_initial": self.records[0].g if self.records else None,
            "g_final": self.records[-1].g if self.records else None,
            "g_history": [round(v, 12) for v in self.g_values()],
        }


def build_objective_batch(model, indirect_model, X, partition: FeaturePartition):
    """Vectorized objective over a batch of instances.

    Returns (G, dG): G(Z, rows) evaluates the probability for each selected
    row at delta Z; dG(Z, rows) its gradient w.r.t. z via the chain rule
    through the indirect-feature Jacobian.  `rows` indexes into X and
    defaults to all rows (Z must then align with X).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    partition.validate(X.shape[1])
    D = np.array(partition.direct, dtype=int)
    I = np.array(partition.indirect, dtype=int)
    U = np.array(partition.unchangeable, dtype=int)
    use_indirect = indirect_model is not None and len(I) > 0
    if len(I) > 0 and indirect_model is None:
        raise ValueError("partition has indirect features but no estimator was given")
    if use_indirect and indirect_model.n_targets != len(I):
        raise ValueError(
            f"indirect model predicts {indirect_model.n_targets} features, "
            f"partition lists {len(I)}"
        )

    def assemble(Z, rows):
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        base = X if rows is None else X[rows]
        if Z.shape != (base.shape[0], len(D)):
            raise ValueError(f"Z has shape {Z.shape}, expected ({base.shape[0]}, {len(D)})")
        full = base.copy()
        full[:, D] = base[:, D] + Z
        if use_indirect:
            Q = np.hstack([full[:, D], full[:, U]])
            est, _ = estimate_indirect_batch(indirect_model, Q)
            full[:, I] = est
        return full

    def G(Z, rows=None):
        vals = model.predict_prob_batch(assemble(Z, rows))
        if not np.all(np.isfinite(vals)):
            raise OptimizationError("objective returned a non-finite value")
        return vals

    def dG(Z, rows=None):
        full = assemble(Z, rows)
        gf = model.grad_prob_batch(full)
        gz = gf[:, D].copy()
        if use_indirect:
            Q = np.hstack([full[:, D], full[:, U]])
            J = jacobian_indirect_batch(indirect_model, Q)   # (m, |I|, |D|)
            gz += np.einsum("ma,mad->md", gf[:, I], J)
        if not np.all(np.isfinite(gz)):
            raise OptimizationError("gradient returned a non-finite value")
        return gz

    return G, dG


def build_objective(
    model,
    indirect_model: IndirectModel | None,
    instance: Instance,
    partition: FeaturePartition,
):
    """Scalar objective g and gradient for one instance.

    g(0) is the model probability at the unmodified instance with its
    indirect features replaced by their estimate; with no indirect features
    it is the plain model probability.
    """
    G, dG = build_objective_batch(
        model, indirect_model, instance.values[None, :], partition
    )

    def g(z):
        return float(G(np.asarray(z, dtype=float)[None, :])[0])

    def grad_g(z):
        return dG(np.asarray(z, dtype=float)[None, :])[0]

    return g, grad_g


def estimate_lipschitz(grad_g, spec: FeasibleSetSpec, config: OptimizerConfig) -> float:
    """Sample gradient differences over random feasible pairs."""
    rng = np.random.default_rng(config.lipschitz_seed)
    best = 0.0
    for _ in range(config.lipschitz_pairs):
        a = project(rng.uniform(spec.lower, spec.upper), spec)
        b = project(rng.uniform(spec.lower, spec.upper), spec)
        gap = np.linalg.norm(a - b)
        if gap < 1e-12:
            continue
        best = max(best, float(np.linalg.norm(grad_g(a) - grad_g(b)) / gap))
    return max(best, 1e-8)


def pgd(g, grad_g, spec: FeasibleSetSpec, config: OptimizerConfig | None = None):
    """Projected gradient descent from z = 0.

    With the default backtracking policy every recorded step decreases g.
    Stops when the iterate moves less than config.tol, when max_iter is
    reached, or when no acceptable step exists (zero_step).
    Returns (z_star, trace).
    """
    config = config or OptimizerConfig()
    d = spec.n
    z = project(np.zeros(d), spec)
    g_z = _check_finite(g(z), z, None)
    trace = OptimizationTrace()
    trace.records.append(TraceRecord(0, z.copy(), g_z, spec.cost(z), 0.0))

    fixed_eta = None
    if config.step == "lipschitz":
        fixed_eta = 1.0 / estimate_lipschitz(grad_g, spec, config)
    elif not isinstance(config.step, str):
        fixed_eta = float(config.step)

    for t in range(1, config.max_iter + 1):
        grad = np.asarray(grad_g(z), dtype=float)
        if not np.all(np.isfinite(grad)):
            raise OptimizationError(
                "gradient returned a non-finite value", last_iterate=z, trace=trace
            )
        if fixed_eta is not None:
            eta = fixed_eta
            z_new = project(z - eta * grad, spec)
            g_new = _check_finite(g(z_new), z, trace)
        else:
            eta = config.eta0
            accepted = False
            for _ in range(config.max_backtracks):
                z_new = project(z - eta * grad, spec)
                delta = z_new - z
                g_new = _check_finite(g(z_new), z, trace)
                if g_new <= g_z + config.sufficient_decrease * float(grad @ delta):
                    accepted = True
                    break
                eta *= config.backtrack_shrink
            if not accepted:
                trace.reason = TerminationReason.ZERO_STEP
                return z, trace
        step_norm = float(np.linalg.norm(z_new - z))
        z, g_z = z_new, g_new
        trace.records.append(TraceRecord(t, z.copy(), g_z, spec.cost(z), eta))
        if step_norm <= config.tol:
            trace.reason = TerminationReason.TOLERANCE
            return z, trace
    trace.reason = TerminationReason.MAX_ITER
    return z, trace


def _check_finite(val, z, trace):
    if not np.isfinite(val):
        raise OptimizationError(
            "objective returned a non-finite value", last_iterate=z, trace=trace
        )
    return float(val)


def stationarity_residual(z, grad_g, spec: FeasibleSetSpec, eta: float = 1.0) -> float:
    """Fixed-point residual ||z - Proj(z - eta grad g(z))||; zero iff z is
    stationary for the constrained problem."""
    return float(np.linalg.norm(z - project(z - eta * np.asarray(grad_g(z)), spec)))


@dataclass
class BatchResult:
    """Per-row outcome of a batched optimizer run."""

    Z: np.ndarray
    g_initial: np.ndarray
    g_final: np.ndarray
    iterations: np.ndarray
    reasons: list[TerminationReason]


def pgd_batch(
    G,
    dG,
    cost_up,
    cost_down,
    budgets,
    lower,
    upper,
    config: OptimizerConfig | None = None,
    rows=None,
) -> BatchResult:
    """Backtracking PGD over a batch of independent rows.

    Arithmetic per row matches the scalar path; rows are frozen individually
    as they converge.  Only the "auto" step policy is supported here.
    """
    config = config or OptimizerConfig()
    if isinstance(config.step, str) and config.step != "auto":
        raise ValueError("pgd_batch supports only the backtracking step policy")
    budgets = np.asarray(budgets, dtype=float)
    m = budgets.shape[0]
    d = np.broadcast_shapes(np.shape(cost_up), np.shape(lower))[-1]

    all_rows = np.arange(m) if rows is None else np.asarray(rows)
    cu = np.broadcast_to(np.asarray(cost_up, dtype=float), (m, d))
    cd = np.broadcast_to(np.asarray(cost_down, dtype=float), (m, d))
    lo = np.broadcast_to(np.asarray(lower, dtype=float), (m, d))
    hi = np.broadcast_to(np.asarray(upper, dtype=float), (m, d))

    Z = project_batch(np.zeros((m, d)), cu, cd, budgets, lo, hi)
    g_z = G(Z, all_rows)
    g0 = g_z.copy()
    iterations = np.zeros(m, dtype=int)
    reasons = [TerminationReason.MAX_ITER] * m
    active_idx = np.arange(m)

    for t in range(1, config.max_iter + 1):
        if active_idx.size == 0:
            break
        a = active_idx
        Za = Z[a]
        grad = dG(Za, all_rows[a])
        eta = np.full(a.size, config.eta0)
        pending = np.ones(a.size, dtype=bool)
        Z_new = Za.copy()
        g_new = g_z[a].copy()
        for _ in range(config.max_backtracks):
            if not pending.any():
                break
            p = np.flatnonzero(pending)
            cand = project_batch(
                Za[p] - eta[p, None] * grad[p], cu[a][p], cd[a][p],
                budgets[a][p], lo[a][p], hi[a][p],
            )
            g_cand = G(cand, all_rows[a][p])
            lin = np.einsum("md,md->m", grad[p], cand - Za[p])
            ok = g_cand <= g_z[a][p] + config.sufficient_decrease * lin
            Z_new[p[ok]] = cand[ok]
            g_new[p[ok]] = g_cand[ok]
            pending[p[ok]] = False
            eta[p[~ok]] *= config.backtrack_shrink
        stuck = pending
        for r in a[stuck]:
            reasons[r] = TerminationReason.ZERO_STEP

        step_norm = np.linalg.norm(Z_new - Za, axis=1)
        moved = ~stuck
        Z[a[moved]] = Z_new[moved]
        g_z[a[moved]] = g_new[moved]
        iterations[a[moved]] = t
        done = moved & (step_norm <= config.tol)
        for r in a[done]:
            reasons[r] = TerminationReason.TOLERANCE
        active_idx = a[moved & (step_norm > config.tol)]
    return BatchResult(Z, g0, g_z, iterations, reasons)


def sensitivity_search(g, spec: FeasibleSetSpec, max_rounds: int | None = None):
    """Benchmark optimizer: rounds of single-feature moves to bound extremes.

    Each round tries every not-yet-set feature at each of its bound extremes,
    clipped to what the remaining budget affords, and keeps the single best
    strictly improving move; ties go to the lowest feature index (the lower
    extreme first within a feature). Rounds continue while budget remains
    and an improvement was found.
    Returns (z_star, trace).
    """
    d = spec.n
    z = np.zeros(d)
    g_z = _check_finite(g(z), z, None)
    trace = OptimizationTrace()
    trace.records.append(TraceRecord(0, z.copy(), g_z, 0.0, 0.0))
    remaining = spec.budget
    unset = list(range(d))
    rounds = max_rounds if max_rounds is not None else d

    for round_no in range(1, rounds + 1):
        if remaining <= 1e-12 or not unset:
            break
        best = None
        for i in unset:
            for extreme in (spec.lower[i], spec.upper[i]):
                value, move_cost = _clip_move(extreme, i, spec, remaining)
                if abs(value) < 1e-12:
                    continue
                cand = z.copy()
                cand[i] = value
                val = _check_finite(g(cand), cand, trace)
                if val < g_z and (best is None or val < best[0]):
                    best = (val, i, value, move_cost)
        if best is None:
            break
        g_z, i, value, move_cost = best
        z[i] = value
        remaining -= move_cost
        unset.remove(i)
        trace.records.append(
            TraceRecord(round_no, z.copy(), g_z, spec.cost(z), 0.0)
        )
    trace.reason = TerminationReason.TOLERANCE
    return z, trace


def _clip_move(extreme, i, spec, remaining):
    unit = spec.cost_up[i] if extreme > 0 else spec.cost_down[i]
    mag = abs(extreme)
    if unit > 0:
        mag = min(mag, remaining / unit)
    value = float(np.sign(extreme) * mag)
    return value, unit * mag


def sensitivity_search_batch(
    G, cost_up, cost_down, budgets, lower, upper, rows=None
) -> BatchResult:
    """Vectorized perturbation benchmark across independent rows."""
    budgets = np.asarray(budgets, dtype=float)
    m = budgets.shape[0]
    cu = np.broadcast_to(np.asarray(cost_up, dtype=float), (m, lower.shape[-1])) \
        if np.ndim(cost_up) == 1 else np.asarray(cost_up, dtype=float)
    cd = np.broadcast_to(np.asarray(cost_down, dtype=float), cu.shape) \
        if np.ndim(cost_down) == 1 else np.asarray(cost_down, dtype=float)
    lo = np.broadcast_to(np.asarray(lower, dtype=float), cu.shape)
    hi = np.broadcast_to(np.asarray(upper, dtype=float), cu.shape)
    d = cu.shape[1]

    all_rows = np.arange(m) if rows is None else np.asarray(rows)
    Z = np.zeros((m, d))
    g_z = G(Z, all_rows)
    g0 = g_z.copy()
    remaining = budgets.copy()
    unset = np.ones((m, d), dtype=bool)
    iterations = np.zeros(m, dtype=int)

    for round_no in range(1, d + 1):
        a = np.flatnonzero((remaining > 1e-12) & unset.any(axis=1))
        if a.size == 0:
            break
        best_val = g_z[a].copy()
        best_feat = np.full(a.size, -1)
        best_value = np.zeros(a.size)
        best_cost = np.zeros(a.size)
        for i in range(d):
            for extreme, unit in ((lo[a, i], cd[a, i]), (hi[a, i], cu[a, i])):
                mag = np.abs(extreme)
                with np.errstate(divide="ignore", invalid="ignore"):
                    afford = np.where(
                        unit > 0, remaining[a] / np.where(unit > 0, unit, 1.0), np.inf
                    )
                mag = np.minimum(mag, afford)
                value = np.sign(extreme) * mag
                usable = unset[a, i] & (np.abs(value) >= 1e-12)
                if not usable.any():
                    continue
                u = np.flatnonzero(usable)
                cand = Z[a[u]].copy()
                cand[np.arange(u.size), i] = value[u]
                vals = G(cand, all_rows[a[u]])
                strictly = (vals < g_z[a[u]]) & (vals < best_val[u])
                s = u[strictly]
                best_val[s] = vals[strictly]
                best_feat[s] = i
                best_value[s] = value[s]
                best_cost[s] = (unit * mag)[s]
        chosen = np.flatnonzero(best_feat >= 0)
        if chosen.size == 0:
            break
        r = a[chosen]
        Z[r, best_feat[chosen]] = best_value[chosen]
        g_z[r] = best_val[chosen]
        remaining[r] -= best_cost[chosen]
        unset[r, best_feat[chosen]] = False
        iterations[r] += 1
    return BatchResult(Z, g0, g_z, iterations, [TerminationReason.TOLERANCE] * m)
