"""Shared domain types, the change-cost function and bound-setting policies."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

BUDGET_TOLERANCE = 1e-8


class RecourseError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(RecourseError):
    """Invalid experiment or run configuration."""


class DataError(RecourseError):
    """Malformed or unusable input data."""


class TrainingError(RecourseError):
    """Model training failed. May carry the best iterate found so far."""

    def __init__(self, message, model=None):
        super().__init__(message)
        self.model = model


class OptimizationError(RecourseError):
    """Optimization produced non-finite values. Carries the last valid iterate."""

    def __init__(self, message, last_iterate=None, trace=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.trace = trace


class BoundPolicy(enum.Enum):
    """How zero-cost sides of a feature interval are bounded.

    HARDLINE pins the zero-cost side at the current value, so a feature can
    never drift in a direction the cost model treats as free.  ELASTIC leaves
    the zero-cost side open across the full normalized range.
    """

    HARDLINE = "hardline"
    ELASTIC = "elastic"


def _readonly(a, dtype=float):
    arr = np.asarray(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Instance:
    """A single example: normalized feature vector plus optional label and id."""

    values: np.ndarray
    label: int | None = None
    id: str | int | None = None

    def __post_init__(self):
        object.__setattr__(self, "values", _readonly(self.values))
        if self.values.ndim != 1:
            raise ValueError("instance values must be a 1-d vector")
        if self.label is not None and self.label not in (-1, 1):
            raise ValueError(f"label must be -1 or +1, got {self.label!r}")

    @property
    def n_features(self):
        return self.values.shape[0]


@dataclass(frozen=True)
class FeaturePartition:
    """Disjoint index sets: unchangeable, indirectly and directly changeable.

    Indices are 0-based positions into the feature vector. The three sets
    must partition range(n_features); the direct set must be nonempty for
    any optimization run.
    """

    unchangeable: tuple[int, ...]
    indirect: tuple[int, ...]
    direct: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "unchangeable", tuple(self.unchangeable))
        object.__setattr__(self, "indirect", tuple(self.indirect))
        object.__setattr__(self, "direct", tuple(self.direct))
        all_idx = self.unchangeable + self.indirect + self.direct
        if len(set(all_idx)) != len(all_idx):
            raise ValueError("partition index sets overlap")

    def validate(self, n_features: int) -> None:
        got = sorted(self.unchangeable + self.indirect + self.direct)
        if got != list(range(n_features)):
            raise ValueError(
                f"partition does not cover all {n_features} features exactly once"
            )

    @property
    def n_direct(self):
        return len(self.direct)


@dataclass(frozen=True)
class CostBudgetSpec:
    """Per-feature unit change costs, raw bounds and the global budget.

    All vectors are aligned with the direct index set.  ``cost_up[i]`` is the
    budget consumed per unit increase of direct feature i, ``cost_down[i]``
    per unit decrease.  ``raw_lower``/``raw_upper`` are admissible value
    ranges in normalized feature units; ``bound_policy`` decides how sides
    with zero cost are treated (see BoundPolicy).  ``policy_overrides`` may
    give a per-feature policy, mixing the two methods feature by feature.
    """

    cost_up: np.ndarray
    cost_down: np.ndarray
    budget: float
    raw_lower: np.ndarray
    raw_upper: np.ndarray
    bound_policy: BoundPolicy = BoundPolicy.HARDLINE
    policy_overrides: tuple[BoundPolicy | None, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "cost_up", _readonly(self.cost_up))
        object.__setattr__(self, "cost_down", _readonly(self.cost_down))
        object.__setattr__(self, "raw_lower", _readonly(self.raw_lower))
        object.__setattr__(self, "raw_upper", _readonly(self.raw_upper))
        n = self.cost_up.shape[0]
        for name in ("cost_down", "raw_lower", "raw_upper"):
            if getattr(self, name).shape != (n,):
                raise ValueError(f"{name} must have the same length as cost_up")
        if self.budget < 0:
            raise ValueError(f"budget must be nonnegative, got {self.budget}")
        if np.any(self.cost_up < 0) or np.any(self.cost_down < 0):
            raise ValueError("unit costs must be nonnegative")
        if np.any(self.raw_lower > self.raw_upper):
            raise ValueError("raw_lower must not exceed raw_upper")
        if self.policy_overrides is not None and len(self.policy_overrides) != n:
            raise ValueError("policy_overrides must have one entry per direct feature")

    @property
    def n_direct(self):
        return self.cost_up.shape[0]

    def policy_for(self, i: int) -> BoundPolicy:
        if self.policy_overrides is not None and self.policy_overrides[i] is not None:
            return self.policy_overrides[i]
        return self.bound_policy


@dataclass(frozen=True)
class ChangePlan:
    """A delta vector over the direct features with its effective bounds."""

    delta: np.ndarray
    effective_lower: np.ndarray
    effective_upper: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "delta", _readonly(self.delta))
        object.__setattr__(self, "effective_lower", _readonly(self.effective_lower))
        object.__setattr__(self, "effective_upper", _readonly(self.effective_upper))

    def validate(self, spec: CostBudgetSpec) -> None:
        if np.any(self.delta < self.effective_lower) or np.any(
            self.delta > self.effective_upper
        ):
            raise ValueError("delta violates its effective bounds")
        cost = change_cost(self.delta, spec)
        if cost > spec.budget + BUDGET_TOLERANCE:
            raise ValueError(f"delta cost {cost} exceeds budget {spec.budget}")


def change_cost(z: np.ndarray, spec: CostBudgetSpec) -> float:
    """Total budget consumed by the delta vector z.

    Increases are charged at cost_up per unit, decreases at cost_down:
    sum_i cost_up[i]*max(0, z_i) + cost_down[i]*max(0, -z_i).
    """
    z = np.asarray(z, dtype=float)
    if z.shape != (spec.n_direct,):
        raise ValueError(
            f"delta has length {z.shape}, expected ({spec.n_direct},)"
        )
    return float(
        spec.cost_up @ np.maximum(z, 0.0) + spec.cost_down @ np.maximum(-z, 0.0)
    )


def effective_bounds(
    x_direct: np.ndarray, spec: CostBudgetSpec
) -> tuple[np.ndarray, np.ndarray]:
    """Resolve raw value bounds into delta bounds around the current values.

    A side whose unit cost is zero is overridden by the bound policy:
    Hardline pins it to the current value, Elastic opens it to the full
    normalized range (or beyond, if the current value already sits outside).
    Positively costed sides keep the raw bounds.  The returned interval is
    widened to contain the current value, so the zero delta is always
    feasible.

    Returns (lower, upper) in delta units: lower <= 0 <= upper.
    """
    x = np.asarray(x_direct, dtype=float)
    n = spec.n_direct
    if x.shape != (n,):
        raise ValueError(f"x_direct has shape {x.shape}, expected ({n},)")
    lo = np.array(spec.raw_lower, dtype=float)
    hi = np.array(spec.raw_upper, dtype=float)
    for i in range(n):
        policy = spec.policy_for(i)
        if spec.cost_up[i] == 0.0:
            hi[i] = x[i] if policy is BoundPolicy.HARDLINE else max(1.0, x[i])
        if spec.cost_down[i] == 0.0:
            lo[i] = x[i] if policy is BoundPolicy.HARDLINE else min(0.0, x[i])
    # the current value must stay admissible so z = 0 is always feasible
    lo = np.minimum(lo, x)
    hi = np.maximum(hi, x)
    return lo - x, hi - x
