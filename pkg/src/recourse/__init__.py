"""Recourse engine: given a trained classifier with gradients and a
per-feature cost model with a global effort budget, find the feasible
change to an instance that minimizes its predicted probability of the
undesired class."""

from recourse.core import (
    BoundPolicy,
    ChangePlan,
    CostBudgetSpec,
    FeaturePartition,
    Instance,
    change_cost,
    effective_bounds,
)
from recourse.projection import FeasibleSetSpec, h_shrink, project

__all__ = [
    "BoundPolicy",
    "ChangePlan",
    "CostBudgetSpec",
    "FeaturePartition",
    "Instance",
    "change_cost",
    "effective_bounds",
    "FeasibleSetSpec",
    "h_shrink",
    "project",
]
