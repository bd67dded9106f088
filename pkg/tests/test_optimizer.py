import json

import numpy as np
import pytest

from recourse.core import FeaturePartition, Instance, OptimizationError
from recourse.indirect import IndirectModel, fit_indirect
from recourse.models import train_logistic, train_svm
from recourse.optimizer import (
    OptimizerConfig,
    TerminationReason,
    build_objective,
    build_objective_batch,
    estimate_lipschitz,
    pgd,
    pgd_batch,
    sensitivity_search,
    sensitivity_search_batch,
    stationarity_residual,
)
from recourse.projection import FeasibleSetSpec


def box_spec(d=2, budget=10.0, cu=1.0, cd=1.0, lo=-1.0, hi=1.0):
    return FeasibleSetSpec(
        np.full(d, cu), np.full(d, cd), budget, np.full(d, lo), np.full(d, hi)
    )


class TestPgd:
    def test_degenerate_budget_returns_zero(self):
        spec = box_spec(d=3, budget=0.0)
        z, trace = pgd(lambda z: float((z**2).sum() + 1), lambda z: 2 * z, spec)
        assert np.allclose(z, 0.0)

    def test_convex_quadratic_reaches_known_optimum(self):
        target = np.array([0.2, -0.3])
        spec = box_spec()
        g = lambda z: float(((z - target) ** 2).sum())
        dg = lambda z: 2 * (z - target)
        z, trace = pgd(g, dg, spec)
        assert np.abs(z - target).max() <= 1e-6
        assert trace.reason is TerminationReason.TOLERANCE

    def test_linear_objective_spends_whole_budget(self):
        c = np.ones(4)
        spec = FeasibleSetSpec(np.ones(4), np.ones(4), 2.5, np.zeros(4), np.ones(4))
        z, _ = pgd(lambda z: float(-(c @ z)), lambda z: -c, spec)
        assert -(c @ z) == pytest.approx(-2.5, abs=1e-6)
        assert spec.cost(z) == pytest.approx(2.5, abs=1e-8)

    def test_backtracking_trace_is_monotone(self, blob_data):
        X, y = blob_data
        model = train_logistic(X, y, ridge=0.1)
        part = FeaturePartition(unchangeable=(2,), indirect=(), direct=(0, 1))
        g, dg = build_objective(model, None, Instance(X[0]), part)
        spec = box_spec(budget=0.8)
        z, trace = pgd(g, dg, spec)
        gs = trace.g_values()
        assert all(b <= a + 1e-15 for a, b in zip(gs, gs[1:]))
        assert g(z) <= g(np.zeros(2)) + 1e-15

    def test_stationarity_certificate(self):
        target = np.array([0.9, 0.9])
        spec = FeasibleSetSpec(
            np.ones(2), np.ones(2), 0.5, -np.ones(2), np.ones(2)
        )
        g = lambda z: float(((z - target) ** 2).sum())
        dg = lambda z: 2 * (z - target)
        z, trace = pgd(g, dg, spec, OptimizerConfig(tol=1e-8))
        eta = trace.records[-1].step or 1.0
        assert stationarity_residual(z, dg, spec, eta) <= 1e-5

    def test_deterministic_traces(self):
        spec = box_spec()
        g = lambda z: float(np.sin(z).sum() + (z**2).sum())
        dg = lambda z: np.cos(z) + 2 * z
        _, t1 = pgd(g, dg, spec)
        _, t2 = pgd(g, dg, spec)
        assert t1.to_jsonl() == t2.to_jsonl()

    def test_iterates_stay_feasible(self):
        spec = FeasibleSetSpec(
            np.array([1.0, 2.0]), np.array([0.5, 1.0]), 0.7,
            np.array([-0.4, -0.6]), np.array([0.8, 0.3]),
        )
        g = lambda z: float(-(z.sum()))
        dg = lambda z: -np.ones(2)
        _, trace = pgd(g, dg, spec)
        for rec in trace.records:
            assert np.all(rec.z >= spec.lower - 1e-12)
            assert np.all(rec.z <= spec.upper + 1e-12)
            assert spec.cost(rec.z) <= spec.budget + 1e-8

    def test_nan_objective_raises_with_last_iterate(self):
        spec = box_spec(d=1)
        calls = {"n": 0}

        def g(z):
            calls["n"] += 1
            return float("nan") if calls["n"] > 3 else float((z[0] - 0.9) ** 2)

        def dg(z):
            return 2 * (z - 0.9)

        with pytest.raises(OptimizationError) as err:
            pgd(g, dg, spec, OptimizerConfig(step=0.1))
        assert err.value.last_iterate is not None

    def test_fixed_step_and_lipschitz_modes(self):
        target = np.array([0.1, 0.2])
        spec = box_spec()
        g = lambda z: float(((z - target) ** 2).sum())
        dg = lambda z: 2 * (z - target)
        z_fixed, _ = pgd(g, dg, spec, OptimizerConfig(step=0.25))
        assert np.abs(z_fixed - target).max() <= 1e-5
        lhat = estimate_lipschitz(dg, spec, OptimizerConfig())
        assert lhat == pytest.approx(2.0, rel=1e-6)
        z_lip, _ = pgd(g, dg, spec, OptimizerConfig(step="lipschitz"))
        assert np.abs(z_lip - target).max() <= 1e-5

    def test_trace_jsonl_is_parseable(self):
        spec = box_spec(d=1)
        _, trace = pgd(lambda z: float(z[0] ** 2), lambda z: 2 * z, spec)
        lines = trace.to_jsonl().splitlines()
        assert json.loads(lines[0])["t"] == 0
        assert json.loads(lines[-1])["termination"] == "tolerance"


class TestSensitivity:
    def test_monotone_objective_moves_to_bound(self):
        spec = FeasibleSetSpec(
            np.array([1.0]), np.array([1.0]), 10.0, np.array([-1.0]), np.array([1.0])
        )
        z, _ = sensitivity_search(lambda z: float(-z[0]), spec)
        assert z[0] == pytest.approx(1.0)

    def test_zero_budget_makes_zero_rounds(self):
        spec = box_spec(d=2, budget=0.0)
        z, trace = sensitivity_search(lambda z: float(-z.sum()), spec)
        assert np.allclose(z, 0.0)
        assert trace.iterations == 0

    def test_budget_clipping(self):
        spec = FeasibleSetSpec(
            np.array([2.0]), np.array([1.0]), 1.0, np.array([-1.0]), np.array([1.0])
        )
        z, _ = sensitivity_search(lambda z: float(-z[0]), spec)
        assert z[0] == pytest.approx(0.5)   # only half a unit is affordable

    def test_interior_optimum_weakly_worse_than_pgd(self):
        target = np.array([0.15, -0.2])
        spec = box_spec(budget=3.0)
        g = lambda z: float(((z - target) ** 2).sum())
        dg = lambda z: 2 * (z - target)
        z_pgd, _ = pgd(g, dg, spec)
        z_sens, _ = sensitivity_search(g, spec)
        assert g(z_sens) >= g(z_pgd) - 1e-9

    def test_tie_break_lowest_feature_first(self):
        # both features improve equally; feature 0 must win the round
        spec = box_spec(d=2, budget=1.0)
        z, _ = sensitivity_search(lambda z: float(-(z[0] + z[1])), spec)
        assert z[0] == pytest.approx(1.0)
        assert z[1] == pytest.approx(0.0)

    def test_rounds_fix_features_cumulatively(self):
        spec = box_spec(d=2, budget=10.0)
        g = lambda z: float(-(2 * z[0] + z[1]))
        z, trace = sensitivity_search(g, spec)
        assert np.allclose(z, [1.0, 1.0])
        assert trace.iterations == 2


class TestBatchParity:
    def test_pgd_batch_matches_scalar(self, rng):
        d = 3
        centers = rng.uniform(-1, 1, (25, d))
        cu = rng.uniform(0.2, 2, d)
        cd = rng.uniform(0.2, 2, d)
        lo = -rng.uniform(0.2, 1, d)
        hi = rng.uniform(0.2, 1, d)
        budgets = rng.uniform(0, 2, 25)

        def G(Z, rows=None):
            C = centers if rows is None else centers[rows]
            return ((Z - C) ** 2).sum(axis=1)

        def dG(Z, rows=None):
            C = centers if rows is None else centers[rows]
            return 2 * (Z - C)

        res = pgd_batch(G, dG, cu, cd, budgets, lo, hi)
        for r in range(25):
            spec = FeasibleSetSpec(cu, cd, budgets[r], lo, hi)
            z, _ = pgd(
                lambda z: float(((z - centers[r]) ** 2).sum()),
                lambda z: 2 * (z - centers[r]),
                spec,
            )
            assert np.array_equal(res.Z[r], z)

    def test_sensitivity_batch_matches_scalar(self, rng):
        d = 3
        centers = rng.uniform(-1, 1, (25, d))
        cu = rng.uniform(0.2, 2, d)
        cd = rng.uniform(0.2, 2, d)
        lo = -rng.uniform(0.2, 1, d)
        hi = rng.uniform(0.2, 1, d)
        budgets = rng.uniform(0, 2, 25)

        def G(Z, rows=None):
            C = centers if rows is None else centers[rows]
            return ((Z - C) ** 2).sum(axis=1)

        res = sensitivity_search_batch(G, cu, cd, budgets, lo, hi)
        for r in range(25):
            spec = FeasibleSetSpec(cu, cd, budgets[r], lo, hi)
            z, _ = sensitivity_search(
                lambda z: float(((z - centers[r]) ** 2).sum()), spec
            )
            assert np.array_equal(res.Z[r], z)


class TestObjectiveBuilder:
    def test_without_indirect_reduces_to_restricted_gradient(self, blob_data):
        X, y = blob_data
        model = train_logistic(X, y, ridge=0.1)
        part = FeaturePartition(unchangeable=(2,), indirect=(), direct=(0, 1))
        x = X[3]
        g, dg = build_objective(model, None, Instance(x), part)
        f = model.predict_prob(x)
        assert g(np.zeros(2)) == pytest.approx(f)
        expected = f * (1 - f) * model.weights[[0, 1]]
        assert np.allclose(dg(np.zeros(2)), expected, rtol=1e-12)

    def test_g_at_zero_uses_estimated_indirect(self, blob_data):
        X, y = blob_data
        model = train_logistic(X, y, ridge=0.1)
        H = IndirectModel(
            np.hstack([X[:, :1], X[:, 2:3]]), X[:, 1:2], 0.7, 1
        )
        part = FeaturePartition(unchangeable=(2,), indirect=(1,), direct=(0,))
        x = X[5]
        g, _ = build_objective(model, H, Instance(x), part)
        from recourse.indirect import estimate_indirect

        imputed = x.copy()
        imputed[1] = estimate_indirect(H, x[[0]], x[[2]])[0]
        assert g(np.zeros(1)) == pytest.approx(model.predict_prob(imputed))

    def test_gradient_matches_finite_differences_with_indirect(self, rng):
        n, p = 50, 6
        X = rng.uniform(0, 1, (n, p))
        y = np.where(X[:, 4] + X[:, 2] + 0.3 * rng.standard_normal(n) > 1, 1.0, -1.0)
        model = train_logistic(X, y, ridge=0.5)
        part = FeaturePartition(unchangeable=(0, 1), indirect=(2, 3), direct=(4, 5))
        H = fit_indirect(X[:, 4:6], X[:, 0:2], X[:, 2:4], sigma_grid=[0.8])
        g, dg = build_objective(model, H, Instance(X[0]), part)
        h = 1e-5
        for _ in range(12):
            z = rng.uniform(-0.3, 0.3, 2)
            fd = np.array([
                (g(z + np.eye(2)[k] * h) - g(z - np.eye(2)[k] * h)) / (2 * h)
                for k in range(2)
            ])
            an = dg(z)
            assert np.linalg.norm(an - fd) / max(np.linalg.norm(fd), 1e-8) <= 1e-4

    def test_missing_estimator_raises(self, blob_data):
        X, y = blob_data
        model = train_logistic(X, y, ridge=0.1)
        part = FeaturePartition(unchangeable=(2,), indirect=(1,), direct=(0,))
        with pytest.raises(ValueError):
            build_objective_batch(model, None, X, part)

    def test_dimension_mismatch_raises(self, blob_data):
        X, y = blob_data
        model = train_logistic(X, y, ridge=0.1)
        part = FeaturePartition(unchangeable=(2,), indirect=(), direct=(0, 1))
        g, _ = build_objective(model, None, Instance(X[0]), part)
        with pytest.raises(ValueError):
            g(np.zeros(3))
