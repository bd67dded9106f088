import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from recourse.indirect import (
    IndirectModel,
    complexity_probe,
    estimate_indirect,
    estimate_indirect_batch,
    fit_indirect,
    jacobian_indirect,
    jacobian_indirect_batch,
)


def direct_kernel_mean(model, q):
    """Straight evaluation of the weighted-mean formula, no shifting tricks."""
    w = np.exp(-((model.inputs - q) ** 2).sum(axis=1) / (2 * model.sigma**2))
    return (w[:, None] * model.targets).sum(axis=0) / w.sum()


class TestEstimate:
    def test_single_row_returns_its_target(self):
        model = IndirectModel(np.array([[0.2, 0.8]]), np.array([[0.4, 0.9]]), 1.0, 1)
        out = estimate_indirect(model, np.array([0.7]), np.array([0.1]))
        assert np.allclose(out, [0.4, 0.9])

    def test_equidistant_rows_average(self):
        model = IndirectModel(
            np.array([[0.0], [1.0]]), np.array([[0.0], [1.0]]), 0.7, 1
        )
        out = estimate_indirect(model, np.array([0.5]), np.array([]))
        assert out[0] == pytest.approx(0.5)

    def test_small_sigma_snaps_to_nearest_row(self):
        gen = np.random.default_rng(1)
        inputs = gen.random((5, 3))
        targets = gen.random((5, 2))
        model = IndirectModel(inputs, targets, 0.01, 2)
        for i in range(5):
            got = estimate_indirect(model, inputs[i, :2], inputs[i, 2:])
            want = direct_kernel_mean(model, inputs[i])
            assert np.allclose(got, want, atol=1e-12)
            assert np.allclose(got, targets[i], atol=1e-6)

    @settings(max_examples=40)
    @given(seed=st.integers(0, 2**31 - 1))
    def test_convex_combination_bounds(self, seed):
        gen = np.random.default_rng(seed)
        n = int(gen.integers(1, 12))
        model = IndirectModel(gen.random((n, 4)), gen.random((n, 3)), float(gen.uniform(0.05, 3)), 2)
        q = gen.random(4)
        out = estimate_indirect(model, q[:2], q[2:])
        assert np.all(out >= model.targets.min(axis=0) - 1e-12)
        assert np.all(out <= model.targets.max(axis=0) + 1e-12)

    def test_per_feature_independence(self):
        gen = np.random.default_rng(2)
        inputs = gen.random((8, 3))
        targets = gen.random((8, 2))
        both = IndirectModel(inputs, targets, 0.8, 1)
        only_first = IndirectModel(inputs, targets[:, :1], 0.8, 1)
        q = gen.random(3)
        a = estimate_indirect(both, q[:1], q[1:])
        b = estimate_indirect(only_first, q[:1], q[1:])
        assert a[0] == b[0]

    def test_underflow_falls_back_to_plain_mean(self):
        model = IndirectModel(
            np.array([[0.0], [1.0]]), np.array([[0.0], [1.0]]), 5e-324, 1
        )
        est, flagged = estimate_indirect_batch(model, np.array([[0.3]]))
        assert flagged[0]
        assert est[0, 0] == pytest.approx(0.5)

    def test_dimension_check(self):
        model = IndirectModel(np.array([[0.2, 0.8]]), np.array([[0.4]]), 1.0, 1)
        with pytest.raises(ValueError):
            estimate_indirect(model, np.array([0.7, 0.1]), np.array([0.3]))

    def test_rejects_bad_construction(self):
        with pytest.raises(ValueError):
            IndirectModel(np.zeros((0, 2)), np.zeros((0, 1)), 1.0, 1)
        with pytest.raises(ValueError):
            IndirectModel(np.zeros((2, 2)), np.zeros((2, 1)), 0.0, 1)


class TestJacobian:
    def test_single_row_gives_zero_matrix(self):
        model = IndirectModel(np.array([[0.2, 0.8]]), np.array([[0.4, 0.9]]), 1.0, 1)
        J = jacobian_indirect(model, np.array([0.7]), np.array([0.1]))
        assert J.shape == (2, 1)
        assert np.allclose(J, 0.0)

    def test_matches_finite_differences(self):
        gen = np.random.default_rng(3)
        for _ in range(10):
            n = int(gen.integers(2, 10))
            model = IndirectModel(
                gen.random((n, 5)), gen.random((n, 3)), float(gen.uniform(0.3, 2)), 2
            )
            xd = gen.random(2)
            xu = gen.random(3)
            J = jacobian_indirect(model, xd, xu)
            h = 1e-5
            for k in range(2):
                e = np.zeros(2)
                e[k] = h
                fd = (
                    estimate_indirect(model, xd + e, xu)
                    - estimate_indirect(model, xd - e, xu)
                ) / (2 * h)
                denom = max(np.linalg.norm(fd), 1e-8)
                assert np.linalg.norm(J[:, k] - fd) / denom <= 1e-4

    def test_symmetric_fixture_midpoint(self):
        # two rows mirrored through the query; the weighted mean is stationary
        # along the axis joining them only in the perpendicular direction
        model = IndirectModel(
            np.array([[0.0, 0.5], [1.0, 0.5]]), np.array([[0.2], [0.8]]), 0.9, 2
        )
        J = jacobian_indirect(model, np.array([0.5, 0.5]), np.array([]))
        assert abs(J[0, 1]) <= 1e-12   # moving perpendicular leaves weights equal
        assert J[0, 0] > 0             # moving toward the high target raises it


class TestFitAndProbe:
    def test_fit_selects_sigma_by_cv(self):
        gen = np.random.default_rng(4)
        Xd = gen.random((40, 2))
        Xu = gen.random((40, 1))
        Xi = 0.5 * Xd.sum(axis=1, keepdims=True)
        model = fit_indirect(Xd, Xu, Xi, sigma_grid=(0.25, 1.0, 4.0), cv_folds=4)
        assert model.sigma in (0.25, 1.0, 4.0)

    def test_fit_deterministic(self):
        gen = np.random.default_rng(5)
        Xd, Xu, Xi = gen.random((30, 2)), gen.random((30, 2)), gen.random((30, 2))
        a = fit_indirect(Xd, Xu, Xi, sigma_grid=(0.5, 1.0), seed=9)
        b = fit_indirect(Xd, Xu, Xi, sigma_grid=(0.5, 1.0), seed=9)
        assert a.sigma == b.sigma

    def test_probe_zero_targets_short_circuits(self):
        rows = complexity_probe(target_counts=(0, 10), n_rows=50, repetitions=3)
        assert rows[0][0] == 0
        assert rows[0][1] <= rows[1][1] + 1e-3

    def test_probe_outputs_deterministic_shapes(self):
        rows = complexity_probe(target_counts=(5, 10), n_rows=30, repetitions=2)
        assert [r[0] for r in rows] == [5, 10]
        assert all(t >= 0 for _, t in rows)

    def test_probe_doubling_targets_stays_near_linear(self):
        rows = complexity_probe(target_counts=(50, 100), n_rows=300, repetitions=10)
        ratio = rows[1][1] / max(rows[0][1], 1e-12)
        assert 0.0 < ratio <= 4.0

    def test_serialization_roundtrip(self):
        gen = np.random.default_rng(6)
        model = IndirectModel(gen.random((4, 3)), gen.random((4, 2)), 1.3, 1)
        clone = IndirectModel.from_json(model.to_json())
        q = gen.random(3)
        assert np.array_equal(
            estimate_indirect(model, q[:1], q[1:]),
            estimate_indirect(clone, q[:1], q[1:]),
        )
