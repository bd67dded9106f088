import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from recourse.core import TrainingError
from recourse.models import (
    LogisticModel,
    PlattCalibration,
    SvmModel,
    _gram,
    _smo,
    gaussian_kernel,
    logistic_log_likelihood,
    model_from_json,
    platt_fit,
    select_svm_params,
    svm_dual_objective,
    train_logistic,
    train_svm,
)


class TestKernel:
    def test_self_similarity_is_one(self):
        x = np.array([0.3, 0.9, 0.1])
        assert gaussian_kernel(x, x, 2.0) == 1.0

    def test_distance_sigma_sqrt2_gives_inverse_e(self):
        x = np.zeros(2)
        y = np.array([np.sqrt(2.0) * 0.7, 0.0])
        assert gaussian_kernel(x, y, 0.7) == pytest.approx(np.exp(-1.0))

    @given(seed=st.integers(0, 2**31 - 1))
    def test_symmetry(self, seed):
        gen = np.random.default_rng(seed)
        x, y = gen.random(4), gen.random(4)
        assert gaussian_kernel(x, y, 1.3) == pytest.approx(gaussian_kernel(y, x, 1.3))

    def test_rejects_bad_arguments(self):
        with pytest.raises(ValueError):
            gaussian_kernel(np.zeros(2), np.zeros(2), 0.0)
        with pytest.raises(ValueError):
            gaussian_kernel(np.zeros(2), np.zeros(3), 1.0)


class TestLogistic:
    def test_constant_features_balanced_labels(self):
        X = np.zeros((10, 1))
        y = np.array([1.0, -1.0] * 5)
        m = train_logistic(X, y)
        assert m.intercept == pytest.approx(0.0, abs=1e-8)
        assert m.predict_prob(np.zeros(1)) == pytest.approx(0.5)

    def test_separated_data_sign_and_finiteness(self):
        gen = np.random.default_rng(0)
        X = np.concatenate([gen.normal(-1, 0.3, 30), gen.normal(1, 0.3, 30)])[:, None]
        y = np.array([-1.0] * 30 + [1.0] * 30)
        m = train_logistic(X, y, ridge=1.0)
        assert m.weights[0] > 0
        assert np.isfinite(m.weights).all()

    def test_gradient_certificate_at_fit(self, blob_data):
        X, y = blob_data
        ridge = 1e-4
        m = train_logistic(X, y, ridge=ridge)
        t = (y + 1.0) / 2.0
        s = X @ m.weights + m.intercept
        p = 1.0 / (1.0 + np.exp(-s))
        grad = np.concatenate([[np.sum(t - p)], X.T @ (t - p) - ridge * m.weights])
        assert np.linalg.norm(grad) <= 1e-6

    def test_fit_beats_zero_coefficients(self, blob_data):
        X, y = blob_data
        m = train_logistic(X, y, ridge=0.01)
        assert logistic_log_likelihood(m.weights, m.intercept, X, y, 0.01) >= \
            logistic_log_likelihood(np.zeros(X.shape[1]), 0.0, X, y, 0.01)

    def test_zero_model_predicts_half_with_zero_gradient(self):
        m = LogisticModel(np.zeros(3), 0.0)
        assert m.predict_prob(np.array([0.4, 0.5, 0.6])) == 0.5
        assert np.allclose(m.grad_prob(np.array([0.4, 0.5, 0.6])), 0.0)

    def test_gradient_quarter_beta_at_half(self):
        m = LogisticModel(np.array([2.0, -1.0]), 0.0)
        x = np.zeros(2)   # sigma(0) = 0.5
        assert np.allclose(m.grad_prob(x), 0.25 * m.weights)

    def test_single_class_rejected(self):
        with pytest.raises(TrainingError):
            train_logistic(np.random.rand(5, 2), np.ones(5))

    def test_probabilities_strictly_inside_unit_interval(self):
        m = LogisticModel(np.array([1000.0]), 0.0)
        assert 0.0 < m.predict_prob(np.array([1.0]))
        assert m.predict_prob(np.array([-1.0])) > 0.0
        assert m.predict_prob(np.array([1.0])) < 1.0


class TestSmo:
    def test_two_symmetric_points(self):
        X = np.array([[1.0, 0.0], [-1.0, 0.0]])
        y = np.array([1.0, -1.0])
        K = _gram(X, X, 1.0)
        alpha, b, _, converged = _smo(K, y, C=10.0)
        assert converged
        assert alpha[0] == pytest.approx(alpha[1], rel=1e-6)
        assert b == pytest.approx(0.0, abs=1e-6)
        expected = 1.0 / (1.0 - np.exp(-2.0))
        assert alpha[0] == pytest.approx(expected, rel=1e-3)

    def test_equality_constraint_holds(self, blob_data):
        X, y = blob_data
        K = _gram(X, X, 1.0)
        alpha, _, _, _ = _smo(K, y, C=2.0)
        assert abs(float(alpha @ y)) <= 1e-6
        assert np.all(alpha >= -1e-12) and np.all(alpha <= 2.0 + 1e-12)

    def test_dual_objective_improves_on_zero(self, blob_data):
        X, y = blob_data
        K = _gram(X, X, 1.0)
        alpha, _, _, _ = _smo(K, y, C=2.0)
        assert svm_dual_objective(alpha, y, K) >= 0.0

    def test_kkt_violation_below_tolerance(self, blob_data):
        X, y = blob_data
        K = _gram(X, X, 1.0)
        alpha, _, _, _ = _smo(K, y, C=2.0, tol=1e-3)
        grad = (y[:, None] * y[None, :] * K) @ alpha - 1.0
        yg = -y * grad
        eps = 1e-12
        up = ((y > 0) & (alpha < 2.0 - eps)) | ((y < 0) & (alpha > eps))
        low = ((y > 0) & (alpha > eps)) | ((y < 0) & (alpha < 2.0 - eps))
        assert yg[up].max() - yg[low].min() <= 1e-3


class TestSvmModel:
    def test_train_and_calibration(self, blob_data):
        X, y = blob_data
        m = train_svm(X, y, C=2.0, sigma=1.0)
        assert m.platt.slope < 0.0    # higher score means higher probability
        p = m.predict_prob_batch(X)
        assert np.all((p > 0.0) & (p < 1.0))
        assert ((p > 0.5) == (y > 0)).mean() > 0.8

    def test_platt_is_strictly_monotone_in_score(self, blob_data):
        X, y = blob_data
        m = train_svm(X, y, C=2.0, sigma=1.0)
        scores = np.linspace(-4, 4, 41)
        probs = m.platt.prob(scores)
        assert np.all(np.diff(probs) > 0.0)

    def test_gradient_matches_finite_differences(self, blob_data, rng):
        X, y = blob_data
        m = train_svm(X, y, C=2.0, sigma=1.0)
        h = 1e-5
        checked = 0
        for _ in range(80):
            x = rng.uniform(0, 1, 3)
            p = m.predict_prob(x)
            if abs(p - 0.5) >= 0.49:
                continue
            fd = np.array([
                (m.predict_prob(x + np.eye(3)[k] * h) - m.predict_prob(x - np.eye(3)[k] * h)) / (2 * h)
                for k in range(3)
            ])
            g = m.grad_prob(x)
            assert np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-8) <= 1e-4
            checked += 1
        assert checked >= 20

    def test_larger_sigma_smooths_score_gradient(self):
        # fixed 1-d fit: reuse the same dual coefficients across widths
        X = np.array([[0.1], [0.35], [0.62], [0.9]])
        coefs = np.array([0.8, -0.5, 0.6, -0.9])
        coefs = coefs - coefs.mean()   # keep the equality constraint
        grid = np.linspace(0, 1, 101)[:, None]
        max_grad = []
        for sigma in (0.3, 0.6, 1.2, 2.4):
            m = SvmModel(X, coefs, sigma, 10.0, 0.0, PlattCalibration(-1.0, 0.0))
            max_grad.append(np.abs(m.grad_score_batch(grid)).max())
        assert all(b <= a + 1e-12 for a, b in zip(max_grad, max_grad[1:]))

    def test_serialization_roundtrip(self, blob_data):
        X, y = blob_data
        m = train_svm(X, y, C=2.0, sigma=1.0)
        clone = model_from_json(m.to_json())
        q = np.array([0.4, 0.5, 0.6])
        assert clone.predict_prob(q) == m.predict_prob(q)
        assert np.array_equal(clone.grad_prob(q), m.grad_prob(q))

    def test_single_class_rejected(self):
        with pytest.raises(TrainingError):
            train_svm(np.random.rand(6, 2), np.ones(6), C=1.0, sigma=1.0)

    def test_rejects_nonpositive_hyperparameters(self, blob_data):
        X, y = blob_data
        with pytest.raises(ValueError):
            train_svm(X, y, C=0.0, sigma=1.0)
        with pytest.raises(ValueError):
            train_svm(X, y, C=1.0, sigma=-1.0)

    def test_invariant_checks_on_construction(self):
        with pytest.raises(ValueError):
            SvmModel(
                np.array([[0.0]]), np.array([5.0]), 1.0, 1.0, 0.0,
                PlattCalibration(-1.0, 0.0),
            )   # box violated
        with pytest.raises(ValueError):
            SvmModel(
                np.array([[0.0], [1.0]]), np.array([0.5, 0.1]), 1.0, 1.0, 0.0,
                PlattCalibration(-1.0, 0.0),
            )   # equality violated


class TestPlattFit:
    def test_recovers_reasonable_probabilities(self):
        gen = np.random.default_rng(9)
        s = gen.normal(0, 2, 400)
        y = np.where(s + gen.normal(0, 1.0, 400) > 0, 1.0, -1.0)
        cal = platt_fit(s, y)
        assert cal.slope < 0
        assert cal.prob(3.0) > 0.8
        assert cal.prob(-3.0) < 0.2

    def test_separated_scores_stay_finite(self):
        s = np.array([-2.0, -1.5, 1.5, 2.0])
        y = np.array([-1.0, -1.0, 1.0, 1.0])
        cal = platt_fit(s, y)
        assert np.isfinite(cal.slope) and np.isfinite(cal.intercept)


class TestSelection:
    def test_grid_selection_deterministic(self, blob_data):
        X, y = blob_data
        a = select_svm_params(X, y, (0.5, 2.0), (0.5, 1.0), n_folds=3, seed=1)
        b = select_svm_params(X, y, (0.5, 2.0), (0.5, 1.0), n_folds=3, seed=1)
        assert a == b
        assert a[0] in (0.5, 2.0) and a[1] in (0.5, 1.0)
