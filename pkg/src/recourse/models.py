"""Trainable probability models with analytic gradients.

Two classifiers are provided, both exposing predict_prob / grad_prob over
normalized feature vectors: a ridge-stabilized logistic regression fit by
Newton's method, and a Gaussian-kernel SVM trained on its dual by sequential
minimal optimization, calibrated to probabilities with a sigmoid fit on
cross-validated scores.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np

from recourse.core import TrainingError, _readonly

_PROB_FLOOR = 1e-300
_PROB_CEIL = 1.0 - 1e-16


@runtime_checkable
class ProbabilityModel(Protocol):
    def predict_prob(self, x) -> float: ...
    def grad_prob(self, x) -> np.ndarray: ...
    def predict_prob_batch(self, X) -> np.ndarray: ...
    def grad_prob_batch(self, X) -> np.ndarray: ...
    def to_json(self) -> dict: ...


def _sigmoid(s):
    s = np.asarray(s, dtype=float)
    out = np.empty_like(s)
    pos = s >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-s[pos]))
    es = np.exp(s[~pos])
    out[~pos] = es / (1.0 + es)
    return out


def gaussian_kernel(x, x_other, sigma: float) -> float:
    """Similarity in (0, 1]: exp(-||x - x'||^2 / (2 sigma^2))."""
    if sigma <= 0:
        raise ValueError(f"kernel width must be positive, got {sigma}")
    x = np.asarray(x, dtype=float)
    x_other = np.asarray(x_other, dtype=float)
    if x.shape != x_other.shape:
        raise ValueError("kernel arguments must have equal dimensions")
    return float(np.exp(-((x - x_other) ** 2).sum() / (2.0 * sigma**2)))


def _gram(A, B, sigma):
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    d2 = ((A[:, None, :] - B[None, :, :]) ** 2).sum(axis=2)
    return np.exp(-d2 / (2.0 * sigma**2))


@dataclass(frozen=True)
class LogisticModel:
    """sigma(intercept + weights . x) as the positive-class probability."""

    weights: np.ndarray
    intercept: float

    def __post_init__(self):
        object.__setattr__(self, "weights", _readonly(self.weights))
        if not np.all(np.isfinite(self.weights)) or not np.isfinite(self.intercept):
            raise ValueError("logistic coefficients must be finite")

    def predict_prob_batch(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        p = _sigmoid(X @ self.weights + self.intercept)
        return np.clip(p, _PROB_FLOOR, _PROB_CEIL)

    def predict_prob(self, x) -> float:
        return float(self.predict_prob_batch(np.asarray(x)[None, :])[0])

    def grad_prob_batch(self, X) -> np.ndarray:
        p = self.predict_prob_batch(X)
        return (p * (1.0 - p))[:, None] * self.weights[None, :]

    def grad_prob(self, x) -> np.ndarray:
        return self.grad_prob_batch(np.asarray(x)[None, :])[0]

    def to_json(self) -> dict:
        return {
            "type": "logistic",
            "weights": self.weights.tolist(),
            "intercept": self.intercept,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "LogisticModel":
        return cls(np.array(doc["weights"], dtype=float), float(doc["intercept"]))


def logistic_log_likelihood(weights, intercept, X, y, ridge: float = 0.0) -> float:
    """Ridged Bernoulli log-likelihood with labels in {-1, +1}."""
    t = (np.asarray(y, dtype=float) + 1.0) / 2.0
    s = X @ weights + intercept
    ll = float((t * s - np.logaddexp(0.0, s)).sum())
    return ll - 0.5 * ridge * float(weights @ weights)


def logistic_log_likelihood_grad(weights, intercept, X, y, ridge: float = 0.0):
    """Gradient of the ridged log-likelihood w.r.t. (intercept, weights)."""
    t = (np.asarray(y, dtype=float) + 1.0) / 2.0
    p = _sigmoid(X @ weights + intercept)
    r = t - p
    return np.concatenate([[r.sum()], X.T @ r - ridge * weights])


def train_logistic(
    X, y, ridge: float = 1e-4, tol: float = 1e-6, max_iter: int = 100
) -> LogisticModel:
    """Maximum-likelihood fit by damped Newton iteration.

    A small L2 ridge on the weights (never the intercept) keeps the optimum
    finite on separable data.  Converges when the gradient 2-norm of the
    ridged objective drops to `tol`.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    if len(np.unique(y)) < 2:
        raise TrainingError("logistic training needs both classes present")
    n, p = X.shape
    Xa = np.hstack([np.ones((n, 1)), X])
    t = (y + 1.0) / 2.0
    beta = np.zeros(p + 1)
    reg = np.concatenate([[1e-12], np.full(p, ridge)])

    def objective(b):
        s = Xa @ b
        return float((t * s - np.logaddexp(0.0, s)).sum()) - 0.5 * float(
            (reg * b) @ b
        )

    obj = objective(beta)
    for _ in range(max_iter):
        s = Xa @ beta
        prob = _sigmoid(s)
        grad = Xa.T @ (t - prob) - reg * beta
        if np.linalg.norm(grad) <= tol:
            return LogisticModel(beta[1:], float(beta[0]))
        w = np.maximum(prob * (1.0 - prob), 1e-12)
        H = (Xa * w[:, None]).T @ Xa + np.diag(reg)
        step = np.linalg.solve(H, grad)
        scale = 1.0
        for _ in range(60):
            cand = beta + scale * step
            cand_obj = objective(cand)
            if cand_obj >= obj:
                beta, obj = cand, cand_obj
                break
            scale *= 0.5
        else:
            break
    grad = Xa.T @ (t - _sigmoid(Xa @ beta)) - reg * beta
    if np.linalg.norm(grad) <= tol:
        return LogisticModel(beta[1:], float(beta[0]))
    raise TrainingError(
        f"Newton iteration stalled with gradient norm {np.linalg.norm(grad):.2e}",
        model=LogisticModel(beta[1:], float(beta[0])),
    )


@dataclass(frozen=True)
class PlattCalibration:
    """p = 1 / (1 + exp(slope * score + intercept))."""

    slope: float
    intercept: float

    def prob(self, scores):
        return np.clip(
            _sigmoid(-(self.slope * np.asarray(scores, dtype=float) + self.intercept)),
            _PROB_FLOOR,
            _PROB_CEIL,
        )


def platt_fit(scores, labels, max_iter: int = 200) -> PlattCalibration:
    """Fit the calibration sigmoid by regularized maximum likelihood.

    Uses the usual smoothed targets (N+1)/(N+2) so perfectly separated
    scores still give a finite slope. Newton iteration on the two
    parameters with a Levenberg-style damping fallback.
    """
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels, dtype=float)
    pos = y > 0
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    t = np.where(pos, (n_pos + 1.0) / (n_pos + 2.0), 1.0 / (n_neg + 2.0))
    A, B = 0.0, float(np.log((n_neg + 1.0) / (n_pos + 1.0)))

    def nll(a, b):
        f = a * s + b
        # -sum t*log(p) + (1-t)*log(1-p) with p = sigmoid(-f)
        return float((t * np.logaddexp(0.0, f) + (1.0 - t) * np.logaddexp(0.0, -f)).sum())

    best = nll(A, B)
    for _ in range(max_iter):
        p = _sigmoid(-(A * s + B))
        d1 = t - p
        d2 = np.maximum(p * (1.0 - p), 1e-12)
        gA = float((s * d1).sum())
        gB = float(d1.sum())
        if abs(gA) < 1e-10 and abs(gB) < 1e-10:
            break
        hAA = float((s * s * d2).sum()) + 1e-12
        hAB = float((s * d2).sum())
        hBB = float(d2.sum()) + 1e-12
        det = hAA * hBB - hAB * hAB
        if det <= 0:
            break
        dA = -(hBB * gA - hAB * gB) / det
        dB = -(hAA * gB - hAB * gA) / det
        scale = 1.0
        for _ in range(40):
            cand = nll(A + scale * dA, B + scale * dB)
            if cand <= best + 1e-12:
                A, B = A + scale * dA, B + scale * dB
                best = cand
                break
            scale *= 0.5
        else:
            break
    return PlattCalibration(float(A), float(B))


@dataclass(frozen=True)
class SvmModel:
    """Gaussian-kernel SVM with a Platt probability map.

    Stores only the support vectors; dual_coefs holds alpha_i * y_i per
    stored row.  The raw decision score is sum_i dual_coefs[i] *
    k(sv_i, x) + offset; the calibrated probability is platt.prob(score).
    """

    support_vectors: np.ndarray
    dual_coefs: np.ndarray
    kernel_width: float
    box_parameter: float
    offset: float
    platt: PlattCalibration

    def __post_init__(self):
        object.__setattr__(self, "support_vectors", _readonly(np.atleast_2d(self.support_vectors)))
        object.__setattr__(self, "dual_coefs", _readonly(self.dual_coefs))
        if self.kernel_width <= 0 or self.box_parameter <= 0:
            raise ValueError("kernel width and box parameter must be positive")
        alphas = np.abs(self.dual_coefs)
        if np.any(alphas > self.box_parameter + 1e-6):
            raise ValueError("dual coefficients violate the box constraint")
        if abs(float(self.dual_coefs.sum())) > 1e-6:
            raise ValueError("dual coefficients violate the equality constraint")
        if not np.isfinite(self.offset):
            raise ValueError("offset must be finite")

    def predict_score_batch(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        K = _gram(self.support_vectors, X, self.kernel_width)
        return self.dual_coefs @ K + self.offset

    def predict_prob_batch(self, X) -> np.ndarray:
        return self.platt.prob(self.predict_score_batch(X))

    def predict_prob(self, x) -> float:
        return float(self.predict_prob_batch(np.asarray(x)[None, :])[0])

    def grad_score_batch(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        K = _gram(self.support_vectors, X, self.kernel_width)   # (nsv, m)
        wk = self.dual_coefs[:, None] * K
        # d k(sv, x)/dx = k * (sv - x) / sigma^2
        grad = (wk.T @ self.support_vectors - wk.sum(axis=0)[:, None] * X)
        return grad / self.kernel_width**2

    def grad_prob_batch(self, X) -> np.ndarray:
        p = self.predict_prob_batch(X)
        dpds = -self.platt.slope * p * (1.0 - p)
        return dpds[:, None] * self.grad_score_batch(X)

    def grad_prob(self, x) -> np.ndarray:
        return self.grad_prob_batch(np.asarray(x)[None, :])[0]

    def to_json(self) -> dict:
        return {
            "type": "svm",
            "support_vectors": self.support_vectors.tolist(),
            "dual_coefs": self.dual_coefs.tolist(),
            "kernel_width": self.kernel_width,
            "box_parameter": self.box_parameter,
            "offset": self.offset,
            "platt": {"slope": self.platt.slope, "intercept": self.platt.intercept},
        }

    @classmethod
    def from_json(cls, doc: dict) -> "SvmModel":
        return cls(
            support_vectors=np.array(doc["support_vectors"], dtype=float),
            dual_coefs=np.array(doc["dual_coefs"], dtype=float),
            kernel_width=float(doc["kernel_width"]),
            box_parameter=float(doc["box_parameter"]),
            offset=float(doc["offset"]),
            platt=PlattCalibration(
                float(doc["platt"]["slope"]), float(doc["platt"]["intercept"])
            ),
        )


def svm_dual_objective(alpha, y, K) -> float:
    """The dual objective: sum(alpha) - 0.5 sum alpha_i alpha_j y_i y_j K_ij."""
    ay = alpha * y
    return float(alpha.sum() - 0.5 * ay @ K @ ay)


def _smo(K, y, C, tol=1e-3, max_iter=100_000):
    """Sequential minimal optimization with maximal-violating-pair selection.

    Maintains the dual gradient incrementally; each step optimizes the pair
    of coordinates with the largest KKT violation in closed form. Returns
    (alpha, offset, iterations, converged).
    """
    n = y.shape[0]
    alpha = np.zeros(n)
    grad = -np.ones(n)          # gradient of 0.5 a^T Q a - 1^T a at a = 0
    Qy = y[:, None] * y[None, :] * K
    eps = 1e-12
    it = 0
    converged = False
    while it < max_iter:
        it += 1
        yg = -y * grad
        up = ((y > 0) & (alpha < C - eps)) | ((y < 0) & (alpha > eps))
        low = ((y > 0) & (alpha > eps)) | ((y < 0) & (alpha < C - eps))
        if not up.any() or not low.any():
            converged = True
            break
        i = int(np.argmax(np.where(up, yg, -np.inf)))
        j = int(np.argmin(np.where(low, yg, np.inf)))
        if yg[i] - yg[j] <= tol:
            converged = True
            break
        a1, a2 = alpha[i], alpha[j]
        y1, y2 = y[i], y[j]
        s = y1 * y2
        if s > 0:
            lo_b, hi_b = max(0.0, a1 + a2 - C), min(C, a1 + a2)
        else:
            lo_b, hi_b = max(0.0, a2 - a1), min(C, C + a2 - a1)
        eta = max(K[i, i] + K[j, j] - 2.0 * K[i, j], 1e-12)
        a2_new = a2 + y2 * (y1 * grad[i] - y2 * grad[j]) / eta
        a2_new = min(max(a2_new, lo_b), hi_b)
        if a2_new < 1e-10:
            a2_new = 0.0
        elif a2_new > C - 1e-10:
            a2_new = C
        a1_new = a1 + s * (a2 - a2_new)
        a1_new = min(max(a1_new, 0.0), C)
        d1, d2 = a1_new - a1, a2_new - a2
        if abs(d1) < 1e-14 and abs(d2) < 1e-14:
            converged = True
            break
        alpha[i], alpha[j] = a1_new, a2_new
        grad += Qy[:, i] * d1 + Qy[:, j] * d2

    scores = (alpha * y) @ K
    free = (alpha > eps) & (alpha < C - eps)
    if free.any():
        b = float((y[free] - scores[free]).mean())
    else:
        yg = -y * grad
        up = ((y > 0) & (alpha < C - eps)) | ((y < 0) & (alpha > eps))
        low = ((y > 0) & (alpha > eps)) | ((y < 0) & (alpha < C - eps))
        hi_v = np.where(up, yg, -np.inf).max() if up.any() else 0.0
        lo_v = np.where(low, yg, np.inf).min() if low.any() else 0.0
        b = float((hi_v + lo_v) / 2.0)
    return alpha, b, it, converged


def train_svm(
    X,
    y,
    C: float = 1.0,
    sigma: float = 1.0,
    tol: float = 1e-3,
    max_iter: int = 100_000,
    platt_folds: int = 3,
    seed: int = 0,
) -> SvmModel:
    """Train the dual with SMO, then calibrate probabilities.

    The calibration sigmoid is fit on scores the model has not seen: held-out
    fold scores from refitting the SVM on the remaining folds. Falls back to
    in-sample scores when the data are too small to fold.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    if C <= 0 or sigma <= 0:
        raise ValueError("C and sigma must be positive")
    if len(np.unique(y)) < 2:
        raise TrainingError("SVM training needs both classes present")
    n = X.shape[0]
    K = _gram(X, X, sigma)
    alpha, b, iters, converged = _smo(K, y, C, tol=tol, max_iter=max_iter)

    sv = alpha > 1e-10
    if not sv.any():
        # degenerate but possible at tiny C; keep one zero-weight row
        sv = np.zeros(n, dtype=bool)
        sv[0] = True
    model_scores = _cv_scores(X, y, C, sigma, tol, max_iter, platt_folds, seed)
    platt = platt_fit(model_scores, y)
    model = SvmModel(
        support_vectors=X[sv],
        dual_coefs=(alpha * y)[sv],
        kernel_width=float(sigma),
        box_parameter=float(C),
        offset=b,
        platt=platt,
    )
    if not converged:
        raise TrainingError(
            f"SMO did not reach tolerance {tol} within {max_iter} iterations",
            model=model,
        )
    return model


def _stratified_folds(y, n_folds, seed):
    rng = np.random.default_rng(seed)
    fold_of = np.zeros(y.shape[0], dtype=int)
    for cls in np.unique(y):
        idx = np.flatnonzero(y == cls)
        idx = idx[rng.permutation(idx.shape[0])]
        fold_of[idx] = np.arange(idx.shape[0]) % n_folds
    return fold_of


def _cv_scores(X, y, C, sigma, tol, max_iter, n_folds, seed):
    n = X.shape[0]
    counts = [int((y == c).sum()) for c in np.unique(y)]
    if n < 2 * n_folds or min(counts) < n_folds:
        K = _gram(X, X, sigma)
        alpha, b, _, _ = _smo(K, y, C, tol=tol, max_iter=max_iter)
        return (alpha * y) @ K + b
    fold_of = _stratified_folds(y, n_folds, seed)
    scores = np.zeros(n)
    for k in range(n_folds):
        tr = fold_of != k
        te = ~tr
        K_tr = _gram(X[tr], X[tr], sigma)
        alpha, b, _, _ = _smo(K_tr, y[tr], C, tol=tol, max_iter=max_iter)
        K_te = _gram(X[tr], X[te], sigma)
        scores[te] = (alpha * y[tr]) @ K_te + b
    return scores


def select_svm_params(
    X, y, c_grid, sigma_grid, n_folds: int = 5, seed: int = 0,
    tol: float = 1e-3, max_iter: int = 100_000,
):
    """Pick (C, sigma) by cross-validated accuracy; ties keep grid order."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    combos = [(float(c), float(s)) for c in c_grid for s in sigma_grid]
    if len(combos) == 1:
        return combos[0]
    fold_of = _stratified_folds(y, n_folds, seed)
    best, best_acc = combos[0], -1.0
    for C, sigma in combos:
        correct = 0
        try:
            for k in range(n_folds):
                tr = fold_of != k
                K_tr = _gram(X[tr], X[tr], sigma)
                alpha, b, _, _ = _smo(K_tr, y[tr], C, tol=tol, max_iter=max_iter)
                s = (alpha * y[tr]) @ _gram(X[tr], X[~tr], sigma) + b
                correct += int((np.where(s >= 0, 1.0, -1.0) == y[~tr]).sum())
        except TrainingError:
            continue
        acc = correct / X.shape[0]
        if acc > best_acc + 1e-12:
            best, best_acc = (C, sigma), acc
    return best


def select_logistic_ridge(X, y, ridge_grid, n_folds: int = 5, seed: int = 0) -> float:
    """Pick the ridge strength by cross-validated accuracy."""
    ridge_grid = [float(r) for r in ridge_grid]
    if len(ridge_grid) == 1:
        return ridge_grid[0]
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    fold_of = _stratified_folds(y, n_folds, seed)
    best, best_acc = ridge_grid[0], -1.0
    for ridge in ridge_grid:
        correct = 0
        try:
            for k in range(n_folds):
                tr = fold_of != k
                model = train_logistic(X[tr], y[tr], ridge=ridge)
                p = model.predict_prob_batch(X[~tr])
                correct += int((np.where(p >= 0.5, 1.0, -1.0) == y[~tr]).sum())
        except TrainingError:
            continue
        acc = correct / X.shape[0]
        if acc > best_acc + 1e-12:
            best, best_acc = ridge, acc
    return best


def model_to_json(model) -> dict:
    return model.to_json()


def model_from_json(doc: dict):
    if doc["type"] == "logistic":
        return LogisticModel.from_json(doc)
    if doc["type"] == "svm":
        return SvmModel.from_json(doc)
    raise ValueError(f"unknown model type {doc['type']!r}")
