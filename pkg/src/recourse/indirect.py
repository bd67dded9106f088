"""Nadaraya-Watson estimator for indirectly changeable features.

The indirect features of a query are predicted as a Gaussian-weighted mean
of stored training targets, with the weights computed on the concatenated
[direct, unchangeable] sub-vector.  One weight vector per query is shared by
every target column, so the per-query cost grows linearly in the number of
indirect features.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from recourse.core import _readonly


@dataclass(frozen=True)
class IndirectModel:
    """Stored regressors [x_D, x_U], targets x_I and a shared kernel width."""

    inputs: np.ndarray     # (n, |D| + |U|)
    targets: np.ndarray    # (n, |I|)
    sigma: float
    direct_dim: int        # leading columns of `inputs` that belong to D

    def __post_init__(self):
        object.__setattr__(self, "inputs", _readonly(np.atleast_2d(self.inputs)))
        object.__setattr__(self, "targets", _readonly(np.atleast_2d(self.targets)))
        if self.inputs.shape[0] == 0:
            raise ValueError("at least one stored training row is required")
        if self.targets.shape[0] != self.inputs.shape[0]:
            raise ValueError("inputs and targets must have the same row count")
        if not self.sigma > 0:
            raise ValueError(f"kernel width must be positive, got {self.sigma}")
        if not 0 <= self.direct_dim <= self.inputs.shape[1]:
            raise ValueError("direct_dim out of range")

    @property
    def n_targets(self):
        return self.targets.shape[1]

    def to_json(self) -> dict:
        return {
            "sigma": self.sigma,
            "direct_dim": self.direct_dim,
            "inputs": self.inputs.tolist(),
            "targets": self.targets.tolist(),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "IndirectModel":
        return cls(
            inputs=np.array(doc["inputs"], dtype=float),
            targets=np.array(doc["targets"], dtype=float),
            sigma=float(doc["sigma"]),
            direct_dim=int(doc["direct_dim"]),
        )


def _log_weights(model: IndirectModel, Q: np.ndarray) -> np.ndarray:
    """Log Gaussian weights, shifted so the largest per query is 0."""
    d2 = ((model.inputs[None, :, :] - Q[:, None, :]) ** 2).sum(axis=2)
    # extreme widths can push the exponents to -inf; the callers detect the
    # degenerate weights and fall back, so suppress the arithmetic warnings
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        logw = -d2 / (2.0 * model.sigma**2)
        return logw - logw.max(axis=1, keepdims=True)


def estimate_indirect_batch(model: IndirectModel, Q: np.ndarray):
    """Estimates for a batch of queries, shape (m, |I|).

    Returns (estimates, fallback_flags); a flagged row means the weights
    degenerated numerically and the unweighted mean of the stored targets was
    used instead.
    """
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    if model.n_targets == 0:
        return np.zeros((Q.shape[0], 0)), np.zeros(Q.shape[0], dtype=bool)
    with np.errstate(invalid="ignore"):
        w = np.exp(_log_weights(model, Q))
    denom = w.sum(axis=1)
    bad = ~np.isfinite(denom) | (denom <= 0)
    if np.any(bad):
        w = np.where(bad[:, None], 1.0, np.where(np.isfinite(w), w, 0.0))
        denom = w.sum(axis=1)
    est = (w @ model.targets) / denom[:, None]
    return est, bad


def estimate_indirect(model: IndirectModel, x_direct, x_unchangeable):
    """Estimate the indirect features for one query.

    The result is a convex combination of the stored targets, so each output
    component lies between the componentwise min and max of the targets.
    """
    q = np.concatenate([np.asarray(x_direct, float), np.asarray(x_unchangeable, float)])
    _check_query(model, q)
    est, _ = estimate_indirect_batch(model, q[None, :])
    return est[0]


def jacobian_indirect_batch(model: IndirectModel, Q: np.ndarray) -> np.ndarray:
    """Jacobians w.r.t. the direct block for a batch, shape (m, |I|, |D|).

    Differentiating the weighted-mean ratio gives the weighted covariance
    between targets and stored direct coordinates, divided by sigma^2; the
    query position cancels out of the covariance.
    """
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    m = Q.shape[0]
    dd = model.direct_dim
    if model.n_targets == 0 or dd == 0:
        return np.zeros((m, model.n_targets, dd))
    with np.errstate(invalid="ignore"):
        w = np.exp(_log_weights(model, Q))
    denom = w.sum(axis=1)
    bad = ~np.isfinite(denom) | (denom <= 0)
    if np.any(bad):
        # degenerate weights fall back to a constant estimate: zero slope
        w = np.where(bad[:, None], 0.0, np.where(np.isfinite(w), w, 0.0))
        denom = np.where(bad, 1.0, w.sum(axis=1))
    wn = w / denom[:, None]
    V = model.inputs[:, :dd]
    T = model.targets
    mean_v = wn @ V                      # (m, dd)
    mean_t = wn @ T                      # (m, |I|)
    cross = np.einsum("mn,na,nd->mad", wn, T, V)
    cov = cross - mean_t[:, :, None] * mean_v[:, None, :]
    return cov / model.sigma**2


def jacobian_indirect(model: IndirectModel, x_direct, x_unchangeable) -> np.ndarray:
    """Exact derivative of the estimate w.r.t. the direct features, |I| x |D|."""
    q = np.concatenate([np.asarray(x_direct, float), np.asarray(x_unchangeable, float)])
    _check_query(model, q)
    return jacobian_indirect_batch(model, q[None, :])[0]


def _check_query(model: IndirectModel, q: np.ndarray) -> None:
    if q.shape != (model.inputs.shape[1],):
        raise ValueError(
            f"query has length {q.shape[0]}, stored rows have {model.inputs.shape[1]}"
        )


def fit_indirect(
    X_direct: np.ndarray,
    X_unchangeable: np.ndarray,
    X_indirect: np.ndarray,
    sigma_grid=(0.25, 0.5, 1.0, 2.0, 4.0),
    cv_folds: int = 5,
    seed: int = 0,
) -> IndirectModel:
    """Fit the estimator, choosing the kernel width by cross-validated MSE.

    The stored data are the training rows themselves; only sigma is learned.
    """
    Xd = np.atleast_2d(np.asarray(X_direct, float))
    Xu = np.atleast_2d(np.asarray(X_unchangeable, float))
    Xi = np.atleast_2d(np.asarray(X_indirect, float))
    inputs = np.hstack([Xd, Xu])
    n = inputs.shape[0]
    sigma_grid = [float(s) for s in sigma_grid]
    if len(sigma_grid) == 1 or n < 2 * cv_folds or Xi.shape[1] == 0:
        return IndirectModel(inputs, Xi, sigma_grid[0], Xd.shape[1])

    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    folds = np.array_split(order, cv_folds)
    best_sigma, best_mse = sigma_grid[0], np.inf
    for sigma in sigma_grid:
        sse = 0.0
        for k in range(cv_folds):
            test_idx = folds[k]
            train_idx = np.concatenate([folds[j] for j in range(cv_folds) if j != k])
            sub = IndirectModel(inputs[train_idx], Xi[train_idx], sigma, Xd.shape[1])
            pred, _ = estimate_indirect_batch(sub, inputs[test_idx])
            sse += float(((pred - Xi[test_idx]) ** 2).sum())
        mse = sse / (n * Xi.shape[1])
        if mse < best_mse - 1e-15:
            best_sigma, best_mse = sigma, mse
    return IndirectModel(inputs, Xi, best_sigma, Xd.shape[1])


def complexity_probe(
    target_counts=(0, 10, 25, 50, 100),
    n_rows: int = 400,
    n_direct: int = 5,
    n_unchangeable: int = 10,
    repetitions: int = 10,
    seed: int = 0,
):
    """Time the estimator as the number of indirect targets grows.

    Returns a list of (target_count, median_seconds) rows over synthetic
    fixtures with everything but the target count held fixed; used to verify
    that the per-query cost scales linearly in the indirect set size.
    """
    rng = np.random.default_rng(seed)
    inputs = rng.random((n_rows, n_direct + n_unchangeable))
    queries = rng.random((50, n_direct + n_unchangeable))
    rows = []
    for n_i in target_counts:
        targets = rng.random((n_rows, n_i))
        model = IndirectModel(inputs, targets, 1.0, n_direct)
        times = []
        for _ in range(repetitions):
            t0 = time.perf_counter()
            estimate_indirect_batch(model, queries)
            times.append(time.perf_counter() - t0)
        rows.append((int(n_i), float(np.median(times))))
    return rows
