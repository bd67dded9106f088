"""Representativeness and support diagnostics.

Two questions about trust: does the training sample look like the
population (mean discrepancy), and does an optimized instance land in a
region with enough training data behind it (neighborhood variance and
neighbor counts against a dataset-wide radius).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SupportReport:
    """Neighborhood diagnostics for one instance.

    epsilon: variance of the model probabilities over the k nearest training
    neighbors. gamma: number of training rows within `radius`, where the
    radius is the training-set average of each row's k-th neighbor distance.
    baseline_gamma: mean gamma over the training rows themselves, for
    comparison.
    """

    epsilon: float
    gamma: int
    k: int
    radius: float
    baseline_gamma: float

    def to_json(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "gamma": self.gamma,
            "k": self.k,
            "radius": self.radius,
            "baseline_gamma": self.baseline_gamma,
        }


def discrepancy(sample_a: np.ndarray, sample_b: np.ndarray) -> float:
    """Euclidean distance between the two sample means.

    Symmetric, nonnegative, zero exactly when the means coincide.
    """
    A = np.atleast_2d(np.asarray(sample_a, dtype=float))
    B = np.atleast_2d(np.asarray(sample_b, dtype=float))
    if A.shape[0] == 0 or B.shape[0] == 0:
        raise ValueError("discrepancy requires nonempty samples")
    if A.shape[1] != B.shape[1]:
        raise ValueError("samples must share the feature dimension")
    return float(np.linalg.norm(A.mean(axis=0) - B.mean(axis=0)))


def _knn_indices(dists: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k smallest distances; ties at the cutoff go to the
    lowest index (stable mergesort on the distance key)."""
    order = np.argsort(dists, kind="stable")
    return order[:k]


class SupportIndex:
    """Precomputed neighborhood statistics over one training set and model.

    The radius (mean k-th neighbor distance, self excluded) and the
    training-set baseline gamma are computed once; per-instance queries are
    then a single distance scan.
    """

    def __init__(self, X_train: np.ndarray, model, k: int = 10):
        X = np.atleast_2d(np.asarray(X_train, dtype=float))
        n = X.shape[0]
        if not 1 <= k <= n:
            raise ValueError(f"k must be in [1, {n}], got {k}")
        self.X = X
        self.k = k
        self.model = model
        self.probs = model.predict_prob_batch(X)
        d2 = ((X[:, None, :] - X[None, :, :]) ** 2).sum(axis=2)
        dists = np.sqrt(np.maximum(d2, 0.0))
        kth = np.empty(n)
        for i in range(n):
            row = np.delete(dists[i], i)
            kk = min(k, row.shape[0])
            kth[i] = np.partition(row, kk - 1)[kk - 1] if kk > 0 else 0.0
        self.radius = float(kth.mean())
        self.baseline_gamma = float((dists <= self.radius).sum(axis=1).mean())

    def support(self, x: np.ndarray) -> SupportReport:
        x = np.asarray(x, dtype=float)
        dists = np.sqrt(((self.X - x[None, :]) ** 2).sum(axis=1))
        nn = _knn_indices(dists, self.k)
        eps = float(np.var(self.probs[nn]))
        gamma = int((dists <= self.radius).sum())
        return SupportReport(eps, gamma, self.k, self.radius, self.baseline_gamma)

    def support_batch(self, Xq: np.ndarray):
        return [self.support(x) for x in np.atleast_2d(np.asarray(Xq, dtype=float))]


def support(x, X_train, model, k: int = 10) -> SupportReport:
    """One-shot support query; builds the index and discards it."""
    return SupportIndex(X_train, model, k).support(x)
