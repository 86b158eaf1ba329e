"""scikit-learn style wrappers around the calibration functions.

``fit`` takes either an :class:`~reviewcal.model.Instance` or an ``(n, 3)``
array of ``(reviewer_id, item_id, score)`` rows with dense integer ids.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .calibrate import DEFAULT_C, HypothesisClass, average_baseline, calibrate
from .exceptions import DimensionMismatch, IndexOutOfRange
from .metrics import precision, select_top
from .model import Instance, from_reviews


def _as_instance(X, n_items=None, n_reviewers=None) -> Instance:
    if isinstance(X, Instance):
        return X
    X = check_array(X, dtype=float, ensure_min_samples=1)
    if X.shape[1] != 3:
        raise DimensionMismatch(f"expected (reviewer, item, score) columns, got {X.shape[1]}")
    ids = X[:, :2]
    if np.any(ids != np.round(ids)) or np.any(ids < 0):
        raise IndexOutOfRange("reviewer and item ids must be nonnegative integers")
    reviewers, items = ids[:, 0].astype(np.int64), ids[:, 1].astype(np.int64)
    N = int(items.max()) + 1 if n_items is None else int(n_items)
    M = int(reviewers.max()) + 1 if n_reviewers is None else int(n_reviewers)
    return from_reviews(zip(reviewers.tolist(), items.tolist(), X[:, 2].tolist()), N, M)


class _BaseCalibrator(BaseEstimator):
    def _qualities(self, instance: Instance) -> np.ndarray:
        raise NotImplementedError

    def fit(self, X, y=None):
        """Recover item qualities from reviews ``X``; ``y`` is ignored."""
        instance = _as_instance(X, self.n_items, self.n_reviewers)
        self.qualities_ = self._qualities(instance)
        self.n_items_ = instance.num_items
        self.n_reviewers_ = instance.num_reviewers
        self.n_features_in_ = 3
        return self

    def predict(self, X=None):
        """Recovered quality of each item id in ``X`` (all items if omitted)."""
        check_is_fitted(self, "qualities_")
        if X is None:
            return self.qualities_.copy()
        idx = np.asarray(X, dtype=np.int64).ravel()
        if idx.size and (idx.min() < 0 or idx.max() >= self.n_items_):
            raise IndexOutOfRange(f"item ids must lie in [0, {self.n_items_})")
        return self.qualities_[idx]

    def select(self, n=None):
        """Top ``n`` items, best first; ``n`` defaults to the acceptance ratio."""
        check_is_fitted(self, "qualities_")
        if n is None:
            n = max(1, int(round(self.acceptance_ratio * self.n_items_)))
        return select_top(self.qualities_, n)

    def score(self, X, y):
        """Top-n precision against true qualities ``y`` after refitting on ``X``."""
        self.fit(X)
        y = np.asarray(y, dtype=float)
        S = self.select()
        return precision(S, select_top(y, len(S)))


class LeastSquaresCalibrator(_BaseCalibrator):
    """Least-squares calibration under a chosen hypothesis class.

    Parameters
    ----------
    kind : str or sequence of str
        ``noiseless``, ``linear``, ``monotone``, ``convex``, ``concave`` or
        one of these per reviewer.
    C : float
        Slope bound for the noisy classes.
    """

    def __init__(self, kind="linear", C=DEFAULT_C, tol=1e-8, acceptance_ratio=0.1,
                 n_items=None, n_reviewers=None):
        self.kind = kind
        self.C = C
        self.tol = tol
        self.acceptance_ratio = acceptance_ratio
        self.n_items = n_items
        self.n_reviewers = n_reviewers

    def _qualities(self, instance):
        kind = self.kind if isinstance(self.kind, str) else tuple(self.kind)
        self.result_ = calibrate(instance, HypothesisClass(kind, self.C), solver_tol=self.tol)
        return self.result_.qualities


class AverageCalibrator(_BaseCalibrator):
    """Baseline: each item's mean score."""

    def __init__(self, acceptance_ratio=0.1, n_items=None, n_reviewers=None):
        self.acceptance_ratio = acceptance_ratio
        self.n_items = n_items
        self.n_reviewers = n_reviewers

    def _qualities(self, instance):
        return average_baseline(instance)
