"""Top-n selection and ranking metrics.

Ranks count from 1 for the highest quality; ties go to the smaller item id.
Non-finite qualities (items nobody reviewed) rank after every finite one.
Rational-valued metrics are evaluated exactly and rounded once, and float
sums use ``math.fsum``, so results do not depend on summation order.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .exceptions import InvalidN, MissingGroundTruth, MissingRank, SizeMismatch


def _key_values(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise SizeMismatch(f"expected a 1-D quality vector, got shape {x.shape}")
    # -inf keeps NaN/unreviewed items at the bottom
    return np.where(np.isfinite(x), x, -np.inf)


def ranking(x) -> np.ndarray:
    """Item ids ordered from best to worst."""
    key = _key_values(x)
    # lexsort: last key is primary -> descending quality, then ascending id
    return np.lexsort((np.arange(key.size), -key))


def rank(x) -> np.ndarray:
    """``rank(x)[i]`` is item ``i``'s 1-based rank."""
    order = ranking(x)
    out = np.empty(order.size, dtype=np.int64)
    out[order] = np.arange(1, order.size + 1)
    return out


def select_top(x, n: int) -> list[int]:
    N = np.asarray(x).shape[0]
    if not 1 <= n <= N:
        raise InvalidN(f"n must lie in [1, {N}], got {n}")
    return [int(i) for i in ranking(x)[:n]]


def _check_pair(S, T):
    if len(S) != len(T):
        raise SizeMismatch(f"|S| = {len(S)} but |T| = {len(T)}")
    if len(S) == 0:
        raise SizeMismatch("selections must be nonempty")


def precision(S: Sequence[int], T: Sequence[int]) -> float:
    _check_pair(S, T)
    hits = len(set(S) & set(T))
    return float(Fraction(hits, len(S)))


def average_gap(S: Sequence[int], T: Sequence[int], x_star) -> float:
    """Mean true quality of ``T`` minus that of ``S``."""
    if x_star is None:
        raise MissingGroundTruth("average gap needs ground-truth qualities")
    _check_pair(S, T)
    x_star = np.asarray(x_star, dtype=float)
    mean_t = sum(Fraction(float(x_star[i])) for i in T) / len(T)
    mean_s = sum(Fraction(float(x_star[i])) for i in S) / len(S)
    return float(mean_t - mean_s)


def average_l1(x, x_star) -> float:
    """Mean absolute difference between recovered and true ranks."""
    if x_star is None:
        raise MissingGroundTruth("average L1 needs ground-truth qualities")
    x, x_star = np.asarray(x), np.asarray(x_star)
    if x.shape != x_star.shape:
        raise SizeMismatch(f"length mismatch {x.shape} vs {x_star.shape}")
    diff = np.abs(rank(x) - rank(x_star))
    return float(Fraction(int(diff.sum()), diff.size))


def average_precision(S: Sequence[int], T: Sequence[int], literal: bool = False) -> float:
    """Average precision of the ranked selection ``S`` against the set ``T``.

    The default is the usual ``(1/|S&T|) sum_i (hits@i / i) [S_i in T]``.
    ``literal=True`` drops the ``1/i`` inside the sum,
    ``(1/|S&T|) sum_i hits@i [S_i in T]``, which is not bounded by 1.
    Returns 0 when ``S`` and ``T`` share nothing.
    """
    _check_pair(S, T)
    target = set(T)
    hits = 0
    total = Fraction(0)
    for pos, item in enumerate(S, start=1):
        if item in target:
            hits += 1
            total += hits if literal else Fraction(hits, pos)
    if hits == 0:
        return 0.0
    return float(total / hits)


def ndcg(S: Sequence[int], T: Sequence[int], ranks) -> float:
    """Share of discounted weight ``1/ln(rank + 1)`` of ``S`` that falls in ``T``.

    ``ranks`` maps item id to its rank under the recovered qualities (an
    array from :func:`rank` or a dict).
    """
    if len(S) == 0:
        raise SizeMismatch("S must be nonempty")
    target = set(T)
    weights, hits = [], []
    for item in S:
        try:
            r = ranks[item]
        except (KeyError, IndexError):
            raise MissingRank(f"no rank for item {item}") from None
        w = 1.0 / math.log(int(r) + 1)
        weights.append(w)
        if item in target:
            hits.append(w)
    return math.fsum(hits) / math.fsum(weights)


@dataclass(frozen=True)
class MetricBundle:
    precision: float
    avg_gap: float
    avg_l1: float
    ap: float
    ndcg: float

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate(x, x_star, n: int) -> MetricBundle:
    """All five metrics for recovered ``x`` against truth ``x_star`` at size ``n``."""
    if x_star is None:
        raise MissingGroundTruth("metrics need ground-truth qualities")
    S = select_top(x, n)
    T = select_top(x_star, n)
    return MetricBundle(
        precision=precision(S, T),
        avg_gap=average_gap(S, T, x_star),
        avg_l1=average_l1(x, x_star),
        ap=average_precision(S, T),
        ndcg=ndcg(S, T, rank(x)),
    )
