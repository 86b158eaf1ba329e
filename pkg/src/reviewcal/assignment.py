"""Random reviewer-to-item assignment generators.

``random_assignment`` favours items that have not yet reached the minimum
review count ``b = floor(k * M / N)``.  ``doubly_connected_assignment``
additionally makes every reviewer after the first share at least two items
with the reviewers before it, so the whole pool stays one doubly-connected
component.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import InsufficientCapacity, InvalidConfig


@dataclass(frozen=True)
class AssignmentConfig:
    N: int
    M: int
    k: int
    seed: int = 0

    def validate(self):
        if self.N < 1 or self.M < 1:
            raise InvalidConfig(f"N and M must be >= 1 (N={self.N}, M={self.M})")
        if not 1 <= self.k <= self.N:
            raise InvalidConfig(f"k must lie in [1, N]; got k={self.k}, N={self.N}")
        return self

    @property
    def min_reviews(self) -> int:
        return (self.k * self.M) // self.N


def choose(pool, k: int, rng: np.random.Generator) -> list[int]:
    """Sample ``min(k, len(pool))`` distinct elements uniformly."""
    pool = sorted(pool)
    k = max(0, min(int(k), len(pool)))
    if k == 0:
        return []
    picked = rng.choice(len(pool), size=k, replace=False)
    return [pool[p] for p in picked]


def random_assignment(cfg: AssignmentConfig) -> list[tuple[int, ...]]:
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    N, M, k, b = cfg.N, cfg.M, cfg.k, cfg.min_reviews
    usage = np.zeros(N, dtype=np.int64)
    full: set[int] = set()
    everything = set(range(N))
    out = []
    for _ in range(M):
        s1 = choose(everything - full, min(k, N - len(full)), rng)
        s2 = choose(full, k - len(s1), rng)
        items = s1 + s2
        for i in items:
            usage[i] += 1
            if usage[i] >= b:
                full.add(i)
        out.append(tuple(sorted(items)))
    return out


def doubly_connected_assignment(cfg: AssignmentConfig) -> list[tuple[int, ...]]:
    """Assignment whose review graph stays a single doubly-connected component.

    Requires ``k > 2`` and ``k * M >= N``.  All items are covered when
    ``k * M >= N + 2 * (M - 1)``; below that some items stay unassigned.
    """
    cfg.validate()
    N, M, k, b = cfg.N, cfg.M, cfg.k, cfg.min_reviews
    if k <= 2:
        raise InvalidConfig(f"double connectivity needs k > 2 items per reviewer, got k={k}")
    if k * M < N:
        raise InsufficientCapacity(f"k*M = {k * M} < N = {N}")
    rng = np.random.default_rng(cfg.seed)
    usage = np.zeros(N, dtype=np.int64)
    full: set[int] = set()
    everything = set(range(N))

    def record(items):
        for i in items:
            usage[i] += 1
            if usage[i] >= b:
                full.add(i)

    first = choose(everything, k, rng)
    assigned = set(first)
    record(first)
    out = [tuple(sorted(first))]
    for _ in range(1, M):
        s1 = choose(everything - assigned, min(k - 2, N - len(assigned)), rng)
        s2 = choose(assigned - full, min(2, len(assigned) - len(full)), rng)
        s3 = choose(full - set(s2), k - len(s1) - len(s2), rng)
        items = s1 + s2 + s3
        if len(items) < k:
            # too few saturated items to top up; fall back to any assigned item
            items += choose(assigned - set(items), k - len(items), rng)
        assigned.update(items)
        record(items)
        out.append(tuple(sorted(items)))
    return out


def assignment_rows(assignment) -> list[tuple[int, int]]:
    return [(j, i) for j, items in enumerate(assignment) for i in items]
