"""Review graphs, doubly-connected components and the prime counterexample.

Two reviewers are joined by ``|I_i & I_j|`` parallel edges.  Components are
grown by repeatedly merging any two whose covered item sets share at least
two items; the fixed point does not depend on merge order.
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np

from .exceptions import GraphIsRecoveryRobust, NotSimpleGraph
from .model import Instance, from_reviews


@dataclass(frozen=True)
class ReviewGraph:
    num_reviewers: int
    coverage: tuple[frozenset, ...]
    shared: dict  # (i, j) with i < j -> shared item count, zero entries omitted

    def shared_counts(self, i: int, j: int) -> int:
        if i == j:
            return 0
        return self.shared.get((min(i, j), max(i, j)), 0)

    def edges(self):
        """Yield ``(i, j, multiplicity)`` for every connected reviewer pair."""
        for (i, j), c in sorted(self.shared.items()):
            yield i, j, c


@dataclass(frozen=True)
class Component:
    reviewers: frozenset
    items: frozenset


@dataclass(frozen=True)
class Partition:
    components: tuple[Component, ...]

    def reviewer_sets(self) -> frozenset:
        return frozenset(c.reviewers for c in self.components)

    def __len__(self):
        return len(self.components)

    def __iter__(self):
        return iter(self.components)


def build_review_graph(instance_or_assignment) -> ReviewGraph:
    """Shared-item multigraph over reviewers.

    Accepts an :class:`Instance` or a plain sequence of per-reviewer item sets.
    """
    if isinstance(instance_or_assignment, Instance):
        coverage = tuple(instance_or_assignment.assignment())
    else:
        coverage = tuple(frozenset(int(i) for i in s) for s in instance_or_assignment)
    reviewers_of = defaultdict(list)
    for j, items in enumerate(coverage):
        for i in items:
            reviewers_of[i].append(j)
    shared: dict = defaultdict(int)
    for revs in reviewers_of.values():
        for a, b in combinations(sorted(revs), 2):
            shared[(a, b)] += 1
    return ReviewGraph(len(coverage), coverage, dict(shared))


def repeat_union2(graph: ReviewGraph, rng=None) -> Partition:
    """Merge components sharing >= 2 covered items until none remain.

    Union-find over reviewers with one covered-item set per root and an
    item -> roots index for the overlap counts.  ``rng`` (a numpy Generator)
    randomises which component is examined and which partner is merged; the
    returned partition is the same for every order.
    """
    M = graph.num_reviewers
    parent = list(range(M))
    cover = {j: set(graph.coverage[j]) for j in range(M)}
    members = {j: {j} for j in range(M)}
    roots_of = defaultdict(set)
    for j in range(M):
        for i in cover[j]:
            roots_of[i].add(j)

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    pending = list(range(M))
    if rng is not None:
        rng.shuffle(pending)
    in_queue = set(pending)
    while pending:
        if rng is not None:
            r = pending.pop(int(rng.integers(len(pending))))
        else:
            r = pending.pop()
        in_queue.discard(r)
        if find(r) != r:
            continue
        counts: dict = defaultdict(int)
        for i in cover[r]:
            for other in roots_of[i]:
                if other != r:
                    counts[other] += 1
        partners = sorted(o for o, c in counts.items() if c >= 2)
        if not partners:
            continue
        other = partners[int(rng.integers(len(partners)))] if rng is not None else partners[0]
        # union by size; the larger covered set absorbs the smaller
        big, small = (r, other) if len(cover[r]) >= len(cover[other]) else (other, r)
        parent[small] = big
        for i in cover[small]:
            roots_of[i].discard(small)
            roots_of[i].add(big)
        cover[big] |= cover.pop(small)
        members[big] |= members.pop(small)
        if big not in in_queue:
            pending.append(big)
            in_queue.add(big)

    comps = [Component(frozenset(members[r]), frozenset(cover[r])) for r in members]
    comps.sort(key=lambda c: min(c.reviewers))
    return Partition(tuple(comps))


def is_recovery_robust(graph: ReviewGraph, num_items: int, partition: Partition = None):
    """Return ``(True, component)`` if a doubly-connected component covers every item.

    Otherwise ``(False, None)``.  Recovery-robust and recovery-resilient name
    the same property.
    """
    if partition is None:
        partition = repeat_union2(graph)
    everything = set(range(num_items))
    for comp in partition:
        if len(comp.items) == num_items and comp.items == everything:
            return True, comp
    return False, None


# ---------------------------------------------------------------------------
# Necessity construction


def first_primes(n: int) -> list[int]:
    primes: list[int] = []
    candidate = 2
    while len(primes) < n:
        if all(candidate % p for p in primes if p * p <= candidate):
            primes.append(candidate)
        candidate += 1
    return primes


@dataclass(frozen=True)
class Counterexample:
    instance: Instance
    solution_a: np.ndarray
    solution_b: np.ndarray
    per_reviewer_transform: dict  # reviewer -> (k_i, b_i)
    edges: tuple


def prime_counterexample(edges: Iterable[Sequence[int]], num_reviewers: int = None) -> Counterexample:
    """Two non-affinely related feasible quality vectors for a simple graph.

    Every edge ``e = (i, j)`` becomes an item reviewed by exactly ``i`` and
    ``j``.  With ``p_i`` the ``i``-th prime (ascending reviewer id), the planted
    quality is ``-sqrt(p_i) - sqrt(p_j)`` and the warped one
    ``sqrt(p_i) * x + p_i``, which agrees from both endpoints.  Scores are the
    planted qualities themselves (identity scoring).

    Raises ``NotSimpleGraph`` for loops or repeated edges and
    ``GraphIsRecoveryRobust`` if the induced graph has a covering
    doubly-connected component, in which case no counterexample exists.
    """
    edge_list = []
    seen = set()
    for e in edges:
        i, j = int(e[0]), int(e[1])
        if i == j:
            raise NotSimpleGraph(f"self-loop on reviewer {i}")
        key = (min(i, j), max(i, j))
        if key in seen:
            raise NotSimpleGraph(f"repeated edge {key}")
        seen.add(key)
        edge_list.append(key)
    if not edge_list:
        raise NotSimpleGraph("graph has no edges")
    M = num_reviewers if num_reviewers is not None else 1 + max(max(e) for e in edge_list)

    primes = first_primes(M)
    root = [math.sqrt(p) for p in primes]
    planted = np.array([-root[i] - root[j] for i, j in edge_list])
    warped = np.empty_like(planted)
    for e, (i, j) in enumerate(edge_list):
        from_i = root[i] * planted[e] + primes[i]
        from_j = root[j] * planted[e] + primes[j]
        assert abs(from_i - from_j) <= 1e-9 * (1 + abs(from_i))
        warped[e] = from_i

    triples = []
    for e, (i, j) in enumerate(edge_list):
        triples.append((i, e, planted[e]))
        triples.append((j, e, planted[e]))
    instance = from_reviews(triples, len(edge_list), M, ground_truth=planted)
    graph = build_review_graph(instance)
    robust, _ = is_recovery_robust(graph, instance.num_items)
    if robust:
        raise GraphIsRecoveryRobust(
            "a doubly-connected component covers all items; every feasible "
            "solution is a perfect recovery")
    transform = {j: (root[j], float(primes[j])) for j in range(M)}
    return Counterexample(instance, planted, warped, transform, tuple(edge_list))
