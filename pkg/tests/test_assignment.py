import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reviewcal.assignment import (
    AssignmentConfig,
    assignment_rows,
    doubly_connected_assignment,
    random_assignment,
)
from reviewcal.exceptions import InsufficientCapacity, InvalidConfig
from reviewcal.reviewgraph import build_review_graph, is_recovery_robust, repeat_union2


def counts(plan, N):
    return np.bincount([i for items in plan for i in items], minlength=N)


def test_balanced_square_case():
    plan = random_assignment(AssignmentConfig(10, 10, 3, seed=0))
    assert all(len(set(items)) == 3 for items in plan)
    c = counts(plan, 10)
    assert c.sum() == 30 and c.min() >= 1
    # the priority rule keeps loads near b = 3 but does not force exact equality
    assert 2 <= c.min() and c.max() <= 4


def test_forced_assignment():
    assert random_assignment(AssignmentConfig(4, 1, 4)) == [(0, 1, 2, 3)]


def test_deterministic():
    cfg = AssignmentConfig(30, 20, 4, seed=7)
    assert random_assignment(cfg) == random_assignment(cfg)
    assert doubly_connected_assignment(cfg) == doubly_connected_assignment(cfg)


def test_invalid_configs():
    with pytest.raises(InvalidConfig):
        random_assignment(AssignmentConfig(3, 2, 4))
    with pytest.raises(InvalidConfig):
        doubly_connected_assignment(AssignmentConfig(10, 10, 2))
    with pytest.raises(InsufficientCapacity):
        doubly_connected_assignment(AssignmentConfig(100, 5, 3))


@settings(max_examples=60, deadline=None)
@given(st.integers(3, 40), st.integers(1, 40), st.integers(1, 6), st.integers(0, 10**6))
def test_random_assignment_properties(N, M, k, seed):
    k = min(k, N)
    plan = random_assignment(AssignmentConfig(N, M, k, seed))
    assert len(plan) == M
    assert all(len(items) == k == len(set(items)) for items in plan)
    assert all(0 <= i < N for items in plan for i in items)
    if k * M >= N:
        assert counts(plan, N).min() >= 1


@pytest.mark.parametrize("seed", range(20))
def test_doubly_connected_small_case_is_robust(seed):
    plan = doubly_connected_assignment(AssignmentConfig(10, 5, 4, seed))
    assert is_recovery_robust(build_review_graph(plan), 10)[0]


@settings(max_examples=40, deadline=None)
@given(st.integers(4, 40), st.integers(2, 30), st.integers(3, 6), st.integers(0, 10**6))
def test_doubly_connected_prefixes_stay_one_component(N, M, k, seed):
    k = min(k, N)
    if k * M < N:
        return
    plan = doubly_connected_assignment(AssignmentConfig(N, M, k, seed))
    assert all(len(items) == k == len(set(items)) for items in plan)
    for t in (1, M // 2 + 1, M):
        prefix = plan[:t]
        covered = set().union(*prefix)
        # every prefix forms one doubly-connected component over what it covers
        part = repeat_union2(build_review_graph(prefix))
        assert len(part) == 1 and part.components[0].items == frozenset(covered)


def test_tight_capacity_is_reported_not_raised():
    plan = doubly_connected_assignment(AssignmentConfig(100, 50, 3, seed=0))
    covered = set().union(*plan)
    assert len(plan) == 50 and len(covered) < 100
    assert not is_recovery_robust(build_review_graph(plan), 100)[0]


def test_rows():
    assert assignment_rows([(0, 2), (1,)]) == [(0, 0), (0, 2), (1, 1)]
