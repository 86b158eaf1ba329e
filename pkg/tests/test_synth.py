import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reviewcal.exceptions import DimensionMismatch, InvalidDistribution, UnknownKind
from reviewcal.synth import (
    KINDS,
    NoiseModel,
    QualityDistribution,
    ScoringFunction,
    generate_scores,
    mixture_kinds,
    sample_qualities,
    sample_scoring_function,
)


def test_degenerate_quality_distribution():
    x = sample_qualities(100, QualityDistribution(mean=5.0, std=1e-12), seed=0)
    np.testing.assert_allclose(x, 5.0, atol=1e-9)


def test_default_quality_distribution_moments():
    x = sample_qualities(100_000, seed=1)
    assert abs(x.mean() - 5.0) < 0.05
    assert np.mean((x > 0) & (x < 10)) >= 0.99
    assert np.mean((x >= 0.2) & (x <= 9.8)) > 0.995


def test_quality_clamped():
    x = sample_qualities(1000, QualityDistribution(mean=-5.0, std=1.0), seed=0)
    assert np.all(x == 0.0)


def test_invalid_distribution():
    with pytest.raises(InvalidDistribution):
        sample_qualities(3, QualityDistribution(std=0.0))
    with pytest.raises(InvalidDistribution):
        sample_qualities(3, QualityDistribution(low=5, high=5))


@pytest.mark.parametrize("seed", range(50))
def test_linear_slope_range(seed):
    f = sample_scoring_function("linear", seed=seed)
    assert 0.0 <= f.params[0] <= 2.0


@pytest.mark.parametrize("seed", range(20))
def test_concave_vanishes_at_zero(seed):
    assert sample_scoring_function("concave", seed=seed)(0.0) == 0.0


@settings(max_examples=100, deadline=None)
@given(st.sampled_from(["linear", "concave", "convex"]), st.integers(0, 10**6),
       st.floats(0, 10), st.floats(0, 10))
def test_draws_are_monotone(kind, seed, a, b):
    f = sample_scoring_function(kind, seed=seed)
    lo, hi = min(a, b), max(a, b)
    assert f(lo) <= f(hi)


def test_shape_of_convex_and_concave():
    grid = np.linspace(0, 10, 101)
    for seed in range(10):
        d2_convex = np.diff(sample_scoring_function("convex", seed=seed)(grid), 2)
        d2_concave = np.diff(sample_scoring_function("concave", seed=seed)(grid), 2)
        assert np.all(d2_convex >= -1e-9) and np.all(d2_concave <= 1e-9)


def test_tabulated_monotone_scores_follow_order():
    f = sample_scoring_function("monotone", seed=3, n_points=4)
    y = f.score([2.0, -1.0, 7.0, 0.5])
    assert list(np.argsort(y)) == [1, 3, 0, 2]
    with pytest.raises(DimensionMismatch):
        f.score([1.0])
    with pytest.raises(ValueError):
        sample_scoring_function("monotone", seed=0)


def test_unknown_kind():
    with pytest.raises(UnknownKind):
        sample_scoring_function("sigmoid")
    with pytest.raises(UnknownKind):
        ScoringFunction("sigmoid", ())


def test_noiseless_score():
    f = ScoringFunction("linear", (2.0, 1.0))
    inst = generate_scores([3.0], [[0]], [f])
    assert inst.reviews[0].score == 7.0
    np.testing.assert_array_equal(inst.ground_truth, [3.0])


def test_noiseless_order_preserved():
    f = ScoringFunction("convex", (0.2, 0.3, 0.1))
    inst = generate_scores([1.0, 4.0, 9.0], [[0, 1, 2]], [f])
    s = {r.item_id: r.score for r in inst.reviews}
    assert s[0] < s[1] < s[2]


def test_noise_scale():
    f = ScoringFunction("linear", (1.0, 0.0))
    x = np.full(10_000, 5.0)
    inst, perc = generate_scores(x, [list(range(10_000))], [f], NoiseModel(0.5, seed=2),
                                 return_perceptions=True)
    eps = perc - 5.0
    assert abs(eps.std(ddof=1) - 0.5) < 0.02
    np.testing.assert_allclose(inst.scores, perc)


def test_clamped_perception_reported():
    f = ScoringFunction("concave", (1.0, 1.0, 1.0))
    _, perc = generate_scores([0.0], [[0]], [f], NoiseModel(3.0, seed=0), return_perceptions=True)
    assert 0.0 <= perc[0] <= 10.0


def test_mismatched_functions():
    with pytest.raises(DimensionMismatch):
        generate_scores([1.0], [[0], [0]], [ScoringFunction("linear", (1, 0))])


def test_mixture_counts():
    kinds = mixture_kinds(10, {"linear": 0.55, "convex": 0.45}, seed=0)
    assert sorted(kinds).count("linear") in (5, 6) and len(kinds) == 10
    assert mixture_kinds(10, {"linear": 0.5, "convex": 0.5}, seed=1) == \
        mixture_kinds(10, {"linear": 0.5, "convex": 0.5}, seed=1)
    with pytest.raises(ValueError):
        mixture_kinds(5, {"linear": 0.3})


def test_function_dict_round_trip():
    for kind in KINDS:
        f = sample_scoring_function(kind, seed=4, n_points=3)
        assert ScoringFunction.from_dict(f.to_dict()) == f
