import numpy as np
import pytest

from momentdesign.errors import DimensionMismatch, MissingCompactnessCertificate, SamplingExhausted
from momentdesign.polybasis import Polynomial
from momentdesign.presets import PRESET_NAMES, preset, singleton_at_one
from momentdesign.semialg import (
    SemiAlgebraicSet,
    ball_polynomial,
    box_bounds,
    detect_ball_radius,
    membership,
    membership_many,
    sample_points,
    validate_archimedean,
)


def _square():
    x, y = Polynomial.variable(2, 0), Polynomial.variable(2, 1)
    return SemiAlgebraicSet(2, (1 - x * x, 1 - y * y))


def test_detect_ball_radius():
    assert detect_ball_radius(ball_polynomial(3, 2.0)) == pytest.approx(2.0)
    x = Polynomial.variable(2, 0)
    assert detect_ball_radius(1 - x * x) is None


def test_validate_archimedean_appends_ball():
    X = _square()
    with pytest.raises(MissingCompactnessCertificate):
        validate_archimedean(X)
    Y = validate_archimedean(X, radius_hint=np.sqrt(2))
    assert Y.m == 3 and Y.ball_radius == pytest.approx(np.sqrt(2))
    # already certified sets pass through unchanged
    assert validate_archimedean(Y) is Y


def test_membership():
    X = preset("interval")
    assert membership(X, [1.0]) and membership(X, [-0.3])
    assert not membership(X, [1.01])
    np.testing.assert_array_equal(membership_many(X, [[0.0], [2.0]]), [True, False])
    with pytest.raises(DimensionMismatch):
        membership(X, [0.0, 0.0])


@pytest.mark.parametrize("name", PRESET_NAMES)
def test_samples_lie_in_set_and_are_seeded(name):
    X = preset(name)
    a = sample_points(X, 300, seed=7)
    b = sample_points(X, 300, seed=7)
    assert a.shape == (300, X.n)
    np.testing.assert_array_equal(a, b)
    assert membership_many(X, a, tol=1e-8).all()


def test_sphere_samples_are_on_the_sphere():
    pts = sample_points(preset("sphere3d"), 200, seed=1)
    np.testing.assert_allclose(np.linalg.norm(pts, axis=1), 1.0, atol=1e-12)


def test_singleton_sampling_is_exhausted():
    with pytest.raises(SamplingExhausted):
        sample_points(singleton_at_one(), 10, max_draws=20_000)


def test_sampling_needs_radius():
    with pytest.raises(MissingCompactnessCertificate):
        sample_points(_square(), 5)
    with pytest.raises(MissingCompactnessCertificate):
        box_bounds(_square())


def test_json_round_trip():
    X = preset("moon")
    Y = SemiAlgebraicSet.from_json(X.to_json())
    assert Y == X


def test_ball_radius_must_match_a_constraint():
    with pytest.raises(ValueError):
        SemiAlgebraicSet(2, _square().inequalities, ball_radius=2.0)


def test_equality_pairs_detected():
    X = preset("sphere3d")
    assert len(X.equality_pairs()) == 1
