import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from momentdesign.errors import DegreeOverflow, DimensionMismatch
from momentdesign.moments import (
    MomentSequence,
    atomic_moments,
    localizing_matrix,
    localizing_operator,
    moment_matrix,
    moment_operator,
    riesz,
)
from momentdesign.polybasis import Polynomial, eval_monomial_vector
from momentdesign.presets import preset


def test_lebesgue_moments_of_interval():
    # (1/2) * integral of t^k over [-1, 1]
    vals = [1, 0, 1 / 3, 0, 1 / 5]
    y = MomentSequence(1, 4, vals)
    M = moment_matrix(y, 2)
    np.testing.assert_allclose(M, [[1, 0, 1 / 3], [0, 1 / 3, 0], [1 / 3, 0, 1 / 5]])


def test_dirac_moment_matrix_is_rank_one():
    x = np.array([0.3, -0.7])
    y = atomic_moments(x[None, :], [1.0], 4)
    v = eval_monomial_vector(x, 2)
    np.testing.assert_allclose(moment_matrix(y, 2), np.outer(v, v), atol=1e-14)


def test_riesz_matches_expectation(rng):
    pts = rng.uniform(-1, 1, size=(5, 2))
    w = rng.dirichlet(np.ones(5))
    f = Polynomial(2, {(2, 0): 1.0, (1, 1): -2.0, (0, 0): 0.5})
    y = atomic_moments(pts, w, 2)
    assert riesz(y, f) == pytest.approx(sum(wi * f(p) for p, wi in zip(pts, w)))
    with pytest.raises(DegreeOverflow):
        riesz(y, f * f)


def test_localizing_matrix_of_atomic_measure(rng):
    pts = rng.uniform(-1, 1, size=(4, 2))
    w = rng.dirichlet(np.ones(4))
    g = Polynomial(2, {(0, 0): 1.0, (2, 0): -1.0, (0, 1): 0.3})
    y = atomic_moments(pts, w, 6)
    expect = sum(wi * g(p) * np.outer(eval_monomial_vector(p, 2), eval_monomial_vector(p, 2)) for p, wi in zip(pts, w))
    np.testing.assert_allclose(localizing_matrix(y, g, 2), expect, atol=1e-13)


def test_operators_agree_with_matrices(rng):
    y = MomentSequence(2, 6, rng.normal(size=28))
    g = Polynomial(2, {(0, 0): 2.0, (1, 1): -1.0})
    np.testing.assert_allclose(np.einsum("a,aij->ij", y.values, moment_operator(2, 3, 6)), moment_matrix(y, 3))
    np.testing.assert_allclose(np.einsum("a,aij->ij", y.values, localizing_operator(2, g, 2, 6)), localizing_matrix(y, g, 2))


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**31 - 1))
def test_moment_and_localizing_psd_for_atomic_measures(atoms, seed):
    # Atomic measures supported on the Wynn polygon give PSD moment and localizing matrices.
    rng = np.random.default_rng(seed)
    X = preset("wynn_polygon")
    pts = []
    while len(pts) < atoms:
        p = rng.uniform(-1, 1, size=2)
        if np.all(X.values(p[None, :]) >= 0):
            pts.append(p)
    y = atomic_moments(np.array(pts), rng.dirichlet(np.ones(atoms)), 6)
    assert np.linalg.eigvalsh(moment_matrix(y, 3))[0] >= -1e-12
    for g in X.inequalities:
        k = (6 - g.degree) // 2
        assert np.linalg.eigvalsh(localizing_matrix(y, g, k))[0] >= -1e-12


def test_json_round_trip(rng):
    y = MomentSequence(3, 2, rng.normal(size=10))
    back = MomentSequence.from_json(y.to_json())
    np.testing.assert_array_equal(back.values, y.values)
    assert y[(0, 1, 1)] == y.values[8]


def test_dimension_checks():
    with pytest.raises(DimensionMismatch):
        MomentSequence(2, 2, np.zeros(5))
    y = MomentSequence(1, 2, [1, 0, 1])
    with pytest.raises(DegreeOverflow):
        moment_matrix(y, 2)
    with pytest.raises(DegreeOverflow):
        y.truncate(3)
