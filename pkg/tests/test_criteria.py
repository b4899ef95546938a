import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from momentdesign.criteria import (
    Criterion,
    christoffel_kernel,
    dual_polynomial,
    grad_phi,
    information_matrix,
    least_eigen,
    log_det,
    matrix_power,
    multiplier_scale,
    phi,
)
from momentdesign.errors import EigMultiplicityAmbiguous, NonSymmetricInput, UnsupportedCriterion
from momentdesign.moments import atomic_moments
from momentdesign.polybasis import RegressionBasis
from momentdesign.presets import univariate_reference

CRITERIA = [Criterion.D, Criterion.A, Criterion.E]


def random_spd(rng, p):
    B = rng.normal(size=(p, p))
    return B @ B.T + 0.1 * np.eye(p)


def test_parse():
    assert Criterion.parse("d") is Criterion.D
    assert Criterion.parse(Criterion.E) is Criterion.E
    with pytest.raises(UnsupportedCriterion):
        Criterion.parse("G")


def test_phi_on_diagonal_matrix():
    M = np.diag([1.0, 4.0, 16.0])
    assert phi(M, Criterion.D) == pytest.approx(4.0)
    assert phi(M, Criterion.A) == pytest.approx(3 / (1 + 0.25 + 1 / 16))
    assert phi(M, Criterion.E) == pytest.approx(1.0)
    assert log_det(M) == pytest.approx(np.log(64))


def test_phi_is_zero_on_singular_matrices():
    M = np.diag([1.0, 0.0])
    for c in CRITERIA:
        assert phi(M, c) == 0.0


def test_non_symmetric_rejected():
    with pytest.raises(NonSymmetricInput):
        phi(np.array([[1.0, 2.0], [0.0, 1.0]]), Criterion.D)


@pytest.mark.parametrize("c", CRITERIA)
def test_grad_phi_matches_central_differences(c):
    # 20 random SPD instances per criterion, relative error <= 1e-5.
    rng = np.random.default_rng(hash(c.name) % 2**32)
    for _ in range(20):
        p = int(rng.integers(2, 6))
        M = random_spd(rng, p)
        G = grad_phi(M, c)
        H = rng.normal(size=(p, p))
        H = (H + H.T) / 2
        h = 1e-6
        fd = (phi(M + h * H, c) - phi(M - h * H, c)) / (2 * h)
        an = float(np.sum(G * H))
        assert abs(fd - an) <= 1e-5 * max(1.0, abs(an))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.05, 20.0), st.sampled_from(CRITERIA))
def test_homogeneity_and_euler_identity(seed, t, c):
    rng = np.random.default_rng(seed)
    M = random_spd(rng, int(rng.integers(2, 6)))
    assert phi(t * M, c) == pytest.approx(t * phi(M, c), rel=1e-8)
    assert float(np.sum(grad_phi(M, c) * M)) == pytest.approx(phi(M, c), rel=1e-8)


@pytest.mark.parametrize("c", [Criterion.D, Criterion.A])
def test_multiplier_scale_rescales_gradient_to_kernel(c, rng):
    M = random_spd(rng, 4)
    np.testing.assert_allclose(multiplier_scale(M, c) * grad_phi(M, c), christoffel_kernel(M, c), rtol=1e-10)


def test_matrix_power_inverse(rng):
    M = random_spd(rng, 5)
    np.testing.assert_allclose(matrix_power(M, -1.0) @ M, np.eye(5), atol=1e-10)


def test_e_gradient_multiplicity():
    M = np.diag([1.0, 1.0, 3.0])
    assert least_eigen(M).multiplicity == 2
    with pytest.raises(EigMultiplicityAmbiguous) as info:
        grad_phi(M, Criterion.E)
    assert info.value.subgradient.shape == (3, 3)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        G = grad_phi(M, Criterion.E, strict=False)
    assert caught and np.trace(G) == pytest.approx(1.0)


def test_least_eigen_sign_is_deterministic(rng):
    M = random_spd(rng, 4)
    a, b = least_eigen(M), least_eigen(M.copy())
    np.testing.assert_array_equal(a.u, b.u)


def _check_equivalence(points, weights, c, d=2):
    basis = RegressionBasis.identity(1, d)
    y = atomic_moments(np.asarray(points, float)[:, None], weights, 2 * d)
    M = information_matrix(y, basis, d)
    pstar = dual_polynomial(M, c, basis, 1, d)
    grid = np.linspace(-1, 1, 2001)
    assert pstar(grid).min() >= -1e-10
    np.testing.assert_allclose(pstar(np.asarray(points, float)), 0.0, atol=1e-10)


def test_equivalence_for_gauss_lobatto_d_design():
    pts = univariate_reference(5)
    _check_equivalence(pts, np.full(6, 1 / 6), Criterion.D, d=5)


def test_equivalence_for_quadratic_a_design():
    _check_equivalence([-1, 0, 1], [0.25, 0.5, 0.25], Criterion.A)


def test_equivalence_for_quadratic_e_design():
    _check_equivalence([-1, 0, 1], [0.2, 0.6, 0.2], Criterion.E)


def test_d_christoffel_max_equals_dimension():
    pts = univariate_reference(5)
    basis = RegressionBasis.identity(1, 5)
    M = information_matrix(atomic_moments(pts[:, None], np.full(6, 1 / 6), 10), basis, 5)
    pstar = dual_polynomial(M, Criterion.D, basis, 1, 5)
    assert pstar.christoffel(np.linspace(-1, 1, 4001)).max() == pytest.approx(6.0, abs=1e-9)


def test_dual_polynomial_coefficients_match_evaluation(rng):
    basis = RegressionBasis.identity(2, 2)
    pts = rng.uniform(-1, 1, size=(8, 2))
    M = information_matrix(atomic_moments(pts, np.full(8, 1 / 8), 4), basis, 2)
    pstar = dual_polynomial(M, Criterion.A, basis, 2, 2)
    from momentdesign.polybasis import eval_monomial_matrix

    probe = rng.uniform(-1, 1, size=(5, 2))
    np.testing.assert_allclose(eval_monomial_matrix(probe, 4) @ pstar.coefficients(), pstar(probe), atol=1e-9)


def test_multiplier_scale_rejects_singular():
    from momentdesign.errors import SingularMatrix

    for c in (Criterion.D, Criterion.A):
        with pytest.raises(SingularMatrix):
            multiplier_scale(np.diag([1.0, 0.0]), c)
