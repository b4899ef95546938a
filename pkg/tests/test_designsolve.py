import numpy as np
import pytest

from momentdesign.conic import Status
from momentdesign.criteria import Criterion, phi
from momentdesign.designsolve import (
    DESIGN_GAP_TOL,
    RelaxationConfig,
    build_relaxation,
    design_options,
    hierarchy_sweep,
    solve_design,
)
from momentdesign.errors import DegreeOverflow, DimensionMismatch, RankDeficientBasis
from momentdesign.moments import atomic_moments
from momentdesign.polybasis import RegressionBasis
from momentdesign.presets import preset, singleton_at_one, univariate_reference


def test_interval_d5_matches_gauss_lobatto_moments(interval_d5):
    _, res = interval_d5
    assert res.status is Status.OPTIMAL
    expect = atomic_moments(univariate_reference(5)[:, None], np.full(6, 1 / 6), 10)
    np.testing.assert_allclose(res.y_star.values, expect.values, atol=1e-6)


def test_lambda_star_is_phi(interval_d5):
    _, res = interval_d5
    assert abs(res.duals["lambda_star"] - phi(res.information, Criterion.D)) <= 1e-8
    assert res.rho_delta == pytest.approx(phi(res.information, Criterion.D), abs=1e-14)


@pytest.mark.parametrize(
    "crit,weights",
    [("A", [0.25, 0.5, 0.25]), ("E", [0.2, 0.6, 0.2])],
)
def test_quadratic_a_and_e_designs(crit, weights):
    # A- and E-optimal designs for quadratic regression on [-1, 1] sit on {-1, 0, 1}.
    X = preset("interval")
    res = solve_design(X, RelaxationConfig(d=2, delta=1, criterion=crit))
    assert res.ok
    expect = atomic_moments(np.array([[-1.0], [0.0], [1.0]]), weights, 4)
    np.testing.assert_allclose(res.y_star.values, expect.values, atol=1e-6)
    assert abs(res.duals["lambda_star"] - res.rho_delta) <= 1e-8


def test_d_design_is_invariant_under_basis_change(interval_d5):
    _, res = interval_d5
    rng = np.random.default_rng(3)
    A = np.eye(6) + 0.3 * np.triu(rng.normal(size=(6, 6)), 1)
    other = solve_design(preset("interval"), RelaxationConfig(d=5, basis=RegressionBasis(A)))
    assert other.ok
    np.testing.assert_allclose(other.y_star.values, res.y_star.values, atol=1e-6)
    # phi_D scales by |det A|^(2/p)
    assert other.rho_delta == pytest.approx(res.rho_delta * abs(np.linalg.det(A)) ** (2 / 6), rel=1e-6)


def test_hierarchy_is_monotone_on_wynn():
    sweep = hierarchy_sweep(preset("wynn_polygon"), RelaxationConfig(d=1), range(4))
    rhos = [e.rho for e in sweep]
    assert all(e.status == "Optimal" for e in sweep)
    assert all(b <= a + 1e-7 for a, b in zip(rhos, rhos[1:]))


def test_hierarchy_rejects_unsorted_deltas():
    with pytest.raises(ValueError):
        hierarchy_sweep(preset("interval"), RelaxationConfig(d=1), [2, 1])


def test_fixed_moments_are_respected():
    fixed = (((0, 2, 0), 0.3), ((0, 0, 2), 0.2), ((1, 1, 0), 0.05), ((1, 0, 1), 0.1))
    res = solve_design(preset("sphere3d"), RelaxationConfig(d=1, fixed_moments=fixed))
    assert res.ok
    for alpha, value in fixed:
        assert abs(res.y_star[alpha] - value) <= 1e-8
    assert abs(res.duals["lambda_star"] - res.rho_delta) <= 1e-8


def test_singleton_design():
    res = solve_design(singleton_at_one(), RelaxationConfig(d=1, delta=1, criterion="E"))
    assert res.ok
    np.testing.assert_allclose(res.y_star.values, [1.0, 1.0, 1.0], atol=1e-6)


def test_config_validation():
    with pytest.raises(ValueError):
        RelaxationConfig(d=-1)
    with pytest.raises(ValueError):
        RelaxationConfig(d=1, fixed_moments=(((0,), 1.0),))
    with pytest.raises(DegreeOverflow):
        RelaxationConfig(d=1, fixed_moments=(((3,), 1.0),))
    X = preset("interval")
    with pytest.raises(DimensionMismatch):
        build_relaxation(X, RelaxationConfig(d=2, basis=RegressionBasis(np.eye(2))))
    with pytest.raises(RankDeficientBasis):
        build_relaxation(X, RelaxationConfig(d=1, basis=RegressionBasis(np.ones((2, 2)))))


def test_design_options_default_gap():
    assert design_options().gap_tol == DESIGN_GAP_TOL
    assert design_options(max_iter=5).max_iter == 5
