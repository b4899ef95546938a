import json
import math

import numpy as np
import pytest

from momentdesign.certify import (
    CertificateReport,
    LevelSetGrid,
    certify_solution,
    check_design,
    gap_polynomial,
    levelset_grid,
    report_json,
    sos_certificate,
)
from momentdesign.criteria import Criterion
from momentdesign.designsolve import RelaxationConfig, solve_design
from momentdesign.errors import UnsupportedDimension
from momentdesign.moments import MomentSequence
from momentdesign.polybasis import Polynomial
from momentdesign.presets import singleton_at_one
from momentdesign.recovery import Design, RecoveryConfig, recover
from momentdesign.semialg import SemiAlgebraicSet, membership_many, validate_archimedean


@pytest.fixture(scope="module")
def interval_certified(interval_d5):
    X, res = interval_d5
    rr = recover(res.y_star, X, RecoveryConfig(r=1), d=5)
    return X, res, rr.design, certify_solution(res, rr.design, X)


def test_interval_optimum_passes(interval_certified):
    X, res, design, rep = interval_certified
    assert rep.passed and rep.sample_count == 2000
    pstar = gap_polynomial(res)
    assert abs(pstar(np.array([[1.0], [-1.0]]))).max() <= 1e-6
    assert rep.max_christoffel_at_atoms == pytest.approx(math.comb(6, 1), abs=1e-4)
    assert abs(rep.lambda_star - rep.phi_value) <= 1e-8


def test_perturbed_moments_fail(interval_certified):
    X, res, design, _ = interval_certified
    vals = res.y_star.values.copy()
    vals[2] += 0.05
    y = MomentSequence(1, 10, vals)
    rep = check_design(y, design, X, res.basis, Criterion.D, d=5)
    assert not rep.passed
    assert rep.warnings


def test_small_perturbation_makes_pstar_negative(interval_certified):
    X, res, design, _ = interval_certified
    vals = res.y_star.values.copy()
    vals[2] += 0.005
    rep = check_design(MomentSequence(1, 10, vals), design, X, res.basis, Criterion.D, d=5)
    assert not rep.nonnegative and not rep.passed


def test_report_is_deterministic(interval_certified):
    X, res, design, rep = interval_certified
    again = certify_solution(res, design, X)
    assert again.to_json() == rep.to_json()


def test_singleton_passes_on_atoms_only():
    X = singleton_at_one()
    res = solve_design(X, RelaxationConfig(d=0, delta=1))
    rep = certify_solution(res, Design(np.array([[1.0]]), [1.0]), X)
    assert rep.passed and rep.evidence == "atoms" and rep.sample_count == 0


def test_report_json_round_trip(interval_certified):
    rep = interval_certified[3]
    data = json.loads(report_json(rep))
    assert data["passed"] is True
    assert CertificateReport.from_json(data) == rep


def test_sos_certificate_interval(interval_d5):
    X, res = interval_d5
    cert = sos_certificate(res, X)
    assert cert.residual <= 1e-5 and cert.psd
    assert [G.shape[0] for G in cert.grams] == [6, 5]
    assert cert.to_json()["psd"] is True


def test_sos_certificate_wynn(wynn_d1):
    X, res, _, _ = wynn_d1
    cert = sos_certificate(res, X)
    assert len(cert.grams) == X.m + 1 == 6
    assert cert.residual <= 1e-5 and cert.psd


def test_sos_certificate_e_singleton():
    X = singleton_at_one()
    res = solve_design(X, RelaxationConfig(d=1, delta=1, criterion="E"))
    cert = sos_certificate(res, X)
    assert cert.residual <= 1e-5 and cert.psd
    # p* vanishes on X = {1}
    assert abs(gap_polynomial(res)(np.array([[1.0]]))[0]) <= 1e-6


def test_levelset_univariate_has_six_zeros(interval_d5):
    X, res = interval_d5
    grid = levelset_grid(gap_polynomial(res), X, resolution=200)
    v = grid.pstar
    # local minima of the sampled curve that touch zero, endpoints included
    padded = np.concatenate([[np.inf], v, [np.inf]])
    minima = [i for i in range(len(v)) if padded[i + 1] <= padded[i] and padded[i + 1] <= padded[i + 2]]
    assert sum(v[i] < 1e-2 for i in minima) == 6
    assert grid.inside.all()


def test_levelset_wynn_contour_hits_vertices(wynn_d1):
    X, res, _, _ = wynn_d1
    grid = levelset_grid(gap_polynomial(res), X, resolution=201)
    # exact polygon vertices (-1,-1), (-1,1), (1,-1), (2,2) scaled by sqrt(2)/4
    vertices = np.array([[-1, -1], [-1, 1], [1, -1], [2, 2]]) * math.sqrt(2) / 4
    for v in vertices:
        near = np.max(np.abs(grid.points - v), axis=1) <= 1e-2
        vals = grid.pstar[near]
        assert vals.min() <= 0.0 <= vals.max()
    np.testing.assert_array_equal(grid.inside, membership_many(X, grid.points, 1e-8))


def test_levelset_csv_round_trip(wynn_d1):
    X, res, _, _ = wynn_d1
    grid = levelset_grid(gap_polynomial(res), X, resolution=11)
    text = grid.to_csv()
    assert text.splitlines()[0] == "x1,x2,pstar,inside"
    back = LevelSetGrid.from_csv(text)
    np.testing.assert_array_equal(back.points, grid.points)
    np.testing.assert_array_equal(back.pstar, grid.pstar)
    np.testing.assert_array_equal(back.inside, grid.inside)
    assert back.resolution == 11


def test_levelset_rejects_high_dimension():
    X = validate_archimedean(SemiAlgebraicSet(4, (Polynomial.constant(4, 1.0),)), radius_hint=1.0)
    with pytest.raises(UnsupportedDimension):
        levelset_grid(lambda p: np.zeros(len(p)), X)
