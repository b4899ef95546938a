import json

import numpy as np
import pytest

from momentdesign.pipeline import (
    EXIT_NOT_CERTIFIED,
    EXIT_NOT_FLAT,
    EXIT_OK,
    StageError,
    check_against_reference,
    design_space,
    dump_sdp,
    exit_code,
    problem_from_preset,
    relaxation_config,
    run_pipeline,
    stage_certify,
    stage_levelset,
    stage_recover,
    stage_solve,
)
from momentdesign.presets import univariate_reference
from momentdesign.schemas import Problem, Result


@pytest.fixture(scope="module")
def interval_run():
    return run_pipeline(problem_from_preset("interval"), check=True)


def test_interval_preset_pipeline(interval_run):
    out = interval_run
    assert out.exit_code == EXIT_OK
    assert out.recovery.check["passed"]
    pts = np.array(out.recovery.design.points).ravel()
    np.testing.assert_allclose(np.sort(pts), univariate_reference(5), atol=5e-3)
    assert out.certificate.report["passed"]
    assert out.certificate.sos["psd"] and out.certificate.sos["residual"] <= 1e-5
    assert set(out.timing) >= {"solve", "recover", "certify", "total"}


def test_wynn_preset_pipeline():
    out = run_pipeline(problem_from_preset("wynn_polygon"), check=True)
    assert out.exit_code == EXIT_OK
    assert len(out.recovery.design.points) == 4
    assert out.recovery.ranks == [4, 4]


def test_rerun_on_emitted_file_is_identical(interval_run):
    text = interval_run.model_dump_json()
    again = run_pipeline(Result.model_validate_json(text), check=True)
    a = np.array(interval_run.recovery.design.points)
    b = np.array(again.recovery.design.points)
    assert np.abs(a - b).max() <= 1e-10
    assert np.abs(np.array(interval_run.recovery.design.weights) - np.array(again.recovery.design.weights)).max() <= 1e-10
    ya = [e["value"] for e in interval_run.solve.y_star.entries]
    yb = [e["value"] for e in again.solve.y_star.entries]
    assert np.abs(np.array(ya) - np.array(yb)).max() <= 1e-10


def test_emitted_file_round_trips(interval_run):
    text = interval_run.model_dump_json()
    assert Result.model_validate_json(text).model_dump_json() == text
    data = json.loads(text)
    assert data["schema_version"] == "1.0"


def test_stages_chain_through_result_objects():
    p = problem_from_preset("interval", delta=0)
    solved = stage_solve(p)
    assert solved.solve.status == "Optimal" and solved.recovery is None
    recovered = stage_recover(Result.model_validate_json(solved.model_dump_json()))
    assert recovered.recovery.design is not None
    certified = stage_certify(recovered)
    assert certified.certificate.report["passed"]
    out, csv = stage_levelset(certified, resolution=50)
    assert out.levelset.nodes == 50
    assert csv.splitlines()[0] == "x1,pstar,inside"
    # the solve section was reused, not recomputed
    assert certified.solve == solved.solve


def test_not_flat_exit_code():
    p = problem_from_preset("sphere3d")
    p = p.model_copy(update={"recovery": p.recovery.model_copy(update={"r": 1, "r_cap": 1})})
    out = run_pipeline(p)
    assert out.recovery.design is None
    assert out.exit_code == EXIT_NOT_FLAT


def test_failed_certificate_exit_code(interval_run):
    broken = interval_run.model_copy(deep=True)
    broken.certificate.report["passed"] = False
    assert exit_code(broken) == EXIT_NOT_CERTIFIED
    broken = interval_run.model_copy(deep=True)
    broken.recovery.check["passed"] = False
    assert exit_code(broken) == EXIT_NOT_CERTIFIED


def test_malformed_polynomial_reports_location():
    p = Problem.model_validate({
        "design_space": {"n": 2, "inequalities": [[{"exponents": [0, 0], "coeff": 1.0}]]},
        "regression": {"d": 1},
    })
    with pytest.raises(StageError) as info:
        design_space(p)  # no ball constraint and no radius hint
    assert info.value.location == "design_space"
    out = run_pipeline(p)
    assert out.exit_code == 1 and out.error.location == "design_space"


def test_fixed_moment_dimension_checked():
    data = problem_from_preset("interval").model_dump()
    data["fixed_moments"] = [{"exponents": [1, 0], "value": 0.0}]
    p = Problem.model_validate(data)
    with pytest.raises(StageError) as info:
        relaxation_config(p, design_space(p))
    assert info.value.location == "fixed_moments[0]"


def test_unknown_preset():
    with pytest.raises(StageError) as info:
        problem_from_preset("nowhere")
    assert info.value.location == "design_space.preset"


def test_reference_check_not_available_for_a_criterion():
    p = problem_from_preset("interval", criterion="A")
    assert check_against_reference(None, p)["available"] is False


def test_dump_sdp():
    text = dump_sdp(problem_from_preset("interval"))
    assert text.splitlines()[0] == '"log-det objective term omitted"'


def test_sphere_preset_objective_selects_axis_points():
    out = run_pipeline(problem_from_preset("sphere3d"))
    assert out.exit_code == EXIT_OK
    pts = np.array(out.recovery.design.points)
    assert len(pts) == 6 and tuple(out.recovery.ranks) == (6, 6)
    np.testing.assert_allclose(np.sort(np.abs(pts).max(axis=1)), np.ones(6), atol=1e-6)


def test_sphere_trace_objective_gives_the_cube():
    p = problem_from_preset("sphere3d")
    p = p.model_copy(update={"recovery": p.recovery.model_copy(update={"objective": None, "r": 1})})
    out = run_pipeline(p)
    pts = np.array(out.recovery.design.points)
    assert len(pts) == 8 and out.exit_code == EXIT_OK
    np.testing.assert_allclose(np.abs(pts), 1 / np.sqrt(3), atol=1e-6)


def test_objective_with_wrong_dimension_is_rejected():
    data = problem_from_preset("interval").model_dump()
    data["recovery"]["objective"] = [{"exponents": [0, 0], "coeff": 1.0}]
    with pytest.raises(StageError) as info:
        stage_recover(Problem.model_validate(data))
    assert info.value.location == "recovery.objective.0.exponents"
