import json

import numpy as np
import pytest

from momentdesign.cli import main
from momentdesign.schemas import Result


def test_pipeline_writes_files(tmp_path, capsys):
    code = main(["pipeline", "--preset", "interval", "--out", str(tmp_path), "--check", "--dump-sdp"])
    assert code == 0
    result = Result.model_validate_json((tmp_path / "result.json").read_text())
    assert result.exit_code == 0
    assert (tmp_path / "relaxation.dat-s").exists()
    assert "certificate: passed" in capsys.readouterr().out


def test_stages_rerun_from_files(tmp_path):
    assert main(["solve", "--preset", "wynn_polygon", "--out", str(tmp_path / "a")]) == 0
    assert main(["recover", "--problem", str(tmp_path / "a" / "result.json"), "--out", str(tmp_path / "b")]) == 0
    assert main(["certify", "--problem", str(tmp_path / "b" / "result.json"), "--out", str(tmp_path / "c")]) == 0
    assert main(["levelset", "--problem", str(tmp_path / "c" / "result.json"), "--out", str(tmp_path / "d"), "--resolution", "30"]) == 0
    csv = (tmp_path / "d" / "levelset.csv").read_text().splitlines()
    assert csv[0] == "x1,x2,pstar,inside" and len(csv) == 901
    c = json.loads((tmp_path / "c" / "result.json").read_text())
    assert len(c["recovery"]["design"]["points"]) == 4


def test_pipeline_rerun_is_deterministic(tmp_path):
    assert main(["pipeline", "--preset", "interval", "--out", str(tmp_path / "a")]) == 0
    assert main(["pipeline", "--problem", str(tmp_path / "a" / "result.json"), "--out", str(tmp_path / "b")]) == 0
    a = json.loads((tmp_path / "a" / "result.json").read_text())
    b = json.loads((tmp_path / "b" / "result.json").read_text())
    diff = np.abs(np.array(a["recovery"]["design"]["points"]) - np.array(b["recovery"]["design"]["points"]))
    assert diff.max() <= 1e-10


def test_malformed_polynomial_entry(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({
        "design_space": {"n": 1, "inequalities": [[{"exponents": [0], "coef": 1.0}]]},
        "regression": {"d": 1},
    }))
    assert main(["pipeline", "--problem", str(path), "--out", str(tmp_path)]) == 1
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])["error"]
    assert err["location"] == f"{path}:design_space.inequalities.0.0.coeff"


def test_invalid_json(tmp_path, capsys):
    path = tmp_path / "broken.json"
    path.write_text("{ not json")
    assert main(["solve", "--problem", str(path)]) == 1
    assert json.loads(capsys.readouterr().err)["error"]["type"] == "JSONDecodeError"


def test_usage_errors_exit_one(capsys):
    with pytest.raises(SystemExit) as info:
        main(["explode", "--preset", "interval"])
    assert info.value.code == 1
    assert main(["solve", "--preset", "atlantis"]) == 1


def test_r_escalation_is_recorded(tmp_path, capsys):
    code = main(["recover", "--preset", "sphere3d", "-r", "1", "--out", str(tmp_path)])
    assert code == 0
    result = Result.model_validate_json((tmp_path / "result.json").read_text())
    attempts = result.recovery.attempts
    assert attempts[0]["r"] == 1 and not attempts[0]["flat"]
    assert attempts[-1]["flat"] and result.recovery.r == attempts[-1]["r"] > 1


def test_seed_override(tmp_path):
    assert main(["solve", "--preset", "interval", "-d", "2", "--seed", "9", "--out", str(tmp_path)]) == 0
    result = Result.model_validate_json((tmp_path / "result.json").read_text())
    assert result.problem.seed == 9 and result.problem.regression.d == 2
