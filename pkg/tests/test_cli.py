import json

import pytest

from cli import run
from exobounds.io import CURVE_COLUMNS, read_curve_csv


def last_json(text: str):
    """JSON document printed after the one-line summary"""
    return json.loads(text[text.index("{"):])


def test_no_command(capsys):
    assert run([]) == 1
    assert "Available commands" in capsys.readouterr().out


def test_help_exits_cleanly():
    assert run(["--help"]) == 0


def test_check_sawtooth(sawtooth_json, capsys):
    code = run(["check", "--score", str(sawtooth_json), "--dist", "unif01", "--T", "0.5"])
    out = capsys.readouterr().out
    assert code == 0
    assert out.splitlines()[0].endswith(": pass")
    assert last_json(out)["verdict"] == "pass"


def test_check_writes_report(sawtooth_json, tmp_path, capsys):
    out_path = tmp_path / "report.json"
    code = run(["check", "--score", str(sawtooth_json), "--T", "0.25", "--out", str(out_path)])
    assert code == 0
    report = json.loads(out_path.read_text())
    assert report["verdict"] == "fail"
    assert report["gap"] == pytest.approx(0.25)


def test_bounds_uniform_example(capsys):
    code = run([
        "bounds", "--kind", "T", "--a", "0.25", "--b", "0.75", "--p1", "0.5",
        "--param", "mean-Y0", "--quantiles", "identity",
    ])
    out = capsys.readouterr().out
    assert code == 0
    assert out.splitlines()[0] == "[0.4375, 0.5625]"
    interval = last_json(out)["interval"]
    assert (interval["lower"], interval["upper"]) == pytest.approx((0.4375, 0.5625))


def test_bounds_curve_csv(tmp_path):
    out_path = tmp_path / "curve.csv"
    code = run([
        "bounds", "--kind", "U", "--delta", "0.1", "--p1", "0.5", "--param", "quantile-Y0",
        "--tau", "0.5", "--curve", "delta", "--grid-size", "11", "--out", str(out_path),
    ])
    assert code == 0
    lines = out_path.read_text().splitlines()
    assert len(lines) == 12
    assert lines[0] == "index,lower,upper,kind,param"


def test_oracle_single_configuration(tmp_path):
    out_path = tmp_path / "oracle.json"
    code = run([
        "oracle", "--n", "200", "--kind", "U", "--a", "0.25", "--b", "0.75", "--p1", "0.5",
        "--out", str(out_path),
    ])
    assert code == 0
    result = json.loads(out_path.read_text())
    assert result["max_gap"] <= 0.01
    assert result["passed"] is True


def test_oracle_needs_configuration(capsys):
    assert run(["oracle", "--n", "50"]) == 1
    assert "--suite" in capsys.readouterr().err


def test_simulate_is_seeded(sawtooth_json, tmp_path):
    first, second = tmp_path / "a.csv", tmp_path / "b.csv"
    for path in (first, second):
        assert run(["simulate", "--score", str(sawtooth_json), "--n", "50", "--seed", "7", "--out", str(path)]) == 0
    assert first.read_bytes() == second.read_bytes()
    assert first.read_text().splitlines()[0] == "y,x"
    assert len(first.read_text().splitlines()) == 51


def test_seed_environment_overrides_flag(sawtooth_json, tmp_path, monkeypatch):
    flagged, env = tmp_path / "flag.csv", tmp_path / "env.csv"
    monkeypatch.delenv("EXOBOUNDS_SEED", raising=False)
    assert run(["simulate", "--score", str(sawtooth_json), "--n", "30", "--seed", "7", "--out", str(flagged)]) == 0
    monkeypatch.setenv("EXOBOUNDS_SEED", "7")
    assert run(["simulate", "--score", str(sawtooth_json), "--n", "30", "--seed", "99", "--out", str(env)]) == 0
    assert flagged.read_bytes() == env.read_bytes()


def test_sensitivity_on_bundled_data(sway_csv, sway_config, tmp_path, capsys):
    out_dir = tmp_path / "results"
    code = run([
        "sensitivity", "--data", str(sway_csv), "--config", str(sway_config),
        "--out", str(out_dir), "--grid-size", "11",
    ])
    assert code == 0
    summary = json.loads(capsys.readouterr().out)
    assert "age=0,hhsize=0" in summary
    assert json.loads((out_dir / "breakdown_points.json").read_text()) == summary
    curve = read_curve_csv(out_dir / "age=0_hhsize=0__att__T.csv")
    assert list(curve.columns) == CURVE_COLUMNS
    assert len(curve) == 11
    assert set(curve["kind"]) == {"T"}
    assert (curve["lower"] <= curve["upper"]).all()


def test_unknown_choice_is_usage_error(capsys):
    assert run(["bounds", "--kind", "W", "--p1", "0.5"]) == 1
    assert "invalid choice" in capsys.readouterr().err


def test_invalid_share_is_validation_error(capsys):
    assert run(["bounds", "--kind", "T", "--delta", "0.25", "--p1", "1.5"]) == 1
    assert "Invalid configuration" in capsys.readouterr().err


def test_missing_file_is_data_error(tmp_path, capsys):
    code = run(["check", "--score", str(tmp_path / "absent.json"), "--T", "0.5"])
    assert code == 2
    assert "Data error" in capsys.readouterr().err


def test_missing_dataset_is_data_error(sway_config, tmp_path):
    code = run([
        "sensitivity", "--data", str(tmp_path / "absent.csv"), "--config", str(sway_config),
        "--out", str(tmp_path / "out"),
    ])
    assert code == 2
