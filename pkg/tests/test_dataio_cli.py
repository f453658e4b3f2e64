import json
import math
import shutil
import subprocess
import sys

import numpy as np
import pandas as pd
import pytest

from circmix.cli import main
from circmix.dataio import (
    EmptyDatasetError,
    SchemaError,
    SmallSampleWarning,
    TrialSchema,
    derive_distance_error,
    derive_response,
    load_trials,
    order_levels,
    read_artifact,
    write_csv_artifact,
)
from circmix.estimator import predict_grid
from circmix.kernels import Bandwidths

ROOT = __import__("pathlib").Path(__file__).resolve().parents[1]
DATA = ROOT / "data" / "synthetic_trials.csv"
SCHEMA = ROOT / "configs" / "trials_schema.ini"

SCHEMA_DEG = TrialSchema("t", "r", "cond", "d", "rd", angle_unit="degrees")


def _frame(n=12, seed=0):
    rng = np.random.default_rng(seed)
    return pd.DataFrame({
        "t": rng.uniform(0, 360, n), "r": rng.uniform(0, 360, n),
        "cond": rng.choice(["Control", "Preview", "Auditory"], n),
        "d": rng.uniform(10, 40, n), "rd": rng.uniform(10, 40, n),
    })


def test_derive_response_examples():
    rad = math.radians
    assert derive_response(rad(10), rad(350)) == pytest.approx(-0.34907, abs=1e-5)
    assert derive_response(rad(170), rad(-170)) == pytest.approx(0.34907, abs=1e-5)
    assert derive_response(0.0, math.pi) == pytest.approx(math.pi)


def test_derive_distance_error_examples():
    assert derive_distance_error(20.0, 15.5) == pytest.approx(-4.5)
    assert derive_distance_error(10.0, 10.0) == 0.0
    with pytest.raises(ValueError):
        derive_distance_error(np.array([1.0]), np.array([np.nan]))


def test_level_order():
    assert order_levels(["Auditory", "Control", "Preview"]) == ["Control", "Preview", "Auditory"]
    assert order_levels(["b", "a"]) == ["a", "b"]
    assert order_levels(["b", "a"], ("b", "a")) == ["b", "a"]
    with pytest.raises(SchemaError):
        order_levels(["a", "c"], ("a",))


def test_missing_column_is_schema_error(tmp_path):
    p = tmp_path / "t.csv"
    _frame().drop(columns="r").to_csv(p, index=False)
    with pytest.raises(SchemaError, match="'r'"):
        load_trials(p, SCHEMA_DEG)


def test_schema_file_requires_angle_unit(tmp_path):
    p = tmp_path / "s.ini"
    p.write_text("[schema]\ntrue_direction=t\nreported_direction=r\ncondition=c\ntarget_distance=d\n")
    with pytest.raises(SchemaError, match="angle_unit"):
        TrialSchema.from_file(p)
    s = TrialSchema.from_file(SCHEMA)
    assert s.condition_order[2] == "Forward Facing"


def test_small_and_empty_inputs(tmp_path):
    p = tmp_path / "one.csv"
    _frame(1).to_csv(p, index=False)
    with pytest.warns(SmallSampleWarning):
        sample, rep = load_trials(p, SCHEMA_DEG)
    assert sample.n == 1 and rep.n_used == 1
    df = _frame(3)
    df["t"] = np.nan
    df.to_csv(p, index=False)
    with pytest.raises(EmptyDatasetError):
        load_trials(p, SCHEMA_DEG)


def test_rows_with_missing_fields_dropped(tmp_path):
    df = _frame(10)
    df.loc[3, "d"] = np.nan
    p = tmp_path / "t.csv"
    df.to_csv(p, index=False)
    sample, rep = load_trials(p, SCHEMA_DEG)
    assert (rep.n_read, rep.n_dropped, sample.n) == (10, 1, 9)


def test_degrees_radians_round_trip(tmp_path):
    df = _frame(20)
    pd_deg, pd_rad = tmp_path / "deg.csv", tmp_path / "rad.csv"
    df.to_csv(pd_deg, index=False)
    rad = df.copy()
    rad[["t", "r"]] = np.radians(rad[["t", "r"]])
    rad.to_csv(pd_rad, index=False)
    a, _ = load_trials(pd_deg, SCHEMA_DEG)
    b, _ = load_trials(pd_rad, TrialSchema("t", "r", "cond", "d", "rd", angle_unit="radians"))
    assert np.allclose(a.theta, b.theta, atol=1e-12)
    assert np.all(np.abs(a.theta) <= math.pi)


def test_row_order_does_not_change_fit(tmp_path):
    df = _frame(40, seed=3)
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    df.to_csv(p1, index=False)
    df.sample(frac=1.0, random_state=1).to_csv(p2, index=False)
    preds = ["target_distance", "distance_error"]
    (a, ra), (b, rb) = load_trials(p1, SCHEMA_DEG, preds), load_trials(p2, SCHEMA_DEG, preds)
    assert ra.levels == rb.levels
    H = Bandwidths((5.0, 8.0), (0.3,))
    x = np.array([[20.0, 0.0], [30.0, -5.0]])
    fa = predict_grid(a, H, x, range(3)).m_hat
    fb = predict_grid(b, H, x, range(3)).m_hat
    assert np.allclose(fa, fb, atol=1e-12)


def test_artifact_round_trip(tmp_path):
    cfg = {"seed": 3, "h": [0.1], "note": "x", "nan": float("nan")}
    frame = pd.DataFrame({"x": [0.1, 1 / 3], "y": [1e-9, 2.0]})
    p = write_csv_artifact(tmp_path / "a.csv", frame, cfg)
    back_cfg, back = read_artifact(p)
    assert back_cfg == {"seed": 3, "h": [0.1], "note": "x", "nan": None}
    assert np.allclose(back.to_numpy(), frame.to_numpy(), rtol=1e-11)


def _run(tmp_path, *args):
    return main([*args, "--out", str(tmp_path)])


def test_cli_fit_and_artifacts(tmp_path, capsys):
    assert _run(tmp_path, "fit", "--input", str(DATA), "--schema", str(SCHEMA), "--selector", "rot",
                "--grid-size", "5", "--seed", "4") == 0
    cfg, frame = read_artifact(tmp_path / "fit.csv")
    assert cfg["seed"] == 4 and cfg["selector"] == "rot" and cfg["schema_resolved"]["angle_unit"] == "degrees"
    assert len(frame) == 25 and list(frame.z.unique())[0] == "Control"
    run_cfg, body = read_artifact(tmp_path / "run_fit.json")
    assert run_cfg == cfg and body["result"]["selector"] == "rot"
    assert json.loads(capsys.readouterr().out.strip().splitlines()[-1])["status"] == "ok"


def test_cli_config_file_and_override(tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text("[run]\nselector = rot\nh = 4.0\nlam = 0.2\ngrid_size = 3\n")
    assert _run(tmp_path, "bandwidth", "--config", str(ini), "--input", str(DATA), "--schema", str(SCHEMA),
                "--h", "6.0") == 0
    cfg, frame = read_artifact(tmp_path / "bandwidth.csv")
    assert cfg["h"] == [6.0] and cfg["lam"] == [0.2]
    assert frame.value.tolist() == [6.0, 0.2]


def test_cli_bands_and_diagnose(tmp_path):
    common = ["--input", str(DATA), "--schema", str(SCHEMA), "--h", "5.0", "--lam", "0.2"]
    assert _run(tmp_path, "bands", *common, "--B", "50", "--grid-size", "6") == 0
    cfg, band = read_artifact(tmp_path / "bands_Forward_Facing.csv")
    assert cfg["B"] == 50 and len(band) == 6
    assert np.all(band.lower_offset <= band.upper_offset)
    assert _run(tmp_path, "diagnose", *common, "--predictors", "target_distance", "distance_error",
                "--h", "5.0", "8.0") == 0
    _, gof = read_artifact(tmp_path / "gof.json")
    assert 0 <= gof["gof"]["case_obs"] <= 2 and set(gof["residual_summary"]) == set(gof["gof"]["n_by_level"])


def test_cli_exit_codes(tmp_path, capsys):
    assert _run(tmp_path, "fit", "--input", str(tmp_path / "nope.csv"), "--schema", str(SCHEMA)) == 2
    assert json.loads(capsys.readouterr().err.strip())["error"] == "usage"
    assert _run(tmp_path, "fit", "--input", str(DATA)) == 2
    assert _run(tmp_path, "fit", "--input", str(DATA), "--schema", str(SCHEMA), "--grid-size", "1") == 2
    with pytest.raises(SystemExit) as exc:
        _run(tmp_path, "fit", "--selector", "lscv")
    assert exc.value.code == 2
    capsys.readouterr()
    # a vanishing bandwidth leaves band grid points with no kernel mass
    assert _run(tmp_path, "bands", "--input", str(DATA), "--schema", str(SCHEMA), "--h", "1e-6", "--lam", "0",
                "--B", "10") == 1
    assert json.loads(capsys.readouterr().err.strip())["error"] == "computation"


def test_cli_simulate_preset_small(tmp_path):
    assert _run(tmp_path, "simulate", "--preset", "table1-desk", "--kappa", "3", "--n", "30", "--N1", "2",
                "--N2", "2", "--B-select", "5") == 0
    cfg, table = read_artifact(tmp_path / "table1.csv")
    assert cfg["preset"] == "table1-desk"
    assert table.method.tolist() == ["CV", "Boot", "RoT", "Oracle"]
    assert np.all(table["mean"][:3] >= table["mean"][3] - 1e-15)
    _, ratios = read_artifact(tmp_path / "ratios.csv")
    assert len(ratios) == 6


@pytest.mark.skipif(shutil.which("circmix") is None, reason="console script not installed")
def test_console_script(tmp_path):
    res = subprocess.run(["circmix", "simulate", "--out", str(tmp_path)], capture_output=True, text=True)
    assert res.returncode == 2 and json.loads(res.stderr.strip().splitlines()[-1])["error"] == "usage"
    res = subprocess.run([sys.executable, "-m", "circmix.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "simulate" in res.stdout
