import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from cm2sim import output, presets, thermo
from cm2sim.cli import main
from cm2sim.model import save_model


def run(*argv):
    return main([str(a) for a in argv])


def test_presets_list(capsys):
    assert run("presets", "list") == 0
    out = capsys.readouterr().out
    for name in presets.PRESETS:
        assert name in out


def test_validate_codes(tmp_path, capsys):
    assert run("validate", "--preset", "two-qubit", "--out", tmp_path / "v") == 0
    rep = json.loads((tmp_path / "v" / "validation.json").read_text())
    assert rep["ok"] and rep["measurement_condition"]
    bad = tmp_path / "bad.json"
    bad.write_text('{"system_dim": 2,\n "rho_x0": [[[1, 0]]]\n}')
    assert run("validate", "--model", bad) == 1
    assert "required" in capsys.readouterr().err


def test_model_and_preset_are_exclusive(tmp_path):
    path = tmp_path / "m.json"
    save_model(presets.single_qubit_model(), path)
    assert run("validate", "--model", path, "--preset", "single-qubit") == 1
    assert run("validate") == 1
    assert run("validate", "--model", path) == 0


def test_missing_seed_is_invalid_input(tmp_path):
    with pytest.raises(SystemExit) as exc:
        run("ensemble", "--preset", "single-qubit", "--steps", 5, "--out", tmp_path)
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        run("ensemble", "--preset", "single-qubit", "--steps", 0, "--seed", 1, "--out", tmp_path)
    assert exc.value.code == 1


def test_ensemble_outputs(tmp_path):
    out = tmp_path / "e"
    assert run("ensemble", "--preset", "two-qubit", "--steps", 40, "--traj", 100, "--seed", 3,
               "--out", out, "--svg") == 0
    lines = (out / "series.csv").read_text().splitlines()
    manifest = json.loads((out / "manifest.json").read_text())
    assert lines[0] == f"# manifest_sha256={manifest['sha256']} units: nats"
    cols, data = output.read_csv(out / "series.csv")
    assert tuple(cols) == output.SERIES_COLUMNS
    assert data.shape == (41, len(cols))
    assert np.array_equal(data[:, 0], np.arange(41))
    iss = json.loads((out / "iss.json").read_text())
    assert iss["manifest_sha256"] == manifest["sha256"]
    assert iss["verdict"] in thermo.VERDICTS
    assert iss["divergent_units"] == [1]
    for svg in out.glob("*.svg"):
        root = ET.parse(svg).getroot()
        assert root.tag.endswith("svg")
        assert manifest["sha256"] in svg.read_text()
    assert manifest["config"]["seed"] == 3 and "threads" not in json.dumps(manifest)


def test_thread_count_does_not_change_bytes(tmp_path, monkeypatch):
    args = ["ensemble", "--preset", "two-qubit", "--steps", 30, "--traj", 120, "--seed", 8]
    monkeypatch.setenv("CM2_THREADS", "1")
    assert run(*args, "--out", tmp_path / "a") == 0
    monkeypatch.setenv("CM2_THREADS", "8")
    assert run(*args, "--out", tmp_path / "b") == 0
    assert (tmp_path / "a" / "series.csv").read_bytes() == (tmp_path / "b" / "series.csv").read_bytes()


def test_rerun_reproduces(tmp_path):
    a = tmp_path / "a"
    assert run("single-shot", "--preset", "two-qubit-fp", "--steps", 60, "--seed", 2, "--out", a) == 0
    assert run("rerun", a / "manifest.json", "--out", tmp_path / "b") == 0
    for name in ("trajectory.csv", "histograms.csv", "summary.json", "manifest.json"):
        assert (a / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_rerun_rejects_tampered_manifest(tmp_path):
    a = tmp_path / "a"
    assert run("exact", "--preset", "single-qubit", "--steps", 3, "--out", a) == 0
    m = json.loads((a / "manifest.json").read_text())
    m["config"]["steps"] = 4
    (a / "manifest.json").write_text(json.dumps(m))
    assert run("rerun", a / "manifest.json", "--out", tmp_path / "b") == 1


def test_model_file_embedded_in_manifest(tmp_path):
    path = tmp_path / "m.json"
    save_model(presets.single_qubit_model(), path)
    assert run("exact", "--model", path, "--steps", 3, "--out", tmp_path / "x") == 0
    path.unlink()
    assert run("rerun", tmp_path / "x" / "manifest.json", "--out", tmp_path / "y") == 0
    assert (tmp_path / "x" / "ledger.csv").read_bytes() == (tmp_path / "y" / "ledger.csv").read_bytes()


def test_single_shot_outputs(tmp_path):
    out = tmp_path / "s"
    assert run("single-shot", "--preset", "two-qubit-fp", "--steps", 100, "--seed", 1, "--out", out,
               "--svg", "--bins", 12) == 0
    cols, data = output.read_csv(out / "trajectory.csv")
    assert cols[:3] == ["t", "z", "S_c"] and cols[-3:] == ["bloch_x", "bloch_y", "bloch_z"]
    assert data.shape[0] == 100
    z_acc = data[:, cols.index("Z_acc")]
    assert z_acc[-1] == pytest.approx(data[:, 1].mean())
    hist = (out / "histograms.csv").read_text().splitlines()
    assert "first 20 steps discarded" in hist[0]
    rows = [r.split(",") for r in hist[2:]]
    assert len(rows) == 3 * 12
    assert sum(int(r[3]) for r in rows if r[0] == "G") == 80
    summary = json.loads((out / "summary.json").read_text())
    assert summary["Z_T"] == pytest.approx(z_acc[-1])
    assert (out / "hist_G.svg").exists() and (out / "accumulated.svg").exists()


def test_exact_outputs_and_budget(tmp_path, capsys):
    out = tmp_path / "x"
    assert run("exact", "--preset", "single-qubit", "--steps", 10, "--out", out) == 0
    rep = json.loads((out / "verify.json").read_text())
    assert rep["pass"] and all(c["margin"] >= -1e-9 for c in rep["checks"] if isinstance(c["margin"], float))
    cols, data = output.read_csv(out / "ledger.csv")
    assert np.max(data[:, cols.index("marginal_residual")]) < 1e-10
    assert run("exact", "--preset", "two-qubit", "--steps", 60, "--out", tmp_path / "big") == 1
    assert "complex entries" in capsys.readouterr().err


def test_exact_verifier_failure_code(tmp_path, monkeypatch):
    monkeypatch.setattr(thermo, "verify_exact", lambda run: [thermo.Check("forced", -1.0, False)])
    assert run("exact", "--preset", "single-qubit", "--steps", 2, "--out", tmp_path) == 2


def test_classical_codes(tmp_path):
    assert run("classical", "--preset", "single-qubit", "--x0", "thermal:0.9", "--out", tmp_path / "c") == 0
    rep = json.loads((tmp_path / "c" / "classical.json").read_text())
    assert rep["pass"] and rep["max_diff"] < 1e-12 and rep["n_sequences"] == 256
    assert run("classical", "--preset", "single-qubit", "--out", tmp_path / "r") == 1
    assert "not diagonal" in json.loads((tmp_path / "r" / "classical.json").read_text())["refused"]
    assert run("classical", "--preset", "single-qubit", "--x0", "1", "--steps", 9, "--out", tmp_path / "t") == 1


def test_classical_refuses_xbasis_model(tmp_path):
    m = presets.single_qubit_model(rho_x0=presets.thermal_qubit(0.5))
    plus = np.full((2, 2), 0.5, dtype=complex)
    minus = np.array([[0.5, -0.5], [-0.5, 0.5]], dtype=complex)
    from cm2sim.model import CM2Model

    path = tmp_path / "x.json"
    save_model(CM2Model(m.rho_x0, m.ancilla_units, m.stages, [plus, minus], ["+", "-"]), path)
    assert run("classical", "--model", path, "--out", tmp_path / "c") == 1
    assert "measurement operator" in json.loads((tmp_path / "c" / "classical.json").read_text())["refused"]


def test_manifest_hash():
    m = output.make_manifest({"a": 1})
    output.check_manifest(m)
    assert output.make_manifest({"a": 1})["sha256"] == m["sha256"]
    assert output.make_manifest({"a": 2})["sha256"] != m["sha256"]


def test_csv_round_trip(tmp_path):
    rows = [[0, 0.1, float("nan")], [1, -0.0, 1e-300]]
    output.write_csv(tmp_path / "a.csv", ["t", "x", "y"], rows, "abc")
    cols, data = output.read_csv(tmp_path / "a.csv")
    assert cols == ["t", "x", "y"]
    assert data[0, 1] == 0.1 and np.isnan(data[0, 2]) and data[1, 2] == 1e-300
    assert "-0.0" not in (tmp_path / "a.csv").read_text()


def test_svg_handles_nonfinite():
    svg = output.line_plot([0, 1, 2, 3], {"a": [np.nan, 1.0, np.inf, 2.0]}, "t<1>")
    ET.fromstring(svg)
    assert "t&lt;1&gt;" in svg
    ET.fromstring(output.histogram_plot([], 5, "empty"))
    ET.fromstring(output.histogram_plot([1.0, 1.0, 1.0], 5, "constant"))
