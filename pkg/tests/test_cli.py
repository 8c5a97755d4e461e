import csv
import json
from pathlib import Path

import numpy as np
import pytest

import scenetraj
from scenetraj.cli import main

DATA = Path(scenetraj.__file__).parent / "data"
INI = str(DATA / "apartment.ini")
RECORDS = str(DATA / "apartment_records.json")


def run(*argv):
    return main([str(a) for a in argv])


def test_describe_semantic_and_instance(capsys):
    assert run("describe", "-c", INI) == 0
    semantic = capsys.readouterr().out
    assert semantic.startswith("In the environment, there are the rooms:")
    assert run("describe", "-c", INI, "--granularity", "instance") == 0
    instance = capsys.readouterr().out
    assert instance != semantic and "obj_" not in semantic


def test_predict_outputs_are_deterministic(tmp_path):
    for name in ("a", "b"):
        assert run("predict", "-c", INI, "--start", 1, 1, "--past", "sink_1:wash hands:12",
                   "-o", tmp_path / name) == 0
    for f in ("tree.json", "density_grid.csv", "trajectories.csv", "manifest.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes(), f


def test_density_grid_slices_integrate_to_one(tmp_path):
    assert run("predict", "-c", INI, "--record", RECORDS, "--index", 1, "--grid-step", 0.1, "--horizon", 20,
               "-o", tmp_path) == 0
    lines = (tmp_path / "density_grid.csv").read_text().splitlines()
    assert lines[0].startswith("# manifest=")
    rows = np.array([[float(v) for v in r] for r in list(csv.reader(lines[1:]))[1:]])
    for t in (0.0, 5.0, 20.0):
        sl = rows[rows[:, 2] == t]
        assert sl[:, 3].sum() * 0.1 * 0.1 == pytest.approx(1.0, abs=0.02)


def test_export_grid_reproduces_predict(tmp_path, capsys):
    assert run("predict", "-c", INI, "--start", 1, 1, "-o", tmp_path) == 0
    capsys.readouterr()
    assert run("export-grid", "-c", INI, tmp_path / "tree.json", "-o", tmp_path / "again.csv") == 0
    assert (tmp_path / "again.csv").read_bytes() == (tmp_path / "density_grid.csv").read_bytes()
    assert run("export-grid", "-c", INI, tmp_path / "tree.json", "--times", "0,2.5") == 0
    assert capsys.readouterr().out.count("\n") > 2


def test_evaluate_and_stats(tmp_path, capsys):
    assert run("evaluate", "-c", INI, RECORDS, "--baselines", "constant_velocity", "-o", tmp_path) == 0
    out = capsys.readouterr().out
    assert "evaluated 5 records" in out
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["n_records"] == 5 and manifest["failures"] == []
    assert run("stats", "-c", INI, RECORDS, "-o", tmp_path / "stats.csv") == 0
    assert "path_efficiency" in capsys.readouterr().out
    assert (tmp_path / "stats.csv").read_text().startswith("# manifest=")


def test_exit_code_config(tmp_path, capsys):
    assert run("describe", "-c", INI, "--sigma", "-1") == 1
    assert run("describe") == 1
    assert "configuration error" in capsys.readouterr().err


def test_exit_code_data(tmp_path, capsys):
    bad = tmp_path / "scene.json"
    bad.write_text('{"nodes": [{"id": "x", "layer": "wall"}], "edges": []}')
    assert run("describe", "--scene", bad) == 2
    assert run("predict", "-c", INI, "--start", 1, 1, "--past", "piano:play:3", "-o", tmp_path) == 2
    missing = tmp_path / "fx.json"
    missing.write_text("[]")
    assert run("predict", "-c", INI, "--fixture", missing, "--start", 1, 1, "-o", tmp_path) == 2
    assert "input error" in capsys.readouterr().err


def test_exit_code_transport(tmp_path, capsys):
    # nothing listens on the discard port, so the connection is refused
    code = run("predict", "-c", INI, "--predictor", "wire", "--endpoint", "http://127.0.0.1:9/v1",
               "--set", "retries=0", "--set", "timeout=2", "--start", 1, 1, "-o", tmp_path)
    assert code == 3
    assert "transport" in capsys.readouterr().err
