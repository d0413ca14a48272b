import json

import numpy as np
import pytest

from helpers import random_lft_plant
from lfth2 import serialize as ser
from lfth2.cli import main
from lfth2.lft_model import LftPlant


@pytest.fixture
def plant_np0(tmp_path):
    path = tmp_path / "plant_np0.json"
    ser.save_plant(random_lft_plant(np.random.default_rng(100), n=2, np_=0), path)
    return path


@pytest.fixture
def open_loop(tmp_path):
    """Stable plant with no control channels, so it is its own closed loop."""
    path = tmp_path / "loop.json"
    ser.save_plant(LftPlant.create([[0.5]], ts=1.0, B1=[[1.0]], C1=[[1.0]], nu=0, ny=0), path)
    return path


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_analyze_reports_flags(capsys, open_loop):
    code, out, _ = run(capsys, "--tol", "1e-8", "analyze", open_loop)
    rep = json.loads(out)
    assert code == 0 and rep["flags"] == {"tol": 1e-8, "seed": 0, "max_iter": 200}
    assert rep["gamma"] == pytest.approx(np.sqrt(1 / 0.75), rel=1e-3)


def test_reports_are_byte_identical(capsys, open_loop):
    a = run(capsys, "simulate", open_loop, "--white-noise", "--runs", "8", "--horizon", "256", "--seed", "3")
    b = run(capsys, "simulate", open_loop, "--white-noise", "--runs", "8", "--horizon", "256", "--seed", "3")
    assert a[0] == 0 and a[1] == b[1]


def test_synth_gs_nominal_and_controller_file(capsys, plant_np0, tmp_path):
    out_path = tmp_path / "K.json"
    code, out, _ = run(capsys, "synth", "gs", plant_np0, "-o", out_path)
    rep = json.loads(out)
    assert code == 0 and rep["controller_file"] == str(out_path)
    code, out, _ = run(capsys, "analyze", plant_np0, "--controller", out_path)
    assert code == 0 and json.loads(out)["gamma"] <= rep["gamma"] * 1.001


def test_synth_sf_inline_controller(capsys, plant_np0):
    code, out, _ = run(capsys, "synth", "sf", plant_np0)
    rep = json.loads(out)
    assert code == 0 and rep["mode"] == "sf" and "controller" in rep


def test_infeasible_exit_code(capsys, tmp_path):
    path = tmp_path / "unstable.json"
    ser.save_plant(LftPlant.create([[1.5]], ts=1.0, B1=[[1.0]], C1=[[1.0]], nu=0, ny=0), path)
    code, out, err = run(capsys, "analyze", path)
    assert code == 1 and "infeasible" in err and out == ""


def test_invalid_input_exit_codes(capsys, tmp_path, open_loop):
    bad = tmp_path / "bad.json"
    bad.write_text("[]")
    assert run(capsys, "analyze", bad)[0] == 2
    assert run(capsys, "analyze", tmp_path / "missing.json")[0] == 2
    assert run(capsys, "bogus")[0] == 2
    assert run(capsys, "example", "nope")[0] == 2
    assert run(capsys, "simulate", open_loop)[0] == 2


def test_step_and_induced(capsys, open_loop, tmp_path):
    code, out, _ = run(capsys, "simulate", open_loop, "--step", "0.5", "--channels", "0", "--csv",
                       tmp_path / "s.csv")
    rep = json.loads(out)
    assert code == 0 and rep["scenario"] == "step"
    assert (tmp_path / "s_0.csv").read_text().splitlines()[0] == "k,d_1,e_1"
    code, out, _ = run(capsys, "simulate", open_loop, "--induced")
    assert code == 0 and json.loads(out)["estimate"]["value"] == pytest.approx(2.0)


def test_example_emit(capsys, tmp_path):
    code, out, _ = run(capsys, "example", "two-disk", "--emit", tmp_path)
    rep = json.loads(out)
    assert code == 0 and len(rep["files"]) == 2
    assert ser.load_plant(rep["files"][0]).ts == 0.01
