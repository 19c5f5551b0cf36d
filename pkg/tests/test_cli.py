import json

import numpy as np
import pytest

from kubolab.cli import main


def test_bands_csv(tmp_path):
    assert main(["bands", "--model", "laplacian_chain", "--L", "11", "--mu", "-2", "--k-count", "8",
                 "--out", str(tmp_path / "b.csv")]) == 0
    lines = (tmp_path / "b.csv").read_text().splitlines()
    assert lines[0] == "k,band_index,energy" and len(lines) == 9


def test_fermi_json_with_global_flag_after_subcommand(tmp_path):
    assert main(["fermi", "--model", "laplacian_chain", "--L", "11", "--mu", "-2",
                 "--out-dir", str(tmp_path), "--out", "f.json"]) == 0
    d = json.loads((tmp_path / "f.json").read_text())
    assert len(d["points"]) == 2 and d["net_chirality"] == 0


def test_precondition_exit_code(capsys):
    assert main(["fermi", "--model", "laplacian_chain", "--L", "10", "--mu", "-2"]) == 3
    assert "EvenL" in capsys.readouterr().err


def test_tangency_exit_code():
    assert main(["fermi", "--model", "laplacian_chain", "--L", "11", "--mu", "0"]) == 3


def test_respond_and_predict(tmp_path):
    common = ["--model", "laplacian_chain", "--mu", "-2", "--eta", "0.3", "--a", "1", "--L", "41",
              "--nu", "0"]
    assert main(["respond", *common, "--beta", "inf", "--out", str(tmp_path / "r.csv"),
                 "--dump-potential", str(tmp_path / "mu.csv")]) == 0
    assert main(["predict", *common, "--out", str(tmp_path / "p.csv")]) == 0
    r = (tmp_path / "r.csv").read_text().splitlines()
    meta = json.loads(r[0][2:])
    assert meta["eta"] == 0.3 and r[1] == "x,chi"
    sim = np.loadtxt(tmp_path / "r.csv", delimiter=",", skiprows=2)
    pred = np.loadtxt(tmp_path / "p.csv", delimiter=",", skiprows=2)
    assert np.array_equal(sim[:, 0], pred[:, 0])
    assert np.max(np.abs(sim[:, 1] - pred[:, 1])) < 0.05
    assert (tmp_path / "mu.csv").read_text().startswith("x,mu")


def test_bubble_and_cancel(tmp_path, capsys):
    assert main(["bubble", "--theta", "1e-2"]) == 0
    d = json.loads(capsys.readouterr().out)
    assert d["difference"] < 1e-5
    mf = tmp_path / "m.json"
    mf.write_text(json.dumps([[0.01, 0.01]]))
    assert main(["cancel", "--momenta-file", str(mf), "--n", "1"]) == 0
    assert json.loads(capsys.readouterr().out)["passed"] is True
    assert main(["cancel", "--momenta", "0.01,0.01", "--n", "2"]) == 3


def test_edge(capsys):
    assert main(["edge", "--u", "-1", "--L", "33"]) == 0
    d = json.loads(capsys.readouterr().out)
    assert d["edge_conductance"] == pytest.approx(1 / (2 * np.pi))


def test_selftest(capsys):
    assert main(["selftest"]) == 0
    assert "FAIL" not in capsys.readouterr().out


def test_sweep_needs_config():
    assert main(["sweep"]) == 3


def test_sweep_from_config(tmp_path):
    cfg = tmp_path / "s.toml"
    cfg.write_text('[model]\nname = "laplacian_chain"\nmu = -2.0\n[scaling]\netas = [0.32, 0.16, 0.08]\n'
                   '[run]\nmethod = "window"\n')
    assert main(["--out-dir", str(tmp_path), "sweep", "--config", str(cfg), "--quiet"]) == 0
    assert (tmp_path / "s_report.json").exists()
    assert (tmp_path / "s_eta0.08_nu0.csv").exists()
