import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from kubolab.errors import FitDegenerate, PreconditionError
from kubolab.harness import (CurveTable, L_rule, Scenario, _parse_beta, emit, fit_gamma,
                             next_odd, read_curve_csv, run_scenario, stage)


@given(st.floats(0.5, 1e4))
def test_next_odd(n):
    k = next_odd(n)
    assert k % 2 == 1 and k >= n - 1e-9 and k - n < 2


def test_L_rule_floor_and_growth():
    assert L_rule(1.0, 1.0) == 513
    assert L_rule(0.004, 1.0) == 2001


def test_beta_rules():
    assert _parse_beta("20/eta", 0.1) == pytest.approx(200.0)
    assert math.isinf(_parse_beta("inf", 0.1))
    assert _parse_beta(50, 0.1) == 50.0


@given(st.floats(0.5, 3.0), st.floats(0.01, 10))
def test_fit_recovers_exponent(gamma, c):
    etas = [0.32, 0.16, 0.08, 0.04]
    r = fit_gamma([(e, c * e ** gamma) for e in etas])
    assert r.gamma == pytest.approx(gamma, abs=1e-9)
    assert r.converged


def test_fit_flags_preasymptotic_point():
    etas = [0.32, 0.16, 0.08, 0.04]
    noise = {0.32: 4.0, 0.16: 1.02, 0.08: 0.99, 0.04: 1.01}
    r = fit_gamma([(e, e ** 2 * noise[e]) for e in etas])
    assert r.excluded == 0.32 and r.n_points == 3
    assert r.gamma == pytest.approx(2.0, abs=0.05)


def test_fit_keeps_consistent_point():
    etas = [0.32, 0.16, 0.08, 0.04]
    noise = {0.32: 1.03, 0.16: 0.97, 0.08: 1.02, 0.04: 0.98}
    r = fit_gamma([(e, e ** 1.5 * noise[e]) for e in etas])
    assert r.excluded is None and r.n_points == 4


def test_fit_degenerate_inputs():
    with pytest.raises(FitDegenerate):
        fit_gamma([(0.1, 1.0), (0.2, 2.0)])
    with pytest.raises(FitDegenerate):
        fit_gamma([(0.1, 0.0), (0.2, 1.0), (0.3, 2.0)])


def test_scenario_rules():
    s = Scenario(model={"name": "laplacian_chain", "mu": -2.0}, a_rule="log", w=0.5)
    assert s.a_of(math.exp(-4)) == pytest.approx(2.0)
    t = Scenario(model={"name": "laplacian_chain", "mu": -2.0}, a_rule="table",
                 a_table={"0.1": 3.0})
    assert t.a_of(0.1) == 3.0
    with pytest.raises(PreconditionError):
        t.a_of(0.2)
    with pytest.raises(PreconditionError):
        Scenario(model={"name": "laplacian_chain"}, a_rule="quadratic")


def test_stage_annotates_errors():
    with pytest.raises(PreconditionError) as info:
        with stage("simulate"):
            raise PreconditionError("boom")
    assert info.value.stage == "simulate"


def test_curve_csv_roundtrip(tmp_path):
    t = CurveTable(np.array([-1, 0, 1]), np.array([0.1, 1 / 3, -2e-17]), np.array([0.1, 0.3, 0.0]))
    p = tmp_path / "c.csv"
    emit(t, p, "csv")
    assert p.read_text().splitlines()[0] == "x,chi_sim,chi_pred,gap"
    back = read_curve_csv(p)
    assert np.array_equal(back.chi_sim, t.chi_sim) and np.array_equal(back.x, t.x)


@pytest.fixture(scope="module")
def quick_report():
    s = Scenario(model={"name": "laplacian_chain", "mu": -2.0}, etas=(0.32, 0.16, 0.08),
                 method="window")
    return run_scenario(s)


def test_small_sweep_converges(quick_report):
    gaps = [r["rms_gap"] for r in sorted(quick_report.records, key=lambda r: -r["eta"])]
    assert gaps[0] > gaps[1] > gaps[2]
    assert quick_report.fits[0].gamma > 1.0
    assert quick_report.passed


def test_report_serialization(quick_report, tmp_path):
    emit(quick_report, tmp_path / "r.json", "json")
    d = json.loads((tmp_path / "r.json").read_text())
    assert d["passed"] is True and len(d["records"]) == 3
    emit(quick_report, tmp_path / "r.csv", "csv")
    emit(quick_report, tmp_path / "r.svg", "svg")
    assert (tmp_path / "r.svg").read_text().startswith("<svg")


def test_zero_perturbation_sweep_reports_exact_zero():
    s = Scenario(model={"name": "laplacian_chain", "mu": -2.0},
                 perturbation={"amplitude": 0.0}, etas=(0.32, 0.16, 0.08))
    rep = run_scenario(s)
    assert all(r["rms_gap"] == 0.0 for r in rep.records)
    assert rep.passed and rep.notes
