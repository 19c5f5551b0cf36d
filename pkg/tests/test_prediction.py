import numpy as np
import pytest
from hypothesis import given, strategies as st

from kubolab.errors import PreconditionError, WrongDimension
from kubolab.model import builtin_model
from kubolab.perturb import EulerScaling, builtin_bump
from kubolab.prediction import (PredictionInput, chi_edge, chi_lin_fourier, chi_lin_real,
                                edge_conductance)
from kubolab.spectral import classify_edge_modes, find_fermi_points


@pytest.fixture(scope="module")
def lap_fermi():
    return find_fermi_points(builtin_model("laplacian_chain", {"L": 65, "mu": -2.0}))


@pytest.fixture(scope="module")
def ssh_fermi():
    return find_fermi_points(builtin_model("ssh_chain", {"L": 65, "mu": 0.8, "t1": 1.0, "t2": 0.5}))


def _qwz(u):
    m = builtin_model("qwz_cylinder", {"L": 33, "mu": 0.0, "u": u})
    fd = find_fermi_points(m)
    return classify_edge_modes(m, fd) if len(fd) else fd


@pytest.mark.parametrize("a", [0.5, 2.0])
@pytest.mark.parametrize("nu", [0, 1])
def test_fourier_and_position_routes_agree(ssh_fermi, a, nu):
    sc = EulerScaling(0.04, a)
    inp = PredictionInput(ssh_fermi, builtin_bump(), sc, nu)
    x = np.linspace(-1.5, 2.5, 17) / sc.theta
    assert np.max(np.abs(chi_lin_fourier(inp, x) - chi_lin_real(inp, x))) < 1e-10


@given(st.floats(-3, 3))
def test_routes_agree_at_random_positions(lap_fermi, X):
    sc = EulerScaling(0.1, 1.0)
    inp = PredictionInput(lap_fermi, builtin_bump(0.2, 0.8), sc, 0)
    x = X / sc.theta
    assert abs(chi_lin_fourier(inp, x) - chi_lin_real(inp, x)) < 1e-10


def test_large_a_limit_is_local(lap_fermi):
    # a -> infinity: chi_0(x) -> -(sum_w 1/(2 pi |v_w|)) mu(theta x) with |v| = 2 at both points
    inp = PredictionInput(lap_fermi, builtin_bump(), EulerScaling(0.04, 1e4), 0)
    assert chi_lin_fourier(inp, 0.0) == pytest.approx(-1 / (2 * np.pi), rel=1e-3)


def test_small_a_limit_vanishes(lap_fermi):
    inp = PredictionInput(lap_fermi, builtin_bump(), EulerScaling(0.04, 1e-3), 0)
    assert abs(chi_lin_real(inp, 0.0)) < 1e-2


def test_current_response_is_odd_for_symmetric_band(lap_fermi):
    # velocities +-2: right and left movers leave mirror-image tails behind an even bump
    sc = EulerScaling(0.04, 1.0)
    inp = PredictionInput(lap_fermi, builtin_bump(), sc, 1)
    x = np.array([3.0, 11.0, 25.0, 40.0])
    right, left = chi_lin_fourier(inp, x), chi_lin_fourier(inp, -x)
    assert np.max(np.abs(right)) > 1e-3
    assert np.max(np.abs(right + left)) < 1e-12
    dens = PredictionInput(lap_fermi, builtin_bump(), sc, 0)
    assert np.max(np.abs(chi_lin_fourier(dens, x) - chi_lin_fourier(dens, -x))) < 1e-12


def test_far_from_support_response_is_zero(lap_fermi):
    sc = EulerScaling(0.05, 0.5)
    inp = PredictionInput(lap_fermi, builtin_bump(), sc, 0)
    # exponential tails of length a|v|: 60 lengths away nothing is left
    assert abs(chi_lin_real(inp, (1 + 60) / sc.theta)) < 1e-20


def test_net_chirality_required():
    from dataclasses import replace
    fd = find_fermi_points(builtin_model("laplacian_chain", {"L": 65, "mu": -2.0}))
    one = replace(fd, points=fd.points[:1])
    with pytest.raises(PreconditionError):
        PredictionInput(one, builtin_bump(), EulerScaling(0.1, 1.0), 0)


def test_dimension_checks(lap_fermi):
    with pytest.raises(WrongDimension):
        PredictionInput(lap_fermi, builtin_bump(), EulerScaling(0.1, 1.0), 1, edge=True)
    inp = PredictionInput(lap_fermi, builtin_bump(), EulerScaling(0.1, 1.0), 1)
    with pytest.raises(WrongDimension):
        edge_conductance(inp)
    with pytest.raises(WrongDimension):
        chi_edge(inp, 0.0)


@pytest.mark.parametrize("u,sign", [(-1.0, 1), (1.0, -1)])
def test_edge_conductance_quantized(u, sign):
    f = builtin_bump(0.0, 1.0, dimension=2, height=4.0)
    inp = PredictionInput(_qwz(u), f, EulerScaling(0.04, 1e4), 1, edge=True, ell=8)
    assert edge_conductance(inp) == pytest.approx(sign / (2 * np.pi), abs=1e-14)
    assert chi_edge(inp, 0.0) == pytest.approx(sign / (2 * np.pi), rel=1e-3)


def test_trivial_cylinder_has_no_edge_response():
    f = builtin_bump(0.0, 1.0, dimension=2, height=4.0)
    inp = PredictionInput(_qwz(-3.0), f, EulerScaling(0.04, 8.0), 1, edge=True, ell=8)
    assert edge_conductance(inp) == 0.0
    assert chi_edge(inp, 0.0) == 0.0
