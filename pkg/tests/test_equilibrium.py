import numpy as np
import pytest
from hypothesis import given, strategies as st

from kubolab.equilibrium import (EquilibriumParams, MatsubaraGrid, fermi_factor, gibbs_correlation,
                                 matsubara_propagator, snap_eta, split_propagator)
from kubolab.errors import DegeneracyViolated, PreconditionError
from kubolab.model import builtin_model
from kubolab.spectral import find_fermi_points


@given(st.floats(-50, 50), st.floats(0.01, 100))
def test_fermi_factor_symmetry(x, beta):
    f = fermi_factor(np.array([x, -x]), beta, 0.0)
    assert abs(f[0] + f[1] - 1.0) < 1e-14
    assert 0 <= f[0] <= 1


def test_zero_temperature_tie_raises():
    with pytest.raises(DegeneracyViolated):
        fermi_factor(np.array([0.0]), np.inf, 0.0)


@pytest.mark.parametrize("beta", [0.7, 5.0, np.inf])
def test_correlation_matches_dense_formula(beta):
    m = builtin_model("ssh_chain", {"L": 7, "mu": 0.3})
    H = m.hamiltonian()
    e, U = np.linalg.eigh(H)
    ref = (U * fermi_factor(e, beta, 0.3)) @ U.conj().T
    G = gibbs_correlation(m, EquilibriumParams(beta, 0.3)).dense()
    assert np.max(np.abs(G - ref)) < 1e-12


def test_correlation_is_a_projector_at_zero_temperature():
    m = builtin_model("laplacian_chain", {"L": 21, "mu": -1.1})
    G = gibbs_correlation(m, EquilibriumParams(np.inf, -1.1)).dense()
    assert np.max(np.abs(G @ G - G)) < 1e-12


@given(st.floats(0.5, 100), st.floats(0.001, 3))
def test_snap_eta_on_bosonic_grid(beta, eta):
    s = snap_eta(beta, eta)
    n = s * beta / (2 * np.pi)
    assert abs(n - round(n)) < 1e-9 and s >= eta - 1e-12


def test_matsubara_frequencies_are_fermionic():
    w = MatsubaraGrid(2.0, 3).frequencies
    assert np.allclose(np.exp(1j * w * 2.0), -1)


def test_propagator_is_resolvent():
    m = builtin_model("ssh_chain", {"L": 9, "mu": 0.2})
    g = matsubara_propagator(m, EquilibriumParams(3.0, 0.2), 0.7, 1.1)
    h = m.kernel.bloch(1.1)
    assert np.allclose(g @ (1j * 0.7 * np.eye(2) + h - 0.2 * np.eye(2)), np.eye(2))


def _split(mu=-2.0):
    m = builtin_model("laplacian_chain", {"L": 101, "mu": mu})
    return split_propagator(m, find_fermi_points(m))


@given(st.floats(-5, 5), st.floats(0, 2 * np.pi))
def test_split_reassembles(k0, k):
    sp = _split()
    g, gs, gr = sp.g(k0 + 1e-3, k), sp.g_s(k0 + 1e-3, k), sp.g_r(k0 + 1e-3, k)
    assert np.max(np.abs(g - gs - gr)) <= 1e-12 * max(1.0, np.max(np.abs(g)))


@pytest.mark.parametrize("r", [1e-2, 1e-4, 1e-6])
def test_regular_part_stays_bounded_near_fermi_point(r):
    sp = _split()
    p = sp.fermi.points[0]
    assert np.max(np.abs(sp.g(r, p.k_F))) > 0.5 / r
    assert np.max(np.abs(sp.g_r(r, p.k_F + r))) < 10.0


def test_split_needs_points():
    m = builtin_model("ssh_chain", {"L": 11, "mu": 0.0})
    with pytest.raises(PreconditionError):
        split_propagator(m, find_fermi_points(m))
