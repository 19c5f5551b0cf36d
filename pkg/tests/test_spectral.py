import numpy as np
import pytest
from hypothesis import given, strategies as st

from kubolab.errors import TransversalityViolated, WrongDimension
from kubolab.model import builtin_model
from kubolab.spectral import (band_structure, check_net_chirality, classify_edge_modes,
                              find_fermi_points)


def test_laplacian_fermi_points_closed_form(laplacian):
    fd = find_fermi_points(laplacian)
    # e(k) = 2 cos k - 2 = -2 gives k_F = pi/2, 3pi/2 with velocities +-2
    ks = sorted(p.k_F for p in fd.points)
    assert np.allclose(ks, [np.pi / 2, 3 * np.pi / 2], atol=1e-10)
    vs = sorted(p.v for p in fd.points)
    assert np.allclose(vs, [-2.0, 2.0], atol=1e-9)
    assert check_net_chirality(fd) == 0


@given(st.floats(-3.9, -0.1))
def test_laplacian_velocity_formula(mu):
    m = builtin_model("laplacian_chain", {"L": 51, "mu": mu})
    fd = find_fermi_points(m)
    assert len(fd) == 2
    for p in fd.points:
        assert abs(2 * np.cos(p.k_F) - 2 - mu) < 1e-10
        assert abs(p.v + 2 * np.sin(p.k_F)) < 1e-8
        assert abs(p.v - p.v_fh) < 1e-8
    assert check_net_chirality(fd) == 0


def test_band_touching_raises():
    with pytest.raises(TransversalityViolated):
        find_fermi_points(builtin_model("laplacian_chain", {"L": 11, "mu": 0.0}))


def test_ssh_inside_gap_has_no_points():
    fd = find_fermi_points(builtin_model("ssh_chain", {"L": 21, "mu": 0.0}))
    assert len(fd) == 0


def test_band_structure_sorted_and_tracked():
    bs = band_structure(builtin_model("ssh_chain", {"L": 11, "mu": 0.0}), 64)
    assert np.all(np.diff(bs.energies, axis=1) >= 0)
    assert bs.branch_energies().shape == (64, 2)


@pytest.mark.parametrize("u,expected", [(-1.0, -1.0), (1.0, 1.0)])
def test_qwz_lower_edge_velocity_sign(u, expected):
    m = builtin_model("qwz_cylinder", {"L": 33, "mu": 0.0, "u": u})
    fd = classify_edge_modes(m, find_fermi_points(m))
    lower = [p for p in fd.points if p.side == "lower"]
    upper = [p for p in fd.points if p.side == "upper"]
    assert len(lower) == len(upper) == 1
    assert np.sign(lower[0].v) == expected
    assert np.sign(upper[0].v) == -expected


def test_qwz_trivial_phase_has_no_modes():
    m = builtin_model("qwz_cylinder", {"L": 33, "mu": 0.0, "u": -3.0})
    assert len(find_fermi_points(m)) == 0


def test_edge_classification_needs_cylinder(laplacian):
    with pytest.raises(WrongDimension):
        classify_edge_modes(laplacian, find_fermi_points(laplacian))
