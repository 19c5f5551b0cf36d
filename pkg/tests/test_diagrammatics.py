import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from kubolab.diagrammatics import (ChiralPropagator, LoopSpec, bubble_closed, cancellation_check,
                                   chirals_from_fermi, cumulant_wick, fermi_divided_difference,
                                   integrate_singular, loop_Bn, singular_Sn, vertex_weight,
                                   ward_residual, wick_split)
from kubolab.equilibrium import EquilibriumParams, snap_eta, split_propagator
from kubolab.errors import OutsideCutoffRegime, PreconditionError, UndefinedLimit
from kubolab.model import builtin_model
from kubolab.spectral import find_fermi_points

unit = ChiralPropagator(v=1.0, delta=1.0)


# -- propagator and Ward identity ------------------------------------------------------------
def test_propagator_vanishes_outside_cutoff():
    ch = ChiralPropagator(v=2.0, k_F=0.5, delta=0.3)
    assert ch(0.7, 0.5) == 0.0
    assert ch(0.1, 0.5) == pytest.approx(1 / (0.1j))


def test_propagator_validation():
    with pytest.raises(PreconditionError):
        ChiralPropagator(v=0.0)
    with pytest.raises(PreconditionError):
        ChiralPropagator(v=1.0, delta=0.0)


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-1, 1), st.floats(-1, 1),
       st.sampled_from([0.5, -1.0, 2.0]))
def test_ward_identity_pointwise(k0, k1, p0, p1, v):
    if abs(p0) + abs(p1) < 1e-6:
        return
    ch = ChiralPropagator(v=v, delta=1.0)
    r = ward_residual(ch, (k0, k1), (p0, p1))
    with np.errstate(invalid="ignore"):
        g = abs(ch(k0, k1) * ch(k0 + p0, k1 + p1))
    if np.isfinite(g) and g < 1e12:
        assert abs(r) <= 1e-11 * max(1.0, g)


def test_ward_identity_bulk_sample():
    rng = np.random.default_rng(2)
    k = (rng.uniform(-3, 3, 5000), rng.uniform(-3, 3, 5000))
    p = (rng.uniform(-1, 1, 5000), rng.uniform(-1, 1, 5000))
    assert np.max(np.abs(ward_residual(unit, k, p))) <= 1e-13


def test_ward_identity_wide_support():
    # support radius delta/|v| = 10 covers the zone several times over
    ch = ChiralPropagator(v=-0.2, k_F=1.0, delta=2.0)
    rng = np.random.default_rng(4)
    k = (rng.uniform(-3, 3, 5000), rng.uniform(-3, 3, 5000))
    p = (rng.uniform(-1, 1, 5000), rng.uniform(-1, 1, 5000))
    assert np.max(np.abs(ward_residual(ch, k, p))) <= 1e-13


def test_ward_identity_double_precision_is_roundoff():
    rng = np.random.default_rng(3)
    k = (rng.uniform(-3, 3, 5000), rng.uniform(-3, 3, 5000))
    p = (rng.uniform(-1, 1, 5000), rng.uniform(-1, 1, 5000))
    r = np.abs(ward_residual(unit, k, p, extended=False))
    gk, gkp = unit(*k), unit(k[0] + p[0], k[1] + p[1])
    scale = np.abs(gk * gkp) + np.abs(gk - gkp) / np.hypot(p[0], p[1])
    assert np.all(r <= 1e-14 * np.maximum(scale, 1.0))


# -- quadrature ------------------------------------------------------------------------------
def test_singular_quadrature_on_known_integral():
    # int_{|u|<1} (1 - |u|^2) / |u| du = 2 pi (1 - 1/3)
    f = lambda a, b: np.where(np.hypot(a, b) < 1, (1 - a * a - b * b) / np.hypot(a, b), 0.0)
    res = integrate_singular(f, np.zeros((1, 2)), 1.0, 1.0, 1e-9)
    assert abs(res.value - 4 * np.pi / 3) < 1e-8


# -- bubble ----------------------------------------------------------------------------------
def test_bubble_frozen_values():
    assert bubble_closed(1.0, (0.0, 1.0)) == pytest.approx(1 / (4 * np.pi), abs=1e-16)
    assert bubble_closed(1.0, (1.0, 0.0)) == pytest.approx(-1 / (4 * np.pi), abs=1e-16)
    assert bubble_closed(-2.0, (0.3, 0.5)) == pytest.approx(
        (-0.3j - 1.0) / (0.3j - 1.0) / (8 * np.pi), abs=1e-16)


def test_bubble_direction_dependence_at_zero():
    with pytest.raises(UndefinedLimit):
        bubble_closed(1.0, (0.0, 0.0))


@pytest.mark.parametrize("q", [(0.0, 1.0), (1.0, 1.0), (0.3, -0.7)])
def test_bubble_numeric_approaches_closed_form(q):
    th = 1e-3
    r = loop_Bn(unit, LoopSpec(((th * q[0], th * q[1]),)))
    assert abs(r.value - bubble_closed(1.0, q)) < 1e-6


def test_bubble_convergence_is_quadratic_in_theta():
    errs = [abs(loop_Bn(unit, LoopSpec(((0.0, th),))).value - bubble_closed(1.0, (0, 1)))
            for th in (1e-2, 1e-3)]
    # frozen: 2.19e-6 at 1e-2 and 2.2e-8 at 1e-3
    assert errs[0] == pytest.approx(2.19e-6, rel=0.02)
    assert errs[1] < errs[0] / 50


def test_finite_sums_approach_continuum():
    ch = ChiralPropagator(v=1.0, k_F=0.7, delta=0.5)
    beta, L = 200.0, 2001
    p = (2 * np.pi / beta * 3, 2 * np.pi / L * 4)
    fin = loop_Bn(ch, LoopSpec((p,), mode="finite", beta=beta, L=L)).value
    cont = loop_Bn(ch, LoopSpec((p,))).value
    assert abs(fin - cont) < 1e-3 * abs(cont)


def test_finite_mode_needs_grid():
    with pytest.raises(PreconditionError):
        LoopSpec(((0.1, 0.1),), mode="finite")


# -- symmetries ------------------------------------------------------------------------------
def test_cyclicity():
    ch = ChiralPropagator(v=1.3, delta=0.8)
    s = LoopSpec(((0.02, 0.03), (-0.01, 0.05)))
    a = loop_Bn(ch, s).value
    b = loop_Bn(ch, s.with_momenta(s.full[1:])).value
    assert abs(a - b) < 1e-9


def test_rescaling_with_power_of_theta():
    th = 0.01
    ch, ch_big = ChiralPropagator(v=1.3, delta=0.8), ChiralPropagator(v=1.3, delta=80.0)
    q = [(0.3, 0.4), (0.1, -0.5)]
    a = loop_Bn(ch, LoopSpec(tuple((th * x, th * y) for x, y in q))).value
    b = loop_Bn(ch_big, LoopSpec(tuple(q))).value
    # B^(delta)(theta q) = theta^(1-n) B^(delta/theta)(q) with n = 2
    assert abs(a - b / th) < 1e-6 * abs(a)


# -- cancellation ----------------------------------------------------------------------------
@pytest.mark.parametrize("mom", [((0.01, 0.01),), ((0.3, -0.2),)])
def test_cancellation_n1(mom):
    r = cancellation_check(unit, LoopSpec(mom))
    assert r.passed
    assert r.difference < 1e-9


def test_cancellation_n2_suppresses_permutation_sum():
    th = 2e-3
    r = cancellation_check(unit, LoopSpec(((0.3 * th, 0.5 * th), (-0.2 * th, 0.4 * th))))
    assert r.passed
    assert r.max_term > 10  # individual loops grow like 1/theta
    assert r.suppression > 1e6


def test_cancellation_limits():
    with pytest.raises(PreconditionError):
        cancellation_check(unit, LoopSpec(((0.1, 0.1),) * 4))


# -- singular sums ---------------------------------------------------------------------------
def test_vertex_weights():
    assert vertex_weight(ChiralPropagator(v=-2.0), 0) == 1.0
    assert vertex_weight(ChiralPropagator(v=-2.0), 1) == -2.0
    with pytest.raises(PreconditionError):
        vertex_weight(unit, 2)


def test_singular_sum_laplacian_current_vanishes_at_static_momentum():
    m = builtin_model("laplacian_chain", {"L": 101, "mu": -2.0})
    fd = find_fermi_points(m)
    chs = chirals_from_fermi(fd, 0.5)
    val = singular_Sn(chs, 1, LoopSpec(((0.0, 1e-3),)))
    # v B(0, q) = 1/(4 pi) sign(v) is odd in the velocity, so the two points cancel
    assert abs(val) < 1e-7
    dens = singular_Sn(chs, 0, LoopSpec(((0.0, 1e-3),)))
    assert dens.real == pytest.approx(2 / (4 * np.pi * 2.0), rel=1e-4)


def test_singular_sum_cutoff_regime():
    with pytest.raises(OutsideCutoffRegime):
        singular_Sn([unit], 0, LoopSpec(((0.0, 0.5),), theta=0.01))


# -- divided differences ---------------------------------------------------------------------
def _dd_direct(z, beta):
    f = lambda x: 1 / (1 + np.exp(beta * x))
    return sum(f(zi.real) / np.prod([zi - zj for zj in z if zj is not zi]) for zi in z)


@given(st.lists(st.floats(-2, 2), min_size=1, max_size=4, unique=True),
       st.floats(0.5, 5))
def test_divided_difference_distinct_nodes(xs, beta):
    if len(xs) > 1 and np.min(np.diff(sorted(xs))) < 1e-2:
        return
    z = np.array(xs, complex)
    assert abs(fermi_divided_difference(z, beta) - _dd_direct(list(z), beta)) < 1e-8


@pytest.mark.parametrize("m", [2, 3, 4])
def test_divided_difference_confluent_limit(m):
    beta, x = 2.0, 0.37
    exact = fermi_divided_difference(np.full(m, x, complex), beta)
    eps = 1e-3
    near = fermi_divided_difference(x + eps * np.arange(m) - eps * (m - 1) / 2 + 0j, beta)
    assert abs(exact - near) < 1e-4 * max(1, abs(exact))


def test_divided_difference_uses_bosonic_periodicity():
    beta = 2.0
    shift = 2j * np.pi / beta
    z = np.array([0.3, 0.3 + shift])
    # f is periodic under bosonic shifts, so the first difference is (f - f)/shift = 0
    assert abs(fermi_divided_difference(z, beta)) < 1e-14


# -- Wick cumulants --------------------------------------------------------------------------
@pytest.fixture(scope="module")
def small_ring():
    m = builtin_model("laplacian_chain", {"L": 7, "mu": -0.7})
    return m, EquilibriumParams(2.0, -0.7), snap_eta(2.0, 0.5)


@pytest.mark.parametrize("nu", [0, 1])
def test_residue_and_matsubara_routes_agree(small_ring, nu):
    m, par, eta = small_ring
    mom = [(eta, 2 * np.pi / 7)]
    a = cumulant_wick(m, par, nu, mom)
    b = cumulant_wick(m, par, nu, mom, route="matsubara")
    assert abs(a - b) < 1e-9


@given(st.permutations([1, 2, 3]))
def test_cumulant_is_symmetric_in_density_momenta(perm):
    m = builtin_model("ssh_chain", {"L": 5, "mu": 0.4})
    par = EquilibriumParams(2.0, 0.4)
    eta = snap_eta(2.0, 0.5)
    base = [(eta, 2 * np.pi * j / 5) for j in (1, 2, 3)]
    a = cumulant_wick(m, par, 1, base)
    b = cumulant_wick(m, par, 1, [base[i - 1] for i in perm])
    assert abs(a - b) < 1e-12 * max(1, abs(a))


def test_cumulant_argument_checks(small_ring):
    m, par, eta = small_ring
    with pytest.raises(PreconditionError):
        cumulant_wick(m, par, 1, [])
    with pytest.raises(PreconditionError):
        cumulant_wick(m, EquilibriumParams(np.inf, -0.7), 1, [(eta, 0.1)])


@pytest.mark.parametrize("nu", [0, 1])
def test_wick_split_reassembles(nu):
    m = builtin_model("laplacian_chain", {"L": 33, "mu": -2.0})
    sp = split_propagator(m, find_fermi_points(m))
    par = EquilibriumParams(20.0, -2.0)
    mom = (snap_eta(20.0, 0.3), 2 * np.pi / 33)
    d = wick_split(m, par, nu, mom, sp)
    total = cumulant_wick(m, par, nu, [mom])
    assert abs(d["singular"] + d["remainder"] - d["total"]) < 1e-12
    assert abs(d["total"] - total) <= 1e-9
