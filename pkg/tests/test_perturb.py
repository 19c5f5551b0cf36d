import numpy as np
import pytest
from hypothesis import given, strategies as st

from kubolab.errors import PreconditionError, SupportWrap
from kubolab.perturb import (EulerScaling, apply_momentum_cutoff, builtin_bump, periodize,
                             poisson_coefficients, smooth_cutoff, torus_abs, zero_function)


@given(st.floats(0, 10))
def test_cutoff_range_and_plateaus(t):
    c = smooth_cutoff(t)
    assert 0.0 <= c <= 1.0
    if t <= 1:
        assert c == 1.0
    if t >= 2:
        assert c == 0.0


@given(st.floats(0, 3), st.floats(0, 3))
def test_cutoff_monotone(a, b):
    lo, hi = sorted((a, b))
    assert smooth_cutoff(lo) >= smooth_cutoff(hi)


def test_cutoff_rejects_negative():
    with pytest.raises(PreconditionError):
        smooth_cutoff(-0.1)


def test_bump_fourier_against_direct_quadrature():
    f = builtin_bump(0.3, 0.7, 1.5)
    X = np.linspace(-0.4, 1.0, 40001)
    for q in (0.0, 1.3, 7.0):
        direct = np.trapezoid(f(X) * np.exp(-1j * q * X), X)
        assert abs(direct - f.fourier(q)) < 1e-9


@given(st.floats(-1, 1), st.floats(0.05, 0.5))
def test_periodized_samples_vanish_off_support(center, theta):
    f = builtin_bump(center, 1.0)
    L = 2 * int(np.ceil(4 / theta)) + 1
    pot = periodize(f, EulerScaling(theta, 1.0), L)
    X = theta * pot.sites
    off = (X < center - 1) | (X > center + 1)
    assert np.all(pot.samples[off] == 0.0)
    assert np.allclose(pot.samples[~off], f(X[~off]))


def test_support_wrap_detected():
    with pytest.raises(SupportWrap):
        periodize(builtin_bump(), EulerScaling(0.1, 1.0), 15)


def test_poisson_matches_site_transform():
    f = builtin_bump(0.2, 1.0)
    sc = EulerScaling(0.25, 1.0)
    pot = periodize(f, sc, 41)
    ref = poisson_coefficients(f, sc.theta, pot.momenta)
    assert np.max(np.abs(ref - pot.coeffs)) < 1e-10


@given(st.floats(0.02, 0.3), st.floats(0.2, 0.8))
def test_cutoff_potential_support_bound(theta, alpha):
    sc = EulerScaling(theta, 1.0, alpha)
    L = 2 * int(np.ceil(3 / theta)) + 1
    cut = apply_momentum_cutoff(periodize(builtin_bump(), sc, L), sc)
    p = torus_abs(cut.momenta)
    outside = p >= 2 * theta ** (1 - alpha)
    assert np.all(cut.coeffs[outside] == 0)
    assert np.max(np.abs(cut.samples.imag if np.iscomplexobj(cut.samples) else 0)) == 0


def test_zero_function_is_zero():
    pot = periodize(zero_function(), EulerScaling(0.1, 1.0), 41)
    assert pot.sup_norm() == 0.0


def test_2d_profile_lives_on_lower_rows():
    f = builtin_bump(0.0, 1.0, dimension=2, height=2.0)
    pot = periodize(f, EulerScaling(0.25, 1.0), 21)
    assert pot.samples.shape == (21, 21)
    assert np.all(pot.samples[:, 8:] == 0.0)
    assert pot.samples[10, 0] == pytest.approx(1.0)


def test_scaling_validation():
    for bad in ((0.0, 1.0), (0.1, -1.0)):
        with pytest.raises(PreconditionError):
            EulerScaling(*bad)
    with pytest.raises(PreconditionError):
        EulerScaling(0.1, 1.0, 1.0)
