"""Closed-form leading-order response from the Fermi-point data.

For each chiral branch with velocity ``v`` the linear response at site ``x`` is

    -(v^nu / (2 pi |v|)) int dq/(2 pi) mu_hat(q) exp(i q theta x) v q / (-i/a + v q)

summed over the branches (on a cylinder: over the modes bound to the lower
edge).  The same quantity in position space is the convolution of the
profile with ``delta(y) - (1/(a|v|)) exp(-y/(a v)) Theta(y/v)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy import integrate

from .errors import ImaginaryLeak, PreconditionError, WrongDimension
from .spectral import check_net_chirality

TWO_PI = 2 * np.pi


@dataclass(frozen=True)
class PredictionInput:
    """Everything the leading-order formulas need.

    ``edge`` selects the cylinder formula; then only Fermi points whose
    ``side`` equals ``side`` enter the sum.
    """

    fermi: object
    f: object
    scaling: object
    nu: int = 1
    edge: bool = False
    ell: Optional[int] = None
    side: str = "lower"

    def __post_init__(self):
        if self.nu not in (0, 1):
            raise PreconditionError("nu must be 0 (density) or 1 (current)")
        if self.fermi.dimension == 1:
            if self.edge:
                raise WrongDimension("edge predictions need cylinder Fermi data")
            if len(self.fermi) and check_net_chirality(self.fermi) != 0:
                raise PreconditionError("1d predictions need zero net chirality")

    @property
    def points(self):
        if self.fermi.dimension == 2:
            return tuple(p for p in self.fermi.points if p.side == self.side)
        return tuple(self.fermi.points)

    def weights(self):
        """``(v^nu_w / (2 pi |v_w|), v_w)`` per contributing branch."""
        out = []
        for p in self.points:
            vnu = 1.0 if self.nu == 0 else p.v
            out.append((vnu / (TWO_PI * abs(p.v)), p.v))
        return out

    def profile_hat(self, q):
        if self.fermi.dimension == 2:
            return self.f.fourier(q, 0.0)
        return self.f.fourier(q)

    def profile(self, X):
        if self.fermi.dimension == 2:
            return self.f(X, 0.0)
        return self.f(X)


@lru_cache(maxsize=32)
def _fourier_grid(f, boundary: bool, span: float, floor: float = 1e-13, order: int = 16):
    """Composite Gauss-Legendre nodes in ``q`` with the profile transform cached.

    The cutoff ``Q`` is the first power of two beyond which the transform stays
    below ``floor`` relative to its peak; panels carry at most ~4 radians of
    phase for positions within ``span`` of the profile centre.
    """
    hat = (lambda q: f.fourier(q, 0.0)) if boundary else f.fourier
    peak = abs(complex(hat(0.0))) or 1.0
    Q = 8.0 / f.half_width
    while Q < 2000.0 / f.half_width:
        probe = np.linspace(Q / 2, Q, 64)
        if np.max(np.abs(hat(probe))) < floor * peak:
            break
        Q *= 2
    width = min(1.0, 4.0 / span, Q / 8)
    n_panels = int(np.ceil(Q / width))
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(0.0, Q, n_panels + 1)
    a, b = edges[:-1, None], edges[1:, None]
    qp = (0.5 * (b - a) * x + 0.5 * (a + b)).ravel()
    wp = (0.5 * (b - a) * w).ravel()
    hp = hat(qp)
    # a real profile has hat(-q) = conj(hat(q))
    q = np.concatenate([-qp[::-1], qp])
    return q, np.concatenate([wp[::-1], wp]), np.concatenate([np.conj(hp[::-1]), hp])


def _fourier_sum(inp: PredictionInput, x) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, float))
    terms = inp.weights()
    if not terms:
        return np.zeros(x.shape, complex)
    a = inp.scaling.a
    theta = inp.scaling.theta
    X = theta * x
    span = np.max(np.abs(X - inp.f.center)) + inp.f.half_width + 1.0
    span = float(2.0 ** np.ceil(np.log2(span)))
    q, qw, mu_hat = _fourier_grid(inp.f, inp.fermi.dimension == 2, span)
    out = np.zeros(x.shape, complex)
    kern = np.zeros(q.shape, complex)
    for wgt, v in terms:
        kern += wgt * v * q / (-1j / a + v * q)
    base = qw * mu_hat * kern / TWO_PI
    for start in range(0, x.size, 64):
        sl = slice(start, start + 64)
        phase = np.exp(1j * np.outer(X[sl], q))
        out[sl] = -phase @ base
    return out


def chi_lin_fourier(inp: PredictionInput, x, imag_tol: float = 1e-6):
    """Leading linear response at site(s) ``x`` from the momentum-space formula.

    Raises :class:`ImaginaryLeak` if the imaginary part exceeds ``imag_tol``.
    """
    if inp.scaling.a <= 0:
        raise PreconditionError("a must be positive")
    vals = _fourier_sum(inp, x)
    leak = float(np.max(np.abs(vals.imag))) if vals.size else 0.0
    if leak > imag_tol:
        raise ImaginaryLeak(f"imaginary part {leak:.3e} of the prediction exceeds {imag_tol:.1e}")
    out = vals.real
    return float(out[0]) if np.ndim(x) == 0 else out


def chi_lin_real(inp: PredictionInput, x, decay_lengths: float = 40.0):
    """Same quantity by position-space convolution with the exponential kernel."""
    xs = np.atleast_1d(np.asarray(x, float))
    a, theta = inp.scaling.a, inp.scaling.theta
    lo, hi = inp.f.support
    out = np.zeros(xs.shape)
    for i, xi in enumerate(xs):
        X = theta * xi
        total = 0.0
        for wgt, v in inp.weights():
            ell = a * abs(v)
            # z runs over the side selected by sign(v), clipped to the support
            if v > 0:
                z0, z1 = max(0.0, X - hi), min(X - lo, decay_lengths * ell + (hi - lo))
            else:
                z0, z1 = max(X - hi, -decay_lengths * ell - (hi - lo)), min(0.0, X - lo)
            conv = 0.0
            if z1 > z0:
                g = lambda z: float(inp.profile(X - z)) * np.exp(-z / (a * v))
                conv, _ = integrate.quad(g, z0, z1, limit=400, epsabs=1e-13, epsrel=1e-11)
            total += wgt * (float(inp.profile(X)) - conv / ell)
        out[i] = -total
    return float(out[0]) if np.ndim(x) == 0 else out


def chi_edge(inp: PredictionInput, x1, imag_tol: float = 1e-6):
    """Edge response on a cylinder: boundary slice of the profile, lower-edge modes only."""
    if inp.fermi.dimension != 2:
        raise WrongDimension("chi_edge needs cylinder Fermi data")
    if inp.side != "lower":
        raise PreconditionError("the edge formula sums the modes of the lower edge")
    return chi_lin_fourier(inp, x1, imag_tol)


def edge_conductance(inp: PredictionInput) -> float:
    """Plateau value ``-mu_inf(0, 0) sum sign(v) / (2 pi)`` over the lower-edge modes."""
    if inp.fermi.dimension != 2:
        raise WrongDimension("the edge conductance is defined for cylinders")
    if inp.nu != 1:
        raise PreconditionError("the edge conductance refers to the current (nu = 1)")
    chir = sum(np.sign(p.v) for p in inp.points)
    return float(-inp.profile(0.0) * chir / TWO_PI)
