"""Slowly varying test potentials, their periodization and momentum cutoff.

The perturbation switched on during the evolution is ``theta * mu(theta x)``
where ``mu`` is the periodization over the ring of a smooth, compactly
supported profile ``mu_inf``.  Fourier coefficients on the ring follow the
discrete convention

    mu_hat(p) = sum_{x in Gamma_L} exp(-i p x) mu(theta x),   p in B_L,

whose inverse is ``mu(theta x) = (1/L) sum_p exp(i p x) mu_hat(p)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Optional

import numpy as np

from .errors import PreconditionError, SupportWrap

TWO_PI = 2 * np.pi


# -- cutoff -----------------------------------------------------------------
def _psi(s):
    s = np.asarray(s, float)
    out = np.zeros_like(s)
    pos = s > 0
    out[pos] = np.exp(-1.0 / s[pos])
    return out


def smooth_cutoff(t):
    """C-infinity cutoff: 1 on ``[0, 1]``, 0 on ``[2, inf)``, monotone between.

    Built from ``psi(s) = exp(-1/s)`` as ``psi(2-t) / (psi(2-t) + psi(t-1))``.
    Works elementwise on arrays.
    """
    t = np.asarray(t, float)
    if np.any(t < 0):
        raise PreconditionError("smooth_cutoff needs t >= 0")
    a = _psi(2.0 - t)
    b = _psi(t - 1.0)
    out = np.where(t <= 1.0, 1.0, np.where(t >= 2.0, 0.0, a / np.where(a + b > 0, a + b, 1.0)))
    return out if out.ndim else float(out)


def smooth_cutoff_derivative(t):
    """Derivative of :func:`smooth_cutoff` (used by quadrature diagnostics)."""
    t = np.asarray(t, float)
    inside = (t > 1.0) & (t < 2.0)
    out = np.zeros_like(t)
    if np.any(inside):
        s = t[inside]
        a, b = _psi(2.0 - s), _psi(s - 1.0)
        da = -a / (2.0 - s) ** 2
        db = b / (s - 1.0) ** 2
        out[inside] = (da * (a + b) - a * (da + db)) / (a + b) ** 2
    return out


# -- test functions -------------------------------------------------------------
def _bump_unit(y):
    """``exp(1 - 1/(1 - y^2))`` on ``|y| < 1``, zero elsewhere."""
    y = np.asarray(y, float)
    out = np.zeros_like(y)
    m = np.abs(y) < 1.0
    out[m] = np.exp(1.0 - 1.0 / (1.0 - y[m] ** 2))
    return out


def _gl_panels(n_panels: int = 96, order: int = 32):
    """Composite Gauss-Legendre nodes and weights on ``[0, 1]``."""
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(0.0, 1.0, n_panels + 1)
    a, b = edges[:-1, None], edges[1:, None]
    nodes = 0.5 * (b - a) * x[None, :] + 0.5 * (a + b)
    weights = 0.5 * (b - a) * w[None, :]
    return nodes.ravel(), weights.ravel()


_GL_NODES, _GL_WEIGHTS = _gl_panels()
_GL_BUMP = _bump_unit(_GL_NODES) * _GL_WEIGHTS


def _bump_unit_fourier(q):
    """``int exp(-i q y) b(y) dy`` for the unit bump (real, even in ``q``).

    Direct composite Gauss-Legendre quadrature; accurate to roughly 1e-15
    absolute for ``|q| <= 2000``.
    """
    q = np.asarray(q, float)
    flat = q.ravel()
    out = np.empty(flat.shape)
    for s in range(0, flat.size, 512):
        chunk = flat[s:s + 512]
        out[s:s + 512] = 2.0 * (np.cos(np.outer(chunk, _GL_NODES)) @ _GL_BUMP)
    return out.reshape(q.shape)


@dataclass(frozen=True)
class TestFunction:
    """Smooth compactly supported profile ``mu_inf``.

    In 1d it is ``amplitude * b((X - center) / half_width)``.  In 2d it is the
    product of that profile in ``X1`` with ``b(X2 / height)`` restricted to
    ``X2 >= 0``, so it is largest on the lower boundary row.
    """

    __test__ = False  # not a pytest class

    center: float = 0.0
    half_width: float = 1.0
    amplitude: float = 1.0
    dimension: int = 1
    height: float = 1.0

    def __post_init__(self):
        if self.half_width <= 0 or self.height <= 0:
            raise PreconditionError("half_width and height must be positive")
        if self.dimension not in (1, 2):
            raise PreconditionError("dimension must be 1 or 2")

    @property
    def support_radius(self) -> float:
        """Radius of the smallest centered interval containing the support (in X1)."""
        return float(abs(self.center) + self.half_width)

    @property
    def support(self) -> tuple:
        return (self.center - self.half_width, self.center + self.half_width)

    def profile(self, X):
        """The ``X1`` profile only."""
        return self.amplitude * _bump_unit((np.asarray(X, float) - self.center) / self.half_width)

    def transverse(self, X2):
        X2 = np.asarray(X2, float)
        return np.where(X2 >= 0, _bump_unit(X2 / self.height), 0.0)

    def __call__(self, X, X2=None):
        if self.dimension == 1:
            if X2 is not None:
                raise PreconditionError("1d test function takes one argument")
            return self.profile(X)
        if X2 is None:
            raise PreconditionError("2d test function takes two arguments")
        return self.profile(X) * self.transverse(X2)

    def fourier(self, q, X2=None):
        """Transform in the first argument: ``int exp(-i q X) mu_inf(X, X2) dX``."""
        q = np.asarray(q, float)
        val = (self.amplitude * self.half_width
               * _bump_unit_fourier(self.half_width * q) * np.exp(-1j * q * self.center))
        if self.dimension == 2:
            val = val * self.transverse(0.0 if X2 is None else X2)
        elif X2 is not None:
            raise PreconditionError("1d test function has no second argument")
        return val

    def integral(self) -> float:
        return float(np.real(self.fourier(0.0)))


def builtin_bump(center: float = 0.0, half_width: float = 1.0, amplitude: float = 1.0,
                 dimension: int = 1, height: float = 1.0) -> TestFunction:
    """Mollifier bump ``amplitude * exp(1 - 1/(1 - ((x-center)/half_width)^2))``."""
    return TestFunction(center, half_width, amplitude, dimension, height)


def zero_function(dimension: int = 1) -> TestFunction:
    return TestFunction(0.0, 1.0, 0.0, dimension)


# -- Euler scaling -------------------------------------------------------------------
@dataclass(frozen=True)
class EulerScaling:
    """Adiabatic rate ``eta``, ratio ``a`` and the spatial scale ``theta = a * eta``."""

    eta: float
    a: float
    alpha: float = 0.5

    def __post_init__(self):
        if not self.eta > 0:
            raise PreconditionError("eta must be positive")
        if not self.a > 0:
            raise PreconditionError("a must be positive")
        if not 0 < self.alpha < 1:
            raise PreconditionError("alpha must lie in (0, 1)")

    @property
    def theta(self) -> float:
        return self.a * self.eta


# -- ring Fourier helpers ----------------------------------------------------------------
def site_dft(f: np.ndarray, axis: int = 0) -> np.ndarray:
    """``sum_x exp(-i p x) f(x)`` for ``x`` in ``[-L//2, L//2]`` stored from index 0."""
    f = np.asarray(f)
    L = f.shape[axis]
    p = TWO_PI * np.arange(L) / L
    phase = np.exp(1j * p * (L // 2))
    shape = [1] * f.ndim
    shape[axis] = L
    return np.fft.fft(f, axis=axis) * phase.reshape(shape)


def site_idft(c: np.ndarray, axis: int = 0) -> np.ndarray:
    """Inverse of :func:`site_dft`."""
    c = np.asarray(c)
    L = c.shape[axis]
    p = TWO_PI * np.arange(L) / L
    phase = np.exp(-1j * p * (L // 2))
    shape = [1] * c.ndim
    shape[axis] = L
    return np.fft.ifft(c * phase.reshape(shape), axis=axis)


def torus_abs(p):
    """``|p|_T``: distance of ``p`` to ``2 pi Z``."""
    p = np.mod(np.asarray(p, float), TWO_PI)
    return np.minimum(p, TWO_PI - p)


@dataclass(frozen=True)
class PeriodizedPotential:
    """Samples ``mu(theta x)`` on the lattice and their ring Fourier coefficients.

    ``samples`` has shape ``(L,)`` in 1d and ``(L, L)`` (``x1`` index, row
    ``x2``) in 2d.  ``coeffs`` is the transform along ``x1``.  ``alpha`` is
    set when the momentum cutoff has been applied.
    """

    samples: np.ndarray
    coeffs: np.ndarray
    L: int
    theta: float
    dimension: int = 1
    alpha: Optional[float] = None

    @property
    def sites(self) -> np.ndarray:
        return np.arange(-(self.L // 2), self.L // 2 + 1)

    @property
    def momenta(self) -> np.ndarray:
        return TWO_PI * np.arange(self.L) / self.L

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.samples)))

    def translated(self, s: int) -> "PeriodizedPotential":
        """Shift by ``s`` sites along ``x1`` (exact on the ring)."""
        samples = np.roll(self.samples, s, axis=0)
        return replace(self, samples=samples, coeffs=site_dft(samples, axis=0))


def periodize(f: TestFunction, scaling: EulerScaling, L: int) -> PeriodizedPotential:
    """Sample ``mu(theta x) = sum_n mu_inf(theta (x + n L))`` on the ring.

    The image sum is finite since ``mu_inf`` is compactly supported.  In 2d
    the rows ``x2 = 0..L-1`` are sampled at ``theta * x2``.
    """
    theta = scaling.theta
    if L % 2 == 0:
        raise PreconditionError("L must be odd")
    if theta * L <= 2 * f.support_radius:
        raise SupportWrap(f"theta*L={theta * L:.4g} does not exceed 2*support={2 * f.support_radius:.4g}")
    x = np.arange(-(L // 2), L // 2 + 1)
    lo, hi = f.support
    period = theta * L
    nmin = int(np.floor((lo - theta * x.max()) / period)) - 1
    nmax = int(np.ceil((hi - theta * x.min()) / period)) + 1
    prof = np.zeros(L)
    for n in range(nmin, nmax + 1):
        prof += f.profile(theta * (x + n * L))
    if f.dimension == 1:
        samples = prof
    else:
        rows = np.arange(L)
        samples = prof[:, None] * f.transverse(theta * rows)[None, :]
    return PeriodizedPotential(samples, site_dft(samples, axis=0), L, theta, f.dimension)


def poisson_coefficients(f: TestFunction, theta: float, p, with_inverse_theta: bool = True,
                         X2=None, tail: float = 1e-14):
    """Ring coefficients from the continuum transform by Poisson summation.

    ``sum_n mu_hat_inf((p + 2 pi n)/theta)``, multiplied by ``1/theta`` when
    ``with_inverse_theta`` (the normalization matching :func:`site_dft` of the
    samples).  Terms are added in pairs ``+-n`` until both fall below ``tail``
    relative to the running maximum.
    """
    p = np.asarray(p, float)
    kw = {} if f.dimension == 1 else {"X2": 0.0 if X2 is None else X2}
    total = f.fourier(p / theta, **kw).astype(complex)
    scale = max(np.max(np.abs(total)), 1e-300)
    n = 1
    while True:
        a = f.fourier((p + TWO_PI * n) / theta, **kw)
        b = f.fourier((p - TWO_PI * n) / theta, **kw)
        total = total + a + b
        if max(np.max(np.abs(a)), np.max(np.abs(b))) < tail * scale or n > 100000:
            break
        n += 1
    return total / theta if with_inverse_theta else total


def apply_momentum_cutoff(pot: PeriodizedPotential, scaling: EulerScaling) -> PeriodizedPotential:
    """Multiply coefficients by ``chi(theta^(alpha-1) |p|_T)`` and resample.

    Coefficients with ``|p|_T >= 2 theta^(1-alpha)`` are set to exactly zero.
    """
    alpha = scaling.alpha
    theta = pot.theta
    p = torus_abs(pot.momenta)
    factor = smooth_cutoff(theta ** (alpha - 1.0) * p)
    factor = np.where(p >= 2.0 * theta ** (1.0 - alpha), 0.0, factor)
    shape = (-1,) + (1,) * (pot.coeffs.ndim - 1)
    coeffs = pot.coeffs * factor.reshape(shape)
    samples = site_idft(coeffs, axis=0)
    imag = np.max(np.abs(samples.imag)) if samples.size else 0.0
    if imag > 1e-10 * max(1.0, pot.sup_norm()):
        raise PreconditionError("cutoff potential acquired an imaginary part")
    return PeriodizedPotential(samples.real.copy(), coeffs, pot.L, theta, pot.dimension, alpha)
