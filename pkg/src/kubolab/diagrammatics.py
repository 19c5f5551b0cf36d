"""Euclidean perturbation theory around the Fermi points.

Two families of objects live here:

* chiral loops ``B_{n+1}`` built from the scalar propagators
  ``g_w(k) = chi(||k - k_F||_w / delta) / D_w(k)`` together with the anomaly
  ``F`` that spoils the naive Ward identity, and
* the exact lattice Wick expansion of density/current cumulants from the full
  matrix-valued propagator ``(i k0 + H(k) - mu)^{-1}``.

Continuum loop integrals are done in the coordinates ``u = (q0, v q)`` in which
``D = i u0 + u1`` and the anisotropic norm becomes Euclidean.  Each integrable
``1/|u - c|`` singularity is isolated by a partition of unity with inverse-power
weights and integrated in polar coordinates centred on it, which removes the
singularity exactly.  Resolution is doubled until two successive estimates
agree to the requested tolerance.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .dynamics import current_vertex
from .equilibrium import EquilibriumParams, fermi_factor, torus_signed
from .errors import (OutsideCutoffRegime, PreconditionError, QuadratureFailure,
                     UndefinedLimit, WrongDimension)
from .perturb import smooth_cutoff

TWO_PI = 2 * np.pi


# -- chiral propagators ---------------------------------------------------------------
@dataclass(frozen=True)
class ChiralPropagator:
    """Scalar propagator of one chiral branch.

    Momenta are absolute, ``k = (k0, k1)``; the relative spatial momentum
    ``k1 - k_F`` is reduced to ``[-pi, pi)``.
    """

    v: float
    k_F: float = 0.0
    delta: float = 1.0
    omega: int = 0

    def __post_init__(self):
        if self.v == 0 or not np.isfinite(self.v):
            raise PreconditionError("chiral velocity must be finite and nonzero")
        if not self.delta > 0:
            raise PreconditionError("delta must be positive")

    @classmethod
    def from_fermi(cls, fermi, omega: int, delta: float) -> "ChiralPropagator":
        p = fermi.points[omega]
        return cls(v=float(p.v), k_F=float(p.k_F), delta=float(delta), omega=omega)

    def relative(self, k0, k):
        return np.asarray(k0, float), torus_signed(np.asarray(k, float) - self.k_F)

    def norm(self, k0, k):
        q0, q = self.relative(k0, k)
        return np.hypot(q0, self.v * q)

    def D(self, k0, k):
        q0, q = self.relative(k0, k)
        return 1j * q0 + self.v * q

    def cutoff(self, k0, k):
        return smooth_cutoff(self.norm(k0, k) / self.delta)

    def __call__(self, k0, k):
        c = self.cutoff(k0, k)
        d = self.D(k0, k)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(c != 0, c / np.where(d == 0, 1.0, d), 0.0)
        out = np.where((d == 0) & (c != 0), np.inf, out)
        return out

    # u-coordinates: u = (q0, v q), relative to the Fermi point
    def g_u(self, u0, u1):
        r = np.hypot(u0, u1)
        c = smooth_cutoff(r / self.delta)
        d = 1j * u0 + u1
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(c != 0, c / d, 0.0)

    def to_u(self, p) -> np.ndarray:
        """Map a relative momentum ``(p0, p1)`` to u-coordinates."""
        p0, p1 = p
        return np.array([float(p0), self.v * float(p1)])


def chirals_from_fermi(fermi, delta: float) -> list:
    return [ChiralPropagator.from_fermi(fermi, w, delta) for w in range(len(fermi.points))]


# -- loop specification ---------------------------------------------------------------
@dataclass(frozen=True)
class LoopSpec:
    """External momenta and quadrature controls of an ``(n+1)``-point loop.

    ``momenta`` holds ``p_1 .. p_n`` as ``(p0, p)`` pairs; the closing momentum
    ``p_{n+1} = -(p_1 + ... + p_n)`` is implied.  ``mode`` selects continuum
    integrals or finite ``(beta, L)`` sums.
    """

    momenta: tuple
    mode: str = "continuum"
    tol: float = 1e-7
    beta: Optional[float] = None
    L: Optional[int] = None
    base_order: int = 8
    base_angles: int = 32
    max_level: int = 5
    theta: Optional[float] = None
    alpha: float = 0.5

    def __post_init__(self):
        moms = tuple((float(a), float(b)) for a, b in self.momenta)
        object.__setattr__(self, "momenta", moms)
        if len(moms) < 1:
            raise PreconditionError("a loop needs n >= 1 external momenta")
        if self.mode not in ("continuum", "finite"):
            raise PreconditionError(f"unknown loop mode {self.mode!r}")
        if self.mode == "finite" and (self.beta is None or self.L is None):
            raise PreconditionError("finite mode needs beta and L")

    @property
    def n(self) -> int:
        return len(self.momenta)

    @property
    def closing(self) -> tuple:
        return (-sum(p[0] for p in self.momenta), -sum(p[1] for p in self.momenta))

    @property
    def full(self) -> tuple:
        return self.momenta + (self.closing,)

    def with_momenta(self, momenta) -> "LoopSpec":
        return LoopSpec(tuple(momenta), self.mode, self.tol, self.beta, self.L, self.base_order,
                        self.base_angles, self.max_level, self.theta, self.alpha)


@dataclass
class QuadResult:
    value: complex
    error: float
    level: int = 0
    nodes: int = 0

    def __complex__(self):
        return complex(self.value)


# -- polar partition-of-unity quadrature -------------------------------------------------
def _gauss_panels(breaks: np.ndarray, order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    a, b = breaks[:-1, None], breaks[1:, None]
    nodes = 0.5 * (b - a) * x[None, :] + 0.5 * (a + b)
    weights = 0.5 * (b - a) * w[None, :]
    return nodes.ravel(), weights.ravel()


def _unique_centres(centres: np.ndarray, scale: float) -> np.ndarray:
    out = []
    for c in centres:
        if not any(np.hypot(*(c - o)) <= 1e-13 * scale for o in out):
            out.append(c)
    return np.array(out)


def _radial_breaks(i: int, centres: np.ndarray, radius: float, delta: float) -> np.ndarray:
    c = centres[i]
    dists = np.array([np.hypot(*(c - o)) for j, o in enumerate(centres) if j != i])
    dmin = min(dists.min(), delta) if dists.size else delta
    r0 = dmin / 8.0
    geo = r0 * 2.0 ** np.arange(0, 64)
    geo = geo[geo < radius]
    extra = [delta, 2 * delta, *dists.tolist()]
    br = np.concatenate([[0.0], geo, [e for e in extra if 0 < e < radius], [radius]])
    br = np.unique(br)
    # drop slivers that would only waste nodes
    keep = np.concatenate([[True], np.diff(br) > 1e-12 * radius])
    return br[keep]


def _polar_pass(f: Callable, centres: np.ndarray, breaks: list, order: int, n_phi: int,
                power: int) -> complex:
    total = 0.0 + 0.0j
    phi = (np.arange(n_phi) + 0.5) * (TWO_PI / n_phi)
    cphi, sphi = np.cos(phi), np.sin(phi)
    for i, c in enumerate(centres):
        r, wr = _gauss_panels(breaks[i], order)
        u0 = c[0] + r[:, None] * sphi[None, :]
        u1 = c[1] + r[:, None] * cphi[None, :]
        vals = f(u0, u1)
        if len(centres) > 1:
            di = np.hypot(u0 - c[0], u1 - c[1])
            s = np.zeros_like(di)
            with np.errstate(divide="ignore", invalid="ignore"):
                for o in centres:
                    s += (di / np.hypot(u0 - o[0], u1 - o[1])) ** power
                w = np.where(np.isfinite(s), 1.0 / s, 0.0)
            vals = w * vals
        vals = np.where(np.isfinite(vals), vals, 0.0)
        total += np.sum(wr[:, None] * r[:, None] * vals) * (TWO_PI / n_phi)
    return total


def integrate_singular(f: Callable, centres, radius: float, delta: float, tol: float = 1e-7,
                       base_order: int = 8, base_angles: int = 32, max_level: int = 5,
                       power: int = 6) -> QuadResult:
    """Integrate ``f(u0, u1)`` over the plane.

    ``f`` may have ``1/|u - c|`` singularities at the points ``centres`` and must
    vanish further than ``radius`` from every centre.  Returns the value with
    the difference between the last two refinement levels as error estimate;
    raises :class:`QuadratureFailure` when the tolerance is not met.
    """
    centres = np.atleast_2d(np.asarray(centres, float))
    centres = _unique_centres(centres, max(radius, 1.0))
    breaks = [_radial_breaks(i, centres, radius, delta) for i in range(len(centres))]
    prev = None
    err = np.inf
    for level in range(max_level + 1):
        order = base_order * 2 ** level
        n_phi = base_angles * 2 ** level
        val = _polar_pass(f, centres, breaks, order, n_phi, power)
        if prev is not None:
            err = abs(val - prev)
            if err < tol:
                nodes = sum(len(b) - 1 for b in breaks) * order * n_phi
                return QuadResult(val, float(err), level, nodes)
        prev = val
    raise QuadratureFailure(f"loop quadrature reached error {err:.3e} > tolerance {tol:.1e}")


# -- loops --------------------------------------------------------------------------------
def _shifts(moms: Sequence) -> np.ndarray:
    """Cumulative momenta ``C_i = p_1 + ... + p_{i-1}`` for ``i = 1..len+1``."""
    c = np.zeros((len(moms) + 1, 2))
    for i, p in enumerate(moms):
        c[i + 1] = c[i] + np.asarray(p, float)
    return c


def _loop_continuum(chiral: ChiralPropagator, spec: LoopSpec) -> QuadResult:
    n = spec.n
    C = np.array([chiral.to_u(c) for c in _shifts(spec.momenta)[: n + 1]])

    def integrand(u0, u1):
        out = np.ones(np.broadcast(u0, u1).shape, complex)
        for c in C:
            out = out * chiral.g_u(u0 + c[0], u1 + c[1])
        return out

    d = chiral.delta
    # every factor vanishes beyond 2 delta from its own centre
    res = integrate_singular(integrand, -C, 2 * d, d, spec.tol * abs(chiral.v) * TWO_PI ** 2,
                             spec.base_order, spec.base_angles, spec.max_level)
    scale = -1.0 / (abs(chiral.v) * TWO_PI ** 2)
    return QuadResult(scale * res.value, res.error / (abs(chiral.v) * TWO_PI ** 2), res.level, res.nodes)


def _check_grid(spec: LoopSpec):
    beta, L = spec.beta, spec.L
    for p0, p in spec.momenta:
        m0 = p0 * beta / TWO_PI
        m = p * L / TWO_PI
        if abs(m0 - round(m0)) > 1e-9 or abs(m - round(m)) > 1e-9:
            raise PreconditionError("finite-mode momenta must lie on the bosonic x B_L grid")


def _loop_finite(chiral: ChiralPropagator, spec: LoopSpec) -> QuadResult:
    _check_grid(spec)
    beta, L = spec.beta, int(spec.L)
    C = _shifts(spec.momenta)[: spec.n + 1]
    reach = 2 * chiral.delta + np.max(np.abs(C[:, 0]))
    m_max = int(np.ceil(reach * beta / TWO_PI)) + 1
    k0 = TWO_PI / beta * (np.arange(-m_max - 1, m_max + 1) + 0.5)
    k = TWO_PI / L * np.arange(L)
    K0, K = np.meshgrid(k0, k, indexing="ij")
    prod = np.ones_like(K0, dtype=complex)
    for c in C:
        prod = prod * chiral(K0 + c[0], K + c[1])
    return QuadResult(-np.sum(prod) / (beta * L), 0.0, 0, prod.size)


def loop_Bn(chiral: ChiralPropagator, spec: LoopSpec) -> QuadResult:
    """The ``(n+1)``-propagator chiral loop ``B_{n+1}(p_1, ..., p_n)``.

    ``B = -int prod_{i=1}^{n+1} g(k + p_1 + ... + p_{i-1}) dk / (2 pi)^2`` in
    continuum mode, or ``-(1/(beta L)) sum_k`` in finite mode.
    """
    if spec.mode == "finite":
        return _loop_finite(chiral, spec)
    return _loop_continuum(chiral, spec)


def bubble_closed(v: float, q) -> complex:
    """Infinite-cutoff bubble ``(1/(4 pi |v|)) (-i q0 + v q) / (i q0 + v q)``."""
    q0, q1 = float(q[0]), float(q[1])
    if q0 == 0 and q1 == 0:
        raise UndefinedLimit("the bubble limit depends on the direction of approach to q = 0")
    return complex((-1j * q0 + v * q1) / (1j * q0 + v * q1) / (4 * np.pi * abs(v)))


# -- anomaly and Ward identity --------------------------------------------------------------
def anomaly_F(chiral: ChiralPropagator, k, p) -> np.ndarray:
    """Anomaly of the tree-level Ward identity.

    ``F(k; p) = chi(k)(chi(k+p) - 1)/(D(k) D(k+p)) + (chi(k+p) - chi(k))/(D(p) D(k+p))``

    where ``chi`` and ``D`` are those of ``chiral`` and ``D(p) = i p0 + v p``.
    Vanishing numerators take precedence over vanishing denominators.
    """
    k0, k1 = np.asarray(k[0], float), np.asarray(k[1], float)
    p0, p1 = np.asarray(p[0], float), np.asarray(p[1], float)
    ck = chiral.cutoff(k0, k1)
    ckp = chiral.cutoff(k0 + p0, k1 + p1)
    Dk = chiral.D(k0, k1)
    Dkp = chiral.D(k0 + p0, k1 + p1)
    Dp = 1j * p0 + chiral.v * torus_signed(p1)
    return _anomaly(ck, ckp, Dk, Dkp, Dp)


def _anomaly(ck, ckp, Dk, Dkp, Dp):
    n1 = ck * (ckp - 1.0)
    n2 = ckp - ck
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = np.where(n1 != 0, n1 / (Dk * Dkp), 0.0)
        t2 = np.where(n2 != 0, n2 / (Dp * Dkp), 0.0)
    return t1 + t2


def ward_residual(chiral: ChiralPropagator, k, p, extended: bool = True) -> np.ndarray:
    """``g(k) g(k+p) - (g(k) - g(k+p)) / D(p) - F(k; p)`` elementwise.

    The identity is algebra for a denominator linear in the momentum, so it is
    evaluated in the continuum relative variables ``(k0, k1 - k_F)`` used by the
    loop integrals; reducing ``k1`` onto the torus would break ``D(k+p) = D(k) + D(p)``
    whenever the cutoff support is wider than half the zone.  The cutoff values are
    shared by all three terms.  With ``extended`` the denominators and products are
    formed in ``longdouble``; in plain double precision the residual is roundoff of
    relative size ~1e-16 of the largest term, which near the poles can exceed 1e-13.
    """
    ld = np.longdouble if extended else float
    cd = np.clongdouble if extended else complex
    v = ld(chiral.v)
    K0, K1, P0, P1 = (np.asarray(x, float) for x in (k[0], k[1], p[0], p[1]))
    q, qp = K1 - chiral.k_F, K1 + P1 - chiral.k_F
    ck = smooth_cutoff(np.hypot(K0, chiral.v * q) / chiral.delta)
    ckp = smooth_cutoff(np.hypot(K0 + P0, chiral.v * qp) / chiral.delta)
    K0, q, P0, P1 = (np.asarray(x, ld) for x in (K0, q, P0, P1))
    Dk = cd(1j) * K0 + v * q
    Dkp = cd(1j) * (K0 + P0) + v * (q + P1)
    Dp = cd(1j) * P0 + v * P1
    ck, ckp = np.asarray(ck, ld), np.asarray(ckp, ld)
    with np.errstate(divide="ignore", invalid="ignore"):
        gk = np.where(ck != 0, ck / Dk, 0)
        gkp = np.where(ckp != 0, ckp / Dkp, 0)
        res = gk * gkp - (gk - gkp) / Dp - _anomaly(ck, ckp, Dk, Dkp, Dp)
    return res.astype(complex)


# -- permutation sums -----------------------------------------------------------------------
def _anomaly_integral(chiral: ChiralPropagator, full: Sequence, order: Sequence[int],
                      spec: LoopSpec) -> QuadResult:
    """``int F(k; p_{o1}) prod_{i>=3} g(k + p_{o1} + ... + p_{o(i-1)}) dk / (2 pi)^2``."""
    moms = [full[j] for j in order]
    C = np.array([chiral.to_u(c) for c in _shifts(moms)[: len(moms)]])
    P = chiral.to_u(moms[0])
    DP = 1j * P[0] + P[1]
    d = chiral.delta

    def integrand(u0, u1):
        r0 = np.hypot(u0, u1)
        r1 = np.hypot(u0 + P[0], u1 + P[1])
        out = _anomaly(smooth_cutoff(r0 / d), smooth_cutoff(r1 / d), 1j * u0 + u1,
                       1j * (u0 + P[0]) + (u1 + P[1]), DP)
        for c in C[2:]:
            out = out * chiral.g_u(u0 + c[0], u1 + c[1])
        return out

    diam = max(np.hypot(*(a - b)) for a in C for b in C)
    res = integrate_singular(integrand, -C, 2 * d + diam, d, spec.tol * abs(chiral.v) * TWO_PI ** 2,
                             spec.base_order, spec.base_angles, spec.max_level)
    s = 1.0 / (abs(chiral.v) * TWO_PI ** 2)
    return QuadResult(s * res.value, s * res.error, res.level, res.nodes)


@dataclass
class CancellationReport:
    n: int
    lhs: complex
    rhs: complex
    difference: float
    lhs_error: float
    rhs_error: float
    combined_tolerance: float
    max_term: float
    terms: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.difference <= 5 * self.combined_tolerance

    @property
    def suppression(self) -> float:
        """``max |B| / |sum of B|``; large when the permutation sum cancels."""
        return self.max_term / max(abs(self.lhs), 1e-300)

    def to_dict(self) -> dict:
        c = lambda z: [float(np.real(z)), float(np.imag(z))]
        return {"n": self.n, "lhs": c(self.lhs), "rhs": c(self.rhs),
                "difference": self.difference, "lhs_error": self.lhs_error,
                "rhs_error": self.rhs_error, "combined_tolerance": self.combined_tolerance,
                "max_term": self.max_term, "suppression": self.suppression,
                "terms": [c(t) for t in self.terms], "passed": self.passed}


def cancellation_check(chiral: ChiralPropagator, spec: LoopSpec) -> CancellationReport:
    """Evaluate both sides of the loop cancellation identity.

    ``sum_{pi in S_n} B_{n+1}(p_pi) = -(1/(n+1)) sum_{pi in S_{n+1}} int F(k; p_pi(1)) prod g``
    """
    n = spec.n
    if n > 3:
        raise PreconditionError("permutation sums are limited to n <= 3")
    if spec.mode != "continuum":
        raise PreconditionError("cancellation_check works with continuum loops")
    full = spec.full
    lhs, lerr, terms = 0j, 0.0, []
    for perm in itertools.permutations(range(n)):
        r = loop_Bn(chiral, spec.with_momenta([spec.momenta[j] for j in perm]))
        terms.append(r.value)
        lhs += r.value
        lerr += r.error
    rhs, rerr = 0j, 0.0
    for perm in itertools.permutations(range(n + 1)):
        r = _anomaly_integral(chiral, full, perm, spec)
        rhs += r.value
        rerr += r.error
    rhs = -rhs / (n + 1)
    rerr = rerr / (n + 1)
    nf = math.factorial(n)
    combined = nf * spec.tol + math.factorial(n + 1) * spec.tol / (n + 1)
    return CancellationReport(n, lhs, rhs, float(abs(lhs - rhs)), lerr, rerr, combined,
                              float(max(abs(t) for t in terms)), terms)


def vertex_weight(chiral: ChiralPropagator, nu: int) -> float:
    """``v^nu_w``: 1 for the density, the branch velocity for the current."""
    if nu == 0:
        return 1.0
    if nu == 1:
        return float(chiral.v)
    raise PreconditionError("nu must be 0 or 1")


def singular_Sn(chirals: Sequence[ChiralPropagator], nu: int, spec: LoopSpec) -> complex:
    """``sum_w v^nu_w sum_{pi in S_n} B^w_{n+1}(p_pi)``.

    When ``spec.theta`` is set, every spatial momentum must satisfy
    ``|p_i| <= theta^(1 - alpha)``.
    """
    if spec.n > 3:
        raise PreconditionError("permutation sums are limited to n <= 3")
    if spec.theta is not None:
        bound = spec.theta ** (1.0 - spec.alpha)
        for p0, p in spec.momenta:
            if abs(torus_signed(p)) > bound * (1 + 1e-12):
                raise OutsideCutoffRegime(f"|p| = {abs(p):.3g} exceeds theta^(1-alpha) = {bound:.3g}")
    total = 0j
    for ch in chirals:
        w = vertex_weight(ch, nu)
        for perm in itertools.permutations(range(spec.n)):
            total += w * loop_Bn(ch, spec.with_momenta([spec.momenta[j] for j in perm])).value
    return complex(total)


# -- exact lattice Wick cumulants ---------------------------------------------------------------
def _fermi_derivs(x, beta, order):
    f = fermi_factor(x, beta, 0.0)
    d = [f]
    if order >= 1:
        d.append(-beta * f * (1 - f))
    if order >= 2:
        d.append(-beta * d[1] * (1 - 2 * f))
    if order >= 3:
        d.append(-beta * (d[2] * (1 - 2 * f) - 2 * d[1] ** 2))
    return d


def fermi_divided_difference(z: np.ndarray, beta: float, tol: float = 1e-10) -> np.ndarray:
    """Divided difference of ``f(z) = 1/(1 + exp(beta z))`` over the last axis.

    ``z`` carries bosonic imaginary shifts, on which ``f`` is periodic, so ``f``
    is evaluated at the real parts.  Coinciding nodes (at most four) use the
    derivatives of ``f``.
    """
    z = np.asarray(z, complex)
    m = z.shape[-1]
    if m > 4:
        raise PreconditionError("divided differences are implemented for at most 4 nodes")
    key_im = np.round(z.imag / max(tol, 1e-300))
    order = np.lexsort((z.real, key_im), axis=-1)
    z = np.take_along_axis(z, order, axis=-1)
    derivs = _fermi_derivs(z.real, beta, m - 1)
    table = derivs[0].astype(complex)
    for r in range(1, m):
        num = table[..., 1:] - table[..., :-1]
        den = z[..., r:] - z[..., :-r]
        conf = np.abs(den) < tol
        with np.errstate(divide="ignore", invalid="ignore"):
            table = np.where(conf, derivs[r][..., :m - r] / math.factorial(r), num / den)
    return table[..., 0]


def _wick_terms(model, params: EquilibriumParams, nu: int, momenta):
    """Yield per-(permutation, k) eigen-data for the Wick trace."""
    L = model.L
    kgrid = model.momenta()
    n = len(momenta)
    closing = (-sum(p[0] for p in momenta), -sum(p[1] for p in momenta))
    for perm in itertools.permutations(range(n)):
        C = _shifts([momenta[j] for j in perm])
        for k in kgrid:
            yield perm, k, C, current_vertex(model, k, closing[1], nu)


def cumulant_wick(model, params: EquilibriumParams, nu: int, momenta, route: str = "residue",
                  n_freq: int = 4000) -> complex:
    """Lattice cumulant of ``n`` densities and one current from Wick's rule.

    ``-(1/(beta L)) sum_{pi in S_n} sum_k Tr[J_nu(k, p_{n+1}) prod_i g(k + sum_{j<i} p_pi(j))]``

    with ``g(k) = (i k0 + H(k) - mu)^{-1}``.  ``route="residue"`` does the
    frequency sum exactly through divided differences of the Fermi function;
    ``route="matsubara"`` truncates it at ``n_freq`` frequencies on each side and
    adds the analytic ``1/k0^2`` tail of the ``n = 1`` term.

    Parameters
    ----------
    model : LatticeModel1D
    params : EquilibriumParams
        Finite ``beta``.
    nu : int
        0 for the density vertex, 1 for the current.
    momenta : sequence of (p0, p)
        ``p0`` on the bosonic grid, ``p`` on the ``B_L`` grid.
    """
    if model.dimension != 1:
        raise WrongDimension("cumulant_wick handles 1d lattice models")
    if not np.isfinite(params.beta):
        raise PreconditionError("cumulant_wick needs finite beta")
    momenta = [(float(a), float(b)) for a, b in momenta]
    if not 1 <= len(momenta) <= 3:
        raise PreconditionError("cumulant_wick supports 1 <= n <= 3")
    if route == "matsubara":
        return _cumulant_matsubara(model, params, nu, momenta, n_freq)
    if route != "residue":
        raise PreconditionError(f"unknown route {route!r}")
    beta, mu, L = params.beta, params.mu, model.L
    n = len(momenta)
    total = 0j
    for perm, k, C, J in _wick_terms(model, params, nu, momenta):
        E, U = [], []
        for c in C:
            e, u = np.linalg.eigh(model.kernel.bloch(k + c[1]))
            E.append(e - mu + 1j * c[0])
            U.append(u)
        # W[a_1..a_{n+1}] = (U_{n+1}^+ J U_1)[a_{n+1}, a_1] prod (U_i^+ U_{i+1})[a_i, a_{i+1}]
        ops = [np.asarray(U[-1].conj().T @ J @ U[0])]
        ops += [U[i].conj().T @ U[i + 1] for i in range(n)]
        letters = "abcd"[: n + 1]
        sub = [letters[-1] + letters[0]] + [letters[i] + letters[i + 1] for i in range(n)]
        W = np.einsum(",".join(sub) + "->" + letters, *ops)
        grids = np.meshgrid(*E, indexing="ij")
        z = np.stack(grids, axis=-1)
        S = (-1) ** (n + 1) * fermi_divided_difference(z, beta)
        total += np.sum(W * S)
    return complex(-total / L)


def _cumulant_matsubara(model, params, nu, momenta, n_freq, propagator=None):
    beta, mu, L = params.beta, params.mu, model.L
    n = len(momenta)
    k0 = TWO_PI / beta * (np.arange(-n_freq, n_freq) + 0.5)
    M = model.M
    eye = np.eye(M)
    if propagator is None:
        def propagator(q0, q):
            h = model.kernel.bloch(np.full(q0.shape, q))
            return np.linalg.inv(h + (1j * q0 - mu)[:, None, None] * eye)
    total = 0j
    for perm, k, C, J in _wick_terms(model, params, nu, momenta):
        prod = np.broadcast_to(J, (k0.size, M, M)).copy()
        for c in C:
            prod = prod @ propagator(k0 + c[0], k + c[1])
        total += np.sum(np.trace(prod, axis1=1, axis2=2)) / beta
        if n == 1:
            # Tr[J g g] ~ -Tr J / k0^2; the full sum of 1/k0^2 is beta^2/4
            tail = beta ** 2 / 4 - np.sum(1.0 / k0 ** 2)
            total += -np.trace(J) * tail / beta
    return complex(-total / L)


def wick_split(model, params: EquilibriumParams, nu: int, momentum, split, n_freq: int = 16000) -> dict:
    """``n = 1`` cumulant separated into the all-singular part and the rest.

    ``split`` is a :class:`~kubolab.equilibrium.PropagatorSplit`.  The singular
    part uses ``g_s`` on both lines; the remainder collects the three terms
    containing at least one ``g_r``, each summed explicitly.
    """
    beta, L = params.beta, model.L
    k0 = TWO_PI / beta * (np.arange(-n_freq, n_freq) + 0.5)
    p0, p = float(momentum[0]), float(momentum[1])
    parts = {"ss": 0j, "sr": 0j, "rs": 0j, "rr": 0j}
    for k in model.momenta():
        J = current_vertex(model, k, -p, nu)
        a = {"s": split.g_s(k0, k), "r": split.g_r(k0, k)}
        b = {"s": split.g_s(k0 + p0, k + p), "r": split.g_r(k0 + p0, k + p)}
        for key in parts:
            prod = J[None] @ a[key[0]] @ b[key[1]]
            parts[key] += np.sum(np.trace(prod, axis1=1, axis2=2)) / beta
        tail = beta ** 2 / 4 - np.sum(1.0 / k0 ** 2)
        parts["rr"] += -np.trace(J) * tail / beta
    parts = {k: complex(-v / L) for k, v in parts.items()}
    singular = parts["ss"]
    remainder = parts["sr"] + parts["rs"] + parts["rr"]
    return {"singular": singular, "remainder": remainder, "total": singular + remainder,
            "parts": parts}
