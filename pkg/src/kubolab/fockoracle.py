"""Dense many-body reference on at most eight fermionic modes.

Everything here is brute force on the ``2^m``-dimensional Fock space: it
exists to check the free-fermion machinery elsewhere in the package against
an implementation that never uses a one-particle reduction.

Modes are ordered site-major, internal-minor (the same flat orbital index the
lattice models use), and the Jordan-Wigner string runs over lower modes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.integrate import quad, solve_ivp

from .errors import PreconditionError, ToleranceFailure, UnsupportedParity

MAX_MODES = 8
BETA_GUARD = 50.0


def _set_partitions(items):
    items = list(items)
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in _set_partitions(rest):
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1:]
        yield [[first]] + part


class FockSpace:
    """Jordan-Wigner Fock space for a one-particle Hamiltonian ``h`` (``m x m``)."""

    def __init__(self, h: np.ndarray, car_tol: float = 1e-13):
        h = np.asarray(h, complex)
        m = h.shape[0]
        if m > MAX_MODES:
            raise PreconditionError(f"{m} modes exceed the dense limit of {MAX_MODES}")
        if np.linalg.norm(h - h.conj().T) > 1e-12 * max(1.0, np.linalg.norm(h)):
            raise PreconditionError("one-particle Hamiltonian is not Hermitian")
        self.m = m
        self.dim = 2 ** m
        self.h1 = h
        z = np.diag([1.0, -1.0])
        low = np.array([[0.0, 1.0], [0.0, 0.0]])  # |0><1| annihilates
        eye = np.eye(2)
        self.a = []
        for i in range(m):
            op = np.array([[1.0]])
            for j in range(m):
                op = np.kron(op, z if j < i else (low if j == i else eye))
            self.a.append(op.astype(complex))
        self.N = self.quadratic(np.eye(m))
        self.H = self.quadratic(h)
        self.parity = np.diag((-1.0) ** np.real(np.diag(self.N)))
        self.car_residual = self._car_residual()
        if self.car_residual > car_tol:
            raise ToleranceFailure(f"CAR residual {self.car_residual:.3g}")
        # joint eigenbasis of H and N: diagonalize H inside each particle sector
        nvals = np.rint(np.real(np.diag(self.N))).astype(int)
        E = np.zeros(self.dim)
        V = np.zeros((self.dim, self.dim), complex)
        for n in range(m + 1):
            idx = np.nonzero(nvals == n)[0]
            e, v = np.linalg.eigh(self.H[np.ix_(idx, idx)])
            E[idx] = e
            V[np.ix_(idx, idx)] = v
        self.energies = E
        self.numbers = nvals.astype(float)
        self.basis = V

    @classmethod
    def from_model(cls, model) -> "FockSpace":
        return cls(model.hamiltonian(sparse=False))

    def adag(self, i):
        return self.a[i].conj().T

    def quadratic(self, K) -> np.ndarray:
        """``sum_ij K_ij a*_i a_j``."""
        if hasattr(K, "toarray"):
            K = K.toarray()
        K = np.asarray(K)
        out = np.zeros((self.dim, self.dim), complex)
        for i in range(self.m):
            for j in range(self.m):
                if K[i, j] != 0:
                    out += K[i, j] * (self.adag(i) @ self.a[j])
        return out

    def _car_residual(self) -> float:
        worst = 0.0
        eye = np.eye(self.dim)
        for i in range(self.m):
            for j in range(self.m):
                ai, aj = self.a[i], self.a[j]
                r1 = ai @ aj.conj().T + aj.conj().T @ ai - (eye if i == j else 0.0)
                r2 = ai @ aj + aj @ ai
                worst = max(worst, np.abs(r1).max(), np.abs(r2).max())
        return float(worst)

    def is_even(self, O, tol: float = 1e-12) -> bool:
        return bool(np.abs(self.parity @ O @ self.parity - O).max() <= tol * max(1.0, np.abs(O).max()))


@dataclass
class FockGibbsState:
    """Gibbs state with the data needed for imaginary-time evolution."""

    space: FockSpace
    beta: float
    mu: float
    rho: np.ndarray
    weights: np.ndarray     # Gibbs weights in the joint eigenbasis
    kvals: np.ndarray       # eigenvalues of H - mu N

    def to_eigen(self, O):
        V = self.space.basis
        return V.conj().T @ O @ V

    def expect(self, O) -> complex:
        return complex(np.trace(self.rho @ O))

    def correlation(self) -> np.ndarray:
        """``Gamma_{x,y} = <a*_y a_x>``."""
        sp = self.space
        G = np.zeros((sp.m, sp.m), complex)
        for x in range(sp.m):
            for y in range(sp.m):
                G[x, y] = self.expect(sp.adag(y) @ sp.a[x])
        return G

    def gamma(self, O, t: float) -> np.ndarray:
        """``exp(t K) O exp(-t K)`` with ``K = H - mu N`` (position basis)."""
        V = self.space.basis
        Oe = self.to_eigen(O)
        ph = np.exp(t * (self.kvals[:, None] - self.kvals[None, :]))
        return V @ (Oe * ph) @ V.conj().T

    def tau(self, O, t: float) -> np.ndarray:
        """Real-time Heisenberg evolution ``exp(i t H) O exp(-i t H)``."""
        V = self.space.basis
        E = self.space.energies
        Oe = self.to_eigen(O)
        ph = np.exp(1j * t * (E[:, None] - E[None, :]))
        return V @ (Oe * ph) @ V.conj().T


def gibbs_state(space: FockSpace, beta: float, mu: float) -> FockGibbsState:
    """``exp(-beta (H - mu N)) / Z`` by eigendecomposition (``beta < 50``)."""
    if not 0 < beta < BETA_GUARD:
        raise PreconditionError(f"beta must lie in (0, {BETA_GUARD}) for the dense oracle")
    k = space.energies - mu * space.numbers
    w = np.exp(-beta * (k - k.min()))
    w /= w.sum()
    V = space.basis
    rho = (V * w[None, :]) @ V.conj().T
    return FockGibbsState(space, beta, mu, rho, w, k)


# -- time ordering ------------------------------------------------------------------
def _check_even(space, ops):
    for O in ops:
        if not space.is_even(O):
            raise UnsupportedParity("time ordering is implemented for even operators only")


def time_ordered_moment(state: FockGibbsState, ops: Sequence, times: Sequence[float]) -> complex:
    """``<T gamma_{t1}(O1) ... gamma_{tn}(On)>`` with later times to the left."""
    if not ops:
        return 1.0 + 0j
    order = sorted(range(len(ops)), key=lambda i: -times[i])  # stable for ties
    prod = np.eye(state.space.dim, dtype=complex)
    for i in order:
        prod = prod @ state.gamma(ops[i], times[i])
    return state.expect(prod)


def time_ordered_cumulant(state: FockGibbsState, ops: Sequence, times: Sequence[float]) -> complex:
    """Connected part ``<T O1; ...; On>`` by Moebius inversion over set partitions."""
    n = len(ops)
    if n > 4:
        raise PreconditionError("cumulants are implemented up to n = 4")
    for t in times:
        if not 0 <= t < state.beta:
            raise PreconditionError("imaginary times must lie in [0, beta)")
    _check_even(state.space, ops)
    cache = {}

    def moment(block):
        key = tuple(block)
        if key not in cache:
            cache[key] = time_ordered_moment(state, [ops[i] for i in block],
                                             [times[i] for i in block])
        return cache[key]

    total = 0j
    for part in _set_partitions(range(n)):
        k = len(part)
        term = (-1) ** (k - 1) * math.factorial(k - 1)
        for block in part:
            term *= moment(sorted(block))
        total += term
    return total


# -- KMS ---------------------------------------------------------------------------
def kms_check(state: FockGibbsState, A, B, t: float, s: float) -> dict:
    """Residuals of the KMS boundary condition for imaginary-time correlations.

    With ``g_t(O) = e^{tK} O e^{-tK}`` and ``rho ~ e^{-beta K}``, cyclicity of
    the trace gives ``<g_t(A) g_s(B)> = <g_s(B) g_{t-beta}(A)>``; this is the
    ``standard`` residual.  Two further orderings are reported for comparison
    only: ``shift_plus`` uses ``<g_s(B) g_{t+beta}(A)>`` and ``printed`` uses
    ``<g_{t+beta}(B) g_s(A)>``.  Neither holds for generic ``A, B``.
    """
    b = state.beta
    lhs = state.expect(state.gamma(A, t) @ state.gamma(B, s))
    std = state.expect(state.gamma(B, s) @ state.gamma(A, t - b))
    plus = state.expect(state.gamma(B, s) @ state.gamma(A, t + b))
    alt = state.expect(state.gamma(B, t + b) @ state.gamma(A, s))
    return {"standard": float(abs(lhs - std)), "shift_plus": float(abs(lhs - plus)),
            "printed": float(abs(lhs - alt)), "value": complex(lhs)}


# -- Duhamel versus Wick rotation ---------------------------------------------------
def _gl(n_panels, order, a, b):
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, n_panels + 1)
    xs = (0.5 * (edges[1:] - edges[:-1])[:, None] * (x[None, :] + 1) + edges[:-1, None]).ravel()
    ws = (0.5 * (edges[1:] - edges[:-1])[:, None] * w[None, :]).ravel()
    return xs, ws


def _duhamel_closed(state, P, O, eta, n):
    """Iterated-commutator time integrals evaluated in the energy eigenbasis."""
    Pe = state.to_eigen(P)
    Oe = state.to_eigen(O)
    E = state.space.energies
    r = state.weights
    dE = E[:, None] - E[None, :]
    if n == 1:
        # sum_ab O_ab P_ba (r_a - r_b) / (eta + i (E_b - E_a))
        return complex(np.sum(Oe * Pe.T * (r[:, None] - r[None, :]) / (eta - 1j * dE)))
    if n != 2:
        raise PreconditionError("closed-form Duhamel terms are implemented for n <= 2")

    def I(w1, w2):
        return 1.0 / ((eta + 1j * w2) * (2 * eta + 1j * (w1 + w2)))

    Eab = dE[:, :, None]                 # E_a - E_b   indexed [a, b, c]
    Ebc = dE[None, :, :]                 # E_b - E_c
    Eca = -(E[:, None, None] - E[None, None, :])   # E_c - E_a
    Eca = np.broadcast_to(Eca, (E.size,) * 3)
    ra = r[:, None, None]
    t1 = ra * Oe[:, :, None] * Pe[None, :, :] * Pe.T[:, None, :] * I(Ebc, Eca)
    PO = Pe[:, :, None] * Oe[None, :, :] * Pe.T[:, None, :]
    t2 = -ra * PO * I(Eab, Eca)
    t3 = -ra * PO * I(Eca, Eab)
    t4 = ra * Pe[:, :, None] * Pe[None, :, :] * Oe.T[:, None, :] * I(Ebc, Eab)
    return complex(np.sum(t1 + t2 + t3 + t4))


def _duhamel_quadrature(state, P, O, eta, n, floor=1e-10):
    """Same integrals by iterated adaptive quadrature over the time simplex."""
    Pe = state.to_eigen(P)
    Oe = state.to_eigen(O)
    E = state.space.energies
    r = state.weights
    t_lo = math.log(floor) / eta

    def cquad(f, a, b):
        re = quad(lambda s: f(s).real, a, b, limit=400, epsabs=1e-11, epsrel=1e-10)[0]
        im = quad(lambda s: f(s).imag, a, b, limit=400, epsabs=1e-11, epsrel=1e-10)[0]
        return re + 1j * im

    def Pt(s):
        return Pe * np.exp(1j * s * (E[:, None] - E[None, :]))

    def comm(A, B):
        return A @ B - B @ A

    if n == 1:
        return cquad(lambda s: math.exp(eta * s) * np.sum(r * np.diag(comm(Oe, Pt(s)))), t_lo, 0.0)
    if n == 2:
        def inner(s1):
            C1 = comm(Oe, Pt(s1))
            return cquad(lambda s2: math.exp(eta * (s1 + s2))
                         * np.sum(r * np.diag(comm(C1, Pt(s2)))), t_lo, s1)
        return cquad(inner, t_lo, 0.0)
    raise PreconditionError("n must be 1 or 2")


def _wick_side(state, P, O, eta, n, nodes=(6, 24)):
    """``(-i)^n / n! int_[0,beta)^n exp(-i eta sum s) <T g_s1(P); ...; O>``."""
    _check_even(state.space, [P, O])
    b = state.beta
    kv = state.kvals
    Pe = state.to_eigen(P)
    Oe = state.to_eigen(O)
    r = state.weights
    dk = kv[:, None] - kv[None, :]
    meanP = np.sum(r * np.diag(Pe))
    meanO = np.sum(r * np.diag(Oe))
    s, w = _gl(nodes[0], nodes[1], 0.0, b)
    if n == 1:
        # <g_s(P) O> = sum_ab r_a P_ab O_ba exp(s (k_a - k_b))
        M = r[:, None] * Pe * Oe.T
        mom = np.einsum("ab,sab->s", M, np.exp(s[:, None, None] * dk[None]))
        cum = mom - meanP * meanO
        return complex(-1j * np.sum(w * np.exp(-1j * eta * s) * cum))
    if n != 2:
        raise PreconditionError("n must be 1 or 2")
    # ordered triangle s1 > s2 with s2 = s1 * u; the other ordering by symmetry of P, P
    u, wu = _gl(nodes[0], nodes[1], 0.0, 1.0)
    T = r[:, None, None] * Pe[:, :, None] * Pe[None, :, :] * Oe.T[:, None, :]
    rPP = r[:, None] * Pe * Pe.T
    rPO = r[:, None] * Pe * Oe.T
    tri = 0j
    for s1, w1 in zip(s, w):
        s2 = s1 * u
        # <g_s1(P) g_s2(P) O> = sum_abc r_a P_ab P_bc O_ca e^{s1(k_a-k_b)} e^{s2(k_b-k_c)}
        e1 = np.exp(s1 * dk)
        e2 = np.exp(s2[:, None, None] * dk[None])
        mom3 = np.einsum("abc,ab,ubc->u", T, e1, e2)
        PP = np.einsum("ab,uab->u", rPP, np.exp((s1 - s2)[:, None, None] * dk[None]))
        PO1 = np.sum(rPO * e1)
        PO2 = np.einsum("ab,uab->u", rPO, e2)
        cum = mom3 - PP * meanO - PO1 * meanP - PO2 * meanP + 2 * meanP * meanP * meanO
        tri += w1 * s1 * np.sum(wu * np.exp(-1j * eta * (s1 + s2)) * cum)
    # the triangle s2 > s1 contributes equally because both inserted operators are P
    return complex((-1j) ** 2 / 2.0 * 2.0 * tri)


def duhamel_vs_wick(space: FockSpace, beta: float, mu: float, P, O, eta_beta: float,
                    n: int = 1, t: float = 0.0, lhs_method: str = "closed") -> tuple:
    """Both sides of the Wick-rotation identity for the order-``n`` Duhamel term.

    ``lhs`` is ``int_{s_n <= ... <= s_1 <= t} e^{eta sum s} <[...[tau_t(O), tau_s1(P)], ...]>``
    and ``rhs`` is ``(-i)^n e^{n eta t} / n! int_[0,beta)^n e^{-i eta sum s} <T g(P); ...; O>``.
    The identity holds when ``eta_beta`` is a positive multiple of ``2 pi / beta``;
    off the grid the two values differ, which makes a useful negative control.
    """
    if n not in (1, 2):
        raise PreconditionError("n must be 1 or 2")
    if not eta_beta > 0:
        raise PreconditionError("eta_beta must be positive")
    state = gibbs_state(space, beta, mu)
    if np.abs(O @ space.N - space.N @ O).max() > 1e-12:
        raise PreconditionError("observable must conserve particle number")
    if lhs_method == "closed":
        lhs = _duhamel_closed(state, P, O, eta_beta, n)
    elif lhs_method == "quadrature":
        lhs = _duhamel_quadrature(state, P, O, eta_beta, n)
    else:
        raise PreconditionError("lhs_method must be closed or quadrature")
    rhs = _wick_side(state, P, O, eta_beta, n)
    scale = math.exp(n * eta_beta * t)
    return lhs * scale, rhs * scale


def duhamel_terms(space, beta, mu, P, O, eta, orders=(1, 2)):
    """Duhamel contributions ``(-i)^n lhs_n`` to ``<O>(0) - <O>`` (``P`` includes theta)."""
    state = gibbs_state(space, beta, mu)
    return [(-1j) ** n * _duhamel_closed(state, P, O, eta, n) for n in orders]


# -- exact driven response ---------------------------------------------------------
def driven_response(space: FockSpace, beta: float, mu: float, potential: np.ndarray,
                    theta: float, eta: float, observables, switch_floor: float = 1e-8,
                    rtol: float = 1e-12, atol: float = 1e-13):
    """Exact ``(<O>(0) - <O>_eq) / theta`` for ``H + theta e^{eta t} sum_x pot_x n_x``.

    The many-body propagator is integrated from ``t_min = ln(switch_floor)/eta``
    with an explicit eighth-order Runge-Kutta scheme.  ``observables`` are
    one-particle kernels (dense or sparse ``m x m``).
    """
    state = gibbs_state(space, beta, mu)
    Vop = space.quadratic(np.diag(np.asarray(potential, float)))
    H = space.H
    d = space.dim
    t_min = math.log(switch_floor) / eta

    def rhs(t, y):
        U = y.reshape(d, d)
        return (-1j * ((H + theta * math.exp(eta * t) * Vop) @ U)).ravel()

    sol = solve_ivp(rhs, (t_min, 0.0), np.eye(d, dtype=complex).ravel(), method="DOP853",
                    rtol=rtol, atol=atol)
    if not sol.success:
        raise ToleranceFailure(sol.message)
    U = sol.y[:, -1].reshape(d, d)
    rho = U @ state.rho @ U.conj().T
    out = []
    for K in observables:
        Q = space.quadratic(K)
        out.append(float(np.real(np.trace(rho @ Q) - np.trace(state.rho @ Q))) / theta)
    return np.array(out)


def fourier_cumulant(state: FockGibbsState, A, B, p0: float, L: int, nodes=(6, 24)) -> complex:
    """``(1/L) int_0^beta ds e^{-i p0 s} <T g_s(A); B>`` by Gauss-Legendre quadrature."""
    _check_even(state.space, [A, B])
    Ae = state.to_eigen(A)
    Be = state.to_eigen(B)
    r = state.weights
    dk = state.kvals[:, None] - state.kvals[None, :]
    s, w = _gl(nodes[0], nodes[1], 0.0, state.beta)
    mom = np.einsum("ab,sab->s", r[:, None] * Ae * Be.T, np.exp(s[:, None, None] * dk[None]))
    cum = mom - np.sum(r * np.diag(Ae)) * np.sum(r * np.diag(Be))
    return complex(np.sum(w * np.exp(-1j * p0 * s) * cum) / L)
