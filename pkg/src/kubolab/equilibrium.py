"""Gibbs correlation matrices, Matsubara grids and the Euclidean propagator."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional

import numpy as np

from .errors import DeltaTooLarge, DegeneracyViolated, PreconditionError, SingularPropagator
from .model import fiber
from .perturb import site_dft, site_idft, smooth_cutoff, torus_abs

TWO_PI = 2 * np.pi


@dataclass(frozen=True)
class EquilibriumParams:
    """Inverse temperature ``beta`` (``np.inf`` allowed) and chemical potential ``mu``."""

    beta: float
    mu: float

    def __post_init__(self):
        if not self.beta > 0:
            raise PreconditionError("beta must be positive")


def fermi_factor(e, beta: float, mu: float, tie_tol: float = 1e-12):
    """``1 / (1 + exp(beta (e - mu)))`` evaluated without overflow.

    With ``beta = inf`` levels strictly below ``mu`` are filled; a level within
    ``tie_tol`` of ``mu`` raises :class:`DegeneracyViolated`.
    """
    x = np.asarray(e, float) - mu
    if np.isinf(beta):
        if np.any(np.abs(x) < tie_tol):
            raise DegeneracyViolated("a level sits at the chemical potential at zero temperature")
        return (x < 0).astype(float)
    z = beta * x
    out = np.empty_like(z)
    pos = z >= 0
    ez = np.exp(-z[pos])
    out[pos] = ez / (1.0 + ez)
    out[~pos] = 1.0 / (1.0 + np.exp(z[~pos]))
    return out


class CorrelationMatrix:
    """Equilibrium one-particle state ``Gamma_{a,b} = <a*_b a_a>``.

    The state is stored through the fiber eigendecomposition of the
    translation-invariant Hamiltonian, which keeps large cylinders tractable;
    :meth:`dense` materializes the full matrix when it is small enough.
    """

    def __init__(self, model, params: EquilibriumParams):
        self.model = model
        self.params = params
        self.k = model.momenta()
        self.energies, self.vectors = np.linalg.eigh(fiber(model, self.k))
        self.occupation = fermi_factor(self.energies, params.beta, params.mu)
        # per-k occupation operator f(H(k))
        self.fiber_gamma = np.einsum("kan,kn,kbn->kab", self.vectors, self.occupation,
                                     self.vectors.conj())

    @property
    def shape(self):
        n = self.model.n_orbitals
        return (n, n)

    def _lattice(self, vecs):
        m = self.model
        nv = vecs.shape[1]
        return vecs.reshape(m.L, -1, nv)

    def apply(self, vecs: np.ndarray) -> np.ndarray:
        """``Gamma @ vecs`` for a block of column vectors (position basis)."""
        vecs = np.asarray(vecs, complex)
        single = vecs.ndim == 1
        if single:
            vecs = vecs[:, None]
        arr = self._lattice(vecs)
        hat = site_dft(arr, axis=0)
        hat = np.einsum("kab,kbv->kav", self.fiber_gamma, hat)
        out = site_idft(hat, axis=0).reshape(vecs.shape)
        return out[:, 0] if single else out

    def dense(self) -> np.ndarray:
        n = self.shape[0]
        if n > 6000:
            raise PreconditionError("correlation matrix too large to materialize")
        return self.apply(np.eye(n, dtype=complex))

    def block(self, idx) -> np.ndarray:
        """``Gamma[idx][:, idx]``."""
        idx = np.asarray(idx, int)
        e = np.zeros((self.shape[0], idx.size), complex)
        e[idx, np.arange(idx.size)] = 1.0
        return self.apply(e)[idx]

    def diagonal(self) -> np.ndarray:
        """Site-resolved diagonal; translation invariance makes it x1-independent."""
        d = np.real(np.einsum("kaa->a", self.fiber_gamma)) / self.model.L
        return np.tile(d, self.model.L)

    def trace(self) -> float:
        return float(np.sum(self.occupation))

    def n_orbitals_above(self, cut: float = 0.0) -> int:
        """Number of eigen-orbitals with occupation above ``cut``."""
        return int(np.count_nonzero(self.occupation > cut))

    def orbitals(self, cut: float = 0.0):
        """Eigen-orbitals with occupation above ``cut``.

        Returns ``(weights, phi)`` with ``phi`` of shape ``(N, n_kept)``: the
        position-space orbitals ``exp(i k x1) u_n(k) / sqrt(L)``.
        """
        m = self.model
        L = m.L
        x = np.arange(-(L // 2), L // 2 + 1)
        keep = self.occupation > cut
        kk, nn = np.nonzero(keep)
        phase = np.exp(1j * np.outer(x, self.k[kk])) / np.sqrt(L)      # (L, n)
        u = self.vectors[kk, :, nn].T                                   # (fiberdim, n)
        phi = (phase[:, None, :] * u[None, :, :]).reshape(L * u.shape[0], -1)
        return self.occupation[kk, nn], phi

    def energies_flat(self) -> np.ndarray:
        return self.energies.ravel()


def gibbs_correlation(model, params: EquilibriumParams) -> CorrelationMatrix:
    """Gibbs state of the quadratic Hamiltonian at ``(beta, mu)``."""
    return CorrelationMatrix(model, params)


# -- Matsubara -------------------------------------------------------------------
def snap_eta(beta: float, eta: float) -> float:
    """Smallest positive multiple of ``2 pi / beta`` that is ``>= eta``."""
    if not (beta > 0 and eta > 0):
        raise PreconditionError("beta and eta must be positive")
    step = TWO_PI / beta
    n = np.ceil(eta / step - 1e-12)
    return float(max(n, 1) * step)


@dataclass(frozen=True)
class MatsubaraGrid:
    beta: float
    n_max: int
    eta: float = 0.0

    @property
    def frequencies(self) -> np.ndarray:
        n = np.arange(-self.n_max - 1, self.n_max + 1)
        return TWO_PI / self.beta * (n + 0.5)

    @property
    def bosonic_step(self) -> float:
        return TWO_PI / self.beta

    @property
    def eta_beta(self) -> float:
        return snap_eta(self.beta, self.eta) if self.eta > 0 else 0.0


def matsubara_propagator(model, params: EquilibriumParams, k0: float, k: float) -> np.ndarray:
    """``g(k0, k) = (i k0 + H(k) - mu)^{-1}`` for a 1d model."""
    h = np.atleast_2d(model.kernel.bloch(float(k)))
    A = 1j * k0 * np.eye(h.shape[0]) + h - params.mu * np.eye(h.shape[0])
    if k0 == 0:
        ev = np.linalg.eigvalsh(h)
        if np.min(np.abs(ev - params.mu)) < 1e-14 * max(1.0, np.max(np.abs(ev))):
            raise SingularPropagator(f"mu is an eigenvalue of H({k}) at zero frequency")
    return np.linalg.inv(A)


def propagator_batch(model, mu: float, k0, k) -> np.ndarray:
    """Vectorized ``(i k0 + H(k) - mu)^{-1}`` over broadcast arrays ``k0, k``."""
    k0, k = np.broadcast_arrays(np.asarray(k0, float), np.asarray(k, float))
    h = model.kernel.bloch(k)
    M = h.shape[-1]
    A = h + (1j * k0 - mu)[..., None, None] * np.eye(M)
    return np.linalg.inv(A)


# -- singular / regular splitting -------------------------------------------------
def torus_signed(q):
    """Representative of ``q`` modulo ``2 pi`` in ``[-pi, pi)``."""
    return np.mod(np.asarray(q, float) + np.pi, TWO_PI) - np.pi


class PropagatorSplit:
    """``g = g_s + g_r`` with ``g_s = sum_w chi(||k - k_F||_w / delta) P_w(k) / D_w``.

    ``D_w(k_F + q) = i q0 + v q`` and ``||q||_w^2 = q0^2 + v^2 |q|^2``.  The
    projector ``P_w(k)`` is onto the eigenvector of ``H(k)`` continuing the
    Fermi eigenvector of branch ``w``.
    """

    def __init__(self, model, fermi, delta: float):
        self.model = model
        self.fermi = fermi
        self.delta = float(delta)
        self.mu = float(model.mu)

    def norm(self, omega: int, k0, k):
        p = self.fermi.points[omega]
        q = torus_signed(np.asarray(k, float) - p.k_F)
        return np.sqrt(np.asarray(k0, float) ** 2 + (p.v * q) ** 2)

    def D(self, omega: int, k0, k):
        p = self.fermi.points[omega]
        q = torus_signed(np.asarray(k, float) - p.k_F)
        return 1j * np.asarray(k0, float) + p.v * q

    def cutoff(self, omega: int, k0, k):
        return smooth_cutoff(self.norm(omega, k0, k) / self.delta)

    def projector(self, omega: int, k) -> np.ndarray:
        p = self.fermi.points[omega]
        k = np.atleast_1d(np.asarray(k, float))
        e, v = np.linalg.eigh(self.model.kernel.bloch(k))
        ov = np.abs(np.einsum("a,kan->kn", p.xi.conj(), v))
        pick = np.argmax(ov, axis=1)
        u = v[np.arange(k.size), :, pick]
        return np.einsum("ka,kb->kab", u, u.conj())

    def g(self, k0, k):
        return propagator_batch(self.model, self.mu, k0, k)

    def g_s(self, k0, k):
        k0, k = np.broadcast_arrays(np.asarray(k0, float), np.asarray(k, float))
        shape = k0.shape
        k0, k = k0.ravel(), k.ravel()
        M = self.model.M
        out = np.zeros(k0.shape + (M, M), complex)
        for w in range(len(self.fermi.points)):
            c = np.atleast_1d(self.cutoff(w, k0, k))
            nz = c != 0
            if not np.any(nz):
                continue
            P = self.projector(w, k[nz])
            out[nz] += (c[nz] / self.D(w, k0[nz], k[nz]))[:, None, None] * P
        return out.reshape(shape + (M, M))

    def g_r(self, k0, k):
        return self.g(k0, k) - self.g_s(k0, k)

    def g_omega(self, omega: int, k0, k):
        """Scalar chiral propagator ``chi / D`` of a single branch."""
        return self.cutoff(omega, k0, k) / self.D(omega, k0, k)


def default_delta(fermi, window: Optional[float] = None) -> float:
    """``min(1/5 * min pairwise |k_F - k_F'|_T * min |v|, window / 2)``.

    The factor 1/5 keeps the two cutoff supports strictly apart even when the
    velocities coincide.
    """
    window = fermi.window if window is None else window
    vs = np.abs(fermi.velocities)
    ks = fermi.momenta
    cand = [window / 2.0]
    if len(ks) > 1:
        dk = torus_abs(ks[:, None] - ks[None, :])
        dk = dk[~np.eye(len(ks), dtype=bool)].min()
        cand.append(0.2 * dk * vs.min())
    return float(min(cand))


def split_propagator(model, fermi, delta: Optional[float] = None) -> PropagatorSplit:
    """Singular/regular splitting around the Fermi points of a 1d model."""
    if len(fermi.points) == 0:
        raise PreconditionError("splitting needs at least one Fermi point")
    if delta is None:
        delta = default_delta(fermi)
    if not delta > 0:
        raise PreconditionError("delta must be positive")
    pts = fermi.points
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            reach = 2 * delta / abs(pts[i].v) + 2 * delta / abs(pts[j].v)
            if reach >= torus_abs(pts[i].k_F - pts[j].k_F):
                raise DeltaTooLarge(
                    f"cutoff supports of Fermi points {i} and {j} overlap at delta={delta}")
    return PropagatorSplit(model, fermi, delta)
