"""Exact real-time response of free fermions to a slowly switched potential.

The one-particle Hamiltonian is ``h(t) = H + lam(t) V`` with
``lam(t) = theta * exp(eta t)`` and ``V = diag(mu(theta x))``.  The state is
quadratic at all times, so it is carried by its correlation matrix
``Gamma(t) = U(t) Gamma_eq U(t)^dagger``.

Propagation uses a fourth-order commutator-free Magnus step built from two
exponentials of frozen Hamiltonians; each exponential is applied to a block of
vectors by a Chebyshev expansion driven by the hopping stencil, which is exact
to round-off for the frozen operator.  Two ways of assembling ``Gamma(0)``
share this propagator:

``frame``
    forward-evolve the occupied orbitals ``sqrt(f_j) phi_j``;
``window``
    backward-evolve the unit vectors of the sites where observables live and
    sandwich the equilibrium state between them.

They agree to round-off and are cross-checked in the test-suite.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.special import jv

from ._stencil import Stencil
from .equilibrium import EquilibriumParams, gibbs_correlation
from .errors import PreconditionError, StepTooLarge, StripTooWide, WrongDimension
from .model import fiber, fiber_derivative

SQ3_6 = math.sqrt(3.0) / 6.0
# fourth-order commutator-free Magnus weights
_ALPHA_EARLY = 0.25 + SQ3_6
_ALPHA_LATE = 0.25 - SQ3_6


# -- vertices ----------------------------------------------------------------------
def current_vertex(model, k, p, nu: int = 1) -> np.ndarray:
    """Momentum-space vertex ``J_nu(k, p)`` of a 1d model.

    ``J_0 = 1`` and ``J_1(k, p) = i (H(k) - H(k - p)) / (1 - exp(-i p))``, with
    the analytic limit ``dH/dk`` at ``p = 0 mod 2 pi``.
    """
    if model.dimension != 1:
        raise WrongDimension("current_vertex is defined for 1d models")
    M = model.M
    if nu == 0:
        return np.eye(M, dtype=complex)
    if nu != 1:
        raise PreconditionError("nu must be 0 or 1")
    k = float(k)
    p = float(p)
    if abs(math.remainder(p, 2 * math.pi)) < 1e-14:
        return model.kernel.bloch_derivative(k)
    num = 1j * (model.kernel.bloch(k) - model.kernel.bloch(k - p))
    return num / (1.0 - np.exp(-1j * p))


# -- observable kernels -------------------------------------------------------------
@dataclass(frozen=True)
class ObservableKernel:
    """Hermitian one-particle kernel; the observable's value is ``tr(K Gamma)``."""

    nu: int
    x: int
    ell: Optional[int]
    matrix: sp.csr_matrix

    @property
    def support(self) -> np.ndarray:
        m = self.matrix.tocoo()
        return np.unique(np.concatenate([m.row, m.col]))

    def expectation(self, gamma: np.ndarray) -> float:
        """``tr(K Gamma)`` for a dense ``Gamma`` on the full orbital space."""
        m = self.matrix.tocoo()
        return float(np.real(np.sum(m.data * gamma[m.col, m.row])))

    def restricted(self, idx: np.ndarray) -> np.ndarray:
        """Dense ``K[idx][:, idx]``; ``idx`` must contain :attr:`support`."""
        return self.matrix[idx][:, idx].toarray()


class _Geometry:
    """Site bookkeeping shared by the kernels: ``(i1, x2)`` with ``L2 = 1`` in 1d."""

    def __init__(self, model):
        self.model = model
        self.L1 = model.L
        self.L2 = 1 if model.dimension == 1 else model.L
        self.M = model.M
        if model.dimension == 1:
            self.items = [((d, 0), b) for d, b in model.kernel.blocks.items()]
        else:
            self.items = list(model.kernel.blocks.items())

    def orb(self, i1, x2, rho):
        return ((i1 % self.L1) * self.L2 + x2) * self.M + rho

    def i1(self, x1: int) -> int:
        return (x1 + self.L1 // 2) % self.L1

    def forward_bonds(self):
        """Each unordered bond once: ``(d, block(d))`` with ``d`` lexicographically positive."""
        for d, b in self.items:
            if d > (0, 0):
                yield d, b


def _add_bond(rows, cols, vals, geo, a, b, H_ab, H_ba, weight):
    """Flow from site ``a`` to site ``b``: ``K[a,b] = i H(a;b)``, ``K[b,a] = -i H(b;a)``."""
    M = geo.M
    for r in range(M):
        for c in range(M):
            if H_ab[r, c] != 0:
                rows.append(geo.orb(a[0], a[1], r))
                cols.append(geo.orb(b[0], b[1], c))
                vals.append(1j * weight * H_ab[r, c])
            if H_ba[r, c] != 0:
                rows.append(geo.orb(b[0], b[1], r))
                cols.append(geo.orb(a[0], a[1], c))
                vals.append(-1j * weight * H_ba[r, c])


def _bond_currents(geo, axis: int, cut: int, lines):
    """Current through the cut ``cut | cut+1`` along ``axis`` (0 horizontal, 1 vertical).

    ``lines`` is the set of transverse coordinates observed (rows for the
    horizontal current, columns for the vertical one, given as ``i1``
    indices).  A bond from ``a`` to ``b`` is routed along the two L-shaped
    lattice paths with weight 1/2 each, which keeps the lattice continuity
    equation exact for bonds of any shape.
    """
    rows, cols, vals = [], [], []
    L1, L2 = geo.L1, geo.L2
    lines = set(lines)
    for d, blk in geo.forward_bonds():
        d1, d2 = d
        H_ba = blk                      # H(b; a) with b = a + d
        H_ab = blk.conj().T             # H(a; b) = block(-d)
        dd = d1 if axis == 0 else d2
        if dd == 0:
            continue
        # sources a along the bond axis such that the bond crosses `cut`
        starts = range(cut - dd + 1, cut + 1) if dd > 0 else range(cut + 1, cut - dd + 1)
        sign = 1.0 if dd > 0 else -1.0
        for s_ax in starts:
            if axis == 0:
                # a = (s_ax, a2); weight from rows a2 and b2 = a2 + d2
                for a2 in range(L2):
                    b2 = a2 + d2
                    if not 0 <= b2 < L2:
                        continue
                    w = 0.5 * ((a2 in lines) + (b2 in lines))
                    if w:
                        _add_bond(rows, cols, vals, geo, (s_ax % L1, a2),
                                  ((s_ax + d1) % L1, b2), H_ab, H_ba, sign * w)
            else:
                a2 = s_ax
                b2 = a2 + d2
                if not (0 <= a2 < L2 and 0 <= b2 < L2):
                    continue
                for a1 in range(L1):
                    b1 = (a1 + d1) % L1
                    w = 0.5 * ((a1 in lines) + (b1 in lines))
                    if w:
                        _add_bond(rows, cols, vals, geo, (a1, a2), (b1, b2), H_ab, H_ba,
                                  sign * w)
    n = L1 * L2 * geo.M
    return sp.coo_matrix((np.asarray(vals, complex), (rows, cols)), shape=(n, n)).tocsr()


def _density(geo, i1: int, rows_set):
    idx = [geo.orb(i1, x2, r) for x2 in rows_set for r in range(geo.M)]
    n = geo.L1 * geo.L2 * geo.M
    return sp.coo_matrix((np.ones(len(idx)), (idx, idx)), shape=(n, n)).tocsr().astype(complex)


def observable_kernel(model, nu: int, x: int, ell: Optional[int] = None) -> ObservableKernel:
    """Density (``nu=0``), horizontal current (``nu=1``) or vertical current (``nu=2``).

    In 1d ``x`` is a site and the current is the one through the bond cut
    ``x | x+1``.  On the cylinder ``x`` is the column ``x1`` and the
    observable is summed over the strip of rows ``x2 < ell`` (``ell`` defaults
    to the full height); ``nu=2`` is the vertical current leaving the strip
    through the cut ``ell-1 | ell`` at column ``x1``.
    """
    geo = _Geometry(model)
    i1 = geo.i1(int(x))
    if model.dimension == 1:
        if nu == 0:
            K = _density(geo, i1, [0])
        elif nu == 1:
            K = _bond_currents(geo, 0, i1, [0])
        else:
            raise WrongDimension("nu=2 needs a cylinder model")
        return ObservableKernel(nu, int(x), None, K)
    if ell is None:
        ell = model.L
    if not 1 <= ell:
        raise PreconditionError("strip width must be positive")
    if ell > model.L:
        raise StripTooWide(f"strip width {ell} exceeds the cylinder height {model.L}")
    strip = range(ell)
    if nu == 0:
        K = _density(geo, i1, strip)
    elif nu == 1:
        K = _bond_currents(geo, 0, i1, strip)
    elif nu == 2:
        if ell == model.L:
            K = sp.csr_matrix((model.n_orbitals,) * 2, dtype=complex)
        else:
            K = _bond_currents(geo, 1, ell - 1, [i1])
    else:
        raise PreconditionError("nu must be 0, 1 or 2")
    return ObservableKernel(nu, int(x), int(ell), K)


def continuity_residual(model, x: int, ell: Optional[int] = None) -> float:
    """``|| i[H, N_x] + (J_x - J_{x-1}) (+ J2) ||`` in the Frobenius norm."""
    H = model.hamiltonian(sparse=True)
    N = observable_kernel(model, 0, x, ell).matrix
    J = observable_kernel(model, 1, x, ell).matrix
    Jm = observable_kernel(model, 1, x - 1, ell).matrix
    R = 1j * (H @ N - N @ H) + (J - Jm)
    if model.dimension == 2:
        R = R + observable_kernel(model, 2, x, ell).matrix
    R = R.tocoo()
    return float(np.sqrt(np.sum(np.abs(R.data) ** 2))) if R.nnz else 0.0


# -- propagator ----------------------------------------------------------------------
def spectral_bounds(model):
    """Exact extreme eigenvalues of ``H`` from its fibers on the ring momenta."""
    e = np.linalg.eigvalsh(fiber(model, model.momenta()))
    return float(e.min()), float(e.max())


def _cheb_order(x: float, tol: float = 1e-16) -> int:
    n = int(x) + 6
    while True:
        c = np.abs(jv(np.arange(n - 3, n + 1), x))
        if np.all(c < tol):
            return n
        n += 2


class Propagator:
    """Exponentials of ``H + lam V`` applied to vector blocks.

    Parameters
    ----------
    model : lattice model
    pot : array of potential samples, shape ``(L,)`` or ``(L, L)``
    backend : passed to :class:`Stencil`
    """

    def __init__(self, model, pot, backend: str = "auto"):
        self.model = model
        self.stencil = Stencil(model, backend)
        self.pot = np.ascontiguousarray(np.asarray(pot, float).reshape(self.stencil.shape[:2]))
        self.hmin, self.hmax = spectral_bounds(model)
        self.vmin = float(min(self.pot.min(), 0.0))
        self.vmax = float(max(self.pot.max(), 0.0))
        self.matvecs = 0

    def interval(self, lam: float):
        lo = self.hmin + min(lam * self.vmin, lam * self.vmax)
        hi = self.hmax + max(lam * self.vmin, lam * self.vmax)
        pad = 1e-9 * max(1.0, hi - lo)
        return lo - pad, hi + pad

    def expm(self, psi: np.ndarray, tau: float, lam: float) -> np.ndarray:
        """``exp(-i tau (H + lam V)) psi`` for ``psi`` of shape ``(L1, L2, M, nvec)``."""
        lo, hi = self.interval(lam)
        a = 0.5 * (hi - lo)
        b = 0.5 * (hi + lo)
        x = abs(tau) * a
        n = _cheb_order(x)
        J = jv(np.arange(n + 1), x)
        # exp(-i s y) = J0(s) + 2 sum (-i)^n J_n(s) T_n(y)  for s = |tau| a
        sgn = 1.0 if tau >= 0 else -1.0
        coef = 2.0 * ((-1j * sgn) ** np.arange(n + 1)) * J
        coef[0] = J[0]
        st = self.stencil
        t_prev = psi.copy()   # the buffers rotate, never write into the caller's array
        t_cur = st.apply(psi, self.pot, lam, c_h=1.0 / a, c_id=-b / a)
        acc = coef[0] * t_prev + coef[1] * t_cur
        buf = np.empty_like(psi)
        for m in range(2, n + 1):
            st.apply(t_cur, self.pot, lam, c_h=2.0 / a, c_id=-2.0 * b / a, prev=t_prev,
                     c_prev=-1.0, out=buf)
            t_prev, t_cur, buf = t_cur, buf, t_prev
            acc += coef[m] * t_cur
        self.matvecs += n
        return acc * np.exp(-1j * tau * b)

    def step(self, psi, t: float, h: float, lam_fn, adjoint: bool = False):
        """One CFM4 step from ``t`` to ``t + h`` (or its inverse when ``adjoint``)."""
        l1 = lam_fn(t + (0.5 - SQ3_6) * h)
        l2 = lam_fn(t + (0.5 + SQ3_6) * h)
        first = 2.0 * (_ALPHA_EARLY * l1 + _ALPHA_LATE * l2)
        second = 2.0 * (_ALPHA_LATE * l1 + _ALPHA_EARLY * l2)
        if not adjoint:
            psi = self.expm(psi, 0.5 * h, first)
            return self.expm(psi, 0.5 * h, second)
        psi = self.expm(psi, -0.5 * h, second)
        return self.expm(psi, -0.5 * h, first)


# -- configuration and results ---------------------------------------------------------
@dataclass(frozen=True)
class EvolutionConfig:
    """Time-stepping controls.

    ``step_size=None`` picks ``min(0.1 / eta, 0.5)``; steps larger than
    ``0.5 / eta`` are refused because the switch-on would be under-resolved.
    """

    switch_floor: float = 1e-8
    step_size: Optional[float] = None
    occupancy_cut: float = 1e-12
    method: str = "auto"
    snapshot_every: int = 0
    backend: str = "auto"
    unitarity_tol: float = 1e-8

    def __post_init__(self):
        if not 0 < self.switch_floor < 1:
            raise PreconditionError("switch_floor must lie in (0, 1)")
        if self.step_size is not None and not self.step_size > 0:
            raise PreconditionError("step_size must be positive")
        if self.method not in ("auto", "frame", "window"):
            raise PreconditionError("method must be auto, frame or window")

    def resolved_step(self, eta: float) -> float:
        h = self.step_size if self.step_size is not None else min(0.1 / eta, 0.5)
        if h * eta > 0.5:
            raise StepTooLarge(f"step {h} does not resolve the switch-on rate {eta}")
        return h


@dataclass
class ResponseCurve:
    """Sampled response ``chi_nu`` at probe positions with run metadata."""

    nu: int
    positions: np.ndarray
    values: np.ndarray
    metadata: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    times: Optional[np.ndarray] = None
    history: Optional[np.ndarray] = None   # chi at intermediate times (frame method)

    def to_dict(self) -> dict:
        out = {"nu": self.nu, "positions": [int(p) for p in self.positions],
               "values": [float(v) for v in self.values], "metadata": self.metadata,
               "diagnostics": self.diagnostics}
        if self.times is not None:
            out["times"] = [float(t) for t in self.times]
            out["history"] = np.asarray(self.history).tolist()
        return out


@dataclass
class Trajectory:
    """Snapshots of ``Gamma`` restricted to a set of orbitals."""

    times: np.ndarray
    index: np.ndarray
    gammas: list
    kernels: dict
    ell: Optional[int] = None


def _lam_fn(theta, eta):
    return lambda t: theta * math.exp(eta * t)


def _config_hash(d: dict) -> str:
    blob = json.dumps(d, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def default_probes(model, pot_support, theta: float):
    """Sites covering the potential support plus a margin of ``2/theta`` sites."""
    lo, hi = pot_support
    half = model.L // 2
    a = int(math.floor((lo - 2.0) / theta))
    b = int(math.ceil((hi + 2.0) / theta))
    a, b = max(a, -half), min(b, half)
    return np.arange(a, b + 1)


def _time_grid(t_min: float, h: float):
    n = int(math.ceil(-t_min / h - 1e-12))
    return n, -t_min / n


def _evolve_frame(prop, phi, t_min, n, h, lam_fn, snap_every, on_snapshot):
    st = prop.stencil
    psi = st.lattice(phi)
    t = t_min
    for j in range(n):
        psi = prop.step(psi, t, h, lam_fn)
        t = t_min + (j + 1) * h
        if snap_every and (j + 1) % snap_every == 0:
            on_snapshot(t, psi.reshape(phi.shape))
    return psi.reshape(phi.shape)


def _evolve_window(prop, idx, n_orb, t_min, n, h, lam_fn):
    st = prop.stencil
    W = np.zeros((n_orb, idx.size), complex)
    W[idx, np.arange(idx.size)] = 1.0
    psi = st.lattice(W)
    for j in range(n - 1, -1, -1):
        psi = prop.step(psi, t_min + j * h, h, lam_fn, adjoint=True)
    return psi.reshape(W.shape)


def evolve_response(model, pot, scaling, params: EquilibriumParams,
                    cfg: EvolutionConfig = EvolutionConfig(), nu: int = 0,
                    probes: Optional[Sequence[int]] = None, ell: Optional[int] = None,
                    support=None, return_trajectory: bool = False):
    """Full response ``chi_nu(x) = (tr K Gamma(0) - tr K Gamma_eq) / theta``.

    Parameters
    ----------
    model : LatticeModel1D or CylinderModel2D
    pot : PeriodizedPotential
        Potential ``mu(theta x)`` (cut off or not) on the same lattice.
    scaling : EulerScaling
    params : EquilibriumParams
        ``beta`` may be ``inf``; ``mu`` overrides the model's chemical potential.
    cfg : EvolutionConfig
    nu : int
        0 density, 1 current, 2 vertical current (cylinder).
    probes : sequence of int, optional
        Sites (1d) or columns (2d).  Defaults to the potential support widened by
        ``2/theta`` sites; ``support`` gives that support in rescaled units.
    ell : int, optional
        Strip width on the cylinder.
    """
    if pot.L != model.L or pot.dimension != model.dimension:
        raise PreconditionError("potential and model live on different lattices")
    theta, eta = scaling.theta, scaling.eta
    if abs(theta - pot.theta) > 1e-12 * max(1.0, theta):
        raise PreconditionError("potential was sampled with a different theta")
    h0 = cfg.resolved_step(eta)
    t_min = math.log(cfg.switch_floor) / eta
    n_steps, h = _time_grid(t_min, h0)
    lam_fn = _lam_fn(theta, eta)
    if probes is None:
        if support is None:
            nz = np.nonzero(np.abs(pot.samples).reshape(model.L, -1).max(axis=1) > 0)[0]
            if nz.size:
                xs = nz - model.L // 2
                support = (theta * xs.min(), theta * xs.max())
            else:
                support = (0.0, 0.0)
        probes = default_probes(model, support, theta)
    probes = np.asarray(list(probes), int)
    if model.dimension == 2 and ell is None:
        ell = model.L
    kernels = [observable_kernel(model, nu, int(x), ell) for x in probes]
    idx = np.unique(np.concatenate([k.support for k in kernels] + [np.zeros(0, int)]))

    eq = gibbs_correlation(model.with_mu(params.mu), params)
    g_eq = eq.block(idx) if idx.size else np.zeros((0, 0), complex)
    beta = params.beta
    meta = {"eta": eta, "a": scaling.a, "theta": theta, "alpha": pot.alpha,
            "beta": "inf" if math.isinf(beta) else beta, "mu": params.mu, "L": model.L,
            "ell": ell, "model": getattr(model, "name", "custom"), "nu": nu}
    meta["config_hash"] = _config_hash({**meta, **asdict(cfg)})
    if pot.sup_norm() == 0.0:
        # the Gibbs state is invariant under the unperturbed dynamics
        diag = {"method": "stationary", "steps": 0, "h": h, "t_min": t_min, "switch_residual": 0.0,
                "backend": "none", "trace_drift": 0.0, "unitarity_drift": 0.0, "matvecs": 0}
        curve = ResponseCurve(nu, probes, np.zeros(probes.size), meta, diag)
        if return_trajectory:
            return curve, Trajectory(np.zeros(0), idx, [], {}, ell)
        return curve
    method = cfg.method
    if method == "auto":
        n_occ = eq.n_orbitals_above(cfg.occupancy_cut)
        method = "frame" if (n_occ <= idx.size or cfg.snapshot_every) else "window"

    prop = Propagator(model, pot.samples, cfg.backend)
    diag = {"method": method, "steps": n_steps, "h": h, "t_min": t_min,
            "switch_residual": cfg.switch_floor * theta * pot.sup_norm() * abs(t_min),
            "backend": prop.stencil.backend}
    history, times, snaps = [], [], []
    sub_k = [k.restricted(idx) for k in kernels]

    def chi_of(gs):
        return np.array([(np.real(np.trace(K @ gs)) - np.real(np.trace(K @ g_eq))) / theta
                         for K in sub_k])

    if method == "frame":
        weights, phi = eq.orbitals(cfg.occupancy_cut)
        frame = phi * np.sqrt(weights)[None, :]
        norms0 = np.sum(np.abs(frame) ** 2, axis=0)

        def on_snap(t, F):
            gs = F[idx] @ F[idx].conj().T
            times.append(t)
            history.append(chi_of(gs))
            snaps.append(gs)

        F = _evolve_frame(prop, frame, t_min, n_steps, h, lam_fn, cfg.snapshot_every, on_snap)
        norms = np.sum(np.abs(F) ** 2, axis=0)
        drift = float(np.max(np.abs(norms - norms0))) if norms.size else 0.0
        diag["trace_drift"] = float(abs(norms.sum() - norms0.sum()))
        g0 = F[idx] @ F[idx].conj().T
    else:
        W = _evolve_window(prop, idx, model.n_orbitals, t_min, n_steps, h, lam_fn)
        gram = W.conj().T @ W
        drift = float(np.max(np.abs(gram - np.eye(idx.size)))) if idx.size else 0.0
        diag["trace_drift"] = float(abs(np.trace(gram).real - idx.size))
        g0 = W.conj().T @ eq.apply(W)
    diag["unitarity_drift"] = drift
    diag["matvecs"] = prop.matvecs
    if drift > cfg.unitarity_tol or diag["trace_drift"] > cfg.unitarity_tol * max(1, idx.size):
        raise StepTooLarge(f"unitarity drift {drift:.3g} exceeds {cfg.unitarity_tol}")
    values = chi_of(g0)
    curve = ResponseCurve(nu, probes, values, meta, diag,
                          np.array(times) if times else None,
                          np.array(history) if history else None)
    if return_trajectory:
        return curve, Trajectory(np.array(times), idx, snaps, {}, ell)
    return curve


def evolve_trajectory(model, pot, scaling, params, cfg: EvolutionConfig, probes,
                      ell: Optional[int] = None):
    """Frame evolution storing ``Gamma`` snapshots on the orbitals needed for continuity.

    ``cfg.snapshot_every`` must be positive.  The kernels stored with the
    trajectory are the density and currents around each probe.
    """
    if not cfg.snapshot_every:
        raise PreconditionError("snapshot_every must be positive for a trajectory")
    if model.dimension == 2 and ell is None:
        ell = model.L
    kern = {}
    for x in probes:
        kern[("n", x)] = observable_kernel(model, 0, x, ell)
        kern[("j", x)] = observable_kernel(model, 1, x, ell)
        kern[("j", x - 1)] = observable_kernel(model, 1, x - 1, ell)
        if model.dimension == 2:
            kern[("j2", x)] = observable_kernel(model, 2, x, ell)
    idx = np.unique(np.concatenate([k.support for k in kern.values()]))
    theta, eta = scaling.theta, scaling.eta
    t_min = math.log(cfg.switch_floor) / eta
    n_steps, h = _time_grid(t_min, cfg.resolved_step(eta))
    eq = gibbs_correlation(model.with_mu(params.mu), params)
    weights, phi = eq.orbitals(cfg.occupancy_cut)
    frame = phi * np.sqrt(weights)[None, :]
    prop = Propagator(model, pot.samples, cfg.backend)
    times, snaps = [], []

    def on_snap(t, F):
        times.append(t)
        snaps.append(F[idx] @ F[idx].conj().T)

    on_snap(t_min, frame)
    _evolve_frame(prop, frame, t_min, n_steps, h, _lam_fn(theta, eta), cfg.snapshot_every,
                  on_snap)
    dense_k = {key: k.restricted(idx) for key, k in kern.items()}
    return Trajectory(np.array(times), idx, snaps, dense_k, ell)


def verify_continuity_dynamic(model, trajectory: Trajectory) -> dict:
    """Centered-difference check of ``d<n_x>/dt = -(J_x - J_{x-1}) (- J2_x)``.

    Returns the maximal residual over probes and interior snapshots together
    with the snapshot spacing.
    """
    tr = trajectory
    if len(tr.times) < 3:
        return {"residual": 0.0, "dt": float("nan"), "samples": 0}
    probes = sorted({key[1] for key in tr.kernels if key[0] == "n"})

    def val(key, g):
        return float(np.real(np.trace(tr.kernels[key] @ g)))

    worst = 0.0
    dt = float(np.mean(np.diff(tr.times[1:]))) if len(tr.times) > 2 else float("nan")
    for j in range(1, len(tr.times) - 1):
        t0, t1, t2 = tr.times[j - 1], tr.times[j], tr.times[j + 1]
        g0, g1, g2 = tr.gammas[j - 1], tr.gammas[j], tr.gammas[j + 1]
        for x in probes:
            dn = (val(("n", x), g2) - val(("n", x), g0)) / (t2 - t0)
            div = val(("j", x), g1) - val(("j", x - 1), g1)
            if ("j2", x) in tr.kernels:
                div += val(("j2", x), g1)
            worst = max(worst, abs(dn + div))
    return {"residual": worst, "dt": dt, "samples": len(tr.times)}
