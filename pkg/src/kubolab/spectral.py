"""Band structures, Fermi points, velocities and edge-mode classification."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.optimize import brentq, linear_sum_assignment, minimize_scalar

from .errors import (
    AssumptionBViolated,
    DegeneracyViolated,
    NumericalFailure,
    PreconditionError,
    TransversalityViolated,
    WrongDimension,
)
from .model import fiber, fiber_derivative

TWO_PI = 2 * np.pi
V_MIN = 1e-6          # transversality threshold, energy * site
EDGE_WEIGHT = 0.99    # minimal weight inside the fit window for an edge mode
_AMP_FLOOR = 1e-14    # amplitudes below this are treated as numerical zero


def _eigh(mats):
    try:
        return np.linalg.eigh(mats)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise NumericalFailure(f"diagonalization failed: {exc}") from exc


def _match(va, ea, vb, eb):
    """Assignment of eigenvectors ``va`` (columns) onto ``vb`` by overlap.

    Returns ``perm`` with ``perm[i]`` the column of ``vb`` continuing column
    ``i`` of ``va``.  Energy proximity breaks ties.
    """
    ov = np.abs(va.conj().T @ vb) ** 2
    de = np.abs(ea[:, None] - eb[None, :])
    cost = -ov + 1e-6 * de / (1.0 + de.max())
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty(len(rows), int)
    perm[rows] = cols
    return perm


@dataclass(frozen=True)
class BandStructure:
    """Dense spectra on a uniform grid.

    ``energies[j]`` are ascending at ``k_grid[j]``; ``vectors[j]`` holds the
    matching orthonormal eigenvectors as columns.  ``branches[j, b]`` is the
    sorted index at ``k_grid[j]`` of the continuously tracked branch ``b``.
    """

    k_grid: np.ndarray
    energies: np.ndarray
    vectors: np.ndarray
    branches: np.ndarray
    gap_window: float

    def branch_energies(self) -> np.ndarray:
        """Energies reordered along tracked branches, shape ``(nk, nbands)``."""
        return np.take_along_axis(self.energies, self.branches, axis=1)


def band_structure(model, k_count: int = 256, gap_window: Optional[float] = None) -> BandStructure:
    """Diagonalize the fiber on ``k = 2 pi j / k_count`` and track branches."""
    if k_count < 8:
        raise PreconditionError("k_count must be at least 8")
    k = TWO_PI * np.arange(k_count) / k_count
    e, v = _eigh(fiber(model, k))
    nb = e.shape[1]
    branches = np.empty((k_count, nb), int)
    branches[0] = np.arange(nb)
    for j in range(1, k_count):
        perm = _match(v[j - 1], e[j - 1], v[j], e[j])
        branches[j] = perm[branches[j - 1]]
    if gap_window is None:
        gap_window = _window_from_energies(e, model.mu)
    return BandStructure(k, e, v, branches, float(gap_window))


def _window_from_energies(e: np.ndarray, mu: float, touch: float = 1e-9) -> float:
    lo, hi = e.min(axis=0), e.max(axis=0)
    crossing = (lo <= mu + touch) & (hi >= mu - touch)
    dist = np.where(hi < mu, mu - hi, lo - mu)[~crossing]
    if dist.size == 0:
        return 1.0
    return float(min(1.0, 0.5 * dist.min()))


def default_window(model, k_count: int = 256) -> float:
    """Half the distance from ``mu`` to the nearest band not crossing it, capped at 1."""
    k = TWO_PI * (np.arange(k_count) + 0.5) / k_count
    e = np.linalg.eigvalsh(fiber(model, np.concatenate([k, [0.0, np.pi]])))
    return _window_from_energies(e, model.mu)


# -- Fermi points ---------------------------------------------------------------
@dataclass(frozen=True)
class FermiPoint:
    omega: int
    k_F: float
    v: float
    band_index: int
    xi: np.ndarray
    side: str = "bulk"
    decay_rate: float = float("nan")
    v_fh: float = float("nan")

    @property
    def chirality(self) -> int:
        return int(np.sign(self.v))


@dataclass(frozen=True)
class FermiData:
    points: tuple = ()
    dimension: int = 1
    mu: float = 0.0
    window: float = 1.0
    tol: float = 1e-12

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    @property
    def velocities(self) -> np.ndarray:
        return np.array([p.v for p in self.points], float)

    @property
    def momenta(self) -> np.ndarray:
        return np.array([p.k_F for p in self.points], float)

    def subset(self, side: str) -> "FermiData":
        return replace(self, points=tuple(p for p in self.points if p.side == side))

    def to_dict(self) -> dict:
        return {
            "dimension": self.dimension,
            "mu": self.mu,
            "window": self.window,
            "tol": self.tol,
            "points": [
                {"omega": p.omega, "k_F": p.k_F, "v": p.v, "v_feynman_hellmann": p.v_fh,
                 "band_index": p.band_index, "side": p.side,
                 "decay_rate": None if np.isnan(p.decay_rate) else p.decay_rate}
                for p in self.points
            ],
        }


class _Branch:
    """Evaluate a single tracked branch near a reference eigenvector."""

    def __init__(self, model):
        self.model = model

    def eig(self, k):
        return _eigh(fiber(self.model, float(k)))

    def follow(self, k, ref):
        e, v = self.eig(k)
        i = int(np.argmax(np.abs(ref.conj() @ v)))
        return e[i], v[:, i], i, e, v


def find_fermi_points(model, delta: Optional[float] = None, tol: float = 1e-12,
                      k_count: Optional[int] = None) -> FermiData:
    """Locate all crossings ``e(k_F) = mu`` of continuously tracked branches.

    Parameters
    ----------
    model : LatticeModel1D or CylinderModel2D
    delta : float, optional
        Half-width of the energy window around ``mu``; defaults to
        :func:`default_window`.
    tol : float
        Accuracy of ``|e(k_F) - mu|``.
    k_count : int, optional
        Coarse grid used to bracket crossings.  The grid is shifted by half a
        step so that the symmetric momenta 0 and pi are never grid points.
    """
    mu = float(model.mu)
    if delta is None:
        delta = default_window(model)
    if delta <= 0:
        raise PreconditionError("window half-width must be positive")
    if k_count is None:
        k_count = 256 if model.dimension == 1 else 128
    k = TWO_PI * (np.arange(k_count) + 0.5) / k_count
    e, v = _eigh(fiber(model, k))
    br = _Branch(model)
    crossings = []
    for j in range(k_count):
        j2 = (j + 1) % k_count
        ka, kb = k[j], k[j] + (TWO_PI / k_count)
        ea, eb = e[j] - mu, e[j2] - mu
        ia = np.flatnonzero(np.abs(ea) < delta)
        ib = np.flatnonzero(np.abs(eb) < delta)
        if ia.size == 0 or ib.size == 0:
            continue
        # widen by one index on each side so branches at the window edge still match
        ia = np.arange(max(ia.min() - 1, 0), min(ia.max() + 2, e.shape[1]))
        ib = np.arange(max(ib.min() - 1, 0), min(ib.max() + 2, e.shape[1]))
        ov = np.abs(v[j][:, ia].conj().T @ v[j2][:, ib]) ** 2
        rows, cols = linear_sum_assignment(-ov)
        for r, c in zip(rows, cols):
            a, b = ia[r], ib[c]
            if ov[r, c] < 0.5:
                continue
            if np.sign(ea[a]) * np.sign(eb[b]) < 0 and abs(ea[a]) < delta and abs(eb[b]) < delta:
                crossings.append((ka, kb, v[j][:, a], v[j2][:, b], int(a)))
    points = []
    for ka, kb, va, vb, idx in crossings:
        points.append(_refine_crossing(br, model, mu, ka, kb, va, vb, idx, tol))
    _check_tangency(br, model, mu, k, e, delta)
    points.sort(key=lambda p: (p.k_F, p.v))
    points = [replace(p, omega=i) for i, p in enumerate(points)]
    return FermiData(tuple(points), model.dimension, mu, float(delta), float(tol))


def _refine_crossing(br, model, mu, ka, kb, va, vb, idx, tol):
    mid = 0.5 * (ka + kb)

    def f(kk):
        ref = va if kk <= mid else vb
        return br.follow(kk, ref)[0] - mu

    kF = brentq(f, ka, kb, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    eF, xi, i, evals, evecs = br.follow(kF, va if kF <= mid else vb)
    if abs(eF - mu) > tol:
        # polish with a secant step on the tracked branch
        raise NumericalFailure(f"Fermi point at k={kF} only reached |e-mu|={abs(eF - mu):.2e}")

    # centered differences with Richardson extrapolation; references from the
    # bracketing endpoints keep the branch identity across degeneracies
    def D(h):
        return (br.follow(kF + h, vb)[0] - br.follow(kF - h, va)[0]) / (2 * h)

    h = min(1e-3, 0.25 * (kb - ka))
    d1, d2 = D(h), D(h / 2)
    v = (4 * d2 - d1) / 3
    d3 = D(h / 4)
    v2 = (4 * d3 - d2) / 3
    if abs(v2 - v) > 1e-6 * max(1.0, abs(v)):
        raise NumericalFailure("velocity did not converge under stencil refinement")
    v = v2

    # non-degeneracy; a degenerate pair is resolved when the velocity operator
    # separates it at first order (edge branches of opposite edges)
    dH = fiber_derivative(model, kF)
    gap_thr = max(10 * tol, 1e-9)
    cluster = np.flatnonzero(np.abs(evals - eF) < gap_thr)
    if cluster.size > 1:
        P = evecs[:, cluster]
        w, u = np.linalg.eigh(P.conj().T @ dH @ P)
        pick = int(np.argmin(np.abs(w - v)))
        others = np.delete(w, pick)
        if np.min(np.abs(others - w[pick])) < 1e-6 * max(1.0, abs(v)):
            raise DegeneracyViolated(f"degenerate crossing at k_F={kF:.6f} not lifted by the velocity")
        xi = P @ u[:, pick]
    v_fh = float(np.real(xi.conj() @ dH @ xi))
    if abs(v) < V_MIN:
        raise TransversalityViolated(f"|v|={abs(v):.3e} below {V_MIN} at k_F={kF:.6f}")
    return FermiPoint(0, float(kF % TWO_PI), float(v), int(idx), xi, "bulk", float("nan"), v_fh)


def _check_tangency(br, model, mu, k, e, delta):
    """Raise when a branch touches ``mu`` with zero slope."""
    nk = k.size
    h = TWO_PI / nk
    d = np.abs(e - mu)
    s = np.sign(e - mu)
    for n in range(e.shape[1]):
        for j in range(nk):
            jm, jp = (j - 1) % nk, (j + 1) % nk
            if d[j, n] > delta or d[j, n] > d[jm, n] or d[j, n] > d[jp, n]:
                continue
            if s[jm, n] != s[jp, n] or s[j, n] != s[jm, n]:
                continue

            def g(kk, n=n):
                return abs(np.linalg.eigvalsh(fiber(model, kk))[n] - mu)

            res = minimize_scalar(g, bounds=(k[j] - h, k[j] + h), method="bounded",
                                  options={"xatol": 1e-12})
            if res.fun > 1e-9:
                continue
            evals, evecs = br.eig(res.x)
            cl = np.flatnonzero(np.abs(evals - mu) < 1e-6)
            P = evecs[:, cl]
            w = np.linalg.eigvalsh(P.conj().T @ fiber_derivative(model, res.x) @ P)
            if np.min(np.abs(w)) < V_MIN:
                raise TransversalityViolated(
                    f"band {n} touches mu at k={res.x % TWO_PI:.6f} with zero slope")


def check_net_chirality(fermi: FermiData) -> int:
    """Sum of ``sign(v)`` over the Fermi points."""
    return int(sum(p.chirality for p in fermi.points))


# -- edge modes -------------------------------------------------------------------
def _side_fit(amp: np.ndarray, window: int):
    """Fit ``log amp`` over the first ``window`` rows; return (slope, weight, ok)."""
    seg = amp[:window]
    weight = float(np.sum(seg ** 2))
    good = seg > _AMP_FLOOR
    rows = np.flatnonzero(good)
    if rows.size == 0:
        return 0.0, weight, False
    if rows.size == 1 or rows.max() < 1:
        # amplitude vanishes to machine precision after the first row
        slope = np.log(_AMP_FLOOR / seg[rows[0]])
        return float(slope), weight, True
    A = np.vstack([rows, np.ones_like(rows)]).T.astype(float)
    coef, *_ = np.linalg.lstsq(A, np.log(seg[rows]), rcond=None)
    slope = float(coef[0])
    if rows.size < min(window, amp.size):
        # part of the window sits below the floor: the decay is at least this fast
        slope = min(slope, np.log(_AMP_FLOOR / seg[rows[0]]) / max(rows.max() + 1, 1))
    return slope, weight, True


def classify_edge_modes(model, fermi: FermiData, decay_fit_window: int = 8,
                        weight_threshold: float = EDGE_WEIGHT) -> FermiData:
    """Assign ``side`` in {lower, upper} and a decay rate to cylinder Fermi points.

    The row profile ``||xi(x2)||`` is fitted by an exponential measured from
    the lower edge and from the upper edge.  A point is an edge mode of a
    side when that fit decays and the window holds at least
    ``weight_threshold`` of the norm.
    """
    if model.dimension != 2 or fermi.dimension != 2:
        raise WrongDimension("edge classification needs a cylinder model")
    L, M = model.L, model.M
    w = int(decay_fit_window)
    if not 1 <= w <= L:
        raise PreconditionError("decay_fit_window outside 1..L")
    out = []
    for p in fermi.points:
        amp = np.linalg.norm(p.xi.reshape(L, M), axis=1)
        s_lo, w_lo, ok_lo = _side_fit(amp, w)
        s_up, w_up, ok_up = _side_fit(amp[::-1], w)
        lower = ok_lo and s_lo < 0 and w_lo >= weight_threshold
        upper = ok_up and s_up < 0 and w_up >= weight_threshold
        if lower == upper:
            raise AssumptionBViolated(
                f"Fermi point k_F={p.k_F:.6f} is not localized at a single edge "
                f"(weights lower={w_lo:.3f}, upper={w_up:.3f})")
        side, slope = ("lower", s_lo) if lower else ("upper", s_up)
        out.append(replace(p, side=side, decay_rate=float(-slope)))
    return replace(fermi, points=tuple(out))


def edge_weight(model, point: FermiPoint, rows: int) -> float:
    """Norm of ``xi`` in the ``rows`` rows next to the point's edge."""
    amp2 = np.sum(np.abs(point.xi.reshape(model.L, model.M)) ** 2, axis=1)
    if point.side == "upper":
        amp2 = amp2[::-1]
    return float(amp2[:rows].sum())
