"""Translation-invariant lattice Hamiltonians on the ring and on the cylinder.

A model is described by a finite-range hopping kernel: a sparse map from a
lattice displacement ``d`` to an ``M x M`` block, with ``block(d)`` holding
the amplitudes ``H(x; x - d)``.  From it we build

* the Bloch fiber ``H(k) = sum_d exp(-i k d) block(d)`` on the ring;
* the ``(L*M) x (L*M)`` fiber in ``x2`` for the cylinder that is periodic in
  ``x1`` and open (hoppings truncated) in ``x2``;
* position-space matrices, dense or sparse.

Basis ordering everywhere is site-major, internal-minor.  On the ring the site
index is ``i = x + L // 2`` for ``x`` in ``[-L//2, L//2]``.  On the cylinder the
flat index is ``(i1 * L + x2) * M + rho`` with ``x2`` in ``0..L-1``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Union

import numpy as np
import scipy.sparse as sp

from .errors import EvenL, KernelNotHermitian, PreconditionError, WrongDimension

Displacement = Union[int, tuple]

_HERM_TOL = 1e-12


def _canon(d, dimension: int):
    if dimension == 1:
        if isinstance(d, (tuple, list, np.ndarray)):
            if len(d) != 1:
                raise WrongDimension(f"1d kernel got displacement {d!r}")
            d = d[0]
        return int(d)
    d = tuple(int(c) for c in d)
    if len(d) != 2:
        raise WrongDimension(f"2d kernel got displacement {d!r}")
    return d


def _neg(d):
    return -d if isinstance(d, int) else tuple(-c for c in d)


@dataclass(frozen=True)
class HoppingKernel:
    """Finite-range translation-invariant hopping blocks.

    Parameters
    ----------
    dimension : int
        1 for the ring, 2 for the cylinder.
    blocks : mapping
        Displacement -> ``M x M`` complex matrix, with ``block(d) = H(x; x-d)``.
        Displacements are integers in 1d and integer pairs in 2d.
    """

    dimension: int
    blocks: Mapping[Displacement, np.ndarray]
    internal_dim: int = field(init=False)
    range: int = field(init=False)

    def __post_init__(self):
        if self.dimension not in (1, 2):
            raise WrongDimension("dimension must be 1 or 2")
        clean = {}
        M = None
        for d, b in self.blocks.items():
            b = np.atleast_2d(np.asarray(b, dtype=complex))
            if b.shape[0] != b.shape[1]:
                raise PreconditionError("hopping blocks must be square")
            if M is None:
                M = b.shape[0]
            elif b.shape[0] != M:
                raise PreconditionError("hopping blocks differ in size")
            key = _canon(d, self.dimension)
            clean[key] = clean.get(key, 0) + b
        if M is None:
            raise PreconditionError("kernel needs at least one block")
        # drop numerically empty blocks, keep the origin block always
        zero = _canon((0,) * self.dimension, self.dimension)
        clean = {d: b for d, b in clean.items() if d == zero or np.any(b != 0)}
        clean.setdefault(zero, np.zeros((M, M), complex))
        scale = max(np.linalg.norm(b, 2) for b in clean.values()) or 1.0
        for d, b in clean.items():
            partner = clean.get(_neg(d))
            if partner is None:
                partner = np.zeros_like(b)
            if np.linalg.norm(b - partner.conj().T, 2) > _HERM_TOL * scale:
                raise KernelNotHermitian(f"block({d}) != block({_neg(d)})^dagger")
        for b in clean.values():
            b.setflags(write=False)
        object.__setattr__(self, "blocks", dict(sorted(clean.items())))
        object.__setattr__(self, "internal_dim", M)
        rng = max((max(np.abs(np.atleast_1d(d))) for d in clean), default=0)
        object.__setattr__(self, "range", int(rng))

    def block(self, d) -> np.ndarray:
        d = _canon(d, self.dimension)
        b = self.blocks.get(d)
        if b is None:
            return np.zeros((self.internal_dim,) * 2, complex)
        return b

    def norm_bound(self) -> float:
        """Upper bound on the operator norm of the infinite-volume Hamiltonian."""
        return float(sum(np.linalg.norm(b, 2) for b in self.blocks.values()))

    def bloch(self, k) -> np.ndarray:
        """``sum_d exp(-i k d) block(d)`` for a 1d kernel; ``k`` may be an array."""
        if self.dimension != 1:
            raise WrongDimension("bloch() needs a 1d kernel")
        k = np.asarray(k, dtype=float)
        out = np.zeros(k.shape + (self.internal_dim,) * 2, complex)
        for d, b in self.blocks.items():
            out += np.exp(-1j * k * d)[..., None, None] * b
        return out

    def bloch_derivative(self, k) -> np.ndarray:
        """Exact ``d/dk`` of :meth:`bloch` from the finite hopping sum."""
        if self.dimension != 1:
            raise WrongDimension("bloch_derivative() needs a 1d kernel")
        k = np.asarray(k, dtype=float)
        out = np.zeros(k.shape + (self.internal_dim,) * 2, complex)
        for d, b in self.blocks.items():
            out += (-1j * d * np.exp(-1j * k * d))[..., None, None] * b
        return out


@dataclass(frozen=True)
class BlochFiber:
    k: float
    matrix: np.ndarray


def _check_L(L: int, kernel: HoppingKernel):
    if int(L) != L or L <= 0:
        raise PreconditionError(f"L must be a positive integer, got {L!r}")
    if L % 2 == 0:
        raise EvenL(f"L must be odd, got {L}")
    if L < 2 * kernel.range + 1:
        raise PreconditionError(f"L={L} too small for hopping range {kernel.range}")


@dataclass(frozen=True)
class LatticeModel1D:
    """Hopping kernel on the ring of ``L`` (odd) sites with chemical potential ``mu``."""

    kernel: HoppingKernel
    L: int
    mu: float = 0.0
    name: str = "custom"

    def __post_init__(self):
        if self.kernel.dimension != 1:
            raise WrongDimension("LatticeModel1D needs a 1d kernel")
        _check_L(self.L, self.kernel)

    dimension = 1

    @property
    def M(self) -> int:
        return self.kernel.internal_dim

    @property
    def n_orbitals(self) -> int:
        return self.L * self.M

    @property
    def half(self) -> int:
        return self.L // 2

    def sites(self) -> np.ndarray:
        return np.arange(-self.half, self.half + 1)

    def momenta(self) -> np.ndarray:
        return 2 * np.pi * np.arange(self.L) / self.L

    def site_index(self, x: int) -> int:
        return int((x + self.half) % self.L)

    def with_mu(self, mu: float) -> "LatticeModel1D":
        return LatticeModel1D(self.kernel, self.L, mu, self.name)

    def hamiltonian(self, sparse: bool = False):
        """Periodized position-space Hamiltonian ``H(x; y) = sum_n H(x + nL; y)``."""
        L, M = self.L, self.M
        rows, cols, vals = [], [], []
        i = np.arange(L)
        for d, b in self.kernel.blocks.items():
            j = (i - d) % L  # H(x; x-d)
            for r in range(M):
                for c in range(M):
                    if b[r, c] != 0:
                        rows.append(i * M + r)
                        cols.append(j * M + c)
                        vals.append(np.full(L, b[r, c]))
        H = sp.coo_matrix(
            (np.concatenate(vals) if vals else np.zeros(0),
             (np.concatenate(rows) if rows else np.zeros(0, int),
              np.concatenate(cols) if cols else np.zeros(0, int))),
            shape=(L * M, L * M),
        ).tocsr()
        return H if sparse else H.toarray()


@dataclass(frozen=True)
class CylinderModel2D:
    """Hopping kernel on an ``L x L`` cylinder: periodic in ``x1``, open in ``x2``."""

    kernel: HoppingKernel
    L: int
    mu: float = 0.0
    name: str = "custom"

    def __post_init__(self):
        if self.kernel.dimension != 2:
            raise WrongDimension("CylinderModel2D needs a 2d kernel")
        _check_L(self.L, self.kernel)

    dimension = 2

    @property
    def M(self) -> int:
        return self.kernel.internal_dim

    @property
    def n_orbitals(self) -> int:
        return self.L * self.L * self.M

    @property
    def half(self) -> int:
        return self.L // 2

    def sites(self) -> np.ndarray:
        return np.arange(-self.half, self.half + 1)

    def momenta(self) -> np.ndarray:
        return 2 * np.pi * np.arange(self.L) / self.L

    def site_index(self, x1: int, x2: int) -> int:
        if not 0 <= x2 < self.L:
            raise PreconditionError(f"row {x2} outside the strip")
        return int(((x1 + self.half) % self.L) * self.L + x2)

    def with_mu(self, mu: float) -> "CylinderModel2D":
        return CylinderModel2D(self.kernel, self.L, mu, self.name)

    def fiber_blocks(self):
        """Group blocks by vertical displacement: ``{d2: [(d1, block), ...]}``."""
        out = {}
        for (d1, d2), b in self.kernel.blocks.items():
            out.setdefault(d2, []).append((d1, b))
        return out

    def fiber(self, k) -> np.ndarray:
        """Fiber ``H(k; x2, y2)`` of shape ``(..., L*M, L*M)``; ``k`` may be an array."""
        L, M = self.L, self.M
        k = np.asarray(k, dtype=float)
        out = np.zeros(k.shape + (L * M, L * M), complex)
        for d2, items in self.fiber_blocks().items():
            b = sum(np.exp(-1j * k * d1)[..., None, None] * blk for d1, blk in items)
            for x2 in range(max(0, d2), min(L, L + d2)):
                y2 = x2 - d2
                out[..., x2 * M:(x2 + 1) * M, y2 * M:(y2 + 1) * M] = b
        return out

    def fiber_derivative(self, k) -> np.ndarray:
        L, M = self.L, self.M
        k = np.asarray(k, dtype=float)
        out = np.zeros(k.shape + (L * M, L * M), complex)
        for d2, items in self.fiber_blocks().items():
            b = sum((-1j * d1 * np.exp(-1j * k * d1))[..., None, None] * blk
                    for d1, blk in items)
            for x2 in range(max(0, d2), min(L, L + d2)):
                y2 = x2 - d2
                out[..., x2 * M:(x2 + 1) * M, y2 * M:(y2 + 1) * M] = b
        return out

    def hamiltonian(self, sparse: bool = True):
        """Position-space Hamiltonian on the cylinder (sparse by default)."""
        L, M = self.L, self.M
        rows, cols, vals = [], [], []
        i1 = np.arange(L)[:, None]
        x2 = np.arange(L)[None, :]
        for (d1, d2), b in self.kernel.blocks.items():
            j1 = (i1 - d1) % L
            y2 = x2 - d2
            ok = np.broadcast_to((y2 >= 0) & (y2 < L), (L, L))
            src = np.broadcast_to(i1 * L + x2, (L, L))[ok]
            dst = np.broadcast_to(j1 * L + y2, (L, L))[ok]
            for r in range(M):
                for c in range(M):
                    if b[r, c] != 0:
                        rows.append(src * M + r)
                        cols.append(dst * M + c)
                        vals.append(np.full(src.size, b[r, c]))
        n = L * L * M
        H = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(n, n),
        ).tocsr()
        return H if sparse else H.toarray()


Model = Union[LatticeModel1D, CylinderModel2D]


def _hermitian_check(m: np.ndarray):
    scale = max(np.linalg.norm(m, 2), 1.0)
    if np.linalg.norm(m - m.conj().T, 2) > _HERM_TOL * scale:
        raise KernelNotHermitian("fiber is not Hermitian")


def build_bloch_1d(model: LatticeModel1D, k: float) -> BlochFiber:
    """Bloch matrix ``H(k) = sum_x exp(-ikx) H(x; 0)``.

    Any real ``k`` is accepted; on ``B_L`` this is the fiber of the ring.
    """
    if model.dimension != 1:
        raise WrongDimension("build_bloch_1d needs a 1d model")
    m = model.kernel.bloch(float(k))
    _hermitian_check(m)
    return BlochFiber(float(k), m)


def build_fiber_2d(model: CylinderModel2D, k: float) -> BlochFiber:
    """Cylinder fiber with hoppings leaving ``0 <= x2 < L`` dropped."""
    if model.dimension != 2:
        raise WrongDimension("build_fiber_2d needs a cylinder model")
    m = model.fiber(float(k))
    _hermitian_check(m)
    return BlochFiber(float(k), m)


def fiber(model: Model, k):
    """Fiber matrices for either geometry (vectorized over ``k``)."""
    return model.kernel.bloch(k) if model.dimension == 1 else model.fiber(k)


def fiber_derivative(model: Model, k):
    return (model.kernel.bloch_derivative(k) if model.dimension == 1
            else model.fiber_derivative(k))


# -- built-in kernels ---------------------------------------------------------
_SX = np.array([[0, 1], [1, 0]], complex)
_SY = np.array([[0, -1j], [1j, 0]], complex)
_SZ = np.array([[1, 0], [0, -1]], complex)


def laplacian_kernel(t: float = 1.0) -> HoppingKernel:
    """Band ``2t(cos k - 1)``."""
    return HoppingKernel(1, {0: [[-2 * t]], 1: [[t]], -1: [[t]]})


def ssh_kernel(t1: float = 1.0, t2: float = 0.5) -> HoppingKernel:
    """Two-site cell, off-diagonal Bloch entries ``t1 + t2 exp(-/+ik)``."""
    return HoppingKernel(1, {
        0: [[0, t1], [t1, 0]],
        1: [[0, t2], [0, 0]],
        -1: [[0, 0], [t2, 0]],
    })


def qwz_kernel(u: float) -> HoppingKernel:
    """Chern insulator with d-vector ``(sin k1, sin k2, u + cos k1 + cos k2)``."""
    return HoppingKernel(2, {
        (0, 0): u * _SZ,
        (1, 0): 0.5 * _SZ + 0.5j * _SX,
        (-1, 0): 0.5 * _SZ - 0.5j * _SX,
        (0, 1): 0.5 * _SZ + 0.5j * _SY,
        (0, -1): 0.5 * _SZ - 0.5j * _SY,
    })


_BUILTIN_PARAMS = {
    "laplacian_chain": ({"L", "mu"}, {"t": 1.0}),
    "ssh_chain": ({"L", "mu"}, {"t1": 1.0, "t2": 0.5}),
    "qwz_cylinder": ({"L", "mu", "u"}, {}),
}


def builtin_model(name: str, params: Mapping) -> Model:
    """Construct one of ``laplacian_chain``, ``ssh_chain``, ``qwz_cylinder``."""
    if name not in _BUILTIN_PARAMS:
        raise PreconditionError(f"unknown model {name!r}; choose from {sorted(_BUILTIN_PARAMS)}")
    required, defaults = _BUILTIN_PARAMS[name]
    p = dict(defaults)
    p.update(params)
    missing = required - set(p)
    if missing:
        raise PreconditionError(f"model {name!r} missing parameters {sorted(missing)}")
    unknown = set(p) - required - set(defaults)
    if unknown:
        raise PreconditionError(f"model {name!r} got unknown parameters {sorted(unknown)}")
    L, mu = p["L"], float(p["mu"])
    if name == "laplacian_chain":
        return LatticeModel1D(laplacian_kernel(float(p["t"])), L, mu, name)
    if name == "ssh_chain":
        return LatticeModel1D(ssh_kernel(float(p["t1"]), float(p["t2"])), L, mu, name)
    return CylinderModel2D(qwz_kernel(float(p["u"])), L, mu, name)


def kernel_from_entries(dimension: int, internal_dim: int, entries) -> HoppingKernel:
    """Build a kernel from rows ``(d, row, col, re, im)``.

    ``d`` is an int in 1d and a pair in 2d.  Repeated entries add up.
    """
    blocks = {}
    for entry in entries:
        d, r, c, re, im = entry
        key = _canon(d, dimension)
        b = blocks.setdefault(key, np.zeros((internal_dim, internal_dim), complex))
        b[int(r), int(c)] += complex(float(re), float(im))
    return HoppingKernel(dimension, blocks)
