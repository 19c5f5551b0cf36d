"""Hopping-operator stencil with a compiled core and a numpy fallback.

Both implementations compute

    out = c_h * (H psi + lam * pot * psi) + c_id * psi + c_prev * prev

for ``psi`` of shape ``(L1, L2, M, nvec)``: periodic in the first index, open
(hoppings truncated) in the second.  Setting ``KUBOLAB_PURE_PYTHON=1`` in the
environment forces the fallback.
"""
from __future__ import annotations

import os

import numpy as np

try:  # pragma: no cover - depends on the build
    if os.environ.get("KUBOLAB_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("fallback forced by environment")
    from ._kernels import stencil_apply as _compiled
    BACKEND = "cython"
except ImportError:  # pragma: no cover
    _compiled = None
    BACKEND = "numpy"

_THREADS = 1


def set_threads(n: int) -> None:
    """Thread count used by the compiled kernel (ignored by the fallback)."""
    global _THREADS
    _THREADS = max(1, int(n))


def get_threads() -> int:
    return _THREADS


def stencil_apply_numpy(psi, out, disp, blocks, pot, lam, c_h, c_id, prev=None, c_prev=0.0):
    """Reference implementation with ``np.roll`` along the periodic axis."""
    L2 = psi.shape[1]
    acc = (lam * pot)[:, :, None, None] * psi
    for (d1, d2), b in zip(disp, blocks):
        d1, d2 = int(d1), int(d2)
        if abs(d2) >= L2:
            continue
        shifted = np.roll(psi, d1, axis=0)  # shifted[i1] = psi[i1 - d1]
        if d2 == 0:
            acc += np.einsum("ab,ijbv->ijav", b, shifted)
        elif d2 > 0:
            # out row x2 reads psi row x2 - d2
            acc[:, d2:] += np.einsum("ab,ijbv->ijav", b, shifted[:, :L2 - d2])
        else:
            acc[:, :L2 + d2] += np.einsum("ab,ijbv->ijav", b, shifted[:, -d2:])
    res = c_h * acc + c_id * psi
    if prev is not None:
        res = res + c_prev * prev
    out[...] = res
    return out


class Stencil:
    """Packed hopping data for repeated application.

    Parameters
    ----------
    model : LatticeModel1D or CylinderModel2D
    backend : {"auto", "cython", "numpy"}
    """

    def __init__(self, model, backend: str = "auto"):
        kern = model.kernel
        if model.dimension == 1:
            self.shape = (model.L, 1, model.M)
            items = [((d, 0), b) for d, b in kern.blocks.items()]
        else:
            self.shape = (model.L, model.L, model.M)
            items = list(kern.blocks.items())
        self.disp = np.ascontiguousarray([d for d, _ in items], dtype=np.int64).reshape(-1, 2)
        self.blocks = np.ascontiguousarray([b for _, b in items], dtype=complex)
        if backend == "auto":
            backend = BACKEND
        if backend == "cython" and _compiled is None:
            raise ImportError("compiled kernel not available")
        self.backend = backend

    def lattice(self, vecs: np.ndarray) -> np.ndarray:
        """View a flat ``(N, nvec)`` block as ``(L1, L2, M, nvec)``."""
        return np.ascontiguousarray(vecs).reshape(self.shape + (vecs.shape[-1],))

    def apply(self, psi, pot, lam=0.0, c_h=1.0, c_id=0.0, prev=None, c_prev=0.0, out=None):
        psi = np.ascontiguousarray(psi, dtype=complex)
        pot = np.ascontiguousarray(pot, dtype=float).reshape(self.shape[:2])
        if out is None:
            out = np.empty_like(psi)
        if self.backend == "cython":
            use_prev = prev is not None
            prev_arr = np.ascontiguousarray(prev, dtype=complex) if use_prev else psi
            _compiled(psi, out, self.disp, self.blocks, pot, float(lam), complex(c_h),
                      complex(c_id), prev_arr, complex(c_prev), int(use_prev), _THREADS)
            return out
        return stencil_apply_numpy(psi, out, self.disp, self.blocks, pot, lam, c_h, c_id,
                                   prev, c_prev)
