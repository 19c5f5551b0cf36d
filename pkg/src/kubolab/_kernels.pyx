# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled stencil kernel for the translation-invariant hopping operator.

The state is stored as ``psi[i1, x2, rho, v]`` (C order).  The first lattice
direction is periodic, the second is open; a 1d ring is the case ``L2 = 1``.
"""
from cython.parallel cimport prange
cimport cython

ctypedef double complex cplx


def stencil_apply(const cplx[:, :, :, ::1] psi,
                  cplx[:, :, :, ::1] out,
                  const long long[:, ::1] disp,
                  const cplx[:, :, ::1] blocks,
                  const double[:, ::1] pot,
                  double lam,
                  cplx c_h,
                  cplx c_id,
                  const cplx[:, :, :, ::1] prev,
                  cplx c_prev,
                  int use_prev,
                  int num_threads=1):
    """``out = c_h (H psi + lam pot psi) + c_id psi + c_prev prev`` in place."""
    cdef Py_ssize_t L1 = psi.shape[0]
    cdef Py_ssize_t L2 = psi.shape[1]
    cdef Py_ssize_t M = psi.shape[2]
    cdef Py_ssize_t nv = psi.shape[3]
    cdef Py_ssize_t nd = disp.shape[0]
    cdef Py_ssize_t i1, x2, a, b, v, d, j1, y2
    cdef long long d1, d2
    cdef cplx acc, h, w
    if num_threads < 1:
        num_threads = 1
    for i1 in prange(L1, nogil=True, schedule="static", num_threads=num_threads):
        for x2 in range(L2):
            for a in range(M):
                w = lam * pot[i1, x2]
                for v in range(nv):
                    acc = w * psi[i1, x2, a, v]
                    out[i1, x2, a, v] = acc
            for d in range(nd):
                d1 = disp[d, 0]
                d2 = disp[d, 1]
                y2 = x2 - d2
                if y2 < 0 or y2 >= L2:
                    continue
                j1 = (i1 - d1) % L1
                if j1 < 0:
                    j1 = j1 + L1
                for a in range(M):
                    for b in range(M):
                        h = blocks[d, a, b]
                        if h.real == 0.0 and h.imag == 0.0:
                            continue
                        for v in range(nv):
                            out[i1, x2, a, v] = out[i1, x2, a, v] + h * psi[j1, y2, b, v]
            for a in range(M):
                for v in range(nv):
                    acc = c_h * out[i1, x2, a, v] + c_id * psi[i1, x2, a, v]
                    if use_prev:
                        acc = acc + c_prev * prev[i1, x2, a, v]
                    out[i1, x2, a, v] = acc
    return out
