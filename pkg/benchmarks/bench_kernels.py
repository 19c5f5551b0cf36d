"""Compare the compiled stencil with the numpy fallback.

Usage::

    python benchmarks/bench_kernels.py [--repeat 20]

For each test case the script applies the full step operator
``c_h (H + lam V) psi + c_id psi + c_prev prev`` with both backends, checks
that they agree to 1e-12, and prints the median wall time per call.
"""
from __future__ import annotations

import argparse
import statistics
import time

import numpy as np

from kubolab import _stencil
from kubolab.model import builtin_model

CASES = [
    ("laplacian_chain", {"L": 4001, "mu": -2.0}, 16),
    ("ssh_chain", {"L": 2001, "mu": 0.8}, 16),
    ("qwz_cylinder", {"L": 65, "mu": 0.0, "u": -1.0}, 8),
    ("qwz_cylinder", {"L": 129, "mu": 0.0, "u": -1.0}, 4),
]


def _time(fn, repeat):
    fn()
    samples = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples)


def run(repeat: int = 20) -> list[dict]:
    rng = np.random.default_rng(0)
    rows = []
    for name, params, nvec in CASES:
        model = builtin_model(name, params)
        st_np = _stencil.Stencil(model, backend="numpy")
        shape = st_np.shape + (nvec,)
        psi = rng.normal(size=shape) + 1j * rng.normal(size=shape)
        prev = rng.normal(size=shape) + 1j * rng.normal(size=shape)
        pot = rng.normal(size=st_np.shape[:2])
        kw = dict(lam=0.3, c_h=-2j, c_id=0.5, prev=prev, c_prev=1.0)
        ref = st_np.apply(psi, pot, **kw)
        row = {"case": f"{name} L={params['L']} nvec={nvec}",
               "numpy_ms": 1e3 * _time(lambda: st_np.apply(psi, pot, **kw), repeat)}
        if _stencil.BACKEND == "cython":
            st_cy = _stencil.Stencil(model, backend="cython")
            err = float(np.max(np.abs(st_cy.apply(psi, pot, **kw) - ref)))
            if err > 1e-12:
                raise AssertionError(f"backends disagree on {row['case']}: {err:.2e}")
            row["cython_ms"] = 1e3 * _time(lambda: st_cy.apply(psi, pot, **kw), repeat)
            row["speedup"] = row["numpy_ms"] / row["cython_ms"]
            row["max_diff"] = err
        rows.append(row)
    return rows


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args(argv)
    rows = run(args.repeat)
    print(f"compiled backend available: {_stencil.BACKEND == 'cython'}")
    print(f"{'case':36s} {'numpy ms':>10s} {'cython ms':>10s} {'speedup':>8s} {'max diff':>9s}")
    for r in rows:
        if "cython_ms" in r:
            print(f"{r['case']:36s} {r['numpy_ms']:10.3f} {r['cython_ms']:10.3f} "
                  f"{r['speedup']:8.1f} {r['max_diff']:9.1e}")
        else:
            print(f"{r['case']:36s} {r['numpy_ms']:10.3f} {'-':>10s} {'-':>8s} {'-':>9s}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
