"""Fast internal consistency checks used by ``kubolab selftest``.

Each check returns ``(name, passed, detail)``.  The whole default set runs in a
few seconds; ``oracle=True`` adds exact many-body comparisons on a five-site ring.
"""
from __future__ import annotations

import numpy as np

from .diagrammatics import (ChiralPropagator, LoopSpec, bubble_closed, cumulant_wick, loop_Bn,
                            ward_residual)
from .dynamics import continuity_residual
from .equilibrium import EquilibriumParams, snap_eta
from .model import builtin_model
from .perturb import EulerScaling, builtin_bump
from .prediction import PredictionInput, chi_lin_fourier, chi_lin_real
from .spectral import check_net_chirality, find_fermi_points


def _ward():
    rng = np.random.default_rng(7)
    ch = ChiralPropagator(v=1.0, delta=1.0)
    k = (rng.uniform(-3, 3, 2000), rng.uniform(-3, 3, 2000))
    p = (rng.uniform(-1, 1, 2000), rng.uniform(-1, 1, 2000))
    r = float(np.max(np.abs(ward_residual(ch, k, p))))
    return "ward identity", r <= 1e-13, f"max residual {r:.2e}"


def _bubble():
    ch = ChiralPropagator(v=1.0, delta=1.0)
    th = 1e-2
    val = loop_Bn(ch, LoopSpec(((0.0, th),))).value
    ref = bubble_closed(1.0, (0.0, 1.0))
    rel = abs(val - ref) / abs(ref)
    return "bubble closed form", rel < 1e-2, f"relative error {rel:.2e} at theta={th}"


def _chirality():
    m = builtin_model("laplacian_chain", {"L": 101, "mu": -2.0})
    c = check_net_chirality(find_fermi_points(m))
    return "net chirality", c == 0, f"sum of signs {c}"


def _continuity():
    m = builtin_model("ssh_chain", {"L": 11, "mu": 0.0})
    r = max(continuity_residual(m, x) for x in range(-2, 3))
    return "lattice continuity", r <= 1e-12, f"max residual {r:.2e}"


def _routes():
    m = builtin_model("laplacian_chain", {"L": 65, "mu": -2.0})
    inp = PredictionInput(find_fermi_points(m), builtin_bump(), EulerScaling(0.1, 1.0), 1)
    x = np.arange(-20, 21, 4)
    d = float(np.max(np.abs(chi_lin_fourier(inp, x) - chi_lin_real(inp, x))))
    return "prediction routes", d < 1e-9, f"max difference {d:.2e}"


def _wick_routes():
    m = builtin_model("laplacian_chain", {"L": 7, "mu": -0.7})
    par = EquilibriumParams(2.0, m.mu)
    mom = [(snap_eta(2.0, 0.5), 2 * np.pi / 7)]
    a = cumulant_wick(m, par, 1, mom)
    b = cumulant_wick(m, par, 1, mom, route="matsubara")
    return "residue vs Matsubara", abs(a - b) < 1e-8, f"difference {abs(a - b):.2e}"


def _oracle():
    from .dynamics import observable_kernel
    from .fockoracle import FockSpace, fourier_cumulant, gibbs_state
    m = builtin_model("laplacian_chain", {"L": 5, "mu": -0.7})
    beta = 2.0
    sp = FockSpace.from_model(m)
    st = gibbs_state(sp, beta, m.mu)
    eta, p = snap_eta(beta, 0.5), 2 * np.pi / 5
    xs = range(-2, 3)
    A = sp.quadratic(sum(np.exp(-1j * p * x) * observable_kernel(m, 0, x).matrix.toarray() for x in xs))
    B = sp.quadratic(sum(np.exp(1j * p * x) * observable_kernel(m, 1, x).matrix.toarray() for x in xs))
    d = abs(fourier_cumulant(st, A, B, eta, 5) - cumulant_wick(m, EquilibriumParams(beta, m.mu), 1, [(eta, p)]))
    return "Fock-space cumulant", d < 1e-8, f"difference {d:.2e}"


def run_selftest(oracle: bool = False):
    checks = [_ward, _bubble, _chirality, _continuity, _routes, _wick_routes]
    if oracle:
        checks.append(_oracle)
    return [c() for c in checks]
