"""Command line interface: ``kubolab <subcommand> [options]``.

Exit codes: 0 success, 2 tolerance failure, 3 precondition or assumption
failure, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from ._stencil import set_threads
from .config import load_config, model_from_spec, model_dimension, perturbation_from_spec
from .errors import KuboLabError, PreconditionError, ToleranceFailure

EXIT_OK, EXIT_TOL, EXIT_PRE, EXIT_NUM = 0, 2, 3, 4


# -- shared option groups -------------------------------------------------------------------
def _global_parent(suppress: bool) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", default=d, help="TOML configuration file")
    p.add_argument("--out-dir", default=d if suppress else ".", help="directory for output files")
    p.add_argument("--threads", type=int, default=d, help="OpenMP threads for the stencil kernel")
    p.add_argument("--format", choices=("csv", "json", "svg"), default=d,
                   help="output format where a choice exists")
    return p


def _model_parent() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--model", help="laplacian_chain | ssh_chain | qwz_cylinder")
    p.add_argument("--L", type=int, help="number of sites (odd)")
    p.add_argument("--mu", type=float, help="chemical potential")
    p.add_argument("--param", action="append", default=[], metavar="KEY=VALUE",
                   help="extra model parameter, e.g. t=1.0 or u=-1 (repeatable)")
    return p


def _response_parent() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--eta", type=float, help="adiabatic rate")
    p.add_argument("--a", type=float, help="ratio theta / eta")
    p.add_argument("--alpha", type=float, help="momentum cutoff exponent")
    p.add_argument("--beta", help='inverse temperature, a number or "inf"')
    p.add_argument("--ell", type=int, help="strip width on cylinders")
    p.add_argument("--nu", type=int, help="0 density, 1 current (2: vertical current)")
    p.add_argument("--center", type=float, help="bump center")
    p.add_argument("--half-width", type=float, help="bump half width")
    p.add_argument("--amplitude", type=float, help="bump amplitude")
    p.add_argument("--height", type=float, help="bump height in x2 (cylinders)")
    p.add_argument("--out", help="output CSV path (default: stdout)")
    return p


def _coerce(v: str):
    for cast in (int, float):
        try:
            return cast(v)
        except ValueError:
            pass
    return v


def _model_spec(args, cfg) -> dict:
    spec = dict(cfg.get("model", {}))
    if args.model:
        if spec.get("name") not in (None, args.model):
            spec = {}
        spec["name"] = args.model
    if args.L is not None:
        spec["L"] = args.L
    if args.mu is not None:
        spec["mu"] = args.mu
    for kv in args.param:
        if "=" not in kv:
            raise PreconditionError(f"--param expects KEY=VALUE, got {kv!r}")
        k, v = kv.split("=", 1)
        spec[k.strip()] = _coerce(v.strip())
    if "name" not in spec:
        raise PreconditionError("no model given (use --model or a [model] table)")
    return spec


def _pick(args_val, table: dict, key, default):
    if args_val is not None:
        return args_val
    return table.get(key, default)


def _response_setup(args, cfg):
    from .perturb import EulerScaling
    spec = _model_spec(args, cfg)
    dim = model_dimension(spec)
    pert = dict(cfg.get("perturbation", {}))
    for key, val in (("center", args.center), ("half_width", args.half_width),
                     ("amplitude", args.amplitude), ("height", args.height)):
        if val is not None:
            pert[key] = val
    f = perturbation_from_spec(pert, dim)
    sc, run = cfg.get("scaling", {}), cfg.get("run", {})
    eta = _pick(args.eta, sc, "eta", None)
    if eta is None:
        etas = sc.get("etas")
        eta = min(etas) if etas else None
    if eta is None:
        raise PreconditionError("no eta given")
    a = float(_pick(args.a, sc, "a", 1.0))
    alpha = float(_pick(args.alpha, sc, "alpha", 0.5))
    scaling = EulerScaling(float(eta), a, alpha)
    from .harness import L_rule, _parse_beta
    if "L" not in spec or spec["L"] == "auto":
        spec["L"] = L_rule(scaling.theta, f.support_radius)
    model = model_from_spec(spec)
    beta = _parse_beta(_pick(args.beta, run, "beta", "20/eta"), scaling.eta)
    nu = int(_pick(args.nu, run, "nu", 0) if not isinstance(run.get("nu"), list) or args.nu is not None
             else run["nu"][0])
    ell = _pick(args.ell, run, "ell", None)
    if dim == 2 and ell is None:
        ell = 16
    return model, f, scaling, beta, nu, ell, run


def _write(text: str, out, out_dir) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    p = Path(out)
    if not p.is_absolute() and out_dir:
        p = Path(out_dir) / p
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(text)


def _fmt(v) -> str:
    return format(float(v), ".17g")


def _xchi_csv(x, chi, meta: dict) -> str:
    lines = ["# " + json.dumps(meta, sort_keys=True, default=str), "x,chi"]
    lines += [f"{int(a)},{_fmt(b)}" for a, b in zip(x, chi)]
    return "\n".join(lines) + "\n"


# -- subcommands ------------------------------------------------------------------------------
def cmd_bands(args, cfg) -> int:
    from .spectral import band_structure
    model = model_from_spec(_model_spec(args, cfg))
    bs = band_structure(model, args.k_count)
    e = bs.branch_energies()
    rows = ["k,band_index,energy"]
    for j, k in enumerate(bs.k_grid):
        for b in range(e.shape[1]):
            rows.append(f"{_fmt(k)},{b},{_fmt(e[j, b])}")
    _write("\n".join(rows) + "\n", args.out, args.out_dir)
    return EXIT_OK


def cmd_fermi(args, cfg) -> int:
    from .spectral import check_net_chirality, classify_edge_modes, find_fermi_points
    model = model_from_spec(_model_spec(args, cfg))
    fd = find_fermi_points(model)
    if model.dimension == 2 and len(fd):
        fd = classify_edge_modes(model, fd)
    d = fd.to_dict()
    d["net_chirality"] = check_net_chirality(fd)
    _write(json.dumps(d, indent=2) + "\n", args.out, args.out_dir)
    return EXIT_OK


def cmd_respond(args, cfg) -> int:
    from .dynamics import EvolutionConfig, evolve_response
    from .equilibrium import EquilibriumParams
    from .perturb import periodize
    model, f, scaling, beta, nu, ell, run = _response_setup(args, cfg)
    pot = periodize(f, scaling, model.L)
    if args.dump_potential:
        x = pot.sites
        vals = pot.samples if pot.dimension == 1 else pot.samples[:, 0]
        text = "x,mu\n" + "".join(f"{int(a)},{_fmt(b)}\n" for a, b in zip(x, vals))
        _write(text, args.dump_potential, args.out_dir)
    cfg_ev = EvolutionConfig(step_size=args.step_size if args.step_size else run.get("step_size"),
                             method=args.method or run.get("method", "auto"))
    t0 = time.time()
    curve = evolve_response(model, pot, scaling, EquilibriumParams(beta, model.mu), cfg_ev, nu,
                            ell=ell if model.dimension == 2 else None, support=f.support)
    meta = dict(curve.metadata)
    meta.update({"diagnostics": curve.diagnostics, "seconds": round(time.time() - t0, 3)})
    _write(_xchi_csv(curve.positions, curve.values, meta), args.out, args.out_dir)
    return EXIT_OK


def cmd_predict(args, cfg) -> int:
    from .dynamics import default_probes
    from .prediction import PredictionInput, chi_edge, chi_lin_real
    from .spectral import classify_edge_modes, find_fermi_points
    model, f, scaling, beta, nu, ell, run = _response_setup(args, cfg)
    fd = find_fermi_points(model)
    if model.dimension == 2 and len(fd):
        fd = classify_edge_modes(model, fd)
    x = default_probes(model, f.support, scaling.theta)
    inp = PredictionInput(fd, f, scaling, min(nu, 1), edge=model.dimension == 2, ell=ell)
    chi = chi_edge(inp, x) if model.dimension == 2 else chi_lin_real(inp, x)
    meta = {"eta": scaling.eta, "a": scaling.a, "theta": scaling.theta, "L": model.L,
            "nu": nu, "model": model.name, "kind": "prediction"}
    _write(_xchi_csv(x, np.atleast_1d(chi), meta), args.out, args.out_dir)
    return EXIT_OK


def cmd_bubble(args, cfg) -> int:
    from .diagrammatics import ChiralPropagator, LoopSpec, bubble_closed, loop_Bn
    ch = ChiralPropagator(v=args.v, delta=args.delta)
    q = (args.q0, args.q)
    closed = bubble_closed(args.v, q)
    res = loop_Bn(ch, LoopSpec(((args.theta * args.q0, args.theta * args.q),), tol=args.tol))
    out = {"closed": [closed.real, closed.imag], "numeric": [res.value.real, res.value.imag],
           "quadrature_error": res.error, "difference": abs(res.value - closed),
           "theta": args.theta, "alpha": args.alpha,
           "regime_bound": args.theta ** (1 - args.alpha)}
    _write(json.dumps(out, indent=2) + "\n", args.out, args.out_dir)
    return EXIT_OK


def cmd_cancel(args, cfg) -> int:
    from .diagrammatics import ChiralPropagator, LoopSpec, cancellation_check
    if args.momenta_file:
        moms = json.loads(Path(args.momenta_file).read_text())
    elif args.momenta:
        moms = [[float(c) for c in part.split(",")] for part in args.momenta.split(";")]
    else:
        raise PreconditionError("give --momenta-file or --momenta")
    if isinstance(moms, dict):
        moms = moms["momenta"]
    if args.n is not None and len(moms) != args.n:
        raise PreconditionError(f"--n {args.n} does not match {len(moms)} momenta")
    rep = cancellation_check(ChiralPropagator(v=args.v, delta=args.delta),
                             LoopSpec(tuple(tuple(m) for m in moms), tol=args.tol))
    _write(json.dumps(rep.to_dict(), indent=2) + "\n", args.out, args.out_dir)
    return EXIT_OK if rep.passed else EXIT_TOL


def cmd_edge(args, cfg) -> int:
    from .dynamics import EvolutionConfig, evolve_response
    from .equilibrium import EquilibriumParams
    from .model import builtin_model
    from .perturb import EulerScaling, builtin_bump, periodize
    from .prediction import PredictionInput, edge_conductance
    from .spectral import classify_edge_modes, find_fermi_points
    model = builtin_model("qwz_cylinder", {"L": args.L, "mu": args.mu, "u": args.u})
    fd = find_fermi_points(model)
    if len(fd):
        fd = classify_edge_modes(model, fd)
    f = builtin_bump(0.0, args.half_width, 1.0, 2, args.height)
    scaling = EulerScaling(args.eta, args.a)
    inp = PredictionInput(fd, f, scaling, 1, edge=True, ell=args.ell)
    out = {"u": args.u, "L": args.L, "modes": fd.to_dict()["points"],
           "edge_conductance": edge_conductance(inp)}
    if args.simulate:
        pot = periodize(f, scaling, model.L)
        cfg_ev = EvolutionConfig(step_size=args.step_size, method="window")
        curve = evolve_response(model, pot, scaling, EquilibriumParams(args.beta, model.mu), cfg_ev, 1,
                                probes=[0], ell=args.ell)
        out["measured"] = float(curve.values[0])
        out["diagnostics"] = curve.diagnostics
    _write(json.dumps(out, indent=2, default=float) + "\n", args.out, args.out_dir)
    return EXIT_OK


def cmd_sweep(args, cfg) -> int:
    from .harness import Scenario, emit, run_scenario
    if not cfg:
        raise PreconditionError("sweep needs --config")
    name = Path(args.config).stem
    s = Scenario.from_config(cfg, name)
    if args.quiet:
        progress = None
    else:
        def progress(eta, recs):
            for r in recs:
                print(f"eta={eta:g} nu={r['nu']} L={r['L']} rms_gap={r['rms_gap']:.4e}",
                      file=sys.stderr, flush=True)
    rep = run_scenario(s, progress)
    out_dir = Path(args.out_dir or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    fmt = args.format or "json"
    emit(rep, out_dir / f"{name}_report.{fmt}", fmt)
    for (eta, nu), table in sorted(rep.curves.items()):
        emit(table, out_dir / f"{name}_eta{eta:g}_nu{nu}.csv", "csv")
    print(json.dumps(rep.criteria, indent=2))
    return EXIT_OK if rep.passed else EXIT_TOL


def cmd_selftest(args, cfg) -> int:
    from .selftest import run_selftest
    results = run_selftest(oracle=args.oracle)
    width = max(len(r[0]) for r in results)
    ok = True
    for name, passed, detail in results:
        ok = ok and passed
        print(f"{'PASS' if passed else 'FAIL'}  {name.ljust(width)}  {detail}")
    if not ok:
        raise ToleranceFailure("self test failed")
    return EXIT_OK


# -- parser -----------------------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    glob = _global_parent(False)
    sub_glob = _global_parent(True)
    mp, rp = _model_parent(), _response_parent()
    parser = argparse.ArgumentParser(prog="kubolab", parents=[glob],
                                     description="Adiabatic linear response of free lattice fermions.")
    parser.add_argument("--version", action="version", version=f"kubolab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bands", parents=[sub_glob, mp], help="band energies as CSV")
    p.add_argument("--k-count", type=int, default=256)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bands)

    p = sub.add_parser("fermi", parents=[sub_glob, mp], help="Fermi points as JSON")
    p.add_argument("--out")
    p.set_defaults(func=cmd_fermi)

    p = sub.add_parser("respond", parents=[sub_glob, mp, rp], help="simulate the response")
    p.add_argument("--dump-potential", metavar="PATH", help="also write x,mu samples")
    p.add_argument("--step-size", type=float)
    p.add_argument("--method", choices=("auto", "frame", "window"))
    p.set_defaults(func=cmd_respond)

    p = sub.add_parser("predict", parents=[sub_glob, mp, rp], help="leading-order prediction")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("bubble", parents=[sub_glob], help="bubble loop versus its closed form")
    p.add_argument("--v", type=float, default=1.0)
    p.add_argument("--q0", type=float, default=0.0)
    p.add_argument("--q", type=float, default=1.0)
    p.add_argument("--theta", type=float, default=1e-3)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--delta", type=float, default=1.0)
    p.add_argument("--tol", type=float, default=1e-7)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bubble)

    p = sub.add_parser("cancel", parents=[sub_glob], help="loop cancellation report")
    p.add_argument("--n", type=int)
    p.add_argument("--momenta-file", help="JSON list of [p0, p] pairs")
    p.add_argument("--momenta", help='inline "p0,p;p0,p"')
    p.add_argument("--v", type=float, default=1.0)
    p.add_argument("--delta", type=float, default=1.0)
    p.add_argument("--tol", type=float, default=1e-7)
    p.add_argument("--out")
    p.set_defaults(func=cmd_cancel)

    p = sub.add_parser("edge", parents=[sub_glob], help="edge modes and conductance of the QWZ cylinder")
    p.add_argument("--u", type=float, default=-1.0)
    p.add_argument("--L", type=int, default=65)
    p.add_argument("--mu", type=float, default=0.0)
    p.add_argument("--ell", type=int, default=16)
    p.add_argument("--eta", type=float, default=0.05)
    p.add_argument("--a", type=float, default=8.0)
    p.add_argument("--beta", type=float, default=400.0)
    p.add_argument("--half-width", type=float, default=1.0)
    p.add_argument("--height", type=float, default=4.0)
    p.add_argument("--simulate", action="store_true", help="also run the dynamics at the bump center")
    p.add_argument("--step-size", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_edge)

    p = sub.add_parser("sweep", parents=[sub_glob], help="run a scenario from --config")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("selftest", parents=[sub_glob], help="quick internal consistency checks")
    p.add_argument("--oracle", action="store_true", help="include the exact Fock-space comparisons")
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for key, default in (("config", None), ("out_dir", "."), ("threads", None), ("format", None)):
        if not hasattr(args, key):
            setattr(args, key, default)
    try:
        if args.threads:
            set_threads(args.threads)
        cfg = load_config(args.config) if args.config else {}
        return int(args.func(args, cfg))
    except KuboLabError as exc:
        where = f" [stage: {exc.stage}]" if hasattr(exc, "stage") else ""
        print(f"kubolab: {type(exc).__name__}: {exc}{where}", file=sys.stderr)
        return exc.exit_code if exc.exit_code in (EXIT_TOL, EXIT_PRE) else EXIT_NUM
    except OSError as exc:
        print(f"kubolab: {exc}", file=sys.stderr)
        return EXIT_PRE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
