"""Sweeps over the adiabatic rate, gap fitting and report output.

A :class:`Scenario` fixes a model family, a test function and a schedule of
``eta`` values.  For each ``eta`` the harness picks the lattice size and the
temperature from the scenario rules, runs the exact dynamics, evaluates the
leading-order prediction at the same sites and records the gap.  The decay
of the gap with ``eta`` is summarized by a log-log least-squares exponent.
"""
from __future__ import annotations

import contextlib
import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .config import model_dimension, model_from_spec, perturbation_from_spec
from .dynamics import EvolutionConfig, evolve_response
from .equilibrium import EquilibriumParams
from .errors import FitDegenerate, KuboLabError, PreconditionError
from .perturb import EulerScaling, periodize
from .prediction import PredictionInput, chi_edge, chi_lin_real
from .spectral import classify_edge_modes, find_fermi_points

MIN_L = 513


# -- rules ---------------------------------------------------------------------------------
def next_odd(n: float) -> int:
    k = int(math.ceil(n - 1e-9))
    return k if k % 2 else k + 1


def L_rule(theta: float, support: float, floor: int = MIN_L) -> int:
    """Smallest odd ``L >= max(8 support / theta, floor)``."""
    return next_odd(max(8.0 * support / theta, floor))


def beta_rule(eta: float, factor: float = 20.0) -> float:
    return factor / eta


def _parse_beta(rule, eta: float) -> float:
    if isinstance(rule, (int, float)):
        return float(rule)
    s = str(rule).strip().lower()
    if s in ("inf", "infinity"):
        return math.inf
    if s.endswith("/eta"):
        return beta_rule(eta, float(s[:-4]))
    return float(s)


# -- scenario -------------------------------------------------------------------------------
@dataclass
class Scenario:
    """One sweep over ``eta``.

    ``a_rule`` is ``"const"`` (uses ``a``), ``"log"`` (``a = w |log eta|``) or
    ``"table"`` (``a_table[eta]``).  ``beta`` follows :func:`_parse_beta`;
    ``L=None`` applies :func:`L_rule`.
    """

    model: dict
    perturbation: dict = field(default_factory=dict)
    etas: tuple = (0.32, 0.16, 0.08, 0.04)
    a_rule: str = "const"
    a: float = 1.0
    w: float = 0.5
    a_table: dict = field(default_factory=dict)
    alpha: float = 0.5
    beta: object = "20/eta"
    L: Optional[int] = None
    nus: tuple = (0,)
    ell: Optional[int] = None
    probes: Optional[tuple] = None
    step_size: Optional[float] = None
    method: str = "auto"
    switch_floor: float = 1e-8
    backend: str = "auto"
    gamma_min: float = 0.2
    final_rel_rms: float = 0.05
    workers: int = 1
    name: str = "scenario"

    def __post_init__(self):
        if self.a_rule not in ("const", "log", "table"):
            raise PreconditionError("a_rule must be const, log or table")
        self.etas = tuple(float(e) for e in self.etas)
        self.nus = tuple(int(n) for n in self.nus)
        if not self.etas:
            raise PreconditionError("a scenario needs at least one eta")

    @property
    def dimension(self) -> int:
        return model_dimension(self.model)

    def a_of(self, eta: float) -> float:
        if self.a_rule == "const":
            return float(self.a)
        if self.a_rule == "log":
            return float(self.w * abs(math.log(eta)))
        for k, v in self.a_table.items():
            if abs(float(k) - eta) <= 1e-12 * eta:
                return float(v)
        raise PreconditionError(f"no a given for eta={eta} in the table")

    @classmethod
    def from_config(cls, cfg: Mapping, name: str = "scenario") -> "Scenario":
        sc = dict(cfg.get("scaling", {}))
        run = dict(cfg.get("run", {}))
        model = dict(cfg["model"])
        L = run.get("L", "auto")
        kw = dict(model=model, perturbation=dict(cfg.get("perturbation", {})),
                  etas=tuple(sc.get("etas", [sc["eta"]] if "eta" in sc else (0.32, 0.16, 0.08, 0.04))),
                  a_rule=sc.get("a_rule", "const"), a=sc.get("a", 1.0), w=sc.get("w", 0.5),
                  a_table=dict(sc.get("table", {})), alpha=sc.get("alpha", 0.5),
                  beta=run.get("beta", "20/eta"), L=None if L == "auto" else int(L),
                  nus=tuple(run.get("nu", [0])), ell=run.get("ell"),
                  probes=tuple(run["probes"]) if "probes" in run else None,
                  step_size=run.get("step_size"), method=run.get("method", "auto"),
                  switch_floor=run.get("switch_floor", 1e-8), backend=run.get("backend", "auto"),
                  gamma_min=run.get("gamma_min", 0.2), final_rel_rms=run.get("final_rel_rms", 0.05),
                  workers=int(run.get("workers", 1)), name=name)
        return cls(**kw)


# -- fitting ----------------------------------------------------------------------------------
@dataclass
class FitResult:
    gamma: float
    intercept: float
    residual: float
    stderr: float
    n_points: int
    excluded: Optional[float] = None
    converged: bool = True

    @property
    def band(self) -> tuple:
        return (self.gamma - 2 * self.stderr, self.gamma + 2 * self.stderr)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["band"] = list(self.band)
        return d


def _lsq(x, y):
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    res = y - A @ coef
    dof = max(len(x) - 2, 1)
    s2 = float(res @ res) / dof
    sxx = float(np.sum((x - x.mean()) ** 2))
    se = math.sqrt(s2 / sxx) if sxx > 0 else math.inf
    return float(coef[0]), float(coef[1]), res, se


def fit_gamma(points: Sequence) -> FitResult:
    """Least-squares exponent of ``gap ~ C eta^gamma`` on a log-log scale.

    The point with the largest ``eta`` is dropped (and reported) when it is an
    outlier against the fit of the remaining points: its deviation from that
    fit's prediction exceeds three prediction standard errors.  This needs at
    least three remaining points.  (Comparing a point's residual with the
    residual scale of a fit that includes it cannot flag anything with four
    points, since one residual never exceeds ``sqrt(n - 2)`` such scales.)
    """
    pts = sorted((float(e), float(g)) for e, g in points)
    if len(pts) < 3:
        raise FitDegenerate("the exponent fit needs at least three eta values")
    if any(g <= 0 or not math.isfinite(g) for _, g in pts):
        raise FitDegenerate("gaps must be positive and finite for a log-log fit")
    x = np.log([e for e, _ in pts])
    y = np.log([g for _, g in pts])
    slope, icpt, res, se = _lsq(x, y)
    excluded = None
    if len(pts) >= 4:
        xr, yr = x[:-1], y[:-1]
        s1, i1, r1, _ = _lsq(xr, yr)
        s_res = math.sqrt(float(r1 @ r1) / max(len(xr) - 2, 1))
        lev = 1.0 / len(xr) + (x[-1] - xr.mean()) ** 2 / float(np.sum((xr - xr.mean()) ** 2))
        dev = y[-1] - (s1 * x[-1] + i1)
        if abs(dev) > 3.0 * s_res * math.sqrt(1.0 + lev):
            excluded = pts[-1][0]
            x, y = xr, yr
            slope, icpt, res, se = s1, i1, r1, _lsq(xr, yr)[3]
    rms = float(math.sqrt(np.mean(res ** 2)))
    converged = bool(slope - 2 * (se if math.isfinite(se) else 0.0) > 0.0 and slope > 1e-6)
    return FitResult(slope, icpt, rms, se, len(x), excluded, converged)


# -- running ------------------------------------------------------------------------------------
@dataclass
class CurveTable:
    """Simulation and prediction at common probe sites."""

    x: np.ndarray
    chi_sim: np.ndarray
    chi_pred: np.ndarray

    @property
    def gap(self) -> np.ndarray:
        return self.chi_sim - self.chi_pred


@dataclass
class ComparisonReport:
    scenario: str
    records: list
    fits: dict
    passed: bool
    notes: list = field(default_factory=list)
    curves: dict = field(default_factory=dict)
    criteria: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"scenario": self.scenario, "passed": self.passed, "criteria": self.criteria,
                "fits": {str(k): (v.to_dict() if v is not None else None) for k, v in self.fits.items()},
                "records": self.records, "notes": self.notes}


@contextlib.contextmanager
def stage(name: str):
    """Tag library errors raised inside the block with the pipeline stage."""
    try:
        yield
    except KuboLabError as exc:
        if not hasattr(exc, "stage"):
            exc.stage = name
            if hasattr(exc, "add_note"):
                exc.add_note(f"stage: {name}")
        raise


def _support_radius(f) -> float:
    return f.support_radius


def run_point(s: Scenario, eta: float) -> list:
    """Simulate and predict at one ``eta``; returns one record per ``nu``."""
    a = s.a_of(eta)
    dim = s.dimension
    with stage("perturb"):
        f = perturbation_from_spec(s.perturbation, dim)
        scaling = EulerScaling(eta, a, s.alpha)
        theta = scaling.theta
    L = s.L if s.L is not None else L_rule(theta, _support_radius(f))
    with stage("model"):
        model = model_from_spec(s.model, L)
    beta = _parse_beta(s.beta, eta)
    with stage("spectral"):
        fermi = find_fermi_points(model)
        if dim == 2 and len(fermi):
            fermi = classify_edge_modes(model, fermi)
    with stage("perturb"):
        pot = periodize(f, scaling, L)
    cfg = EvolutionConfig(switch_floor=s.switch_floor, step_size=s.step_size, method=s.method,
                          backend=s.backend)
    params = EquilibriumParams(beta, model.mu)
    ell = s.ell if dim == 2 else None
    out = []
    for nu in s.nus:
        with stage("dynamics"):
            curve = evolve_response(model, pot, scaling, params, cfg, nu,
                                    probes=s.probes, ell=ell, support=f.support)
        with stage("prediction"):
            inp = PredictionInput(fermi, f, scaling, min(nu, 1), edge=(dim == 2), ell=ell)
            pred = chi_edge(inp, curve.positions) if dim == 2 else chi_lin_real(inp, curve.positions)
            pred = np.atleast_1d(pred)
        gap = curve.values - pred
        scale = float(np.max(np.abs(pred))) if pred.size else 0.0
        rms = float(np.sqrt(np.mean(gap ** 2))) if gap.size else 0.0
        out.append({
            "eta": eta, "a": a, "theta": theta, "L": L,
            "beta": "inf" if math.isinf(beta) else beta, "nu": nu,
            "rms_gap": rms, "max_gap": float(np.max(np.abs(gap))) if gap.size else 0.0,
            "pred_scale": scale, "rel_rms": rms / scale if scale > 0 else None,
            "n_probes": int(curve.positions.size), "diagnostics": curve.diagnostics,
            "config_hash": curve.metadata.get("config_hash"),
            "_curve": CurveTable(np.asarray(curve.positions), np.asarray(curve.values), pred),
        })
    return out


def _run_point_star(args):
    return run_point(*args)


def run_scenario(s: Scenario, progress=None) -> ComparisonReport:
    """Run every ``eta`` of the scenario and assemble the comparison report."""
    etas = sorted(s.etas, reverse=True)
    if s.workers > 1:
        with ProcessPoolExecutor(max_workers=s.workers) as ex:
            results = list(ex.map(_run_point_star, [(s, e) for e in etas]))
    else:
        results = []
        for e in etas:
            results.append(run_point(s, e))
            if progress:
                progress(e, results[-1])
    records, curves = [], {}
    for recs in results:
        for r in recs:
            curves[(r["eta"], r["nu"])] = r.pop("_curve")
            records.append(r)
    fits, notes, criteria = {}, [], {}
    passed = True
    for nu in s.nus:
        rs = [r for r in records if r["nu"] == nu]
        gaps = [(r["eta"], r["rms_gap"]) for r in rs]
        try:
            fit = fit_gamma(gaps)
            if fit.excluded is not None:
                notes.append(f"nu={nu}: eta={fit.excluded} excluded from the exponent fit")
            if not fit.converged:
                notes.append(f"nu={nu}: fitted exponent {fit.gamma:.3g} does not indicate convergence")
        except FitDegenerate as exc:
            fit = None
            notes.append(f"nu={nu}: exponent fit rejected ({exc})")
        fits[nu] = fit
        ordered = [g for _, g in sorted(gaps, reverse=True)]
        all_zero = all(g == 0 for g in ordered)
        monotone = all(b < a for a, b in zip(ordered, ordered[1:])) if len(ordered) > 1 else True
        final = min(rs, key=lambda r: r["eta"])
        rel = final["rel_rms"]
        c = {"monotone": monotone or all_zero,
             "gamma": None if fit is None else fit.gamma,
             "gamma_ok": all_zero or (fit is not None and fit.gamma > s.gamma_min),
             "final_rel_rms": rel,
             "final_ok": all_zero or (rel is not None and rel <= s.final_rel_rms)}
        if all_zero:
            notes.append(f"nu={nu}: all gaps vanish")
        c["passed"] = bool(c["monotone"] and c["gamma_ok"] and c["final_ok"])
        criteria[str(nu)] = c
        passed = passed and c["passed"]
    return ComparisonReport(s.name, records, fits, passed, notes, curves, criteria)


# -- output -----------------------------------------------------------------------------------------
def _fmt(v) -> str:
    return format(float(v), ".17g")


def curve_csv(table: CurveTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "chi_sim", "chi_pred", "gap"])
    for x, s_, p_, g in zip(table.x, table.chi_sim, table.chi_pred, table.gap):
        w.writerow([int(x), _fmt(s_), _fmt(p_), _fmt(g)])
    return buf.getvalue()


def read_curve_csv(path) -> CurveTable:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    if rows[0] != ["x", "chi_sim", "chi_pred", "gap"]:
        raise PreconditionError("not a curve CSV")
    body = rows[1:]
    x = np.array([int(r[0]) for r in body], int)
    return CurveTable(x, np.array([float(r[1]) for r in body]), np.array([float(r[2]) for r in body]))


def _report_csv(report: ComparisonReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["eta", "nu", "a", "L", "beta", "rms_gap", "max_gap", "pred_scale"])
    for r in report.records:
        w.writerow([_fmt(r["eta"]), r["nu"], _fmt(r["a"]), r["L"], r["beta"], _fmt(r["rms_gap"]),
                    _fmt(r["max_gap"]), _fmt(r["pred_scale"])])
    return buf.getvalue()


def _svg_chart(series: dict, title: str, width: int = 640, height: int = 400) -> str:
    """Minimal line chart; ``series`` maps labels to ``(x, y)`` arrays."""
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"]
    pad = 50
    xs = np.concatenate([np.asarray(v[0], float) for v in series.values()] + [np.zeros(1)])
    ys = np.concatenate([np.asarray(v[1], float) for v in series.values()] + [np.zeros(1)])
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys.min()), float(ys.max())
    x1 = x1 if x1 > x0 else x0 + 1.0
    y1 = y1 if y1 > y0 else y0 + 1.0

    def px(x):
        return pad + (x - x0) / (x1 - x0) * (width - 2 * pad)

    def py(y):
        return height - pad - (y - y0) / (y1 - y0) * (height - 2 * pad)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'viewBox="0 0 {width} {height}">',
             f'<rect width="{width}" height="{height}" fill="white"/>',
             f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="14">{title}</text>',
             f'<line x1="{pad}" y1="{py(0.0):.2f}" x2="{width - pad}" y2="{py(0.0):.2f}" stroke="#aaa"/>',
             f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="#000"/>',
             f'<text x="{pad - 5}" y="{py(y1):.2f}" text-anchor="end" font-size="10">{y1:.3g}</text>',
             f'<text x="{pad - 5}" y="{py(y0):.2f}" text-anchor="end" font-size="10">{y0:.3g}</text>',
             f'<text x="{pad}" y="{height - pad + 15}" font-size="10">{x0:.3g}</text>',
             f'<text x="{width - pad}" y="{height - pad + 15}" text-anchor="end" font-size="10">{x1:.3g}</text>']
    for i, (label, (x, y)) in enumerate(series.items()):
        c = colors[i % len(colors)]
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(np.asarray(x, float), np.asarray(y, float)))
        if pts:
            parts.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{pts}"/>')
        parts.append(f'<text x="{width - pad - 5}" y="{pad + 15 * i}" text-anchor="end" '
                     f'font-size="11" fill="{c}">{label}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit(obj, path, fmt: str) -> None:
    """Write a curve table or a report as ``csv``, ``json`` or ``svg``."""
    path = Path(path)
    if fmt not in ("csv", "json", "svg"):
        raise PreconditionError(f"unknown format {fmt!r}")
    if isinstance(obj, CurveTable):
        if fmt == "csv":
            text = curve_csv(obj)
        elif fmt == "json":
            text = json.dumps({"x": [int(v) for v in obj.x], "chi_sim": [float(v) for v in obj.chi_sim],
                               "chi_pred": [float(v) for v in obj.chi_pred],
                               "gap": [float(v) for v in obj.gap]}, indent=2) + "\n"
        else:
            text = _svg_chart({"chi_sim": (obj.x, obj.chi_sim), "chi_pred": (obj.x, obj.chi_pred),
                               "gap": (obj.x, obj.gap)}, "response")
    elif isinstance(obj, ComparisonReport):
        if fmt == "json":
            text = json.dumps(obj.to_dict(), indent=2, default=_json_default) + "\n"
        elif fmt == "csv":
            text = _report_csv(obj)
        else:
            series = {}
            for nu in sorted({r["nu"] for r in obj.records}):
                rs = sorted((r for r in obj.records if r["nu"] == nu), key=lambda r: r["eta"])
                series[f"log rms gap, nu={nu}"] = (np.log([r["eta"] for r in rs]),
                                                   np.log([max(r["rms_gap"], 1e-300) for r in rs]))
            text = _svg_chart(series, f"{obj.scenario}: gap versus eta (log-log)")
    else:
        raise PreconditionError(f"cannot emit objects of type {type(obj).__name__}")
    path.write_text(text)


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o).__name__}")
