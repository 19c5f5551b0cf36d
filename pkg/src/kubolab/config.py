"""Plain-text (TOML) configuration for models, perturbations and sweeps.

A configuration file has up to four tables::

    [model]
    name = "laplacian_chain"      # builtin name, or "custom"
    L = 513                       # optional when a sweep picks L itself
    mu = -2.0
    t = 1.0                       # builtin parameters go here as well

    # a custom model lists its hopping blocks as (d, row, col, re, im)
    # dimension = 1
    # internal_dim = 1
    # hoppings = [[1, 0, 0, -1.0, 0.0], [-1, 0, 0, -1.0, 0.0]]

    [perturbation]
    shape = "bump"
    center = 0.0
    half_width = 1.0
    amplitude = 1.0
    height = 4.0                  # transverse extent, cylinders only

    [scaling]
    etas = [0.32, 0.16, 0.08, 0.04]
    a_rule = "const"              # const | log | table
    a = 1.0                       # const
    w = 0.5                       # log: a = w |log eta|
    table = { "0.04" = 1.0 }      # table: a per eta
    alpha = 0.5

    [run]
    beta = "20/eta"               # "<c>/eta", a number, or "inf"
    L = "auto"                    # "auto" or an odd integer
    nu = [0]
    ell = 16                      # strip width on cylinders
    step_size = 0.5               # optional
    method = "auto"
    gamma_min = 0.2
    final_rel_rms = 0.05

Unknown keys are rejected so that typos do not pass silently.
"""
from __future__ import annotations

import sys
from pathlib import Path
from typing import Mapping, Optional

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised only on old interpreters
    import tomli as tomllib

from .errors import PreconditionError
from .model import (CylinderModel2D, LatticeModel1D, _BUILTIN_PARAMS, builtin_model,
                    kernel_from_entries)
from .perturb import TestFunction, builtin_bump

_SECTIONS = {"model", "perturbation", "scaling", "run", "output"}
_PERT_KEYS = {"shape", "center", "half_width", "amplitude", "height"}
_SCALING_KEYS = {"etas", "eta", "a_rule", "a", "w", "table", "alpha"}
_RUN_KEYS = {"beta", "L", "nu", "ell", "step_size", "method", "probes", "gamma_min",
             "final_rel_rms", "switch_floor", "backend", "workers"}
_OUTPUT_KEYS = {"dir", "formats"}


def load_config(path) -> dict:
    """Read and validate a TOML configuration file."""
    p = Path(path)
    with p.open("rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise PreconditionError(f"{p}: {exc}") from None
    return validate_config(data)


def validate_config(data: Mapping) -> dict:
    data = dict(data)
    extra = set(data) - _SECTIONS
    if extra:
        raise PreconditionError(f"unknown config tables {sorted(extra)}")
    for sec, keys in (("perturbation", _PERT_KEYS), ("scaling", _SCALING_KEYS),
                      ("run", _RUN_KEYS), ("output", _OUTPUT_KEYS)):
        bad = set(data.get(sec, {})) - keys
        if bad:
            raise PreconditionError(f"unknown keys in [{sec}]: {sorted(bad)}")
    return data


def model_from_spec(spec: Mapping, L: Optional[int] = None):
    """Build a model from a ``[model]`` table, optionally overriding ``L``."""
    spec = dict(spec)
    name = spec.pop("name", None)
    if name is None:
        raise PreconditionError("[model] needs a name")
    if L is not None:
        spec["L"] = int(L)
    if "L" not in spec:
        raise PreconditionError("[model] needs L")
    if name != "custom":
        return builtin_model(name, spec)
    try:
        dim = int(spec.pop("dimension"))
        m = int(spec.pop("internal_dim"))
        rows = spec.pop("hoppings")
    except KeyError as exc:
        raise PreconditionError(f"custom model is missing {exc.args[0]!r}") from None
    Lval, mu = int(spec.pop("L")), float(spec.pop("mu", 0.0))
    label = str(spec.pop("label", "custom"))
    if spec:
        raise PreconditionError(f"unknown keys for custom model: {sorted(spec)}")
    entries = [(tuple(r[0]) if isinstance(r[0], list) else r[0], *r[1:]) for r in rows]
    kernel = kernel_from_entries(dim, m, entries)
    cls = LatticeModel1D if dim == 1 else CylinderModel2D
    return cls(kernel, Lval, mu, label)


def model_dimension(spec: Mapping) -> int:
    name = spec.get("name")
    if name == "custom":
        return int(spec.get("dimension", 1))
    if name not in _BUILTIN_PARAMS:
        raise PreconditionError(f"unknown model {name!r}")
    return 2 if name == "qwz_cylinder" else 1


def perturbation_from_spec(spec: Mapping, dimension: int = 1) -> TestFunction:
    spec = dict(spec or {})
    shape = spec.pop("shape", "bump")
    if shape != "bump":
        raise PreconditionError(f"unsupported perturbation shape {shape!r}")
    return builtin_bump(float(spec.get("center", 0.0)), float(spec.get("half_width", 1.0)),
                        float(spec.get("amplitude", 1.0)), dimension,
                        float(spec.get("height", 1.0)))
