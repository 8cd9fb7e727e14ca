"""Experiment configuration: YAML input, validation and canonical JSON.

A configuration is a nested mapping; every key has a default listed in
:data:`DEFAULTS`. Unknown keys and invalid values raise
:class:`ConfigError` naming the dotted field path and, when known, the
line in the source file. The resolved configuration is re-emitted as
canonical JSON (sorted keys, no whitespace) and hashed with SHA-256.
"""

from __future__ import annotations

import copy
import hashlib
import json
import re
from pathlib import Path

import yaml

from .eos import EosParams
from .grid import build_grid
from .solver import SolverConfig

DEFAULTS: dict = {
    "grid": {"dim": 1, "extents": [1.0], "cells": [64]},
    "eos": {"a": 1.0, "gamma": 1.4},
    "solver": {
        "mu": 0.01,
        "lambda": 0.05,
        "cfl": 0.4,
        "t_end": 1.0,
        "artificial_dissipation": 1.0,
        "dt": None,
        "max_halvings": 8,
        "energy_tol": 1e-8,
    },
    "boundary": {"preset": "wall", "params": {}},
    "initial": {"preset": "wave", "params": {}},
    "output_times": {"start": 0.0, "stop": 1.0, "count": 11},
    "ensemble": {
        "sampler": "fourier",
        "n_atoms": 8,
        "seed": 0,
        "density_amplitude": 0.1,
        "momentum_amplitude": 0.1,
        "modes": 3,
        "basis_size": 4,
        "observables": ["energy", "r1"],
    },
    "transport": {"method": "exact", "epsilon": 1e-3, "max_iter": 20000, "time": None, "dump_plan": False},
    "continuity": {"deltas": [0.5, 0.25, 0.125, 0.0625, 0.03125, 0.015625], "T": 1.0, "L": 2.0, "amplitude": 0.1, "n_times": 9},
    "selection": {"lambda": 1.0, "dissipation_levels": [1.0, 1.5, 2.0], "lambda_sweep": [0.5, 1.0, 2.0]},
    "mms": {"resolutions": []},
}

SAMPLERS = ("fourier", "dirac")
OBSERVABLES = ("energy", "r1", "w1")

# keys whose values are free-form mappings
_OPEN = {"boundary.params", "initial.params"}


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads exponent floats without a dot, such as ``1e-8``."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(
        r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
        |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
        |\.[0-9_]+(?:[eE][-+][0-9]+)?
        |[-+]?\.(?:inf|Inf|INF)
        |\.(?:nan|NaN|NAN))$""",
        re.X,
    ),
    list("-+0123456789."),
)


class ConfigError(ValueError):
    def __init__(self, path: str, message: str, line: int | None = None):
        where = f" (line {line})" if line else ""
        super().__init__(f"{path}{where}: {message}")
        self.path = path
        self.line = line


def _line_map(text: str) -> dict:
    """Map dotted key paths to 1-based source lines."""
    out: dict = {}
    try:
        root = yaml.compose(text, Loader=_Loader)
    except yaml.YAMLError:
        return out

    def walk(node, prefix):
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                path = f"{prefix}.{k.value}" if prefix else str(k.value)
                out[path] = k.start_mark.line + 1
                walk(v, path)

    if root is not None:
        walk(root, "")
    return out


def _merge(defaults: dict, user: dict, prefix: str, lines: dict) -> dict:
    out = copy.deepcopy(defaults)
    for key, value in user.items():
        path = f"{prefix}.{key}" if prefix else str(key)
        if key not in defaults:
            raise ConfigError(path, "unknown key", lines.get(path))
        if path in _OPEN:
            if not isinstance(value, dict):
                raise ConfigError(path, "expected a mapping", lines.get(path))
            out[key] = copy.deepcopy(value)
        elif isinstance(defaults[key], dict) and key != "output_times":
            if not isinstance(value, dict):
                raise ConfigError(path, "expected a mapping", lines.get(path))
            out[key] = _merge(defaults[key], value, path, lines)
        else:
            out[key] = _coerce(defaults[key], value, path, lines)
    return out


def _coerce(default, value, path, lines):
    """Match the type of a numeric default; ints stay ints, floats become floats."""
    if isinstance(default, bool) or default is None or value is None:
        return value
    if isinstance(default, (int, float)):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}", lines.get(path))
        if isinstance(default, float):
            return float(value)
        if value != int(value):
            raise ConfigError(path, f"expected an integer, got {value!r}", lines.get(path))
        return int(value)
    return value


def _output_times(spec, lines) -> list:
    import numpy as np

    if isinstance(spec, dict):
        unknown = set(spec) - {"start", "stop", "count"}
        if unknown:
            raise ConfigError("output_times", f"unknown keys {sorted(unknown)}", lines.get("output_times"))
        count = int(spec.get("count", 11))
        if count < 2:
            raise ConfigError("output_times.count", "need at least 2 output times", lines.get("output_times.count"))
        return [float(t) for t in np.linspace(float(spec.get("start", 0.0)), float(spec["stop"]), count)]
    if isinstance(spec, list) and all(isinstance(t, (int, float)) for t in spec):
        return [float(t) for t in spec]
    raise ConfigError("output_times", "expected a list of times or {start, stop, count}", lines.get("output_times"))


def resolve(user: dict, lines: dict | None = None) -> dict:
    """Fill defaults and validate; returns the resolved configuration."""
    lines = lines or {}
    if not isinstance(user, dict):
        raise ConfigError("<root>", "configuration must be a mapping")
    cfg = _merge(DEFAULTS, user, "", lines)
    times = _output_times(cfg["output_times"], lines)
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ConfigError("output_times", "times must be strictly increasing", lines.get("output_times"))
    cfg["output_times"] = times
    g = cfg["grid"]
    g["extents"] = [float(e) for e in _as_list(g["extents"])]
    g["cells"] = [int(c) for c in _as_list(g["cells"])]
    if times[-1] > cfg["solver"]["t_end"]:
        cfg["solver"]["t_end"] = times[-1]
    # validate by building the objects
    for section, build in (("grid", lambda: build_grid_from(cfg)), ("eos", lambda: eos_from(cfg)), ("solver", lambda: solver_from(cfg))):
        try:
            build()
        except (ValueError, TypeError) as exc:
            raise ConfigError(section, str(exc), lines.get(section)) from exc
    ens = cfg["ensemble"]
    if int(ens["n_atoms"]) < 1:
        raise ConfigError("ensemble.n_atoms", "must be at least 1", lines.get("ensemble.n_atoms"))
    if ens["sampler"] not in SAMPLERS:
        raise ConfigError("ensemble.sampler", f"must be one of {SAMPLERS}", lines.get("ensemble.sampler"))
    unknown = [o for o in ens["observables"] if o not in OBSERVABLES]
    if unknown:
        raise ConfigError("ensemble.observables", f"unknown observables {unknown}; choose from {OBSERVABLES}", lines.get("ensemble.observables"))
    if cfg["transport"]["method"] not in ("exact", "entropic"):
        raise ConfigError("transport.method", "must be 'exact' or 'entropic'", lines.get("transport.method"))
    if not cfg["selection"]["lambda"] > 0:
        raise ConfigError("selection.lambda", "must be positive", lines.get("selection.lambda"))
    return cfg


def _as_list(v):
    return v if isinstance(v, list) else [v]


def load(path) -> dict:
    """Read and resolve a YAML (or JSON) configuration file."""
    text = Path(path).read_text()
    try:
        user = yaml.load(text, Loader=_Loader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        raise ConfigError("<file>", f"cannot parse: {getattr(exc, 'problem', exc)}", line) from exc
    return resolve(user or {}, _line_map(text))


def canonical_json(cfg: dict) -> str:
    return json.dumps(cfg, sort_keys=True, separators=(",", ":"))


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(canonical_json(cfg).encode()).hexdigest()


def build_grid_from(cfg: dict):
    g = cfg["grid"]
    return build_grid(g["dim"], g["extents"], g["cells"])


def eos_from(cfg: dict) -> EosParams:
    return EosParams(float(cfg["eos"]["a"]), float(cfg["eos"]["gamma"]))


def solver_from(cfg: dict, **overrides) -> SolverConfig:
    s = dict(cfg["solver"])
    kw = dict(
        mu=float(s["mu"]),
        lam=float(s["lambda"]),
        eos=eos_from(cfg),
        cfl=float(s["cfl"]),
        t_end=float(s["t_end"]),
        artificial_dissipation=float(s["artificial_dissipation"]),
        dt=None if s["dt"] is None else float(s["dt"]),
        max_halvings=int(s["max_halvings"]),
        energy_tol=float(s["energy_tol"]),
    )
    kw.update(overrides)
    return SolverConfig(**kw)
