"""Experiment configuration: TOML parsing, strict validation and default resolution.

A config file has a top-level ``experiment`` key and the tables ``grid``,
``potentials`` (``v``, ``w``, ``v2``), ``solver``, ``params`` and ``output``.
Every key is checked against a fixed schema before any computation starts;
unknown keys are errors. :meth:`ExperimentConfig.resolved` returns the fully
defaulted form that the run manifest embeds.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import ConfigError, ReportIOError
from .grid import BOUNDARIES, Grid, make_grid
from .hamiltonian import PotentialSpec

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

EXPERIMENTS = ("solve", "density", "hk-verify", "carleman", "opineq", "ucp-scan")
_NUM = (int, float)
_ANY = object()

# name -> (types, default); default _REQ means the key must be given
_REQ = object()

GRID_SCHEMA = {"d": (int, _REQ), "N": (int, _REQ), "m": (int, _REQ), "L": (_NUM, _REQ),
               "boundary": (str, "periodic")}
SOLVER_SCHEMA = {"k": (int, 1), "tol": (_NUM, 1e-9), "seed": (int, 0), "max_iter": (int, 2000)}
OUTPUT_SCHEMA = {"dir": (str, "ucplab-out"), "formats": (list, ["json", "csv"])}

PARAM_SCHEMAS = {
    "solve": {"kinetic": (str, "auto")},
    "density": {"kinetic": (str, "auto")},
    "hk-verify": {"kinetic": (str, "auto"), "identity_threshold": (_NUM, 1e-6), "theta": (_NUM, 1e-8)},
    "carleman": {
        "d": (int, 1), "N": (int, 1), "s": (_NUM, 0.75), "xi": (_NUM, None), "delta": (_NUM, 0.1),
        "tau_range": (list, None), "centers": (list, None), "dphis": (list, [0.1, 0.2, 0.4, 0.8]),
        "tilts": (list, None), "ells": (list, None), "m": (int, None), "L": (_NUM, None),
    },
    "opineq": {
        "delta": (_NUM, 0.1), "R": (_NUM, 1.0), "c": (_NUM, 1.0), "center": (list, None),
        "sampling_trials": (int, 0), "split_M": (list, []), "split_p": (_NUM, 2.0), "split_s": (_NUM, None),
        "split_q": (_NUM, 2.0), "sqrt_trials": (int, 0), "sqrt_dim": (int, 16), "propagation": (bool, False),
        "propagation_m": (int, 64),
    },
    "ucp-scan": {
        "kinetic": (str, "fd"), "eps_list": (list, None), "center": (list, None), "threshold": (_NUM, 12.0),
        "identity_k": (list, []), "bound_factor": (_NUM, 4.0), "bootstrap_taus": (list, []),
        "delta": (_NUM, 0.1),
    },
}

NEEDS_POTENTIAL = {"solve", "density", "hk-verify", "opineq", "ucp-scan"}


def _type_ok(value, types) -> bool:
    if types is _ANY:
        return True
    if isinstance(value, bool):
        return types is bool or (isinstance(types, tuple) and bool in types)
    if types is float or types == _NUM:
        return isinstance(value, _NUM) and math.isfinite(float(value))
    return isinstance(value, types)


def _section(raw: dict, schema: dict, where: str) -> dict:
    if not isinstance(raw, dict):
        raise ConfigError(f"[{where}] must be a table")
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ConfigError(f"unknown key(s) in [{where}]: {', '.join(unknown)}")
    out = {}
    for key, (types, default) in schema.items():
        if key in raw:
            val = raw[key]
            if not _type_ok(val, types):
                raise ConfigError(f"{where}.{key} has the wrong type: {val!r}")
            out[key] = float(val) if types == _NUM else copy.deepcopy(val)
        elif default is _REQ:
            raise ConfigError(f"missing required key {where}.{key}")
        else:
            out[key] = copy.deepcopy(default)
    return out


@dataclass
class ExperimentConfig:
    experiment: str
    grid: Optional[dict]
    potentials: dict
    solver: dict
    params: dict
    output: dict
    source: Optional[str] = None
    _specs: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_dict(cls, raw: dict, experiment: Optional[str] = None, source: Optional[str] = None):
        """Validate a parsed config; ``experiment`` (from the command line) must agree with the file."""
        if not isinstance(raw, dict):
            raise ConfigError("config must be a table")
        unknown = sorted(set(raw) - {"experiment", "grid", "potentials", "solver", "params", "output"})
        if unknown:
            raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
        exp = raw.get("experiment", experiment)
        if exp is None:
            raise ConfigError("missing key 'experiment'")
        if exp not in EXPERIMENTS:
            raise ConfigError(f"experiment must be one of {list(EXPERIMENTS)}, got {exp!r}")
        if experiment is not None and exp != experiment:
            raise ConfigError(f"command line asks for {experiment!r} but the config file says {exp!r}")

        grid = None
        if "grid" in raw or exp in NEEDS_POTENTIAL:
            grid = _section(raw.get("grid", {}), GRID_SCHEMA, "grid")
            if grid["boundary"] not in BOUNDARIES:
                raise ConfigError(f"grid.boundary must be one of {list(BOUNDARIES)}, got {grid['boundary']!r}")
            # raises InvalidParameter (config) or BudgetExceeded (resource limit)
            make_grid(grid["d"], grid["N"], grid["m"], grid["L"], grid["boundary"])

        pots_raw = raw.get("potentials", {})
        if not isinstance(pots_raw, dict):
            raise ConfigError("[potentials] must be a table")
        unknown = sorted(set(pots_raw) - {"v", "w", "v2"})
        if unknown:
            raise ConfigError(f"unknown key(s) in [potentials]: {', '.join(unknown)}")
        specs = {}
        for key, val in pots_raw.items():
            try:
                specs[key] = PotentialSpec.from_dict(val)
            except ConfigError as exc:
                raise ConfigError(f"potentials.{key}: {exc}") from exc
        if exp in NEEDS_POTENTIAL and "v" not in specs:
            raise ConfigError("missing required key potentials.v")
        if exp == "hk-verify" and "v2" not in specs:
            raise ConfigError("hk-verify needs potentials.v2")

        solver = _section(raw.get("solver", {}), SOLVER_SCHEMA, "solver")
        if solver["k"] < 1 or solver["tol"] <= 0 or solver["max_iter"] < 1 or solver["seed"] < 0:
            raise ConfigError("solver needs k >= 1, tol > 0, max_iter >= 1 and seed >= 0")
        params = _section(raw.get("params", {}), PARAM_SCHEMAS[exp], "params")
        _check_params(exp, params)
        output = _section(raw.get("output", {}), OUTPUT_SCHEMA, "output")
        bad = [f for f in output["formats"] if f not in ("json", "csv", "gnuplot")]
        if bad:
            raise ConfigError(f"output.formats has unknown entries {bad}")
        pots = {k: specs[k].to_dict() for k in sorted(specs)}
        return cls(exp, grid, pots, solver, params, output, source, specs)

    @classmethod
    def load(cls, path, experiment: Optional[str] = None) -> "ExperimentConfig":
        """Read a TOML config, or the ``config`` block embedded in a run manifest (``.json``)."""
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ReportIOError(f"cannot read config {path}: {exc.strerror or exc}") from exc
        if path.suffix == ".json":
            try:
                raw = json.loads(text)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
            raw = raw.get("config", raw) if isinstance(raw, dict) else raw
        else:
            try:
                raw = tomllib.loads(text)
            except tomllib.TOMLDecodeError as exc:
                raise ConfigError(f"{path}: invalid TOML ({exc})") from exc
        return cls.from_dict(raw, experiment, str(path))

    def spec(self, name: str) -> Optional[PotentialSpec]:
        return self._specs.get(name)

    def make_grid(self) -> Optional[Grid]:
        if self.grid is None:
            return None
        g = self.grid
        return make_grid(g["d"], g["N"], g["m"], g["L"], g["boundary"])

    def resolved(self) -> dict:
        """Fully defaulted config; loading it back gives an identical config."""
        out = {"experiment": self.experiment, "potentials": copy.deepcopy(self.potentials),
               "solver": dict(self.solver), "params": copy.deepcopy(self.params), "output": dict(self.output)}
        if self.grid is not None:
            out["grid"] = dict(self.grid)
        # None means "use the built-in default"; it is dropped so the copy stays valid TOML-like input
        out["params"] = {k: v for k, v in out["params"].items() if v is not None}
        return out

    def config_hash(self) -> str:
        """SHA-256 of the resolved config without the output directory."""
        r = self.resolved()
        r["output"] = {k: v for k, v in r["output"].items() if k != "dir"}
        blob = json.dumps(r, sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(blob.encode()).hexdigest()


def _check_params(exp: str, p: dict):
    def positive(*keys):
        for k in keys:
            if p.get(k) is not None and not p[k] > 0:
                raise ConfigError(f"params.{k} must be > 0, got {p[k]!r}")

    def numbers(key):
        val = p.get(key)
        if val is None:
            return
        if not all(isinstance(x, _NUM) and not isinstance(x, bool) and math.isfinite(x) for x in val):
            raise ConfigError(f"params.{key} must be a list of numbers")

    if "kinetic" in p and p["kinetic"] not in ("auto", "spectral", "fd"):
        raise ConfigError(f"params.kinetic must be 'auto', 'spectral' or 'fd', got {p['kinetic']!r}")
    if "delta" in p and not 0.0 <= p["delta"] <= 0.25:
        raise ConfigError(f"params.delta must lie in [0, 1/4], got {p['delta']}")
    for key in ("tau_range", "centers", "dphis", "tilts", "eps_list", "center", "split_M", "bootstrap_taus"):
        numbers(key)
    if exp == "carleman":
        positive("d", "N", "m", "L")
        if not 0.0 <= p["s"] <= 2.0:
            raise ConfigError(f"params.s must lie in [0, 2], got {p['s']}")
        if p["ells"] is not None and not all(isinstance(x, int) and x >= 0 for x in p["ells"]):
            raise ConfigError("params.ells must be a list of nonnegative integers")
    if exp == "opineq":
        positive("R", "sqrt_dim", "propagation_m")
        if p["sqrt_dim"] > 64:
            raise ConfigError("params.sqrt_dim must be <= 64")
    if exp == "ucp-scan":
        if not all(isinstance(k, int) and k >= 2 for k in p["identity_k"]):
            raise ConfigError("params.identity_k must be integers >= 2")
