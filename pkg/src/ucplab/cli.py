"""Command-line experiment runner.

    ucplab <experiment> --config FILE [--out DIR] [--threads K] [--seed S]

Exit codes: 0 ok, 2 config error, 3 solver failure, 4 resource limit, 5 I/O.
The config file may also be a ``manifest.json`` from an earlier run; its
embedded resolved config is used.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .carleman import (DEFAULT_TAUS, bootstrap_chain_check, constant_propagation_check, default_shell_family,
                       estimate_kappa_and_eps, form_sampling_bound, min_eps_form_inequality, sobolev_split_bound,
                       sqrt_monotone_check)
from .config import EXPERIMENTS, ExperimentConfig
from .dft import hk_verify, one_particle_density
from .errors import ConfigError, ReportIOError, UcplabError
from .grid import make_grid
from .hamiltonian import assemble_total_potential, build_hamiltonian
from .reports import emit_report, output_root, write_json
from .spectra import solve_ground
from .ucp import derivative_vanishing_check, vanishing_order_fit, weighted_equivalence_identity, zero_set_fraction

log = logging.getLogger("ucplab")


@dataclass
class RunManifest:
    config_hash: str
    version: str
    experiment: str
    wall_time: float
    timings: dict
    outputs: list
    config: dict
    status: str = "ok"

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class CompositeReport:
    """Named sub-reports of one experiment, plus an optional CSV table."""

    kind: str
    parts: dict
    converged: bool = True
    columns: Optional[list] = None
    rows: list = field(default_factory=list)

    def to_dict(self) -> dict:
        d = {"report": self.kind, "converged": self.converged}
        d.update(self.parts)
        return d

    def table(self):
        return self.columns or [], self.rows


class _Timer:
    def __init__(self):
        self.timings = {}

    def stage(self, name):
        timer = self

        class _Ctx:
            def __enter__(self):
                self.t0 = time.perf_counter()

            def __exit__(self, *exc):
                timer.timings[name] = time.perf_counter() - self.t0

        return _Ctx()


# ---------------------------------------------------------------- experiments


def _solve(cfg: ExperimentConfig, timer: _Timer):
    grid = cfg.make_grid()
    sv = cfg.solver
    with timer.stage("assemble"):
        H = build_hamiltonian(cfg.spec("v"), cfg.spec("w"), grid, cfg.params["kinetic"])
    with timer.stage("solve"):
        res = solve_ground(H, sv["k"], sv["tol"], sv["seed"], sv["max_iter"])
    return H, res


def run_solve(cfg, timer, threads):
    H, res = _solve(cfg, timer)
    rows = [[i, e, r] for i, (e, r) in enumerate(zip(res.eigenvalues, res.residuals))]
    parts = {"solver": res.summary(), "kinetic": H.params["kinetic"], "method": res.info.get("method"),
             "grid": H.grid.describe()}
    return {"solve": CompositeReport("solve", parts, res.converged, ["index", "eigenvalue", "residual"], rows)}


def run_density(cfg, timer, threads):
    H, res = _solve(cfg, timer)
    with timer.stage("density"):
        rho = one_particle_density(res.ground)
    parts = {"solver": res.summary(), "kinetic": H.params["kinetic"], "grid": H.grid.describe()}
    return {"solve": CompositeReport("solve", parts, res.converged), "density": rho}


def run_hk(cfg, timer, threads):
    sv, p = cfg.solver, cfg.params
    with timer.stage("hk"):
        rep = hk_verify(cfg.spec("v"), cfg.spec("v2"), cfg.spec("w"), cfg.make_grid(), sv["tol"], sv["seed"],
                        p["kinetic"], sv["max_iter"], p["identity_threshold"], p["theta"])
    return {"hk": rep}


def run_carleman(cfg, timer, threads):
    p = cfg.params
    n = p["d"] * p["N"]
    grid = make_grid(n, 1, p["m"], p["L"]) if p["m"] is not None and p["L"] is not None else None
    if (p["m"] is None) != (p["L"] is None):
        raise ConfigError("params.m and params.L must be given together")
    with timer.stage("family"):
        fam = default_shell_family(n, p["centers"], tuple(p["dphis"]), p["tilts"], p["ells"])
    taus = p["tau_range"] if p["tau_range"] is not None else DEFAULT_TAUS
    with timer.stage("sweep"):
        rep = estimate_kappa_and_eps(fam, taus, p["s"], p["xi"], p["delta"], p["d"], p["N"], grid, threads)
    return {"carleman": rep}


def run_opineq(cfg, timer, threads):
    p, sv = cfg.params, cfg.solver
    grid = cfg.make_grid()
    v, w = cfg.spec("v"), cfg.spec("w")
    parts, rows = {}, []
    with timer.stage("pencil"):
        V = assemble_total_potential(v, w, grid)
        parts["pencil"] = min_eps_form_inequality(V, p["R"], p["delta"], p["c"], p["center"], seed=sv["seed"])
    if p["sampling_trials"] > 0:
        with timer.stage("sampling"):
            parts["sampling"] = form_sampling_bound(V, p["R"], p["delta"], p["c"], p["sampling_trials"],
                                                    sv["seed"], p["center"])
    if p["split_M"]:
        s = p["split_s"] if p["split_s"] is not None else 1.5 - 2 * p["delta"]
        with timer.stage("split"):
            sweep = [sobolev_split_bound(v, p["split_p"], grid.d, s, p["R"], M, p["split_q"])
                     for M in p["split_M"]]
        parts["split"] = sweep
        rows = [[r.M, r.eps_min, r.c, r.c_extra] for r in sweep]
    if p["sqrt_trials"] > 0:
        with timer.stage("sqrt"):
            parts["sqrt_monotone"] = sqrt_monotone_check(p["sqrt_trials"], p["sqrt_dim"], sv["seed"],
                                                         delta=p["delta"])._asdict()
    if p["propagation"]:
        if w is None or grid.d != 1:
            raise ConfigError("params.propagation needs potentials.w and grid.d = 1")
        with timer.stage("propagation"):
            parts["propagation"] = constant_propagation_check(v, w, p["R"], p["delta"], p["c"],
                                                              m=p["propagation_m"], N=grid.N, seed=sv["seed"])
    return {"opineq": CompositeReport("opineq", parts, True, ["M", "eps", "c", "c_extra"], rows)}


def run_ucp_scan(cfg, timer, threads):
    p = cfg.params
    H, res = _solve(cfg, timer)
    psi = res.ground
    grid = psi.grid
    eps_list = p["eps_list"]
    if eps_list is None:
        eps_list = np.geomspace(4 * grid.h, grid.L / 5, 8)
    parts = {"solver": res.summary(), "zero_fraction": zero_set_fraction(psi, 1e-12)}
    with timer.stage("vanishing"):
        van = vanishing_order_fit(psi, p["center"], eps_list, p["threshold"])
        parts["vanishing"] = van
    with timer.stage("derivatives"):
        pot = H.params["potential"]
        parts["derivatives"] = derivative_vanishing_check(psi, pot, p["center"], eps_list,
                                                          bound_factor=p["bound_factor"])
    if p["identity_k"]:
        with timer.stage("identity"):
            parts["identity"] = {str(k): weighted_equivalence_identity(psi, k, p["center"])._asdict()
                                 for k in p["identity_k"]}
    if p["bootstrap_taus"]:
        with timer.stage("bootstrap"):
            parts["bootstrap"] = bootstrap_chain_check(psi, pot, p["bootstrap_taus"], p["delta"],
                                                       center=p["center"])
    cols, rows = van.table()
    return {"ucp_scan": CompositeReport("ucp-scan", parts, res.converged, cols, rows)}


RUNNERS = {"solve": run_solve, "density": run_density, "hk-verify": run_hk, "carleman": run_carleman,
           "opineq": run_opineq, "ucp-scan": run_ucp_scan}


def _out_dir(cfg: ExperimentConfig, out: Optional[str]) -> Path:
    path = Path(out if out is not None else cfg.output["dir"])
    return path if path.is_absolute() else output_root() / path


def run_experiment(cfg: ExperimentConfig, out: Optional[str] = None, threads: int = 1) -> RunManifest:
    """Execute ``cfg`` and write its reports and ``manifest.json`` under the output directory."""
    t0 = time.perf_counter()
    timer = _Timer()
    out_dir = _out_dir(cfg, out)
    extra = {"config_hash": cfg.config_hash(), "version": __version__}
    reports = RUNNERS[cfg.experiment](cfg, timer, threads)
    outputs = []
    with timer.stage("emit"):
        for stem, rep in reports.items():
            outputs += emit_report(rep, cfg.output["formats"], out_dir, stem, cfg.experiment, extra)
    man = RunManifest(extra["config_hash"], __version__, cfg.experiment, time.perf_counter() - t0,
                      timer.timings, [os.path.relpath(p, out_dir) for p in outputs], cfg.resolved())
    write_json(out_dir / "manifest.json", man)
    return man


def _write_failure(cfg: ExperimentConfig, out: Optional[str], exc: UcplabError):
    """Record a failed run so partial results are never silently lost."""
    try:
        out_dir = _out_dir(cfg, out)
        write_json(out_dir / "error.json", {
            "schema": "ucplab/1", "experiment": cfg.experiment, "converged": False,
            "error": {"type": type(exc).__name__, "message": str(exc), "exit_code": exc.exit_code},
            "config_hash": cfg.config_hash(), "config": cfg.resolved(),
        })
    except ReportIOError:
        pass


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ucplab", description="Unique-continuation and HK numerical experiments.")
    ap.add_argument("experiment", choices=EXPERIMENTS)
    ap.add_argument("--config", required=True, help="TOML config, or a manifest.json from an earlier run")
    ap.add_argument("--out", default=None, help="output directory (default: output.dir from the config)")
    ap.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    ap.add_argument("--seed", type=int, default=None, help="overrides solver.seed")
    ap.add_argument("-v", "--verbose", action="store_true")
    ap.add_argument("--version", action="version", version=f"ucplab {__version__}")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    cfg = None
    try:
        cfg = ExperimentConfig.load(args.config, args.experiment)
        if args.seed is not None:
            if args.seed < 0 or args.seed >= 2**64:
                raise ConfigError("--seed must be an unsigned 64-bit integer")
            cfg.solver["seed"] = args.seed
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        man = run_experiment(cfg, args.out, args.threads)
    except UcplabError as exc:
        if cfg is not None and exc.exit_code in (3, 4):
            _write_failure(cfg, args.out, exc)
        print(f"ucplab: error: {exc}", file=sys.stderr)
        return exc.exit_code
    log.info("wrote %d files in %.2fs", len(man.outputs), man.wall_time)
    for path in man.outputs:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
