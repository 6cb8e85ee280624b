"""Command line harness: ``isac run | pcrb-sweep | beampattern | gamma-curve | feasibility``.

Every subcommand reads one JSON config (see :mod:`secure_isac.config`), writes
CSV files under ``--out`` and exits with 0 on success, 2 on a config error and
3 when any solve ended in a numerical failure. Points that fail are recorded
in their CSV row; a sweep is never aborted half way.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import metrics
from .config import METHODS, ExperimentConfig, builtin_scenario, load_config
from .errors import (ANRankOverflowError, ConfigError, EmptyNullSpaceError, InfeasibleError,
                     IsacError, ScenarioError, SolverError)
from .model import isotropic_covariance
from .optimizer import (check_feasibility_p1, gamma_curve, optimize_at_gamma, optimize_optimal,
                        optimize_suboptimal1, optimize_suboptimal2)
from .pcrb import compute_sensing_matrices, pcrb_approx, pcrb_exact, pcrb_upper

log = logging.getLogger("secure_isac")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3
RUN_HEADER = ["seed", "sweep_value", "method", "secrecy_rate", "achieved_pcrb", "gamma_star",
              "solver_status", "wall_ms"]
HARD_FAILURES = {"numerical_failure"}


def _status_of(exc: Exception) -> str:
    if isinstance(exc, InfeasibleError):
        return "infeasible"
    if isinstance(exc, ANRankOverflowError):
        return "an_rank_overflow"
    if isinstance(exc, EmptyNullSpaceError):
        return "empty_null_space"
    if isinstance(exc, SolverError):
        return "numerical_failure"
    if isinstance(exc, ScenarioError):
        return "invalid_scenario"
    return "error"


def _fmt(x) -> str:
    return repr(float(x))


# ---------------------------------------------------------------------------
# one sweep point


def _point_setup(cfg: ExperimentConfig, seed: int, value):
    """Scenario, PCRB threshold and fixed gamma (or None) for a sweep point."""
    var = cfg.sweep.variable if cfg.sweep is not None else None
    overrides, gamma_pcrb, gamma = {}, cfg.gamma_pcrb, None
    if var == "sigma_theta_sq":
        overrides["sigma_theta_sq"] = value
    elif var == "power_budget":
        overrides["power_budget"] = value
    elif var == "gamma_pcrb":
        gamma_pcrb = value
    elif var == "gamma":
        gamma = value
    return cfg.scenario.build(seed, **overrides), gamma_pcrb, gamma


def _run_method(method, scenario, matrices, gamma_pcrb, gamma, cfg, cache):
    search = cfg.gamma_search.build()
    if method == "optimal":
        if gamma is not None:
            return optimize_at_gamma(scenario, matrices, gamma_pcrb, gamma, search)
        return optimize_optimal(scenario, matrices, gamma_pcrb, search)
    if method == "upper_bound":
        if gamma is not None:
            return optimize_at_gamma(scenario, matrices, math.inf, gamma, search)
        return optimize_optimal(scenario, matrices, math.inf, search)
    if method == "sub1":
        if "sub1" not in cache:
            try:
                cache["sub1"] = optimize_suboptimal1(scenario, matrices, gamma_pcrb, search)
            except IsacError as exc:
                cache["sub1"] = exc
        if isinstance(cache["sub1"], Exception):
            raise cache["sub1"]
        return cache["sub1"]
    if method == "sub2":
        try:
            sub1 = _run_method("sub1", scenario, matrices, gamma_pcrb, gamma, cfg, cache)
        except IsacError:
            # sub2 can still run with its fallback AN direction
            sub1 = None
        return optimize_suboptimal2(scenario, matrices, gamma_pcrb, sub1, cfg.sub2_grid_points)
    raise ValueError(f"unknown method {method!r}")


def run_point(cfg: ExperimentConfig, seed: int, value) -> list:
    """All configured methods at one (seed, sweep value); returns CSV-ready dicts."""
    rows = []
    try:
        scenario, gamma_pcrb, gamma = _point_setup(cfg, seed, value)
        matrices = compute_sensing_matrices(scenario, cfg.quadrature.build())
    except IsacError as exc:
        status = _status_of(exc)
        log.warning("seed %d value %r: %s", seed, value, exc)
        return [dict(seed=seed, sweep_value=value, method=m, secrecy_rate=math.nan,
                     achieved_pcrb=math.nan, gamma_star=math.nan, solver_status=status,
                     wall_ms=math.nan) for m in cfg.methods]
    cache = {}
    for method in cfg.methods:
        t0 = time.perf_counter()
        try:
            res = _run_method(method, scenario, matrices, gamma_pcrb, gamma, cfg, cache)
            row = dict(secrecy_rate=res.worst_secrecy_rate, achieved_pcrb=res.achieved_pcrb,
                       gamma_star=res.gamma_star, solver_status="optimal")
        except IsacError as exc:
            log.warning("seed %d value %r method %s: %s", seed, value, method, exc)
            row = dict(secrecy_rate=math.nan, achieved_pcrb=math.nan, gamma_star=math.nan,
                       solver_status=_status_of(exc))
        wall = (time.perf_counter() - t0) * 1e3 if cfg.record_timing else math.nan
        rows.append(dict(seed=seed, sweep_value=value, method=method, wall_ms=wall, **row))
    return rows


def _point_task(args):
    cfg_json, seed, value = args
    return run_point(ExperimentConfig.model_validate_json(cfg_json), seed, value)


def sweep_values(cfg: ExperimentConfig) -> list:
    if cfg.sweep is None:
        return [cfg.gamma_pcrb]
    return [float(v) for v in cfg.sweep.grid()]


def run_sweep(cfg: ExperimentConfig, threads: int = 1) -> list:
    """Rows for every seed x sweep value x method, sorted by (value, seed, method)."""
    tasks = [(cfg.model_dump_json(), s, v) for v in sweep_values(cfg) for s in cfg.seed_list()]
    if threads > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(_point_task, tasks))
    else:
        chunks = [_point_task(t) for t in tasks]
    order = {m: i for i, m in enumerate(METHODS)}
    rows = [r for c in chunks for r in c]
    rows.sort(key=lambda r: (r["sweep_value"], r["seed"], order[r["method"]]))
    return rows


def aggregate(rows: list) -> list:
    """Per (sweep value, method) means over seeds.

    An infeasible point contributes a secrecy rate of 0 (no design meets the
    sensing threshold); numerical failures are left out of the means.
    """
    groups = {}
    for r in rows:
        groups.setdefault((r["sweep_value"], r["method"]), []).append(r)
    out = []
    for (value, method), rs in groups.items():
        rates = [0.0 if r["solver_status"] == "infeasible" else r["secrecy_rate"]
                 for r in rs if r["solver_status"] in ("optimal", "infeasible")]
        pcrbs = [r["achieved_pcrb"] for r in rs if r["solver_status"] == "optimal"]
        gammas = [r["gamma_star"] for r in rs if r["solver_status"] == "optimal"]
        out.append(dict(
            sweep_value=value, method=method,
            mean_secrecy_rate=float(np.mean(rates)) if rates else math.nan,
            mean_achieved_pcrb=float(np.mean(pcrbs)) if pcrbs else math.nan,
            mean_gamma_star=float(np.nanmean(gammas)) if gammas and not np.all(np.isnan(gammas))
            else math.nan,
            n_optimal=sum(r["solver_status"] == "optimal" for r in rs),
            n_infeasible=sum(r["solver_status"] == "infeasible" for r in rs),
            n_failed=sum(r["solver_status"] not in ("optimal", "infeasible") for r in rs),
        ))
    order = {m: i for i, m in enumerate(METHODS)}
    out.sort(key=lambda r: (r["sweep_value"], order[r["method"]]))
    return out


def _write_csv(path: Path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for r in rows:
            wr.writerow([_fmt(r[k]) if isinstance(r[k], float) else r[k] for k in header])


def write_run_csv(rows, path):
    _write_csv(Path(path), RUN_HEADER, rows)


def write_aggregate_csv(agg, path):
    header = ["sweep_value", "method", "mean_secrecy_rate", "mean_achieved_pcrb",
              "mean_gamma_star", "n_optimal", "n_infeasible", "n_failed"]
    _write_csv(Path(path), header, agg)


# ---------------------------------------------------------------------------
# subcommands


def cmd_run(cfg: ExperimentConfig, out: Path, threads: int) -> int:
    rows = run_sweep(cfg, threads)
    write_run_csv(rows, out / "results.csv")
    write_aggregate_csv(aggregate(rows), out / "aggregate.csv")
    hard = sum(r["solver_status"] in HARD_FAILURES for r in rows)
    print(f"{len(rows)} rows -> {out / 'results.csv'}")
    return EXIT_SOLVER if hard else EXIT_OK


def pcrb_sweep_rows(cfg: ExperimentConfig) -> list:
    """exact / upper / approximate PCRB of the full-power isotropic covariance."""
    if cfg.sweep is not None and cfg.sweep.variable != "sigma_theta_sq":
        raise ConfigError("pcrb-sweep needs a sigma_theta_sq sweep")
    values = cfg.sweep.grid() if cfg.sweep is not None else np.geomspace(1e-6, 1e-3, 31)
    rows = []
    quad = cfg.quadrature.build()
    for v in values:
        sc = cfg.scenario.build(cfg.seed_list()[0], sigma_theta_sq=float(v))
        m = compute_sensing_matrices(sc, quad)
        R = isotropic_covariance(sc)
        rows.append(dict(sigma_theta_sq=float(v), pcrb_exact=pcrb_exact(R, m, sc),
                         pcrb_upper=pcrb_upper(R, m, sc), pcrb_approx=pcrb_approx(R, m, sc)))
    return rows


def cmd_pcrb_sweep(cfg, out: Path, threads: int) -> int:
    rows = pcrb_sweep_rows(cfg)
    _write_csv(out / "pcrb_sweep.csv", ["sigma_theta_sq", "pcrb_exact", "pcrb_upper",
                                        "pcrb_approx"], rows)
    print(f"{len(rows)} rows -> {out / 'pcrb_sweep.csv'}")
    return EXIT_OK


def cmd_beampattern(cfg: ExperimentConfig, out: Path, threads: int) -> int:
    seed = cfg.seed_list()[0]
    scenario = cfg.scenario.build(seed)
    matrices = compute_sensing_matrices(scenario, cfg.quadrature.build())
    grid = metrics.default_angle_grid(cfg.angle_grid_points)
    code, cache = EXIT_OK, {}
    for method in cfg.methods:
        try:
            res = _run_method(method, scenario, matrices, cfg.gamma_pcrb, None, cfg, cache)
        except IsacError as exc:
            print(f"{method}: {exc}", file=sys.stderr)
            code = EXIT_SOLVER if isinstance(exc, SolverError) else code
            continue
        path = out / f"beampattern_{method}.csv"
        path.parent.mkdir(parents=True, exist_ok=True)
        samples = metrics.beampattern(res.beams, grid, cfg.eval_path_loss_db, scenario)
        metrics.write_beampattern_csv(samples, path)
        print(f"{method}: rate {res.worst_secrecy_rate:.4f} -> {path}")
    return code


def cmd_gamma_curve(cfg: ExperimentConfig, out: Path, threads: int) -> int:
    thresholds = sweep_values(cfg) if cfg.sweep is not None and \
        cfg.sweep.variable == "gamma_pcrb" else [cfg.gamma_pcrb]
    search = cfg.gamma_search.build()
    rows, code = [], EXIT_OK
    for seed in cfg.seed_list():
        scenario = cfg.scenario.build(seed)
        matrices = compute_sensing_matrices(scenario, cfg.quadrature.build())
        for G in thresholds:
            try:
                if not check_feasibility_p1(scenario, matrices, G).feasible:
                    raise InfeasibleError(f"threshold {G:.3g} unreachable")
                gammas, f, g, _ = gamma_curve(scenario, matrices, G, search)
            except IsacError as exc:
                print(f"seed {seed} threshold {G:.3g}: {exc}", file=sys.stderr)
                code = EXIT_SOLVER if isinstance(exc, SolverError) else code
                continue
            rows += [dict(seed=seed, gamma_pcrb=float(G), gamma=float(a), f_gamma=float(b),
                          objective=float(c)) for a, b, c in zip(gammas, f, g)]
    _write_csv(out / "gamma_curve.csv", ["seed", "gamma_pcrb", "gamma", "f_gamma", "objective"],
               rows)
    print(f"{len(rows)} rows -> {out / 'gamma_curve.csv'}")
    return code


def cmd_feasibility(cfg: ExperimentConfig, out: Path, threads: int) -> int:
    thresholds = sweep_values(cfg) if cfg.sweep is not None and \
        cfg.sweep.variable == "gamma_pcrb" else [cfg.gamma_pcrb]
    rows, code = [], EXIT_OK
    for seed in cfg.seed_list():
        scenario = cfg.scenario.build(seed)
        matrices = compute_sensing_matrices(scenario, cfg.quadrature.build())
        for G in thresholds:
            try:
                v = check_feasibility_p1(scenario, matrices, G)
                rows.append(dict(seed=seed, gamma_pcrb=float(G), feasible=str(v.feasible).lower(),
                                 xi=float(v.xi), margin=float(v.margin)))
            except SolverError as exc:
                print(f"seed {seed} threshold {G:.3g}: {exc}", file=sys.stderr)
                code = EXIT_SOLVER
    _write_csv(out / "feasibility.csv", ["seed", "gamma_pcrb", "feasible", "xi", "margin"], rows)
    for r in rows:
        print(f"seed {r['seed']} threshold {r['gamma_pcrb']:.3g}: "
              f"{'feasible' if r['feasible'] == 'true' else 'infeasible'} (margin {r['margin']:.3g})")
    return code


COMMANDS = {
    "run": cmd_run,
    "pcrb-sweep": cmd_pcrb_sweep,
    "beampattern": cmd_beampattern,
    "gamma-curve": cmd_gamma_curve,
    "feasibility": cmd_feasibility,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="isac", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="JSON config (builtin scenario if omitted)")
        p.add_argument("--out", type=Path, help="output directory (overrides config)")
        p.add_argument("--seed-count", type=int, help="use seeds 0..N-1")
        p.add_argument("--method", help="comma separated subset of " + ",".join(METHODS))
        p.add_argument("--threads", type=int, default=1, help="worker processes for run")
        p.add_argument("--gamma-pcrb", type=float, help="PCRB threshold (overrides config)")
        p.add_argument("-v", "--verbose", action="store_true")
    return ap


def _apply_flags(cfg: ExperimentConfig, args) -> ExperimentConfig:
    data = cfg.model_dump()
    if args.seed_count is not None:
        data["seeds"], data["seed_count"] = None, args.seed_count
    if args.method is not None:
        data["methods"] = [m.strip() for m in args.method.split(",") if m.strip()]
    if args.gamma_pcrb is not None:
        data["gamma_pcrb"] = args.gamma_pcrb
    if args.out is not None:
        data["output"] = str(args.out)
    try:
        return ExperimentConfig.model_validate(data)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config) if args.config is not None else builtin_scenario()
        cfg = _apply_flags(cfg, args)
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        return COMMANDS[args.command](cfg, Path(cfg.output), args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
