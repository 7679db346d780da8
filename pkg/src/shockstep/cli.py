"""Batch front-end.

Subcommands run the uniform and adaptive experiments described by a plain
key=value config file (CLI overrides via --set) and write reproducible CSV
artifacts.  Exit codes: 0 success, 2 config error, 3 solver failure.
"""
from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .adaptivity import (AdaptationConfig, LevelReport, adaptive_loop,
                         speed_for_basis)
from .dual import build_coefficient_field, solve_dual_gradient
from .estimator import assemble_breakdown, efficiency_index, reference_functional
from .forward import SolverFailure, run_forward
from .grid import EXPLICIT, IMPLICIT, build_spatial_grid, uniform_partition
from .testcase import PerturbedShockCase, validate_characteristics


class ConfigError(ValueError):
    pass


def _parse_bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {s!r}")


def _parse_int_list(s: str):
    return [int(p) for p in s.split(",") if p.strip() != ""]


def _parse_float_list(s: str):
    vals = [float(p) for p in s.split(",") if p.strip() != ""]
    return vals[0] if len(vals) == 1 else vals


def _parse_choice(*allowed):
    def parse(s: str) -> str:
        if s not in allowed:
            raise ConfigError(f"expected one of {allowed}, got {s!r}")
        return s
    return parse


def _parse_optional_float(s: str):
    if s.strip().lower() in ("", "none"):
        return None
    return float(s)


# key -> (parser, default); resolution order: defaults, file, --set, --out
_SCHEMA = {
    "case": (_parse_choice("benchmark"), "benchmark"),
    "perturbation_scale": (float, 1.0),
    "base_cells": (int, 20),
    "level": (int, 0),
    "levels": (_parse_int_list, None),
    "mode": (_parse_choice("explicit", "implicit"), "explicit"),
    "cfl": (float, 0.8),
    "speed_basis": (_parse_choice("global", "initial"), "global"),
    "rule": (_parse_choice("match_previous", "halve", "scaled_ref"), "match_previous"),
    "factor": (_parse_float_list, None),
    "tol_k": (_parse_optional_float, None),
    "tol_total": (_parse_optional_float, None),
    "strategy": (_parse_choice("imex", "fully_implicit"), "imex"),
    "dual_cfl": (float, 0.8),
    "ref_level": (int, 6),
    "out_dir": (str, "."),
    "dry_run": (_parse_bool, False),
    "experiment": (_parse_choice("uniform", "adaptive"), "uniform"),
}


def _set_key(cfg: dict, key: str, raw: str):
    if key not in _SCHEMA:
        raise ConfigError(f"unknown config key {key!r}")
    parser, _ = _SCHEMA[key]
    try:
        cfg[key] = parser(raw)
    except ConfigError:
        raise
    except (ValueError, TypeError) as err:
        raise ConfigError(f"bad value for {key!r}: {raw!r} ({err})") from err


def load_config(path=None, overrides=()) -> dict:
    cfg = {k: d for k, (_, d) in _SCHEMA.items()}
    if path is not None:
        try:
            with open(path) as fh:
                lines = fh.readlines()
        except OSError as err:
            raise ConfigError(f"cannot read config {path!r}: {err}") from err
        for ln, line in enumerate(lines, 1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{ln}: expected key=value")
            key, _, raw = stripped.partition("=")
            _set_key(cfg, key.strip(), raw.strip())
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, _, raw = item.partition("=")
        _set_key(cfg, key.strip(), raw.strip())
    return cfg


def _fmt(x) -> str:
    return "%.5e" % float(x)


def _write_csv(path: str, header, rows):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


def _steps_rows(report: LevelReport):
    part = report.partition
    br = report.breakdown
    mode_name = {EXPLICIT: "explicit", IMPLICIT: "implicit"}
    for i in range(part.interval_count):
        yield (_fmt(part.times[i + 1]), _fmt(part.steps[i]),
               _fmt(report.cfl_series[i]), mode_name[int(part.modes[i])],
               _fmt(br.eta_k_bar_n[i]), _fmt(br.eta_h_bar_n[i]))


_STEPS_HEADER = ("t_n", "k_n", "cfl_n", "mode", "eta_k_bar_n", "eta_h_bar_n")


def _echo_config(cfg: dict):
    for key in _SCHEMA:
        print(f"{key} = {cfg[key]}")


def _build_case(cfg: dict) -> PerturbedShockCase:
    return PerturbedShockCase(perturbation_scale=cfg["perturbation_scale"])


def _ensure_outdir(cfg: dict) -> str:
    out = cfg["out_dir"]
    try:
        os.makedirs(out, exist_ok=True)
    except OSError as err:
        raise ConfigError(f"cannot create output directory {out!r}: {err}") from err
    return out


def _uniform_report(case, cfg: dict, level: int) -> LevelReport:
    grid = build_spatial_grid(cfg["base_cells"], level, case.domain)
    speed = speed_for_basis(case, grid, cfg["speed_basis"])
    mode = EXPLICIT if cfg["mode"] == "explicit" else IMPLICIT
    part = uniform_partition(case.T, cfg["cfl"] * grid.h / speed, mode)
    traj = run_forward(grid, part, case)
    coeff = build_coefficient_field(traj)
    dual = solve_dual_gradient(coeff, case, cfg["dual_cfl"])
    br = assemble_breakdown(traj, coeff, dual, case)
    from .adaptivity import PlanStats, _realized_cfl
    cfl = _realized_cfl(traj, case)
    n_exp = int(np.sum(part.modes == EXPLICIT))
    stats = PlanStats(N=part.interval_count, N_explicit=n_exp,
                      N_implicit=part.interval_count - n_exp,
                      cfl_min=float(np.min(cfl)), cfl_max=float(np.max(cfl)))
    return LevelReport(level=level, grid=grid, partition=part, trajectory=traj,
                       breakdown=br, stats=stats, cfl_series=cfl)


def _summary_row(report: LevelReport, theta: float, adaptive: bool):
    br = report.breakdown
    part = report.partition
    dt = part.T / part.interval_count
    row = [str(report.level), _fmt(report.grid.h), _fmt(dt),
           _fmt(br.eta_k_bar), _fmt(br.eta_h_bar), _fmt(br.eta_k),
           _fmt(br.eta_h), _fmt(br.J_h), _fmt(theta)]
    if adaptive:
        row += [str(report.stats.N), str(report.stats.N_explicit)]
    return tuple(row)


def run_uniform(cfg: dict) -> int:
    if cfg["dry_run"]:
        _echo_config(cfg)
        return 0
    out = _ensure_outdir(cfg)
    case = _build_case(cfg)
    levels = cfg["levels"] if cfg["levels"] is not None else [cfg["level"]]
    if not levels:
        raise ConfigError("empty level list")
    rows = []
    for level in levels:
        rep = _uniform_report(case, cfg, level)
        j_ref = reference_functional(case, cfg["ref_level"], cfg["base_cells"])
        theta = efficiency_index(rep.breakdown, j_ref)
        rows.append(_summary_row(rep, theta, adaptive=False))
        name = "steps.csv" if len(levels) == 1 else f"steps_L{level}.csv"
        _write_csv(os.path.join(out, name), _STEPS_HEADER, _steps_rows(rep))
        print(f"level {level}: N={rep.stats.N} eta_k_bar={_fmt(rep.breakdown.eta_k_bar)} "
              f"eta_h_bar={_fmt(rep.breakdown.eta_h_bar)} J_h={_fmt(rep.breakdown.J_h)}")
    _write_csv(os.path.join(out, "summary.csv"),
               ("level", "dx", "dt", "eta_k_bar", "eta_h_bar", "eta_k",
                "eta_h", "J_h", "theta"), rows)
    return 0


def _adaptive_reports(cfg: dict, honor_tol_total: bool):
    case = _build_case(cfg)
    levels = cfg["levels"]
    if not levels:
        raise ConfigError("adaptive runs need a levels schedule")
    try:
        acfg = AdaptationConfig(
            T=case.T, tol_k=cfg["tol_k"],
            tol_total=cfg["tol_total"] if honor_tol_total else None,
            cfl_explicit=cfg["cfl"])
    except ValueError as err:
        raise ConfigError(str(err)) from err
    try:
        reports = adaptive_loop(case, acfg, levels, cfg["rule"],
                                strategy=cfg["strategy"],
                                base_cells=cfg["base_cells"],
                                speed_basis=cfg["speed_basis"],
                                factor=cfg["factor"],
                                dual_cfl=cfg["dual_cfl"])
    except ValueError as err:
        raise ConfigError(str(err)) from err
    return case, reports


def _write_adaptive(cfg: dict, case, reports) -> int:
    out = _ensure_outdir(cfg)
    rows = []
    for i, rep in enumerate(reports):
        j_ref = reference_functional(case, cfg["ref_level"], cfg["base_cells"])
        theta = efficiency_index(rep.breakdown, j_ref)
        rows.append(_summary_row(rep, theta, adaptive=True))
        _write_csv(os.path.join(out, f"steps_{i}.csv"), _STEPS_HEADER,
                   _steps_rows(rep))
        print(f"run {i} (level {rep.level}): N={rep.stats.N} "
              f"N_explicit={rep.stats.N_explicit} "
              f"eta_k_bar={_fmt(rep.breakdown.eta_k_bar)} "
              f"eta_h_bar={_fmt(rep.breakdown.eta_h_bar)}")
    _write_csv(os.path.join(out, "summary.csv"),
               ("level", "dx", "dt", "eta_k_bar", "eta_h_bar", "eta_k",
                "eta_h", "J_h", "theta", "N", "N_explicit"), rows)
    return 0


def run_adaptive(cfg: dict) -> int:
    if cfg["dry_run"]:
        _echo_config(cfg)
        return 0
    case, reports = _adaptive_reports(cfg, honor_tol_total=False)
    return _write_adaptive(cfg, case, reports)


def run_loop(cfg: dict) -> int:
    if cfg["dry_run"]:
        _echo_config(cfg)
        return 0
    case, reports = _adaptive_reports(cfg, honor_tol_total=True)
    return _write_adaptive(cfg, case, reports)


def emit_plot_data(report: LevelReport, out_dir: str, index: int):
    """Two-column series exactly as carried by the report, no resampling."""
    t_end = [_fmt(report.partition.times[i + 1])
             for i in range(report.partition.interval_count)]
    _write_csv(os.path.join(out_dir, f"density_vs_time_{index}.csv"),
               ("t_n", "eta_k_bar_n"),
               zip(t_end, map(_fmt, report.breakdown.eta_k_bar_n)))
    _write_csv(os.path.join(out_dir, f"cfl_vs_time_{index}.csv"),
               ("t_n", "cfl_n"),
               zip(t_end, map(_fmt, report.cfl_series)))


def emit_plots(cfg: dict) -> int:
    if cfg["dry_run"]:
        _echo_config(cfg)
        return 0
    out = _ensure_outdir(cfg)
    if cfg["experiment"] == "uniform":
        case = _build_case(cfg)
        levels = cfg["levels"] if cfg["levels"] is not None else [cfg["level"]]
        reports = [_uniform_report(case, cfg, level) for level in levels]
    else:
        _, reports = _adaptive_reports(cfg, honor_tol_total=False)
    for i, rep in enumerate(reports):
        emit_plot_data(rep, out, i)
    return 0


def validate_case(cfg: dict) -> int:
    if cfg["dry_run"]:
        _echo_config(cfg)
        return 0
    case = _build_case(cfg)
    rep = validate_characteristics(case)
    print(f"monotone_departure = {rep.monotone_departure}")
    print(f"min_inflow_value = {rep.min_inflow_value:.12f}")
    print(f"min_departure_spacing = {rep.min_departure_spacing:.6e}")
    print(f"ok = {rep.ok}")
    return 0 if rep.ok else 3


_COMMANDS = {
    "run-uniform": run_uniform,
    "run-adaptive": run_adaptive,
    "run-loop": run_loop,
    "emit-plots": emit_plots,
    "validate-case": validate_case,
}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="shockstep")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("config", nargs="?", default=None,
                       help="key=value config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key")
        p.add_argument("--out", default=None, help="override out_dir")
    args = ap.parse_args(argv)
    try:
        cfg = load_config(args.config, args.set)
        if args.out is not None:
            cfg["out_dir"] = args.out
        return _COMMANDS[args.command](cfg)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except SolverFailure as err:
        print(f"solver failure: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
