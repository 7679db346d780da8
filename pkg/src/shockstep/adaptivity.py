"""Error-density driven time adaptation.

Per-interval temporal error densities are turned into a new partition by
equidistribution: each old interval proposes steps k_m = k_n * (tol/T) /
density, laid out consecutively and clipped so a long step never tramples
a later region that demands finer resolution.  A switching policy then
tags each step implicit or explicit; runs of sub-threshold CFL proposals
are merged and re-tiled with uniform explicit steps.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .dual import build_coefficient_field, solve_dual_gradient
from .estimator import ErrorBreakdown, assemble_breakdown
from .forward import ForwardTrajectory, run_forward
from .grid import (EXPLICIT, IMPLICIT, SpatialGrid, TimePartition,
                   build_spatial_grid, uniform_partition)

FLOOR_SCALE = 1e-14


@dataclass
class AdaptationConfig:
    T: float
    tol_k: Optional[float] = None
    tol_total: Optional[float] = None
    cfl_switch: float = 5.0
    cfl_explicit: float = 0.8
    cfl_cap: float = 1e4
    density_floor: Optional[float] = None

    def __post_init__(self):
        if not (0.0 < self.cfl_explicit < self.cfl_switch <= self.cfl_cap):
            raise ValueError("need 0 < cfl_explicit < cfl_switch <= cfl_cap")
        for name in ("tol_k", "tol_total", "density_floor"):
            v = getattr(self, name)
            if v is not None and v <= 0.0:
                raise ValueError(f"{name} must be positive")

    def effective_floor(self) -> float:
        if self.density_floor is not None:
            return self.density_floor
        if self.tol_k is None:
            raise ValueError("tol_k required to derive the density floor")
        return FLOOR_SCALE * self.tol_k / self.T


@dataclass
class PlanStats:
    N: int
    N_explicit: int
    N_implicit: int
    cfl_min: float
    cfl_max: float


@dataclass
class AdaptationPlan:
    partition: TimePartition
    stats: PlanStats


@dataclass
class SpeedProfile:
    """Piecewise-constant-in-time wave-speed bound from a finished run."""
    times: np.ndarray
    values: np.ndarray  # per interval of `times`

    @classmethod
    def from_trajectory(cls, traj: ForwardTrajectory, case) -> "SpeedProfile":
        flux = traj.flux
        state_speed = np.max(flux.wave_speed(traj.states), axis=1)
        g_at = np.atleast_1d(np.asarray(case.inflow_value(traj.partition.times), dtype=float))
        node = np.maximum(state_speed, flux.wave_speed(g_at))
        return cls(times=traj.partition.times.copy(),
                   values=np.maximum(node[:-1], node[1:]))

    def max_over(self, ta: float, tb: float) -> float:
        lo = np.searchsorted(self.times, ta, side="right") - 1
        hi = np.searchsorted(self.times, tb, side="left")
        lo = max(lo, 0)
        hi = max(min(hi, len(self.values)), lo + 1)
        return float(np.max(self.values[lo:hi]))


def propose_timesteps(old: TimePartition, densities: np.ndarray,
                      cfg: AdaptationConfig) -> np.ndarray:
    """Raw step sizes tiling [0, T] by equidistribution of the densities.

    Walking forward from t, the candidate step is the local k_m; scanning
    the old boundaries it would cross, the step is cut back to the first
    boundary whose local k_m is smaller than the gap that would remain
    beyond it.  The walk must also run for bridging steps that already
    reach past T, otherwise a zero-density span swallows every later
    active region in one jump.
    """
    densities = np.asarray(densities, dtype=float)
    if densities.size == 0:
        raise ValueError("empty density sequence")
    if densities.size != old.interval_count:
        raise ValueError("densities misaligned with partition")
    if np.any(densities < 0.0):
        raise ValueError("densities must be nonnegative")
    T = old.T
    k_old = old.steps
    km = k_old * (cfg.tol_k / T) / np.maximum(densities, cfg.effective_floor())
    t_old = old.times
    new_times = [0.0]
    t = 0.0
    eps = 1e-12 * T
    while t < T - eps:
        n = int(np.searchsorted(t_old, t + eps)) - 1
        n = min(max(n, 0), km.size - 1)
        step = km[n]
        m = n + 1
        while m < km.size:
            b = t_old[m]
            if b >= t + step:
                break
            if km[m] < (t + step) - b:
                step = b - t
                break
            m += 1
        if t + step > T:
            step = T - t
        t += step
        new_times.append(t)
    new_times[-1] = T
    return np.diff(np.array(new_times))


def assign_modes(raw: np.ndarray, speed_profile: SpeedProfile,
                 cfg: AdaptationConfig, h: float,
                 strategy: str = "imex") -> AdaptationPlan:
    """Tag proposed steps implicit/explicit and re-tile as needed.

    imex: steps with planning CFL >= cfl_switch stay implicit (split only
    beyond cfl_cap); maximal runs below the threshold are replaced by
    uniform explicit stepping at cfl_explicit over the same span.
    fully_implicit: every step implicit, cap-splitting only.
    """
    raw = np.asarray(raw, dtype=float)
    edges = np.concatenate(([0.0], np.cumsum(raw)))
    T = cfg.T
    if abs(edges[-1] - T) > 1e-9 * T:
        raise ValueError("raw steps do not tile [0, T]")
    edges[-1] = T
    n_seg = raw.size
    seg_speed = np.array([speed_profile.max_over(edges[i], edges[i + 1])
                          for i in range(n_seg)])
    seg_cfl = (edges[1:] - edges[:-1]) * seg_speed / h

    times = [0.0]
    modes: list = []

    def lay_implicit(t0, t1, cfl):
        pieces = max(1, math.ceil(cfl / cfg.cfl_cap - 1e-12))
        for p in range(1, pieces + 1):
            times.append(t1 if p == pieces else t0 + (t1 - t0) * p / pieces)
            modes.append(IMPLICIT)

    if strategy == "fully_implicit":
        for i in range(n_seg):
            lay_implicit(edges[i], edges[i + 1], seg_cfl[i])
    elif strategy == "imex":
        i = 0
        while i < n_seg:
            if seg_cfl[i] >= cfg.cfl_switch:
                lay_implicit(edges[i], edges[i + 1], seg_cfl[i])
                i += 1
                continue
            j = i
            s_max = 0.0
            while j < n_seg and seg_cfl[j] < cfg.cfl_switch:
                s_max = max(s_max, seg_speed[j])
                j += 1
            ta, tb = edges[i], edges[j]
            span = tb - ta
            if s_max > 0.0:
                ne = max(1, math.ceil(span * s_max / (cfg.cfl_explicit * h) - 1e-12))
            else:
                ne = 1
            for p in range(1, ne + 1):
                times.append(tb if p == ne else ta + span * p / ne)
                modes.append(EXPLICIT)
            i = j
    else:
        raise ValueError(f"unknown strategy {strategy!r}")

    part = TimePartition(times=np.array(times), modes=np.array(modes, dtype=np.int8))
    k = part.steps
    cfl = np.array([k[i] * speed_profile.max_over(part.times[i], part.times[i + 1]) / h
                    for i in range(part.interval_count)])
    n_exp = int(np.sum(part.modes == EXPLICIT))
    stats = PlanStats(N=part.interval_count, N_explicit=n_exp,
                      N_implicit=part.interval_count - n_exp,
                      cfl_min=float(np.min(cfl)), cfl_max=float(np.max(cfl)))
    return AdaptationPlan(partition=part, stats=stats)


def tolerance_schedule(rule: str, prior: Sequence[float],
                       factor: Optional[float] = None,
                       current_tol: Optional[float] = None) -> float:
    if rule == "halve":
        if current_tol is None:
            raise ValueError("halve rule needs the current tolerance")
        return 0.5 * current_tol
    if rule == "match_previous":
        if not len(prior):
            raise ValueError("match_previous rule needs a measured density")
        return float(prior[-1])
    if rule == "scaled_ref":
        if not len(prior):
            raise ValueError("scaled_ref rule needs the reference measurement")
        if factor is None:
            raise ValueError("scaled_ref rule needs a factor")
        return float(factor) * float(prior[0])
    raise ValueError(f"unknown tolerance rule {rule!r}")


def speed_for_basis(case, grid: SpatialGrid, basis: str) -> float:
    flux = case.flux
    u0 = np.asarray(case.initial_cell_averages(grid.edges), dtype=float)
    s0 = float(np.max(flux.wave_speed(u0)))
    if basis == "initial":
        return s0
    if basis == "global":
        g_speed = float(np.max(flux.wave_speed(np.array([case.inflow_peak()]))))
        return max(s0, g_speed)
    raise ValueError(f"unknown speed basis {basis!r}")


@dataclass
class LevelReport:
    level: int
    grid: SpatialGrid
    partition: TimePartition
    trajectory: ForwardTrajectory
    breakdown: ErrorBreakdown
    stats: PlanStats
    cfl_series: np.ndarray           # realized, per interval
    tol_k: Optional[float] = None
    plan: Optional[AdaptationPlan] = None


def _realized_cfl(traj: ForwardTrajectory, case) -> np.ndarray:
    profile = SpeedProfile.from_trajectory(traj, case)
    return traj.partition.steps * profile.values / traj.grid.h


def _report_for(level: int, grid: SpatialGrid, partition: TimePartition,
                case, dual_cfl: float, tol_k=None, plan=None) -> LevelReport:
    traj = run_forward(grid, partition, case)
    coeff = build_coefficient_field(traj)
    dual = solve_dual_gradient(coeff, case, dual_cfl)
    br = assemble_breakdown(traj, coeff, dual, case)
    cfl = _realized_cfl(traj, case)
    n_exp = int(np.sum(partition.modes == EXPLICIT))
    stats = plan.stats if plan is not None else PlanStats(
        N=partition.interval_count, N_explicit=n_exp,
        N_implicit=partition.interval_count - n_exp,
        cfl_min=float(np.min(cfl)), cfl_max=float(np.max(cfl)))
    return LevelReport(level=level, grid=grid, partition=partition,
                       trajectory=traj, breakdown=br, stats=stats,
                       cfl_series=cfl, tol_k=tol_k, plan=plan)


def adaptive_loop(case, cfg: AdaptationConfig, levels: Sequence[int],
                  rule: str, *, strategy: str = "imex", base_cells: int = 20,
                  speed_basis: str = "global", factor=None,
                  dual_cfl: float = 0.8,
                  base_report: Optional[LevelReport] = None) -> list:
    """Run the multi-level loop: uniform explicit base run, then per level
    a tolerance from the schedule, a proposed partition, a mode assignment,
    and a full solve/dual/estimate pass.  Stops early once the combined
    density drops below tol_total (when set)."""
    if not len(levels):
        raise ValueError("empty level schedule")
    n_adapt = len(levels) - 1
    if factor is None or np.isscalar(factor):
        factors = [factor] * n_adapt
    else:
        factors = list(factor)
        if len(factors) != n_adapt:
            raise ValueError("one factor per adaptive level required")

    reports: list = []
    priors: list = []
    current_tol = cfg.tol_k

    for idx, level in enumerate(levels):
        grid = build_spatial_grid(base_cells, level, case.domain)
        if idx == 0:
            if base_report is not None:
                if base_report.level != level:
                    raise ValueError("base report level mismatch")
                rep = base_report
            else:
                speed = speed_for_basis(case, grid, speed_basis)
                part = uniform_partition(case.T, cfg.cfl_explicit * grid.h / speed,
                                         EXPLICIT)
                rep = _report_for(level, grid, part, case, dual_cfl)
        else:
            prev = reports[-1]
            tol = tolerance_schedule(rule, priors, factor=factors[idx - 1],
                                     current_tol=current_tol)
            current_tol = tol
            local = replace(cfg, tol_k=tol)
            raw = propose_timesteps(prev.partition, prev.breakdown.eta_k_bar_n,
                                    local)
            profile = SpeedProfile.from_trajectory(prev.trajectory, case)
            plan = assign_modes(raw, profile, local, grid.h, strategy)
            rep = _report_for(level, grid, plan.partition, case, dual_cfl,
                              tol_k=tol, plan=plan)
        reports.append(rep)
        priors.append(rep.breakdown.eta_k_bar)
        if cfg.tol_total is not None and rep.breakdown.eta_bar < cfg.tol_total:
            break
    return reports
