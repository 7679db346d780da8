"""Shared fixtures: the benchmark case, the reference functional, and the
experiment reports reused across test modules.  Everything here is
deterministic, so session scope is safe."""
import numpy as np
import pytest

import shockstep as ss
from shockstep.adaptivity import LevelReport, PlanStats, SpeedProfile

GAUSS_X, GAUSS_W = np.polynomial.legendre.leggauss(5)


def uniform_level_report(case, level, *, base_cells=20, basis="global",
                         cfl=0.8, mode=ss.EXPLICIT, dual_cfl=0.8):
    """Uniform-partition run packaged like the adaptive reports."""
    grid = ss.build_spatial_grid(base_cells, level, case.domain)
    speed = ss.speed_for_basis(case, grid, basis)
    part = ss.uniform_partition(case.T, cfl * grid.h / speed, mode)
    traj = ss.run_forward(grid, part, case)
    coeff = ss.build_coefficient_field(traj)
    dual = ss.solve_dual_gradient(coeff, case, dual_cfl)
    br = ss.assemble_breakdown(traj, coeff, dual, case)
    profile = SpeedProfile.from_trajectory(traj, case)
    series = part.steps * profile.values / grid.h
    n_exp = int(np.sum(part.modes == ss.EXPLICIT))
    stats = PlanStats(N=part.interval_count, N_explicit=n_exp,
                      N_implicit=part.interval_count - n_exp,
                      cfl_min=float(series.min()), cfl_max=float(series.max()))
    return LevelReport(level=level, grid=grid, partition=part, trajectory=traj,
                       breakdown=br, stats=stats, cfl_series=series)


@pytest.fixture(scope="session")
def case():
    return ss.PerturbedShockCase()


@pytest.fixture(scope="session")
def j_ref(case):
    return ss.reference_functional(case, 6)


@pytest.fixture(scope="session")
def uniform_reports(case):
    return {L: uniform_level_report(case, L) for L in range(4)}


@pytest.fixture(scope="session")
def base_report(uniform_reports):
    return uniform_reports[0]


@pytest.fixture(scope="session")
def adapt_cfg(case):
    return ss.AdaptationConfig(T=case.T)


@pytest.fixture(scope="session")
def ex1_report(case, adapt_cfg, base_report):
    return ss.adaptive_loop(case, adapt_cfg, [0, 1], "match_previous",
                            strategy="fully_implicit",
                            base_report=base_report)[-1]


@pytest.fixture(scope="session")
def ex2_report(case, adapt_cfg, base_report):
    return ss.adaptive_loop(case, adapt_cfg, [0, 1], "match_previous",
                            strategy="imex", base_report=base_report)[-1]


@pytest.fixture(scope="session")
def ex3_rows(case, adapt_cfg, base_report):
    row1 = uniform_level_report(case, 4, basis="initial")
    row2 = ss.adaptive_loop(case, adapt_cfg, [0, 4], "scaled_ref",
                            strategy="imex", factor=2.0 ** -4,
                            base_report=base_report)[-1]
    row3 = ss.adaptive_loop(case, adapt_cfg, [0, 4], "scaled_ref",
                            strategy="imex", factor=1.0,
                            base_report=base_report)[-1]
    return row1, row2, row3


def smooth_hump(z):
    z = np.asarray(z, dtype=float)
    out = np.zeros_like(z)
    inside = np.abs(z) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - z[inside] ** 2))
    return out


class LinearAdvectionCase:
    """Smooth linear transport twin: unit speed, compact hump riding into the
    functional window.  Used to check the estimator against the true error of
    a problem with an accessible exact solution."""

    T = 0.5
    domain = (0.0, 1.0)
    flux = ss.LinearFlux(1.0)

    def __init__(self, weight_source):
        self._w = weight_source

    def initial_profile(self, x):
        return 1.0 + 0.3 * smooth_hump((np.asarray(x, dtype=float) - 0.35) / 0.25)

    def initial_cell_averages(self, edges):
        edges = np.asarray(edges, dtype=float)
        mid = 0.5 * (edges[:-1] + edges[1:])
        half = 0.5 * np.diff(edges)
        acc = np.zeros_like(mid)
        for q in range(GAUSS_X.size):
            acc += GAUSS_W[q] * self.initial_profile(mid + half * GAUSS_X[q])
        return 0.5 * acc

    def exact_profile(self, x, t):
        # inflow is 1 and the hump support stays right of the boundary
        return self.initial_profile(np.asarray(x, dtype=float) - t)

    def inflow_value(self, t):
        return np.ones_like(np.asarray(t, dtype=float))

    def inflow_peak(self):
        return 1.0

    def weight(self, x):
        return self._w.weight(x)

    def weight_gradient(self, x):
        return self._w.weight_gradient(x)


@pytest.fixture(scope="session")
def linear_case(case):
    return LinearAdvectionCase(case)
