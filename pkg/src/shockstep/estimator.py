"""Target functional and space-time error breakdown.

The error in the functional splits into a time part eta_k (driven by the
jump of the solution across time levels) and a space part eta_h (driven by
the interface-flux imbalance), each weighted by the adjoint gradient.  The
closed forms below are the exact reductions of the prism-residual integrals
for piecewise-constant solution, weight and adjoint samples; the omitted
cross terms vanish identically in that representation.
"""
from __future__ import annotations

from dataclasses import dataclass
from weakref import WeakKeyDictionary

import numpy as np

from . import forward
from .dual import CoefficientField, DualGradientTrajectory
from .forward import ForwardTrajectory
from .grid import build_spatial_grid, uniform_partition

REF_LEVEL = 6
_GAUSS_X, _GAUSS_W = np.polynomial.legendre.leggauss(5)

_ref_cache: "WeakKeyDictionary[object, dict]" = WeakKeyDictionary()


@dataclass
class ErrorBreakdown:
    eta_k_cells: np.ndarray   # (N, J) signed contributions
    eta_h_cells: np.ndarray
    eta_k_bar_n: np.ndarray   # per-interval densities, (1/k_n) * sum_j |.|
    eta_h_bar_n: np.ndarray
    eta_k_bar: float
    eta_h_bar: float
    eta_bar: float
    eta_k: float              # signed sums
    eta_h: float
    J_h: float


def weight_cell_integrals(grid, case) -> np.ndarray:
    """W_j = integral of the weight over cell j, 5-point Gauss per cell."""
    mid = grid.centers
    acc = np.zeros(grid.cell_count)
    for q in range(_GAUSS_X.size):
        acc += _GAUSS_W[q] * case.weight(mid + 0.5 * grid.h * _GAUSS_X[q])
    return 0.5 * grid.h * acc


def evaluate_functional(traj: ForwardTrajectory, case) -> float:
    """J_h = sum_n k_n sum_j u_j^n W_j with the end-of-interval state."""
    W = weight_cell_integrals(traj.grid, case)
    k = traj.partition.steps
    return float(np.sum(k * (traj.states[1:] @ W)))


def cell_time_error(j: int, n: int, traj: ForwardTrajectory,
                    coeff: CoefficientField, dual: DualGradientTrajectory,
                    case) -> float:
    k_n = float(traj.partition.steps[n])
    h = traj.grid.h
    du = traj.states[n + 1, j] - traj.states[n, j]
    psi_c = case.weight(traj.grid.centers[j])
    adj = psi_c - coeff.a_values[n, j] * dual.w_samples[n, j]
    return -0.5 * k_n * h * du * adj


def cell_space_error(j: int, n: int, traj: ForwardTrajectory,
                     dual: DualGradientTrajectory) -> float:
    k_n = float(traj.partition.steps[n])
    h = traj.grid.h
    F = traj.interface_fluxes
    f_mid = float(traj.flux.f(traj.states[n + 1, j]))
    return k_n * 0.5 * h * dual.w_samples[n, j] * (F[n, j + 1] + F[n, j] - 2.0 * f_mid)


def assemble_breakdown(traj: ForwardTrajectory, coeff: CoefficientField,
                       dual: DualGradientTrajectory, case) -> ErrorBreakdown:
    grid = traj.grid
    part = traj.partition
    if coeff.a_values.shape != dual.w_samples.shape or \
            coeff.a_values.shape != (part.interval_count, grid.cell_count):
        raise ValueError("trajectory, coefficients and dual samples disagree in shape")
    k = part.steps[:, None]
    h = grid.h
    psi_c = case.weight(grid.centers)[None, :]
    du = traj.states[1:] - traj.states[:-1]
    W = dual.w_samples
    A = coeff.a_values
    eta_k_cells = -0.5 * k * h * du * (psi_c - A * W)
    F = traj.interface_fluxes
    f_mid = traj.flux.f(traj.states[1:])
    eta_h_cells = k * 0.5 * h * W * (F[:, 1:] + F[:, :-1] - 2.0 * f_mid)
    k1 = part.steps
    eta_k_bar_n = np.sum(np.abs(eta_k_cells), axis=1) / k1
    eta_h_bar_n = np.sum(np.abs(eta_h_cells), axis=1) / k1
    eta_k_bar = float(np.sum(k1 * eta_k_bar_n))
    eta_h_bar = float(np.sum(k1 * eta_h_bar_n))
    return ErrorBreakdown(
        eta_k_cells=eta_k_cells,
        eta_h_cells=eta_h_cells,
        eta_k_bar_n=eta_k_bar_n,
        eta_h_bar_n=eta_h_bar_n,
        eta_k_bar=eta_k_bar,
        eta_h_bar=eta_h_bar,
        eta_bar=eta_k_bar + eta_h_bar,
        eta_k=float(np.sum(eta_k_cells)),
        eta_h=float(np.sum(eta_h_cells)),
        J_h=evaluate_functional(traj, case),
    )


def efficiency_index(breakdown: ErrorBreakdown, J_ref: float) -> float:
    """theta = (eta_h + eta_k) / (J_ref - J_h), signed sums throughout.

    Returns nan when the reference and computed functional are numerically
    indistinguishable; a ratio against noise carries no information.
    """
    denom = J_ref - breakdown.J_h
    if abs(denom) < 1e-14:
        return float("nan")
    return (breakdown.eta_h + breakdown.eta_k) / denom


def reference_functional(case, ref_level: int = REF_LEVEL,
                         base_cells: int = 20, cfl: float = 0.8) -> float:
    """Functional value from a fine uniform explicit run, memoized per case.

    The run is streamed: only the running state and the functional
    accumulator are kept, so reference levels with ~1e5 steps stay cheap
    in memory.
    """
    per_case = _ref_cache.setdefault(case, {})
    key = (ref_level, base_cells, cfl)
    if key in per_case:
        return per_case[key]
    grid = build_spatial_grid(base_cells, ref_level, case.domain)
    flux = case.flux
    u = np.asarray(case.initial_cell_averages(grid.edges), dtype=float)
    speed = max(float(np.max(flux.wave_speed(u))),
                float(np.max(flux.wave_speed(np.array([case.inflow_peak()])))))
    part = uniform_partition(case.T, cfl * grid.h / speed)
    W = weight_cell_integrals(grid, case)
    g_at = np.atleast_1d(np.asarray(case.inflow_value(part.times), dtype=float))
    acc = 0.0
    for n in range(part.interval_count):
        k = float(part.times[n + 1] - part.times[n])
        u, _ = forward.explicit_step(u, k, grid.h, g_at[n], flux)
        acc += k * float(u @ W)
    per_case[key] = acc
    return acc
