"""Density-driven step proposal, mode assignment, and the level loop.

The proposal walk and the implicit/explicit tagging are exercised on
hand-built partitions with known answers; the full loop is pinned by
frozen step counts and density values for the three chain variants.
"""
import numpy as np
import pytest

import shockstep as ss


def _cfg(**kw):
    kw.setdefault("T", 2.0)
    return ss.AdaptationConfig(**kw)


# ---------------------------------------------------------------- config

def test_config_accepts_defaults():
    cfg = ss.AdaptationConfig(T=48.0)
    assert cfg.cfl_switch == 5.0
    assert cfg.cfl_explicit == 0.8
    assert cfg.cfl_cap == 1e4


@pytest.mark.parametrize("kw", [
    dict(cfl_explicit=6.0, cfl_switch=5.0),
    dict(cfl_switch=5.0, cfl_cap=4.0),
    dict(cfl_explicit=0.0),
    dict(tol_k=-1.0),
    dict(tol_total=0.0),
    dict(density_floor=-2.0),
])
def test_config_rejects_inconsistent_values(kw):
    with pytest.raises(ValueError):
        ss.AdaptationConfig(T=1.0, **kw)


def test_effective_floor_paths():
    assert _cfg(density_floor=1e-10).effective_floor() == 1e-10
    cfg = _cfg(T=48.0, tol_k=1e-3)
    assert cfg.effective_floor() == pytest.approx(1e-14 * 1e-3 / 48.0, rel=1e-15)
    with pytest.raises(ValueError, match="tol_k"):
        _cfg().effective_floor()


# --------------------------------------------------------------- proposal

def test_propose_constant_density_is_fixed_point():
    old = ss.uniform_partition(2.0, 0.25)
    d = 3.7e-4
    cfg = _cfg(tol_k=d * 2.0)  # tol/T equals the density, k_m = k_old
    raw = ss.propose_timesteps(old, np.full(8, d), cfg)
    assert raw.size == 8
    np.testing.assert_allclose(raw, 0.25, rtol=1e-12)
    assert np.sum(raw) == pytest.approx(2.0, abs=1e-12)


def test_propose_zero_density_collapses_to_single_step():
    old = ss.uniform_partition(2.0, 0.25)
    cfg = _cfg(tol_k=1e-3)
    raw = ss.propose_timesteps(old, np.zeros(8), cfg)
    np.testing.assert_allclose(raw, [2.0], rtol=0, atol=1e-15)


def test_propose_clips_bridging_step_at_fine_region():
    # quiet spans propose huge steps; the walk must stop at the boundary
    # of the active region instead of jumping across it
    old = ss.TimePartition(times=np.array([0.0, 0.5, 1.0, 1.5, 2.0]))
    dens = np.array([0.0, 0.0, 0.01, 0.0])
    cfg = _cfg(tol_k=2e-3)  # k_m in the active span: 0.5*1e-3/0.01 = 0.05
    raw = ss.propose_timesteps(old, dens, cfg)
    assert raw[0] == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(raw[1:-1], 0.05, rtol=1e-9)
    assert raw[-1] == pytest.approx(0.5, abs=1e-12)
    assert raw.size == 12


@pytest.mark.parametrize("dens,msg", [
    (np.array([]), "empty"),
    (np.ones(3), "misaligned"),
    (np.array([1.0, -1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]), "nonnegative"),
])
def test_propose_rejects_bad_densities(dens, msg):
    old = ss.uniform_partition(2.0, 0.25)
    with pytest.raises(ValueError, match=msg):
        ss.propose_timesteps(old, dens, _cfg(tol_k=1e-3))


def test_propose_always_tiles_exactly():
    rng = np.random.default_rng(31)
    for _ in range(30):
        T = float(rng.uniform(0.5, 50.0))
        k = T / int(rng.integers(4, 40))
        old = ss.uniform_partition(T, k)
        dens = rng.uniform(0.0, 1e-2, old.interval_count)
        dens[rng.random(dens.size) < 0.3] = 0.0
        cfg = ss.AdaptationConfig(T=T, tol_k=float(rng.uniform(1e-5, 1e-2)))
        raw = ss.propose_timesteps(old, dens, cfg)
        assert np.all(raw > 0.0)
        assert abs(np.sum(raw) - T) <= 1e-12 * T


def test_propose_step_count_monotone_in_tolerance():
    rng = np.random.default_rng(32)
    for _ in range(20):
        old = ss.uniform_partition(10.0, 0.5)
        dens = rng.uniform(0.0, 1e-3, 20)
        tol = float(rng.uniform(1e-5, 1e-3))
        n_fine = ss.propose_timesteps(old, dens,
                                      ss.AdaptationConfig(T=10.0, tol_k=tol)).size
        n_coarse = ss.propose_timesteps(old, dens,
                                        ss.AdaptationConfig(T=10.0, tol_k=2 * tol)).size
        assert n_coarse <= n_fine


# ----------------------------------------------------------- mode tagging

def _flat_profile(T, speed):
    return ss.SpeedProfile(times=np.array([0.0, T]),
                           values=np.array([speed]))


def test_assign_modes_fully_implicit():
    cfg = _cfg(T=1.0, tol_k=1.0)
    plan = ss.assign_modes(np.array([0.5, 0.5]), _flat_profile(1.0, 1.0),
                           cfg, h=0.05, strategy="fully_implicit")
    part = plan.partition
    assert part.interval_count == 2
    assert np.all(part.modes == ss.IMPLICIT)
    assert plan.stats.N_implicit == 2
    assert plan.stats.N_explicit == 0
    assert plan.stats.cfl_max == pytest.approx(10.0, rel=1e-12)


def test_assign_modes_splits_steps_beyond_cfl_cap():
    cfg = _cfg(T=0.5, tol_k=1.0)  # default cap 1e4
    plan = ss.assign_modes(np.array([0.5]), _flat_profile(0.5, 2500.0),
                           cfg, h=0.05, strategy="fully_implicit")
    part = plan.partition
    # planning CFL 2.5e4 needs three pieces under the 1e4 cap
    assert part.interval_count == 3
    np.testing.assert_allclose(part.steps, 0.5 / 3, rtol=1e-12)
    assert part.times[-1] == 0.5
    assert np.all(part.modes == ss.IMPLICIT)
    assert plan.stats.cfl_max <= cfg.cfl_cap * (1 + 1e-9)


def test_assign_modes_imex_retiles_quiet_runs():
    raw = np.array([0.3, 0.1, 0.1, 0.3, 0.2])
    cfg = _cfg(T=1.0, tol_k=1.0)
    plan = ss.assign_modes(raw, _flat_profile(1.0, 1.0), cfg, h=0.05,
                           strategy="imex")
    part = plan.partition
    # CFL per segment: 6, 2, 2, 6, 4 with the 5.0 switch
    assert part.interval_count == 12
    modes = part.modes
    assert modes[0] == ss.IMPLICIT
    assert np.all(modes[1:6] == ss.EXPLICIT)
    assert modes[6] == ss.IMPLICIT
    assert np.all(modes[7:] == ss.EXPLICIT)
    # merged spans are re-tiled at the explicit CFL target exactly
    np.testing.assert_allclose(part.steps[1:6], 0.04, rtol=1e-12)
    np.testing.assert_allclose(part.steps[7:], 0.04, rtol=1e-12)
    for t in (0.3, 0.8):
        assert np.any(np.abs(part.times - t) < 1e-12)
    assert plan.stats.N_explicit == 10
    assert plan.stats.N_implicit == 2
    assert plan.stats.cfl_max == pytest.approx(6.0, rel=1e-12)
    assert plan.stats.cfl_min == pytest.approx(0.8, rel=1e-9)


def test_assign_modes_zero_speed_run_is_single_explicit_step():
    cfg = _cfg(T=1.0, tol_k=1.0)
    plan = ss.assign_modes(np.array([0.5, 0.5]), _flat_profile(1.0, 0.0),
                           cfg, h=0.05, strategy="imex")
    assert plan.partition.interval_count == 1
    assert plan.partition.modes[0] == ss.EXPLICIT


def test_assign_modes_rejects_bad_input():
    cfg = _cfg(T=2.0, tol_k=1.0)
    prof = _flat_profile(2.0, 1.0)
    with pytest.raises(ValueError, match="do not tile"):
        ss.assign_modes(np.array([0.5, 0.5]), prof, cfg, h=0.05)
    with pytest.raises(ValueError, match="unknown strategy"):
        ss.assign_modes(np.array([1.0, 1.0]), prof, cfg, h=0.05,
                        strategy="semi")


def test_planned_modes_are_sound_on_benchmark_plan(case, base_report,
                                                   ex2_report):
    profile = ss.SpeedProfile.from_trajectory(base_report.trajectory, case)
    part = ex2_report.plan.partition
    k = part.steps
    cfl = np.array([k[i] * profile.max_over(part.times[i], part.times[i + 1])
                    / ex2_report.grid.h for i in range(part.interval_count)])
    implicit = part.modes == ss.IMPLICIT
    assert float(np.min(cfl[implicit])) >= 5.0
    assert float(np.max(cfl[~implicit])) <= 0.8 * (1 + 1e-9)


# ------------------------------------------------------------ speed profile

def test_speed_profile_includes_inflow(case):
    grid = ss.build_spatial_grid(4, 0)
    part = ss.TimePartition(times=np.array([0.0, 1.0, 2.0]))
    traj = ss.ForwardTrajectory(grid=grid, partition=part,
                                states=np.full((3, 4), 0.5),
                                interface_fluxes=np.zeros((2, 5)),
                                flux=ss.BURGERS)
    prof = ss.SpeedProfile.from_trajectory(traj, case)
    # the boundary value 1.0 beats every interior speed here
    np.testing.assert_array_equal(prof.values, [1.0, 1.0])
    traj.states[:] = -2.0
    prof = ss.SpeedProfile.from_trajectory(traj, case)
    np.testing.assert_array_equal(prof.values, [2.0, 2.0])


def test_speed_profile_interval_maxima():
    prof = ss.SpeedProfile(times=np.array([0.0, 1.0, 2.0, 3.0]),
                           values=np.array([1.0, 5.0, 2.0]))
    assert prof.max_over(0.0, 1.0) == 1.0
    assert prof.max_over(0.5, 1.5) == 5.0
    assert prof.max_over(1.2, 1.8) == 5.0
    assert prof.max_over(2.5, 3.0) == 2.0
    assert prof.max_over(0.1, 2.9) == 5.0


def test_realized_cfl_on_uniform_run(base_report):
    assert float(np.max(base_report.cfl_series)) <= 0.8 * (1 + 1e-9)
    assert base_report.stats.cfl_max == float(np.max(base_report.cfl_series))
    assert base_report.cfl_series.size == base_report.partition.interval_count


# -------------------------------------------------------------- tolerances

def test_tolerance_schedule_rules():
    assert ss.tolerance_schedule("halve", [], current_tol=0.5) == 0.25
    assert ss.tolerance_schedule("match_previous", [1.0, 2.0, 3.0]) == 3.0
    assert ss.tolerance_schedule("scaled_ref", [2.0, 9.0], factor=0.25) == 0.5


@pytest.mark.parametrize("rule,kw", [
    ("halve", {}),
    ("match_previous", {}),
    ("scaled_ref", {}),
    ("scaled_ref", {"prior": [1.0]}),
    ("ramp", {"prior": [1.0], "factor": 1.0, "current_tol": 1.0}),
])
def test_tolerance_schedule_rejects_incomplete_input(rule, kw):
    prior = kw.pop("prior", [])
    with pytest.raises(ValueError):
        ss.tolerance_schedule(rule, prior, **kw)


def test_speed_basis_values(case):
    grid = ss.build_spatial_grid(20, 0)
    s_init = ss.speed_for_basis(case, grid, "initial")
    s_glob = ss.speed_for_basis(case, grid, "global")
    assert s_init == pytest.approx(1.0, abs=1e-12)
    assert s_glob == pytest.approx(1.0314159264363831, rel=1e-12)
    assert s_glob >= s_init
    with pytest.raises(ValueError, match="basis"):
        ss.speed_for_basis(case, grid, "peak")


# ---------------------------------------------------------------- the loop

def test_loop_rejects_bad_schedules(case, base_report):
    cfg = ss.AdaptationConfig(T=case.T)
    with pytest.raises(ValueError, match="empty level schedule"):
        ss.adaptive_loop(case, cfg, [], "match_previous")
    with pytest.raises(ValueError, match="one factor per adaptive level"):
        ss.adaptive_loop(case, cfg, [0, 1], "scaled_ref",
                         factor=[0.5, 0.25], base_report=base_report)
    with pytest.raises(ValueError, match="level mismatch"):
        ss.adaptive_loop(case, cfg, [1, 2], "match_previous",
                         base_report=base_report)


def test_loop_stops_once_total_tolerance_is_met(case, base_report):
    cfg = ss.AdaptationConfig(T=case.T, tol_total=1e6)
    reports = ss.adaptive_loop(case, cfg, [0, 1], "match_previous",
                               base_report=base_report)
    assert len(reports) == 1
    assert reports[0] is base_report


def test_loop_runs_all_levels_when_tolerance_unmet(case, base_report):
    cfg = ss.AdaptationConfig(T=case.T, tol_total=1e-30)
    reports = ss.adaptive_loop(case, cfg, [0, 1], "match_previous",
                               strategy="imex", base_report=base_report)
    assert len(reports) == 2
    assert reports[1].tol_k is not None


def test_loop_records_tolerance_and_plan(base_report, ex1_report):
    assert base_report.plan is None
    assert base_report.tol_k is None
    assert ex1_report.tol_k == base_report.breakdown.eta_k_bar
    assert ex1_report.plan is not None
    assert ex1_report.partition is ex1_report.plan.partition
    assert ex1_report.stats is ex1_report.plan.stats


# ------------------------------------------------------------- regressions

def test_fully_implicit_chain_regression(ex1_report):
    br = ex1_report.breakdown
    assert ex1_report.stats.N == 1284
    assert ex1_report.stats.N_explicit == 0
    assert br.eta_k_bar == pytest.approx(5.694751e-4, rel=1e-6)
    assert br.eta_k_bar / br.J_h == pytest.approx(3.310286e-4, rel=1e-6)
    assert ex1_report.stats.cfl_max == pytest.approx(472.4, rel=1e-3)


def test_fully_implicit_chain_newton_cost(ex1_report):
    iters = [st.iterations for st in ex1_report.trajectory.newton_stats
             if st is not None]
    assert len(iters) == ex1_report.stats.N
    assert max(iters) <= 6
    assert float(np.mean(iters)) < 4.0


def test_imex_chain_regression(ex1_report, ex2_report):
    br = ex2_report.breakdown
    assert ex2_report.stats.N == 529
    assert ex2_report.stats.N_explicit == 516
    assert br.eta_k_bar / br.J_h == pytest.approx(4.767094e-4, rel=1e-6)
    assert ex2_report.stats.N < ex1_report.stats.N


def test_refined_chain_regressions(base_report, ex3_rows):
    row1, row2, row3 = ex3_rows
    b1, b2, b3 = row1.breakdown, row2.breakdown, row3.breakdown

    assert row1.partition.interval_count == 19200
    assert b1.eta_k_bar / b1.J_h == pytest.approx(3.508741e-5, rel=1e-6)
    assert b1.eta_h_bar / b1.J_h == pytest.approx(1.645298e-4, rel=1e-6)
    assert b1.J_h == pytest.approx(1.72811902, abs=1e-7)

    base_density = base_report.breakdown.eta_k_bar
    assert row2.stats.N == 4062
    assert row2.tol_k == 2.0 ** -4 * base_density
    assert b2.eta_k_bar / b2.J_h == pytest.approx(4.783750e-5, rel=1e-6)

    assert row3.stats.N == 1770
    assert row3.tol_k == base_density
    assert b3.eta_k_bar / b3.J_h == pytest.approx(2.948915e-4, rel=1e-6)
