"""Lattice random-walk calibration and ensemble simulation tests."""

import numpy as np
import pytest

from migswitch.hjb import Grid, solve_backward
from migswitch.model import (
    ConfigError,
    ProblemSpec,
    Regime,
    Site,
    StartState,
    SwitchingCosts,
    SwitchRule,
    validate_problem,
)
from migswitch.presets import preset_spec
from migswitch.regions import SwitchingRegions, extract_regions
from migswitch.rewards import StepProfile
from migswitch.simulate import (
    calibrate,
    length_of_stay,
    run_ensemble,
    simulate_path,
)


def toy_problem(
    movers=((0.6, 0.5, 0.0),),
    waiting_beta=0.0,
    length=1.0,
    horizon=2.0,
    sites=(),
    costs=None,
    start=(0.0, 1),
):
    """Small validated problem: moving regimes 1..k, waiting regime k+1."""
    regimes = [
        Regime(index=i + 1, label=f"move{i + 1}", v=v, mu=mu, beta=beta)
        for i, (v, mu, beta) in enumerate(movers)
    ]
    regimes.append(
        Regime(index=len(movers) + 1, label="waiting", v=0.0, mu=0.0, beta=waiting_beta)
    )
    spec = ProblemSpec(
        label="toy",
        length=length,
        horizon=horizon,
        regimes=tuple(regimes),
        sites=tuple(sites),
        costs=SwitchingCosts(dict(costs or {})),
        terminal={"default": StepProfile(edges=(0.0, horizon), levels=(1.0,))},
        start=StartState(x=start[0], regime=start[1]),
        distance_scale=1.0,
        moving_rewards={},
    )
    return validate_problem(spec)


def no_switch_regions(problem, nx=11, nt=10):
    """Hand-built region set whose policy never switches."""
    n_reg = len(problem.regimes)
    grid = Grid(nx=nx, nt=nt, length=problem.length, horizon=problem.horizon)
    return SwitchingRegions(
        masks=np.zeros((n_reg, n_reg, nt + 1, nx), dtype=bool),
        grid=grid,
        regime_indices=tuple(r.index for r in problem.regimes),
        tol=0.0,
        problem_hash=problem.problem_hash(),
    )


def forced_switch_regions(problem, pair, x_max, nx=11, nt=10):
    """Region set that orders the switch `pair` at every node with x <= x_max."""
    regions = no_switch_regions(problem, nx=nx, nt=nt)
    a = regions.regime_indices.index(pair[0])
    b = regions.regime_indices.index(pair[1])
    cols = regions.grid.x_nodes <= x_max + 1e-12
    regions.masks[a, b, :, cols] = True
    regions.masks[a, b, nt, :] = False
    regions.masks[a, b, :, nx - 1] = False
    return regions


@pytest.fixture(scope="module")
def table2():
    problem = validate_problem(preset_spec("table2"))
    grid = Grid(nx=201, nt=700, length=problem.length, horizon=problem.horizon)
    fld = solve_backward(problem, grid)
    return problem, fld, extract_regions(problem, fld)


@pytest.fixture(scope="module")
def table2_ensemble(table2):
    problem, _, regions = table2
    return run_ensemble(problem, regions, n_paths=1500, seed=2026, record_paths=(0, 7))


class TestCalibration:
    def test_probability_simplex_is_exact(self, table2):
        problem, _, _ = table2
        calib = calibrate(problem)
        for arr in (calib.p_left, calib.p_right, calib.p_stay):
            assert np.all(arr >= 0.0) and np.all(arr <= 1.0)
        total = calib.p_left + calib.p_right + calib.p_stay
        assert np.abs(total - 1.0).max() <= 1e-15

    def test_single_step_moments_are_exact(self, table2):
        problem, _, _ = table2
        calib = calibrate(problem)
        for a, r in enumerate(problem.regimes):
            mean = (calib.p_right[a] - calib.p_left[a]) * calib.dx
            second = (calib.p_right[a] + calib.p_left[a]) * calib.dx**2
            assert mean == pytest.approx(r.v * calib.dt, rel=1e-12, abs=1e-18)
            assert second == pytest.approx(2.0 * r.mu * calib.dt, rel=1e-12, abs=1e-18)

    def test_waiting_regime_never_moves(self, table2):
        problem, _, _ = table2
        calib = calibrate(problem)
        w = problem.waiting_index - 1
        assert calib.p_left[w] == 0.0
        assert calib.p_right[w] == 0.0
        assert calib.p_stay[w] == 1.0

    def test_total_rate_uses_sum_when_no_regime_dominates(self):
        problem = toy_problem(
            movers=((0.0, 0.3, 0.0), (0.0, 0.3, 0.0), (0.0, 0.3, 0.0))
        )
        calib = calibrate(problem, dx=0.1)
        assert calib.total_rate == pytest.approx(0.9)

    def test_total_rate_doubles_dominant_diffusivity(self):
        problem = toy_problem(movers=((0.0, 0.5, 0.0), (0.0, 0.1, 0.0)))
        calib = calibrate(problem, dx=0.1)
        assert calib.total_rate == pytest.approx(1.0)
        # the dominant regime then moves every step
        assert calib.p_stay[0] == pytest.approx(0.0, abs=1e-15)

    def test_dx_snaps_to_divide_the_domain(self):
        problem = toy_problem(length=1.0)
        calib = calibrate(problem, dx=0.3)
        assert calib.dx == pytest.approx(1.0 / 3.0)
        assert calib.n_nodes(problem.length) == 4
        # requesting a cell larger than the domain still leaves one cell
        coarse = calibrate(problem, dx=5.0)
        assert coarse.dx == pytest.approx(1.0)
        assert coarse.n_nodes(problem.length) == 2

    def test_default_dx_is_two_hundredth_of_domain(self):
        problem = toy_problem(length=1.0)
        calib = calibrate(problem)
        assert calib.dx == pytest.approx(1.0 / 200.0)

    def test_drift_dominated_regime_is_rejected(self):
        problem = toy_problem(movers=((1.0, 0.01, 0.0),))
        with pytest.raises(ConfigError, match="smaller dx"):
            calibrate(problem, dx=0.1)
        # fine once dx is small enough that mu >= v dx / 2
        calibrate(problem, dx=0.01)

    def test_all_zero_diffusivity_is_rejected(self):
        problem = toy_problem(movers=((0.3, 0.0, 0.0),))
        with pytest.raises(ConfigError, match="mu > 0"):
            calibrate(problem, dx=0.1)

    def test_empirical_step_moments(self, table2):
        problem, _, _ = table2
        calib = calibrate(problem)
        rng = np.random.Generator(np.random.PCG64(7))
        n = 100_000
        for a, r in enumerate(problem.regimes):
            if r.v == 0.0 and r.mu == 0.0:
                continue
            u = rng.random(n)
            steps = (
                np.where(u < calib.p_right[a], 1.0, 0.0)
                - np.where(u >= 1.0 - calib.p_left[a], 1.0, 0.0)
            ) * calib.dx
            # the epsilon floor covers degenerate cases (p_stay = 0 makes the
            # squared step constant, so its standard error vanishes)
            se_mean = steps.std(ddof=1) / np.sqrt(n)
            assert abs(steps.mean() - r.v * calib.dt) <= 3.0 * se_mean + 1e-15
            sq = steps**2
            se_sq = sq.std(ddof=1) / np.sqrt(n)
            assert abs(sq.mean() - 2.0 * r.mu * calib.dt) <= 3.0 * se_sq + 1e-15


class TestEnsembleAccounting:
    def test_argument_validation(self, table2):
        problem, _, regions = table2
        with pytest.raises(ValueError, match="n_paths"):
            run_ensemble(problem, regions, n_paths=0, seed=1)
        with pytest.raises(ValueError, match="out of range"):
            run_ensemble(problem, regions, n_paths=3, seed=1, record_paths=(3,))

    def test_regime_indices_must_be_contiguous(self, table2):
        problem, _, regions = table2
        import dataclasses

        broken = dataclasses.replace(regions, regime_indices=(1, 2, 4))
        with pytest.raises(ValueError, match="contiguous"):
            run_ensemble(problem, broken, n_paths=1, seed=1)

    def test_per_path_scalars_are_consistent(self, table2_ensemble):
        res = table2_ensemble
        assert res.arrival_fraction == pytest.approx(res.arrived.mean())
        assert np.all(np.isnan(res.arrival_time[~res.arrived]))
        assert np.all(np.isfinite(res.arrival_time[res.arrived]))
        assert np.all(res.terminal_discount[~res.arrived] == 0.0)
        hit = res.terminal_discount[res.arrived]
        assert np.all((hit > 0.0) & (hit <= 1.0))
        assert set(np.unique(res.final_regime)) <= {1, 2, 3}
        assert np.all(res.site_wait >= 0.0)
        assert res.site_wait.shape == (res.n_paths, 2)

    def test_realized_decomposes_into_flow_and_terminal(self, table2, table2_ensemble):
        problem, _, _ = table2
        res = table2_ensemble
        profile = problem.terminal_profile(1)
        realized = res.realized(problem)
        assert np.allclose(realized, res.flow_value + res.terminal_value(profile))
        # one shared default profile, so rescoring with it changes nothing
        assert np.allclose(realized, res.rescored(profile))

    def test_mean_payoff_tracks_pde_value(self, table2, table2_ensemble):
        problem, fld, _ = table2
        res = table2_ensemble
        payoff = res.realized(problem)
        se = payoff.std(ddof=1) / np.sqrt(res.n_paths)
        v0 = fld.at_start(problem.start.regime, problem.start.x)
        assert abs(payoff.mean() - v0) <= 1.96 * se + 0.02

    def test_summary_matches_arrays(self, table2, table2_ensemble):
        problem, _, _ = table2
        res = table2_ensemble
        s = res.summary(problem)
        payoff = res.realized(problem)
        assert s["n_paths"] == res.n_paths and s["seed"] == res.seed
        assert s["mean_payoff"] == pytest.approx(payoff.mean())
        assert s["se_payoff"] == pytest.approx(
            payoff.std(ddof=1) / np.sqrt(res.n_paths)
        )
        assert s["arrival_fraction"] == pytest.approx(res.arrived.mean())
        med = np.median(res.arrival_time[res.arrived])
        assert s["median_arrival_time"] == pytest.approx(med)
        assert 0.0 < med < problem.horizon
        assert s["mean_site_wait"] == pytest.approx(list(res.site_wait.mean(axis=0)))

    def test_length_of_stay_averages_over_visitors_only(self, table2_ensemble):
        res = table2_ensemble
        stays = length_of_stay(res)
        for j in range(res.site_wait.shape[1]):
            col = res.site_wait[:, j]
            visitors = col > 0.0
            if visitors.any():
                assert stays[j] == pytest.approx(col[visitors].mean())
            else:
                assert stays[j] == 0.0

    def test_same_seed_reproduces_bitwise(self, table2):
        problem, _, regions = table2
        a = run_ensemble(problem, regions, n_paths=64, seed=11)
        b = run_ensemble(problem, regions, n_paths=64, seed=11)
        assert np.array_equal(a.flow_value, b.flow_value)
        assert np.array_equal(a.arrival_time, b.arrival_time, equal_nan=True)
        assert np.array_equal(a.final_regime, b.final_regime)
        c = run_ensemble(problem, regions, n_paths=64, seed=12)
        # flow is policy-deterministic here, so compare the random arrivals
        assert not np.array_equal(a.arrival_time, c.arrival_time, equal_nan=True)

    def test_path_streams_do_not_depend_on_ensemble_size(self, table2):
        problem, _, regions = table2
        small = run_ensemble(problem, regions, n_paths=5, seed=33, record_paths=(3,))
        large = run_ensemble(problem, regions, n_paths=40, seed=33, record_paths=(3,))
        assert small.flow_value[3] == large.flow_value[3]
        assert np.array_equal(
            small.arrival_time[:5], large.arrival_time[:5], equal_nan=True
        )
        ta, tb = small.trajectories[3], large.trajectories[3]
        assert np.array_equal(ta.positions, tb.positions)
        assert np.array_equal(ta.regimes, tb.regimes)

    def test_simulate_path_matches_ensemble_member(self, table2):
        problem, _, regions = table2
        traj = simulate_path(problem, regions, seed=33, path_index=3)
        ens = run_ensemble(problem, regions, n_paths=9, seed=33, record_paths=(3,))
        ref = ens.trajectories[3]
        assert np.array_equal(traj.times, ref.times)
        assert np.array_equal(traj.positions, ref.positions)
        assert np.array_equal(traj.regimes, ref.regimes)
        assert traj.switches == ref.switches
        assert traj.arrived == ref.arrived
        assert traj.arrival_time == ref.arrival_time or (
            np.isnan(traj.arrival_time) and np.isnan(ref.arrival_time)
        )


class TestTrajectories:
    def test_recorded_path_structure(self, table2, table2_ensemble):
        problem, _, _ = table2
        res = table2_ensemble
        assert set(res.trajectories) == {0, 7}
        for k, traj in res.trajectories.items():
            assert len(traj.times) == len(traj.positions) == len(traj.regimes)
            assert traj.times[0] == 0.0
            assert traj.positions[0] == problem.start.x
            assert traj.regimes[0] == problem.start.regime
            assert traj.arrived == bool(res.arrived[k])
            assert np.all(traj.positions >= 0.0)
            assert np.all(traj.positions <= problem.length + 1e-9)
            for sw in traj.switches:
                assert set(sw) == {"t", "x", "from_regime", "to_regime", "cost"}
                assert sw["from_regime"] != sw["to_regime"]
                assert sw["cost"] > 0.0
                assert 0.0 <= sw["t"] < problem.horizon
            if traj.arrived:
                assert traj.positions[-1] == pytest.approx(problem.length)
                assert traj.times[-1] == pytest.approx(traj.arrival_time)
                assert traj.arrival_time == res.arrival_time[k]

    def test_switch_count_matches_recorded_switches(self, table2_ensemble):
        res = table2_ensemble
        for k, traj in res.trajectories.items():
            assert len(traj.switches) == res.switch_count[k]


class TestWalkMechanics:
    def test_reflection_bounces_off_the_origin(self):
        # pure diffusion with p_stay = 0: the first move from node 0 must land
        # on node 1 whichever direction the coin picks
        problem = toy_problem(movers=((0.0, 0.5, 0.0),), start=(0.0, 1))
        regions = no_switch_regions(problem)
        for seed in (1, 2, 3):
            traj = simulate_path(problem, regions, seed=seed, dx=0.1)
            assert traj.positions[1] == pytest.approx(0.1)
            assert np.all(traj.positions >= 0.0)

    def test_absorption_freezes_the_path(self):
        problem = toy_problem(movers=((1.0, 0.1, 0.0),), horizon=20.0, start=(0.0, 1))
        regions = no_switch_regions(problem)
        res = run_ensemble(
            problem, regions, n_paths=32, seed=5, dx=0.1, record_paths=(0,)
        )
        assert res.arrived.all()
        assert np.all(res.terminal_discount == 1.0)  # beta = 0
        traj = res.trajectories[0]
        dt = res.calibration.dt
        # recording stops one step after absorption
        assert len(traj.positions) == int(round(traj.arrival_time / dt)) + 1
        assert traj.positions[-1] == pytest.approx(problem.length)
        assert np.all(traj.positions[:-1] < problem.length)
        # constant terminal profile of 1 and beta = 0: payoff = flow + 1
        realized = res.realized(problem)
        assert np.allclose(realized, res.flow_value + 1.0)

    def test_pure_waiting_collects_staging_reward_exactly(self):
        site = Site(index=0, start=0.0, width=0.2, staging_reward=0.3)
        problem = toy_problem(
            movers=((0.6, 0.5, 0.0),),
            horizon=1.705,
            sites=(site,),
            start=(0.0, 2),
        )
        regions = no_switch_regions(problem)
        res = run_ensemble(problem, regions, n_paths=4, seed=9, dx=0.1)
        # dt = dx^2 / max(mu_sum, 2 mu_max) = 0.01, so 1.705 needs 171 steps
        # with a final partial step of 0.005; the walker waits through all of it
        assert res.calibration.dt == pytest.approx(0.01)
        assert not res.arrived.any()
        assert np.all(res.final_regime == 2)
        assert np.all(np.isnan(res.arrival_time))
        assert res.flow_value == pytest.approx(
            np.full(4, 0.3 * 1.705), rel=1e-10
        )
        assert res.site_wait[:, 0] == pytest.approx(np.full(4, 1.705), rel=1e-12)
        assert length_of_stay(res)[0] == pytest.approx(1.705, rel=1e-12)
        assert res.summary(problem)["median_arrival_time"] is None

    def test_waiting_reward_is_discounted_stepwise(self):
        site = Site(index=0, start=0.0, width=0.2, staging_reward=0.3)
        problem = toy_problem(
            movers=((0.6, 0.5, 0.0),),
            waiting_beta=0.8,
            horizon=1.7,
            sites=(site,),
            start=(0.0, 2),
        )
        regions = no_switch_regions(problem)
        res = run_ensemble(problem, regions, n_paths=1, seed=9, dx=0.1)
        dt = res.calibration.dt
        steps = np.arange(int(round(1.7 / dt)))
        expected = np.sum(0.3 * np.exp(-0.8 * steps * dt) * dt)
        assert res.flow_value[0] == pytest.approx(expected, rel=1e-12)

    def test_policy_switch_pays_cost_once(self):
        site = Site(index=0, start=0.0, width=0.2, staging_reward=0.0)
        problem = toy_problem(
            movers=((1.0, 0.1, 0.0),),
            horizon=20.0,
            sites=(site,),
            costs={(2, 1): SwitchRule(cost=0.07, where=(0,))},
            start=(0.0, 2),
        )
        regions = forced_switch_regions(problem, pair=(2, 1), x_max=0.2)
        res = run_ensemble(
            problem, regions, n_paths=16, seed=4, dx=0.1, record_paths=(0,)
        )
        # every walker switches to the mover at t = 0 and flies out
        assert np.all(res.switch_count == 1)
        assert np.all(res.final_regime == 1)
        assert res.arrived.all()
        assert res.flow_value == pytest.approx(np.full(16, -0.07), abs=1e-15)
        assert np.all(res.site_wait == 0.0)
        sw = res.trajectories[0].switches
        assert sw == [
            {"t": 0.0, "x": 0.0, "from_regime": 2, "to_regime": 1, "cost": 0.07}
        ]
        # constant terminal 1, beta = 0: payoff is 1 - h for every path
        assert res.realized(problem) == pytest.approx(np.full(16, 0.93))
