"""Solver unit tests: scheme assembly, boundaries, oracle agreement, monotonicity."""

import dataclasses

import numpy as np
import pytest
from scipy.linalg import solve_banded

from chain_oracle import chain_value, random_instance
from migswitch.hjb import (
    Grid,
    _banded_matrix,
    apply_obstacle,
    implicit_step,
    load_value_field,
    residual,
    save_value_field,
    solve_backward,
)
from migswitch.model import (
    ProblemSpec,
    Regime,
    Site,
    StartState,
    SwitchRule,
    SwitchingCosts,
    validate_problem,
)
from migswitch.presets import preset_spec
from migswitch.rewards import GaussianPulse, StepProfile


def unit_problem(staging=0.1, beta1=0.2, cost=0.05, terminal=None):
    spec = ProblemSpec(
        label="unit",
        length=1.0,
        horizon=1.0,
        regimes=(
            Regime(index=1, label="moving", v=0.4, mu=0.1, beta=beta1),
            Regime(index=2, label="waiting", v=0.0, mu=0.0, beta=0.1),
        ),
        sites=(Site(index=0, start=0.0, width=0.2, staging_reward=staging),),
        costs=SwitchingCosts(
            {
                (1, 2): SwitchRule(cost=cost, where="sites"),
                (2, 1): SwitchRule(cost=cost, where="everywhere"),
            }
        ),
        terminal={"default": terminal or GaussianPulse(center=0.5, sigma=0.15)},
        start=StartState(x=0.0, regime=1),
    )
    return validate_problem(spec)


def table2_problem():
    return validate_problem(preset_spec("table2"))


class TestGrid:
    def test_spacing(self):
        g = Grid(nx=11, nt=20, length=2.0, horizon=4.0)
        assert g.dx == pytest.approx(0.2)
        assert g.dt == pytest.approx(0.2)
        assert g.x_nodes[0] == 0.0
        assert g.x_nodes[-1] == pytest.approx(2.0)
        assert len(g.t_nodes) == 21

    def test_validation(self):
        with pytest.raises(ValueError, match="nx"):
            Grid(nx=2, nt=10, length=1.0, horizon=1.0)
        with pytest.raises(ValueError, match="nt"):
            Grid(nx=10, nt=0, length=1.0, horizon=1.0)
        with pytest.raises(ValueError, match="positive"):
            Grid(nx=10, nt=10, length=-1.0, horizon=1.0)

    def test_solve_rejects_mismatched_grid(self):
        problem = unit_problem()
        bad = Grid(nx=21, nt=20, length=2.0, horizon=1.0)
        with pytest.raises(ValueError, match="length"):
            solve_backward(problem, bad)


class TestSchemeAssembly:
    def test_banded_matrix_rows(self):
        g = Grid(nx=6, nt=10, length=1.0, horizon=1.0)
        v, mu, beta = 0.4, 0.1, 0.3
        c = v * g.dt / g.dx
        d = mu * g.dt / g.dx**2
        ab = _banded_matrix(v, mu, beta, g)
        dense = np.zeros((6, 6))
        for n in range(6):
            dense[n, n] = ab[1, n]
            if n < 5:
                dense[n, n + 1] = ab[0, n + 1]
                dense[n + 1, n] = ab[2, n]
        diag = 1.0 + c + 2.0 * d + beta * g.dt
        # reflecting wall: the ghost mirror folds the down-move onto node 1
        assert dense[0, 0] == pytest.approx(diag)
        assert dense[0, 1] == pytest.approx(-(c + 2.0 * d))
        # interior rows
        for n in range(1, 5):
            assert dense[n, n - 1] == pytest.approx(-d)
            assert dense[n, n] == pytest.approx(diag)
            assert dense[n, n + 1] == pytest.approx(-(c + d))
        # pinned arrival row
        assert dense[5, 5] == 1.0
        assert dense[5, 4] == 0.0

    def test_m_matrix_signs(self):
        g = Grid(nx=31, nt=10, length=1.0, horizon=1.0)
        ab = _banded_matrix(0.8, 0.2, 0.5, g)
        assert (ab[0, 1:] <= 0).all()
        assert (ab[2, :-1] <= 0).all()
        assert (ab[1] > 0).all()
        # strict diagonal dominance
        rowsum = ab[1].copy()
        rowsum[:-1] += ab[0, 1:]
        rowsum[1:] += ab[2, :-1]
        assert (rowsum > 0).all()

    def test_implicit_step_matches_dense_solve(self):
        problem = unit_problem()
        g = Grid(nx=17, nt=10, length=1.0, horizon=1.0)
        rng = np.random.default_rng(3)
        v_next = rng.uniform(0.0, 1.0, size=(2, 17))
        out = implicit_step(problem, g, v_next.copy(), t=0.3)
        x = g.x_nodes
        for a, regime in enumerate(problem.regimes):
            ab = _banded_matrix(regime.v, regime.mu, regime.beta, g)
            dense = np.diag(ab[1])
            dense += np.diag(ab[0, 1:], k=1)
            dense += np.diag(ab[2, :-1], k=-1)
            rhs = v_next[a] + g.dt * np.asarray(
                problem.eval_running(regime.index, 0.3, x)
            )
            rhs[-1] = problem.eval_terminal(regime.index, 0.3)
            expected = np.linalg.solve(dense, rhs)
            assert np.allclose(out[a], expected, atol=1e-12)

    def test_apply_obstacle(self):
        v_hat = np.array([[0.2, 0.9], [0.5, 0.1]])
        feasible = np.zeros((2, 2, 2), dtype=bool)
        cost = np.zeros((2, 2, 2))
        feasible[0, 1, :] = True
        cost[0, 1, :] = 0.1
        out = apply_obstacle(v_hat, feasible, cost)
        # first regime lifted where switching pays, second untouched
        assert out[0, 0] == pytest.approx(0.4)
        assert out[0, 1] == pytest.approx(0.9)
        assert np.array_equal(out[1], v_hat[1])


class TestSolveBackward:
    def test_zero_rewards_give_zero_field(self):
        problem = unit_problem(
            staging=0.0, terminal=StepProfile(edges=(0.0, 1.0), levels=(0.0,))
        )
        g = Grid(nx=31, nt=40, length=1.0, horizon=1.0)
        field = solve_backward(problem, g)
        assert np.abs(field.values).max() == 0.0

    def test_terminal_and_arrival_rows(self):
        problem = table2_problem()
        g = Grid(nx=101, nt=140, length=problem.length, horizon=problem.horizon)
        field = solve_backward(problem, g)
        assert np.abs(field.values[:, g.nt, :-1]).max() == 0.0
        for a, regime in enumerate(problem.regimes):
            expected = [
                problem.eval_terminal(regime.index, t) for t in g.t_nodes
            ]
            assert np.allclose(field.values[a, :, -1], expected, atol=1e-12)

    def test_values_bounded_and_finite(self):
        problem = table2_problem()
        g = Grid(nx=101, nt=140, length=problem.length, horizon=problem.horizon)
        field = solve_backward(problem, g)
        assert np.isfinite(field.values).all()
        assert field.values.min() >= 0.0
        # no reward exceeds peak 1 plus accumulated staging
        assert field.values.max() <= 1.0 + 0.00165 * problem.horizon + 1e-9

    def test_obstacle_relation_holds_on_solved_field(self):
        problem = table2_problem()
        g = Grid(nx=101, nt=140, length=problem.length, horizon=problem.horizon)
        field = solve_backward(problem, g)
        feasible, cost = problem.switch_tables(g.x_nodes)
        v = field.values
        for a in range(3):
            for b in range(3):
                if not feasible[a, b].any():
                    continue
                lifted = v[b, :-1, :] - cost[a, b]
                viol = (v[a, :-1, :] - lifted)[:, feasible[a, b]]
                # exclude the pinned arrival column if feasible there
                assert viol.min() >= -1e-9

    def test_waiting_at_origin_beats_early_departure(self):
        # with a late season peak the origin wait dominates immediate flight
        problem = table2_problem()
        g = Grid(nx=201, nt=700, length=problem.length, horizon=problem.horizon)
        field = solve_backward(problem, g)
        assert field.at_start(3) > field.at_start(2) + 0.5
        # detour regime at the origin switches to waiting immediately
        assert field.at_start(1) == pytest.approx(
            field.at_start(3) - 0.05, abs=1e-9
        )

    def test_at_start_nearest_node(self):
        problem = unit_problem()
        g = Grid(nx=11, nt=10, length=1.0, horizon=1.0)
        field = solve_backward(problem, g)
        assert field.at_start(1, x=0.26) == field.values[0, 0, 3]
        assert field.at_start(1, x=5.0) == field.values[0, 0, 10]


class TestOracleAgreement:
    @pytest.mark.parametrize("seed", [1, 8, 16])
    def test_matches_explicit_chain(self, seed):
        rng = np.random.default_rng(seed)
        problem, grid = random_instance(rng)
        field = solve_backward(problem, grid)
        oracle = chain_value(problem, grid)
        assert np.abs(field.values - oracle).max() < 0.05

    def test_grid_refinement_converges(self):
        problem = table2_problem()
        coarse = solve_backward(
            problem, Grid(101, 350, problem.length, problem.horizon)
        )
        fine = solve_backward(
            problem, Grid(201, 700, problem.length, problem.horizon)
        )
        assert abs(coarse.at_start(3) - fine.at_start(3)) < 0.02


class TestResidual:
    def test_pure_pde_residual_is_roundoff(self):
        spec = ProblemSpec(
            label="noswitch",
            length=1.0,
            horizon=1.0,
            regimes=(
                Regime(index=1, label="moving", v=0.4, mu=0.1, beta=0.2),
                Regime(index=2, label="waiting", v=0.0, mu=0.0, beta=0.1),
            ),
            sites=(Site(index=0, start=0.0, width=0.2, staging_reward=0.1),),
            costs=SwitchingCosts({}),
            terminal={"default": GaussianPulse(center=0.5, sigma=0.15)},
            start=StartState(x=0.0, regime=1),
        )
        problem = validate_problem(spec)
        g = Grid(nx=41, nt=50, length=1.0, horizon=1.0)
        field = solve_backward(problem, g)
        r = residual(problem, g, field)
        assert np.abs(r.pde).max() < 1e-10
        assert np.isposinf(r.gap).all()

    def test_table2_gap_nonnegative_and_spikes_site_local(self):
        problem = table2_problem()
        g = Grid(nx=201, nt=700, length=problem.length, horizon=problem.horizon)
        field = solve_backward(problem, g)
        r = residual(problem, g, field)
        assert r.gap.min() >= -1e-9
        assert np.median(np.abs(r.combined)) < 1e-10
        # large residuals only at columns within one node of a site edge,
        # where the switching obstacle is discontinuous in x
        edge_nodes = set()
        for s in problem.sites:
            for edge in (s.start, s.end):
                k = edge / g.dx
                edge_nodes.update(
                    int(np.floor(k)) + off for off in (-1, 0, 1, 2)
                )
        bad_cols = np.unique(np.argwhere(np.abs(r.combined) > 0.05)[:, 2])
        for col in bad_cols:
            assert (col + 1) in edge_nodes  # +1: residual drops column 0


class TestComparisonPrinciples:
    def test_higher_staging_reward_raises_values(self):
        problem = table2_problem()
        richer = problem.with_site_staging(1, 0.00276 * 2)
        g = Grid(nx=101, nt=350, length=problem.length, horizon=problem.horizon)
        base = solve_backward(problem, g)
        more = solve_backward(richer, g)
        assert (more.values - base.values).min() >= 0.0
        assert (more.values - base.values).max() > 0.0

    def test_higher_discount_lowers_values(self):
        lo = unit_problem(beta1=0.1)
        hi = unit_problem(beta1=0.6)
        g = Grid(nx=51, nt=80, length=1.0, horizon=1.0)
        v_lo = solve_backward(lo, g)
        v_hi = solve_backward(hi, g)
        assert (v_hi.values[0] - v_lo.values[0]).max() <= 1e-12

    def test_higher_switching_cost_lowers_values(self):
        cheap = unit_problem(cost=0.02)
        dear = unit_problem(cost=0.2)
        g = Grid(nx=51, nt=80, length=1.0, horizon=1.0)
        v_cheap = solve_backward(cheap, g)
        v_dear = solve_backward(dear, g)
        assert (v_dear.values - v_cheap.values).max() <= 1e-12


class TestPersistence:
    def test_save_load_round_trip(self, tmp_path):
        problem = unit_problem()
        g = Grid(nx=21, nt=15, length=1.0, horizon=1.0)
        field = solve_backward(problem, g)
        npy, sidecar = save_value_field(field, tmp_path / "field")
        assert npy.exists() and sidecar.exists()
        loaded = load_value_field(tmp_path / "field")
        assert np.array_equal(loaded.values, field.values)
        assert loaded.grid == field.grid
        assert loaded.regime_indices == field.regime_indices
        assert loaded.problem_hash == field.problem_hash
