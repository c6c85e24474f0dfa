"""Switching-region extraction and policy lookup tests."""

import numpy as np
import pytest

from migswitch.hjb import Grid, solve_backward
from migswitch.model import validate_problem
from migswitch.presets import preset_spec
from migswitch.regions import (
    SwitchingRegions,
    extract_regions,
    region_boundary,
    region_rows,
    run_length_encode,
)


@pytest.fixture(scope="module")
def table2():
    problem = validate_problem(preset_spec("table2"))
    grid = Grid(nx=201, nt=700, length=problem.length, horizon=problem.horizon)
    fld = solve_backward(problem, grid)
    return problem, fld, extract_regions(problem, fld)


class TestExtraction:
    def test_masks_shape_and_exclusions(self, table2):
        problem, fld, regions = table2
        g = fld.grid
        assert regions.masks.shape == (3, 3, g.nt + 1, g.nx)
        assert not regions.masks[:, :, g.nt, :].any()
        assert not regions.masks[:, :, :, g.nx - 1].any()
        # no self-switching
        for a in range(3):
            assert not regions.masks[a, a].any()

    def test_defining_inequality_on_masks(self, table2):
        problem, fld, regions = table2
        g = fld.grid
        feasible, cost = problem.switch_tables(g.x_nodes)
        v = fld.values
        for a in range(3):
            for b in range(3):
                mask = regions.masks[a, b]
                if not mask.any():
                    continue
                assert feasible[a, b][mask.any(axis=0)].all()
                diff = v[a] - (v[b] - cost[a, b][np.newaxis, :])
                assert diff[mask].max() <= regions.tol * (1 + 1e-12)

    def test_complement_is_strictly_above_obstacle(self, table2):
        problem, fld, regions = table2
        g = fld.grid
        feasible, cost = problem.switch_tables(g.x_nodes)
        v = fld.values
        for a in range(3):
            cand = np.where(
                feasible[a][:, np.newaxis, :],
                v - cost[a][:, np.newaxis, :],
                -np.inf,
            )
            best = cand.max(axis=0)
            in_any = regions.masks[a].any(axis=0)
            # interior nodes with a feasible target but no switch flag
            sel = ~in_any & np.isfinite(best)
            sel[g.nt, :] = False
            sel[:, g.nx - 1] = False
            assert (v[a][sel] > best[sel] + regions.tol).all()

    def test_switch_target_region_is_not_itself_switching(self, table2):
        # arriving in regime j via a switch must land in j's continuation set
        _, _, regions = table2
        for a in range(3):
            for b in range(3):
                if a == b:
                    continue
                overlap = regions.masks[a, b] & regions.masks[b].any(axis=0)
                assert not overlap.any()

    def test_expected_table2_structure(self, table2):
        problem, fld, regions = table2
        # waiting pays at the origin from the start
        assert regions.policy(0.0, 0.0, 1) == 3
        assert regions.policy(0.0, 0.0, 3) == -1
        # the waiting bird departs in the direct regime around two weeks
        # before the season peak (peak 52.5, crossing time 5 / 0.37)
        departures = [
            t for t in fld.grid.t_nodes if regions.policy(t, 0.0, 3) == 2
        ]
        assert departures
        assert 36.0 < min(departures) < 42.0
        # switching into the waiting regime never happens outside sites
        s13 = regions.pair_mask(1, 3)
        cols = np.flatnonzero(s13.any(axis=0))
        inside = [problem.site_of(n * fld.grid.dx) is not None for n in cols]
        assert all(inside)


class TestPolicy:
    def test_tie_break_prefers_smallest_target(self):
        g = Grid(nx=4, nt=2, length=1.0, horizon=1.0)
        masks = np.zeros((3, 3, 3, 4), dtype=bool)
        masks[0, 1, 1, 1] = True
        masks[0, 2, 1, 1] = True
        regions = SwitchingRegions(
            masks=masks, grid=g, regime_indices=(1, 2, 3), tol=0.0,
            problem_hash="x",
        )
        assert regions.policy_array[0, 1, 1] == 2
        assert regions.policy_array[0, 0, 0] == -1

    def test_nearest_node_rounding(self):
        g = Grid(nx=5, nt=4, length=1.0, horizon=1.0)
        masks = np.zeros((2, 2, 5, 5), dtype=bool)
        masks[0, 1, 2, 3] = True
        regions = SwitchingRegions(
            masks=masks, grid=g, regime_indices=(1, 2), tol=0.0,
            problem_hash="x",
        )
        # (t, x) = (0.5, 0.75) maps exactly to row 2, node 3
        assert regions.policy(0.5, 0.75, 1) == 2
        # halfway rounds up in both axes
        assert regions.policy(0.375, 0.625, 1) == 2
        assert regions.policy(0.37, 0.62, 1) == -1
        # clamping keeps lookups inside the lattice
        assert regions.policy(99.0, 99.0, 1) == -1


class TestExports:
    def test_region_rows_match_masks(self, table2):
        _, fld, regions = table2
        rows = region_rows(regions)
        assert len(rows) == int(regions.masks.sum())
        sample = rows[0]
        g = fld.grid
        assert sample["t"] == pytest.approx(sample["time_index"] * g.dt)
        assert sample["x"] == pytest.approx(sample["node_index"] * g.dx)

    def test_run_length_round_trip(self, table2):
        _, _, regions = table2
        payload = run_length_encode(regions)
        rebuilt = np.zeros_like(regions.masks)
        slot = {idx: k for k, idx in enumerate(payload["regimes"])}
        for pair in payload["pairs"]:
            a = slot[pair["from_regime"]]
            b = slot[pair["to_regime"]]
            total = 0
            for m, s, e in pair["runs"]:
                rebuilt[a, b, m, s : e + 1] = True
                total += e - s + 1
            assert total == pair["node_count"]
        assert np.array_equal(rebuilt, regions.masks)

    def test_boundary_of_solid_block(self):
        g = Grid(nx=10, nt=9, length=1.0, horizon=1.0)
        masks = np.zeros((2, 2, 10, 10), dtype=bool)
        masks[0, 1, 2:7, 3:8] = True
        regions = SwitchingRegions(
            masks=masks, grid=g, regime_indices=(1, 2), tol=0.0,
            problem_hash="x",
        )
        boundary = region_boundary(regions, 1, 2)
        expected = sorted(
            (m, n)
            for m in range(2, 7)
            for n in range(3, 8)
            if m in (2, 6) or n in (3, 7)
        )
        assert boundary == expected

    def test_boundary_empty_region(self):
        g = Grid(nx=4, nt=3, length=1.0, horizon=1.0)
        masks = np.zeros((2, 2, 4, 4), dtype=bool)
        regions = SwitchingRegions(
            masks=masks, grid=g, regime_indices=(1, 2), tol=0.0,
            problem_hash="x",
        )
        assert region_boundary(regions, 1, 2) == []
