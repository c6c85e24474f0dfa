"""Experiment sweeps over the solved systems.

Four workflows, each pairing a solve with a policy-driven ensemble:

* ``deteriorate`` -- scale one stop-over site's staging reward down step by
  step (optionally advancing the seasonal window in lock step) and record
  how the start value, the switching regions, and the realized lengths of
  stay respond.
* ``noise_sweep`` -- keep the policy fixed on the smooth seasonal window and
  re-score one ensemble against rippled actual windows of growing amplitude.
* ``mode1_sweep`` -- replace the perceived seasonal window by ever finer
  piecewise-constant projections of the true one and measure the mismatch
  between perceived and actual payoffs under the informed-regime pipeline.
* ``mode2_run`` -- advance the actual season by ``t_move`` while the birds
  still believe in the late one, deliver the true window at the stop-over,
  and split arrivals by whether a path waited there.

Sweep results carry plain arrays plus ``tables()`` exports, one CSV-ready
series per figure-equivalent quantity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .hjb import Grid, ValueField, solve_backward
from .info import (
    cohort_split,
    extend_with_information_regime,
    solve_partial,
    value_of_information,
)
from .model import DIRECT_LABEL, ConfigError, Problem, validate_problem
from .presets import default_grid_shape
from .regions import SwitchingRegions, extract_regions
from .rewards import (
    GaussianPulse,
    NoisyProfile,
    RewardProfile,
    ShiftedProfile,
    TriangularPulse,
    step_projection,
)
from .simulate import EnsembleResult, length_of_stay, run_ensemble

__all__ = [
    "DEFAULT_LAMBDA_GRID",
    "DEFAULT_AMPLITUDE_GRID",
    "DEFAULT_PARTITION_GRID",
    "DeteriorationPoint",
    "DeteriorationSweep",
    "NoisePoint",
    "NoiseSweep",
    "PartitionPoint",
    "PartitionSweep",
    "SeasonShiftRun",
    "deteriorate",
    "mode1_sweep",
    "mode2_run",
    "noise_sweep",
    "without_direct_flight",
]

DEFAULT_LAMBDA_GRID = tuple(round(0.05 * k, 2) for k in range(21))
DEFAULT_AMPLITUDE_GRID = (0.0, 0.25, 0.5, 0.75, 1.0)
DEFAULT_PARTITION_GRID = (1, 2, 4, 8, 16)
DEFAULT_ENSEMBLE_SIZE = 500


def _solve_grid(problem: Problem, grid: Grid | None) -> Grid:
    if grid is not None:
        return grid
    nx, nt = default_grid_shape(problem)
    return Grid(nx=nx, nt=nt, length=problem.length, horizon=problem.horizon)


def _start_value(fld: ValueField, problem: Problem) -> float:
    return float(fld.at_start(problem.start.regime, problem.start.x))


def without_direct_flight(problem: Problem) -> Problem:
    """Remove every switch into direct flight, leaving the detour route.

    Direct flight overflies the stop-over sites, so experiments about
    information delivered at a stop-over are run on the detour-only system;
    otherwise the ensemble can bypass the information site entirely.
    """
    direct = {r.index for r in problem.regimes if r.label == DIRECT_LABEL}
    spec = problem.spec()
    costs = spec.costs
    for i, j in costs.pairs():
        if j in direct:
            costs = costs.replaced(i, j, None)
    spec.costs = costs
    spec.label = f"{problem.label}-detour"
    return validate_problem(spec)


def _site_band_columns(problem: Problem, grid: Grid) -> dict[int, np.ndarray]:
    """PDE-grid column indices covered by each staging site."""
    x = grid.x_nodes
    return {
        s.index: np.nonzero((x >= s.start - 1e-12) & (x <= s.end + 1e-12))[0]
        for s in problem.sites
    }


def _into_waiting_nodes(
    problem: Problem, regions: SwitchingRegions, bands: dict[int, np.ndarray]
) -> dict[int, int]:
    """Per site: count of nodes where switching into waiting is optimal."""
    waiting = problem.waiting_index
    combined = None
    for i, j in problem.costs.pairs():
        if j != waiting:
            continue
        mask = regions.pair_mask(i, j)
        combined = mask if combined is None else (combined | mask)
    counts = {}
    for index, cols in bands.items():
        if combined is None or cols.size == 0:
            counts[index] = 0
        else:
            counts[index] = int(combined[:, cols].sum())
    return counts


# -- staging deterioration ----------------------------------------------------


@dataclass(frozen=True)
class DeteriorationPoint:
    """Solve + ensemble summary at one deterioration level."""

    level: float
    value_at_start: float
    site_region_nodes: dict[int, int]
    stay: dict[int, float]
    arrival_fraction: float


@dataclass
class DeteriorationSweep:
    """Sweep of one site's staging reward scaled by (1 - level)."""

    site_index: int
    gamma: float
    levels: tuple[float, ...]
    points: list[DeteriorationPoint]
    n_paths: int
    seed: int
    grid_shape: tuple[int, int]

    def values(self) -> np.ndarray:
        return np.array([p.value_at_start for p in self.points])

    def stays(self, site_index: int) -> np.ndarray:
        return np.array([p.stay[site_index] for p in self.points])

    def region_nodes(self, site_index: int) -> np.ndarray:
        return np.array([p.site_region_nodes[site_index] for p in self.points])

    def critical_interval(self) -> tuple[float | None, float] | None:
        """Bracket [last level with a live region, first level without one].

        Returns None while the deteriorated site's into-waiting region never
        empties; the lower edge is None if it is empty from the start.
        """
        counts = self.region_nodes(self.site_index)
        empty_from = None
        for k in range(len(counts), 0, -1):
            if counts[k - 1] > 0:
                break
            empty_from = k - 1
        if empty_from is None:
            return None
        lower = self.levels[empty_from - 1] if empty_from > 0 else None
        return lower, self.levels[empty_from]

    def flat_onset(self, tol: float = 1e-4) -> float | None:
        """Smallest level after which the start value stops moving.

        The value is "flat" from level k on when every later step changes it
        by less than `tol`; returns None when even the last step moves more.
        """
        diffs = np.abs(np.diff(self.values()))
        onset = None
        for k in range(len(diffs), 0, -1):
            if diffs[k - 1] >= tol:
                break
            onset = k - 1
        if onset is None and len(diffs) and diffs[-1] < tol:
            onset = len(diffs)
        return self.levels[onset] if onset is not None else None

    def tables(self) -> dict[str, tuple[tuple[str, ...], list[tuple]]]:
        value_rows = [
            (p.level, p.value_at_start, p.arrival_fraction) for p in self.points
        ]
        stay_rows = [
            (p.level, index, p.stay[index], p.site_region_nodes[index])
            for p in self.points
            for index in sorted(p.stay)
        ]
        return {
            "value_vs_deterioration": (
                ("level", "value_at_start", "arrival_fraction"),
                value_rows,
            ),
            "stay_vs_deterioration": (
                ("level", "site_index", "mean_stay", "region_nodes"),
                stay_rows,
            ),
        }


def deteriorate(
    problem: Problem,
    levels: tuple[float, ...] = DEFAULT_LAMBDA_GRID,
    gamma: float = 0.0,
    site_index: int = 2,
    n_paths: int = DEFAULT_ENSEMBLE_SIZE,
    seed: int = 7,
    grid: Grid | None = None,
    dx_sim: float | None = None,
) -> DeteriorationSweep:
    """Scale one site's staging reward by (1 - level) over a grid of levels.

    At each level the system is re-solved and simulated: recorded are the
    start value, the per-site node counts of the into-waiting regions, the
    mean length of stay per site among visiting paths, and the arrival
    fraction.  With ``gamma > 0`` the seasonal window is simultaneously
    advanced by ``gamma * horizon * level``, coupling habitat loss to an
    earlier season.  All ensembles reuse the same seed so that sweep points
    are compared under common random numbers.
    """
    if not any(s.index == site_index for s in problem.sites):
        raise ConfigError(f"no staging site with index {site_index} to scale")
    for level in levels:
        if not 0.0 <= level <= 1.0:
            raise ConfigError(f"deterioration level {level} outside [0, 1]")
    if not 0.0 <= gamma <= 0.5:
        raise ConfigError(f"season shift factor {gamma} outside [0, 0.5]")
    levels = tuple(sorted(levels))
    base = next(
        s.staging_reward for s in problem.sites if s.index == site_index
    )
    solve_on = _solve_grid(problem, grid)
    points = []
    for level in levels:
        scaled = problem.with_site_staging(site_index, (1.0 - level) * base)
        if gamma > 0.0:
            shift = gamma * problem.horizon * level
            scaled = scaled.with_terminal(
                {
                    key: ShiftedProfile(profile, shift)
                    for key, profile in scaled.terminal.items()
                }
            )
        fld = solve_backward(scaled, solve_on)
        regions = extract_regions(scaled, fld)
        bands = _site_band_columns(scaled, solve_on)
        ensemble = run_ensemble(
            scaled, regions, n_paths=n_paths, seed=seed, dx=dx_sim
        )
        stay = length_of_stay(ensemble)
        points.append(
            DeteriorationPoint(
                level=level,
                value_at_start=_start_value(fld, scaled),
                site_region_nodes=_into_waiting_nodes(scaled, regions, bands),
                stay={
                    s.index: float(stay[k])
                    for k, s in enumerate(scaled.sites)
                },
                arrival_fraction=ensemble.arrival_fraction,
            )
        )
    return DeteriorationSweep(
        site_index=site_index,
        gamma=gamma,
        levels=levels,
        points=points,
        n_paths=n_paths,
        seed=seed,
        grid_shape=(solve_on.nx, solve_on.nt),
    )


# -- seasonal noise ------------------------------------------------------------


@dataclass(frozen=True)
class NoisePoint:
    """Mismatch statistics of the fixed ensemble against one rippled window."""

    amplitude: float
    variance: float
    mismatch_mean: float
    mismatch_se: float


@dataclass
class NoiseSweep:
    """One policy, one ensemble, re-scored against rippled actual windows."""

    amplitudes: tuple[float, ...]
    points: list[NoisePoint]
    n_paths: int
    seed: int
    grid_shape: tuple[int, int]
    value_at_start: float
    arrival_fraction: float

    def variances(self) -> np.ndarray:
        return np.array([p.variance for p in self.points])

    def tables(self) -> dict[str, tuple[tuple[str, ...], list[tuple]]]:
        rows = [
            (p.amplitude, p.variance, p.mismatch_mean, p.mismatch_se)
            for p in self.points
        ]
        return {
            "variance_vs_amplitude": (
                ("amplitude", "variance", "mismatch_mean", "mismatch_se"),
                rows,
            )
        }


def noise_sweep(
    problem: Problem,
    amplitudes: tuple[float, ...] = DEFAULT_AMPLITUDE_GRID,
    n_paths: int = DEFAULT_ENSEMBLE_SIZE,
    seed: int = 0,
    grid: Grid | None = None,
    season: RewardProfile | None = None,
    frequency: float | None = None,
    ripple: float = 0.1,
    dx_sim: float | None = None,
) -> NoiseSweep:
    """Re-score one smooth-season ensemble against rippled actual windows.

    The policy is solved once on the smooth perceived window (amplitude
    independent), a single ensemble is simulated, and every amplitude A
    re-scores the same paths against ``season + A * ripple * sin(...)``
    clamped at zero.  ``frequency`` defaults to one oscillation per day.
    Amplitude 0 reproduces the smooth window exactly, so its mismatch
    variance is exactly zero.
    """
    for amplitude in amplitudes:
        if not 0.0 <= amplitude <= 1.0:
            raise ConfigError(f"noise amplitude {amplitude} outside [0, 1]")
    if season is None:
        season = problem.terminal.get("default")
        if season is None:
            raise ConfigError(
                "noise sweep needs a seasonal profile: the problem has no "
                "default terminal reward and none was passed"
            )
    if frequency is None:
        frequency = 2.0 * problem.horizon
    solve_on = _solve_grid(problem, grid)
    partial, fld, regions = solve_partial(problem, solve_on, season)
    ensemble = run_ensemble(
        partial, regions, n_paths=n_paths, seed=seed, dx=dx_sim
    )
    points = []
    for amplitude in amplitudes:
        actual = NoisyProfile(
            source=season,
            amplitude=amplitude,
            frequency=frequency,
            horizon=problem.horizon,
            ripple=ripple,
        )
        stats = value_of_information(ensemble, season, actual)
        points.append(
            NoisePoint(
                amplitude=amplitude,
                variance=stats.variance,
                mismatch_mean=stats.d,
                mismatch_se=stats.d_se,
            )
        )
    return NoiseSweep(
        amplitudes=tuple(amplitudes),
        points=points,
        n_paths=n_paths,
        seed=seed,
        grid_shape=(solve_on.nx, solve_on.nt),
        value_at_start=_start_value(fld, partial),
        arrival_fraction=ensemble.arrival_fraction,
    )


# -- coarse seasonal perception -------------------------------------------------


@dataclass(frozen=True)
class PartitionPoint:
    """Informed-pipeline mismatch for one perception resolution."""

    n_cells: int
    mismatch: float
    mismatch_se: float
    n_informed: int
    n_arrived: int
    value_at_start: float


@dataclass
class PartitionSweep:
    """Mismatch against the true season as perception sharpens."""

    n_grid: tuple[int, ...]
    points: list[PartitionPoint]
    n_paths: int
    seed: int
    grid_shape: tuple[int, int]

    def mismatches(self) -> np.ndarray:
        return np.array([p.mismatch for p in self.points])

    def standard_errors(self) -> np.ndarray:
        return np.array([p.mismatch_se for p in self.points])

    def tables(self) -> dict[str, tuple[tuple[str, ...], list[tuple]]]:
        rows = [
            (
                p.n_cells,
                p.mismatch,
                p.mismatch_se,
                p.n_informed,
                p.n_arrived,
                p.value_at_start,
            )
            for p in self.points
        ]
        return {
            "mismatch_vs_cells": (
                (
                    "n_cells",
                    "mismatch",
                    "mismatch_se",
                    "informed_paths",
                    "arrived_paths",
                    "value_at_start",
                ),
                rows,
            )
        }


def mode1_sweep(
    problem: Problem,
    n_grid: tuple[int, ...] = DEFAULT_PARTITION_GRID,
    n_paths: int = DEFAULT_ENSEMBLE_SIZE,
    seed: int = 100,
    grid: Grid | None = None,
    season: RewardProfile | None = None,
    stopover_index: int = 1,
    info_cost: float = 0.05,
    dx_sim: float | None = None,
) -> PartitionSweep:
    """Sweep the resolution of a piecewise-constant perceived season.

    The true window defaults to a triangle ramping up from half season to a
    peak at three quarters.  For each cell count n the perceived window is
    the n-cell average projection of the truth; the informed regime (true
    window delivered by waiting at ``stopover_index``) is available in every
    run.  Mismatch d scores every arrival with the perceived window against
    the true one, non-arrivals contributing zero.  Sweep point n uses seed
    ``seed + n`` so points are independent but reproducible.
    """
    for n_cells in n_grid:
        if n_cells < 1:
            raise ConfigError(f"partition size {n_cells} must be >= 1")
    horizon = problem.horizon
    if season is None:
        season = TriangularPulse(
            start=0.5 * horizon, peak=0.75 * horizon, end=horizon
        )
    solve_on = _solve_grid(problem, grid)
    points = []
    for n_cells in n_grid:
        perceived = step_projection(season, n_cells, horizon)
        extended = extend_with_information_regime(
            problem, stopover_index, perceived, season, info_cost=info_cost
        )
        fld = solve_backward(extended, solve_on)
        regions = extract_regions(extended, fld)
        ensemble = run_ensemble(
            extended, regions, n_paths=n_paths, seed=seed + n_cells, dx=dx_sim
        )
        stats = value_of_information(ensemble, perceived, season)
        informed_index = max(r.index for r in extended.regimes)
        points.append(
            PartitionPoint(
                n_cells=n_cells,
                mismatch=stats.d,
                mismatch_se=stats.d_se,
                n_informed=int((ensemble.final_regime == informed_index).sum()),
                n_arrived=stats.n_arrived,
                value_at_start=_start_value(fld, extended),
            )
        )
    return PartitionSweep(
        n_grid=tuple(n_grid),
        points=points,
        n_paths=n_paths,
        seed=seed,
        grid_shape=(solve_on.nx, solve_on.nt),
    )


# -- advanced season -------------------------------------------------------------


@dataclass
class SeasonShiftRun:
    """Cohorts of one run where the actual season arrives ``t_move`` early."""

    t_move: float
    waiting_times: np.ndarray
    nonwaiting_times: np.ndarray
    n_informed: int
    value_at_start: float
    n_paths: int
    seed: int
    grid_shape: tuple[int, int]
    problem: Problem = field(repr=False)
    value_field: ValueField = field(repr=False)
    regions: SwitchingRegions = field(repr=False)
    ensemble: EnsembleResult = field(repr=False)

    @property
    def waiting_median(self) -> float | None:
        if self.waiting_times.size == 0:
            return None
        return float(np.median(self.waiting_times))

    @property
    def nonwaiting_median(self) -> float | None:
        if self.nonwaiting_times.size == 0:
            return None
        return float(np.median(self.nonwaiting_times))

    def tables(self) -> dict[str, tuple[tuple[str, ...], list[tuple]]]:
        rows = [("waited", float(t)) for t in np.sort(self.waiting_times)]
        rows += [("no-wait", float(t)) for t in np.sort(self.nonwaiting_times)]
        return {"cohort_arrivals": (("cohort", "arrival_time"), rows)}


def mode2_run(
    problem: Problem,
    t_move: float,
    n_paths: int = DEFAULT_ENSEMBLE_SIZE,
    seed: int = 50,
    grid: Grid | None = None,
    stopover_index: int = 1,
    info_cost: float = 0.05,
    dx_sim: float | None = None,
) -> SeasonShiftRun:
    """Advance the actual season by ``t_move`` against a late perceived one.

    The perceived window is a Gaussian peaking at three quarters of the
    season; the actual one is the same shape ``t_move`` earlier.  The run
    is restricted to the detour route (direct flight would overfly the
    stop-over where the true window is delivered), the informed regime is
    attached at ``stopover_index``, and arriving paths are split into the
    cohort that waited at that stop-over and the cohort that flew on.
    """
    horizon = problem.horizon
    if not 0.0 <= t_move < horizon:
        raise ConfigError(
            f"season advance {t_move} outside [0, horizon={horizon})"
        )
    perceived = GaussianPulse(center=0.75 * horizon, sigma=horizon / 8.0)
    actual = GaussianPulse(center=0.75 * horizon - t_move, sigma=horizon / 8.0)
    detour = without_direct_flight(problem)
    extended = extend_with_information_regime(
        detour, stopover_index, perceived, actual, info_cost=info_cost
    )
    solve_on = _solve_grid(extended, grid)
    fld = solve_backward(extended, solve_on)
    regions = extract_regions(extended, fld)
    ensemble = run_ensemble(
        extended, regions, n_paths=n_paths, seed=seed, dx=dx_sim
    )
    waiting_times, nonwaiting_times = cohort_split(
        ensemble, extended, stopover_index
    )
    informed_index = max(r.index for r in extended.regimes)
    return SeasonShiftRun(
        t_move=t_move,
        waiting_times=waiting_times,
        nonwaiting_times=nonwaiting_times,
        n_informed=int((ensemble.final_regime == informed_index).sum()),
        value_at_start=_start_value(fld, extended),
        n_paths=n_paths,
        seed=seed,
        grid_shape=(solve_on.nx, solve_on.nt),
        problem=extended,
        value_field=fld,
        regions=regions,
        ensemble=ensemble,
    )
