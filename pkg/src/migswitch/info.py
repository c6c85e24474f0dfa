"""Workflows for mismatched terminal rewards (perceived vs actual).

A migrant guided by a perceived terminal profile g while the world pays an
actual profile G follows a suboptimal policy.  This module solves for such
policies, scores simulated ensembles under both profiles, and builds the
extended system in which waiting at a designated stop-over site delivers the
actual profile: a fourth regime with the dynamics of the slow flight regime
but scored with G, reachable only from waiting at that site.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .hjb import Grid, ValueField, solve_backward
from .model import (
    EVERYWHERE,
    ConfigError,
    Problem,
    Regime,
    SwitchingCosts,
    SwitchRule,
    validate_problem,
)
from .regions import SwitchingRegions, extract_regions
from .rewards import RewardProfile
from .simulate import EnsembleResult, run_ensemble

__all__ = [
    "INFORMED_LABEL",
    "InformationExperiment",
    "MismatchStats",
    "ExperimentOutcome",
    "value_of_information",
    "solve_partial",
    "extend_with_information_regime",
    "cohort_split",
    "run_experiment",
]

INFORMED_LABEL = "informed-detour"


@dataclass(frozen=True)
class InformationExperiment:
    """One perceived-vs-actual run configuration.

    policy selects how the control is computed: "partial" solves the plain
    system with g as every terminal reward; "informed" extends the system
    with the information-delivering regime at `stopover` (a site index)
    before solving.
    """

    perceived: RewardProfile
    actual: RewardProfile
    policy: str = "partial"
    stopover: int | None = None
    info_cost: float = 0.05
    n_paths: int = 500
    seed: int = 0


@dataclass(frozen=True)
class MismatchStats:
    """Discounted perceived-minus-actual terminal mismatch over an ensemble.

    samples[k] = e^{-disc_k} (g(tau_k) - G(tau_k)) for arriving paths and 0
    for paths that ran out the horizon; the perceived profile g is evaluated
    at every arrival, whichever regime the path arrived in.  d is the plain
    mean over all paths; d_arrived conditions on arrival.
    """

    d: float
    variance: float
    d_se: float
    d_arrived: float | None
    n_paths: int
    n_arrived: int
    mean_perceived: float
    mean_actual: float
    samples: np.ndarray = field(repr=False)


def value_of_information(
    result: EnsembleResult, perceived: RewardProfile, actual: RewardProfile
) -> MismatchStats:
    """Score an ensemble under the `perceived` and `actual` terminal profiles.

    Both rescorings share the ensemble's flow rewards, so the mean mismatch
    d equals mean_perceived - mean_actual exactly (the flow parts cancel
    path by path) and each sample reduces to the discounted terminal gap.
    """
    perceived_payoff = result.rescored(perceived)
    actual_payoff = result.rescored(actual)
    samples = perceived_payoff - actual_payoff
    n = result.n_paths
    n_arrived = int(result.arrived.sum())
    d_se = float(samples.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return MismatchStats(
        d=float(samples.mean()),
        variance=float(samples.var()),
        d_se=d_se,
        d_arrived=(
            float(samples[result.arrived].mean()) if n_arrived else None
        ),
        n_paths=n,
        n_arrived=n_arrived,
        mean_perceived=float(perceived_payoff.mean()),
        mean_actual=float(actual_payoff.mean()),
        samples=samples,
    )


def solve_partial(
    problem: Problem, grid: Grid, perceived: RewardProfile
) -> tuple[Problem, ValueField, SwitchingRegions]:
    """Solve the plain system with `perceived` as every terminal reward.

    Returns the re-terminated problem together with its value field and
    switching regions; ensembles should be run on that problem so that
    realized payoffs are scored with the perceived profile.
    """
    partial = problem.with_terminal({"default": perceived})
    fld = solve_backward(partial, grid)
    return partial, fld, extract_regions(partial, fld)


def extend_with_information_regime(
    problem: Problem,
    stopover_index: int,
    perceived: RewardProfile,
    actual: RewardProfile,
    info_cost: float = 0.05,
) -> Problem:
    """Append the informed regime delivered by waiting at one stop-over site.

    The new regime copies the dynamics of regime 1, is scored with `actual`
    at the horizon while every original regime is scored with `perceived`,
    and can only be entered from waiting at the designated stop-over for
    `info_cost`.  At that site the uninformed exits from waiting are removed,
    so a bird that stops there resumes flight informed; its other switching
    options are untouched.
    """
    if not any(s.index == stopover_index for s in problem.sites):
        raise ConfigError(
            f"no stop-over site with index {stopover_index} to deliver "
            "information at"
        )
    template = problem.regime(1)
    new_index = max(r.index for r in problem.regimes) + 1
    informed = Regime(
        index=new_index,
        label=INFORMED_LABEL,
        v=template.v,
        mu=template.mu,
        beta=template.beta,
    )

    waiting = problem.waiting_index
    rules: dict[tuple[int, int], SwitchRule] = {}
    for (i, j), rule in problem.costs.items():
        if i == waiting:
            # funnel: waiting at the information site may only exit informed
            if rule.where == EVERYWHERE:
                # waiting occupancy only ever happens on sites (entry into
                # waiting is site-restricted), so narrowing to the remaining
                # sites changes nothing reachable
                where = tuple(
                    s.index for s in problem.sites if s.index != stopover_index
                )
            else:
                where = tuple(k for k in rule.where if k != stopover_index)
            if not where:
                continue
            rules[(i, j)] = SwitchRule(cost=rule.cost, where=where)
        else:
            rules[(i, j)] = rule
    rules[(waiting, new_index)] = SwitchRule(
        cost=info_cost, where=(stopover_index,)
    )

    spec = problem.spec()
    spec.label = f"{problem.label}+informed"
    spec.regimes = problem.regimes + (informed,)
    spec.costs = SwitchingCosts(rules)
    spec.terminal = {"default": perceived, new_index: actual}
    spec.moving_rewards = dict(problem.moving_rewards)
    if 1 in spec.moving_rewards:
        spec.moving_rewards[new_index] = spec.moving_rewards[1]
    return validate_problem(spec)


def cohort_split(
    result: EnsembleResult, problem: Problem, stopover_index: int
) -> tuple[np.ndarray, np.ndarray]:
    """Arrival times of paths that waited at the stop-over site vs the rest.

    Membership is at least one lattice step of waiting occupancy inside the
    designated site.  Only arriving paths contribute samples; the two arrays
    partition them.
    """
    try:
        col = next(
            k for k, s in enumerate(problem.sites) if s.index == stopover_index
        )
    except StopIteration:
        raise ConfigError(
            f"no stop-over site with index {stopover_index} in the problem"
        ) from None
    waited = result.site_wait[:, col] > 0.0
    hit = result.arrived
    return result.arrival_time[hit & waited], result.arrival_time[hit & ~waited]


@dataclass
class ExperimentOutcome:
    """Everything one perceived-vs-actual run produces."""

    problem: Problem
    field: ValueField
    regions: SwitchingRegions
    ensemble: EnsembleResult
    stats: MismatchStats


def run_experiment(
    problem: Problem,
    experiment: InformationExperiment,
    grid: Grid,
    dx: float | None = None,
) -> ExperimentOutcome:
    """Solve, simulate, and score one experiment end to end."""
    if experiment.policy == "partial":
        solved, fld, regions = solve_partial(problem, grid, experiment.perceived)
    elif experiment.policy == "informed":
        if experiment.stopover is None:
            raise ConfigError("informed policy needs a stopover site index")
        solved = extend_with_information_regime(
            problem,
            experiment.stopover,
            experiment.perceived,
            experiment.actual,
            info_cost=experiment.info_cost,
        )
        fld = solve_backward(solved, grid)
        regions = extract_regions(solved, fld)
    else:
        raise ConfigError(
            f"unknown experiment policy {experiment.policy!r}; "
            "expected 'partial' or 'informed'"
        )
    ensemble = run_ensemble(
        solved, regions, n_paths=experiment.n_paths, seed=experiment.seed, dx=dx
    )
    stats = value_of_information(
        ensemble, experiment.perceived, experiment.actual
    )
    return ExperimentOutcome(
        problem=solved, field=fld, regions=regions, ensemble=ensemble, stats=stats
    )
