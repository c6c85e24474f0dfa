"""Problem definition and validation for multi-regime optimal switching.

A problem describes a bird-migration-style controlled process on [0, L]:

* a set of movement regimes (drift v_i, diffusivity mu_i, hazard rate beta_i),
  exactly one of which is the waiting regime (v = mu = 0);
* stop-over sites: disjoint intervals where the waiting regime collects a
  staging reward and where switches may be allowed;
* switching costs h_ij with per-pair feasibility (everywhere / never / at a
  given set of sites);
* per-regime terminal reward profiles (a shared default plus optional
  overrides), paid on reaching x = L at time t;
* a start state (x, regime) at t = 0.

Raw configurations (`ProblemSpec`) may carry physical distances together with
a `distance_scale`; `validate_problem` checks every structural rule and
returns a `Problem` whose lengths and velocities are divided by the scale.
Diffusivities are interpreted as already expressed in scaled length units and
are not rescaled (the per-day hazard rates and rewards carry no length
dimension).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Optional, Union

import numpy as np

from .rewards import RewardProfile, eval_terminal, profile_from_dict, profile_to_dict

__all__ = [
    "ConfigError",
    "Regime",
    "Site",
    "SwitchRule",
    "SwitchingCosts",
    "StartState",
    "ProblemSpec",
    "Problem",
    "validate_problem",
]

WAITING_LABEL = "waiting"
DIRECT_LABEL = "direct"

# "where" markers for switch rules.
EVERYWHERE = "everywhere"
NEVER = "never"
ALL_SITES = "sites"  # config shorthand, expanded during validation


class ConfigError(ValueError):
    """Raised for structurally invalid problem configurations."""


@dataclass(frozen=True)
class Regime:
    """One movement regime: drift v, diffusivity mu, hazard (discount) beta."""

    index: int
    label: str
    v: float
    mu: float
    beta: float

    @property
    def is_waiting(self) -> bool:
        return self.v == 0.0 and self.mu == 0.0


@dataclass(frozen=True)
class Site:
    """Stop-over interval [start, start + width] with a staging reward rate."""

    index: int
    start: float
    width: float
    staging_reward: float

    @property
    def end(self) -> float:
        return self.start + self.width

    def contains(self, x: Union[float, np.ndarray]) -> Union[bool, np.ndarray]:
        x = np.asarray(x, dtype=float)
        out = (x >= self.start) & (x <= self.end)
        return out if out.ndim else bool(out)


@dataclass(frozen=True)
class SwitchRule:
    """Cost and spatial feasibility of one ordered regime pair.

    where: EVERYWHERE, NEVER, or a tuple of site indices at which the switch
    is allowed. Pairs without a rule are never feasible.
    """

    cost: float
    where: Union[str, tuple[int, ...]]


class SwitchingCosts:
    """Switching cost table keyed by ordered regime pairs (from, to)."""

    def __init__(self, rules: Mapping[tuple[int, int], SwitchRule]):
        self._rules = dict(rules)

    def rule(self, i: int, j: int) -> Optional[SwitchRule]:
        return self._rules.get((i, j))

    def pairs(self) -> list[tuple[int, int]]:
        return sorted(self._rules)

    def items(self) -> list[tuple[tuple[int, int], SwitchRule]]:
        return sorted(self._rules.items())

    def replaced(self, i: int, j: int, rule: Optional[SwitchRule]) -> "SwitchingCosts":
        rules = dict(self._rules)
        if rule is None:
            rules.pop((i, j), None)
        else:
            rules[(i, j)] = rule
        return SwitchingCosts(rules)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, SwitchingCosts) and self._rules == other._rules

    def __repr__(self) -> str:
        return f"SwitchingCosts({self._rules!r})"


@dataclass(frozen=True)
class StartState:
    x: float
    regime: int


@dataclass
class ProblemSpec:
    """Raw problem configuration, possibly in physical units."""

    label: str
    length: float
    horizon: float
    regimes: tuple[Regime, ...]
    sites: tuple[Site, ...]
    costs: SwitchingCosts
    terminal: Mapping[Union[str, int], RewardProfile]  # {"default": ..., index: ...}
    start: StartState
    distance_scale: float = 1.0
    moving_rewards: Mapping[int, float] = field(default_factory=dict)


def _probe_points(length: float, sites: tuple[Site, ...]) -> list[float]:
    """Deterministic x probes covering sites, gaps and the domain ends."""
    probes = {0.0, length}
    ordered = sorted(sites, key=lambda s: s.start)
    for site in ordered:
        probes.update((site.start, site.end, 0.5 * (site.start + site.end)))
    # midpoints of the gaps between consecutive sites and the outer gaps
    bounds = [0.0]
    for site in ordered:
        bounds.extend((site.start, site.end))
    bounds.append(length)
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        if hi > lo:
            probes.add(0.5 * (lo + hi))
    return sorted(p for p in probes if 0.0 <= p <= length)


class Problem:
    """Validated problem in solver (scaled) units. Use `validate_problem`."""

    def __init__(
        self,
        label: str,
        length: float,
        horizon: float,
        regimes: tuple[Regime, ...],
        sites: tuple[Site, ...],
        costs: SwitchingCosts,
        terminal: dict,
        start: StartState,
        distance_scale: float,
        moving_rewards: dict,
    ):
        self.label = label
        self.length = length
        self.horizon = horizon
        self.regimes = regimes
        self.sites = sites
        self.costs = costs
        self.terminal = terminal
        self.start = start
        self.distance_scale = distance_scale
        self.moving_rewards = moving_rewards
        self.waiting_index = next(r.index for r in regimes if r.is_waiting)

    # -- lookups -----------------------------------------------------------

    @property
    def n_regimes(self) -> int:
        return len(self.regimes)

    def regime(self, index: int) -> Regime:
        for r in self.regimes:
            if r.index == index:
                return r
        raise KeyError(f"no regime with index {index}")

    def site(self, index: int) -> Site:
        for s in self.sites:
            if s.index == index:
                return s
        raise KeyError(f"no site with index {index}")

    def site_of(self, x: float) -> Optional[Site]:
        for s in self.sites:
            if s.contains(x):
                return s
        return None

    def terminal_profile(self, regime_index: int) -> RewardProfile:
        return self.terminal.get(regime_index, self.terminal["default"])

    # -- reward / cost evaluation ------------------------------------------

    def eval_terminal(self, regime_index: int, t):
        """Terminal reward of a regime at arrival time t in [0, horizon]."""
        return eval_terminal(self.terminal_profile(regime_index), t, self.horizon)

    def eval_running(self, regime_index: int, t, x):
        """Running reward rate f_i(t, x).

        The waiting regime collects the staging reward of the site containing
        x (0 off-site); moving regimes earn their constant rate.
        """
        x = np.asarray(x, dtype=float)
        if regime_index == self.waiting_index:
            out = np.zeros_like(x, dtype=float)
            for s in self.sites:
                out = np.where(s.contains(x), s.staging_reward, out)
        else:
            out = np.full_like(x, self.moving_rewards.get(regime_index, 0.0), dtype=float)
        return out if out.ndim else float(out)

    def switch_cost(self, i: int, j: int, t: float, x: float) -> Optional[float]:
        """Cost of switching i -> j at (t, x), or None where infeasible."""
        rule = self.costs.rule(i, j)
        if rule is None or rule.where == NEVER:
            return None
        if rule.where == EVERYWHERE:
            return rule.cost
        for site_index in rule.where:
            if self.site(site_index).contains(x):
                return rule.cost
        return None

    def switch_tables(self, x_nodes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized switch data on a node set.

        Returns (feasible, cost): boolean and float arrays of shape
        (R, R, len(x_nodes)) indexed by regime *positions* (order of
        self.regimes); cost is only meaningful where feasible is True.
        """
        x_nodes = np.asarray(x_nodes, dtype=float)
        n = len(x_nodes)
        r = self.n_regimes
        feasible = np.zeros((r, r, n), dtype=bool)
        cost = np.zeros((r, r, n), dtype=float)
        for a, ri in enumerate(self.regimes):
            for b, rj in enumerate(self.regimes):
                if ri.index == rj.index:
                    continue
                rule = self.costs.rule(ri.index, rj.index)
                if rule is None or rule.where == NEVER:
                    continue
                if rule.where == EVERYWHERE:
                    mask = np.ones(n, dtype=bool)
                else:
                    mask = np.zeros(n, dtype=bool)
                    for site_index in rule.where:
                        mask |= np.asarray(self.site(site_index).contains(x_nodes))
                feasible[a, b] = mask
                cost[a, b][mask] = rule.cost
        return feasible, cost

    # -- derived problems ----------------------------------------------------

    def spec(self) -> ProblemSpec:
        """Reconstruct a raw spec (in scaled units, scale 1) for re-validation."""
        return ProblemSpec(
            label=self.label,
            length=self.length,
            horizon=self.horizon,
            regimes=self.regimes,
            sites=self.sites,
            costs=self.costs,
            terminal=dict(self.terminal),
            start=self.start,
            distance_scale=1.0,
            moving_rewards=dict(self.moving_rewards),
        )

    def with_terminal(self, terminal: Mapping[Union[str, int], RewardProfile]) -> "Problem":
        spec = self.spec()
        spec.terminal = dict(terminal)
        return validate_problem(spec)

    def with_site_staging(self, site_index: int, staging_reward: float) -> "Problem":
        spec = self.spec()
        spec.sites = tuple(
            replace(s, staging_reward=staging_reward) if s.index == site_index else s
            for s in spec.sites
        )
        return validate_problem(spec)

    # -- canonical form -------------------------------------------------------

    def canonical_dict(self) -> dict:
        """Plain-type snapshot (scaled units) used for hashing and manifests."""
        terminal = {
            str(k): profile_to_dict(v) for k, v in sorted(self.terminal.items(), key=lambda kv: str(kv[0]))
        }
        return {
            "label": self.label,
            "length": self.length,
            "horizon": self.horizon,
            "distance_scale": self.distance_scale,
            "regimes": [
                {"index": r.index, "label": r.label, "v": r.v, "mu": r.mu, "beta": r.beta}
                for r in self.regimes
            ],
            "sites": [
                {
                    "index": s.index,
                    "start": s.start,
                    "width": s.width,
                    "staging_reward": s.staging_reward,
                }
                for s in self.sites
            ],
            "switches": [
                {
                    "from": i,
                    "to": j,
                    "cost": rule.cost,
                    "where": rule.where if isinstance(rule.where, str) else list(rule.where),
                }
                for (i, j), rule in self.costs.items()
            ],
            "moving_rewards": {str(k): v for k, v in sorted(self.moving_rewards.items())},
            "terminal": terminal,
            "start": {"x": self.start.x, "regime": self.start.regime},
        }

    def problem_hash(self) -> str:
        payload = json.dumps(self.canonical_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _check_finite(name: str, value: float) -> float:
    value = float(value)
    if not np.isfinite(value):
        raise ConfigError(f"{name} must be finite, got {value}")
    return value


def validate_problem(spec: ProblemSpec) -> Problem:
    """Check every structural rule and return the problem in scaled units.

    Raises ConfigError with a specific message on the first violation found.
    """
    scale = _check_finite("distance_scale", spec.distance_scale)
    if scale <= 0:
        raise ConfigError(f"distance_scale must be > 0, got {scale}")
    length = _check_finite("length", spec.length)
    if length <= 0:
        raise ConfigError(f"length must be > 0, got {length}")
    horizon = _check_finite("horizon", spec.horizon)
    if horizon <= 0:
        raise ConfigError(f"horizon must be > 0, got {horizon}")

    # Regimes: consecutive 1-based indices, one waiting regime.
    if not spec.regimes:
        raise ConfigError("at least one regime is required")
    indices = [r.index for r in spec.regimes]
    if indices != list(range(1, len(indices) + 1)):
        raise ConfigError(f"regime indices must be 1..{len(indices)}, got {indices}")
    labels = [r.label for r in spec.regimes]
    if len(set(labels)) != len(labels) or any(not l for l in labels):
        raise ConfigError(f"regime labels must be nonempty and unique, got {labels}")
    waiting = [r for r in spec.regimes if r.is_waiting]
    for r in spec.regimes:
        for name, value in (("v", r.v), ("mu", r.mu), ("beta", r.beta)):
            _check_finite(f"regime {r.index} {name}", value)
            if value < 0:
                raise ConfigError(f"regime {r.index} has negative {name}: {value}")
    if len(waiting) != 1:
        raise ConfigError(
            "exactly one waiting regime (v = 0 and mu = 0) is required, "
            f"found {len(waiting)}"
        )
    waiting_index = waiting[0].index

    # Sites: disjoint intervals inside [0, length], unique indices.
    site_indices = [s.index for s in spec.sites]
    if len(set(site_indices)) != len(site_indices):
        raise ConfigError(f"site indices must be unique, got {site_indices}")
    for s in spec.sites:
        _check_finite(f"site {s.index} start", s.start)
        _check_finite(f"site {s.index} width", s.width)
        _check_finite(f"site {s.index} staging_reward", s.staging_reward)
        if s.width <= 0:
            raise ConfigError(f"site {s.index} width must be > 0, got {s.width}")
        if s.staging_reward < 0:
            raise ConfigError(
                f"site {s.index} staging_reward must be >= 0, got {s.staging_reward}"
            )
        if s.start < 0 or s.end > length:
            raise ConfigError(
                f"site {s.index} interval [{s.start}, {s.end}] exceeds [0, {length}]"
            )
    ordered_sites = sorted(spec.sites, key=lambda s: s.start)
    for a, b in zip(ordered_sites[:-1], ordered_sites[1:]):
        if b.start <= a.end:
            raise ConfigError(
                f"stop-over intervals overlap: site {a.index} [{a.start}, {a.end}] "
                f"and site {b.index} [{b.start}, {b.end}]"
            )

    # Switch rules.
    known_sites = set(site_indices)
    direct_indices = {r.index for r in spec.regimes if r.label == DIRECT_LABEL}
    resolved: dict[tuple[int, int], SwitchRule] = {}
    for (i, j), rule in spec.costs.items():
        if i == j:
            raise ConfigError(f"switch rule ({i}, {j}) maps a regime to itself")
        if i not in indices or j not in indices:
            raise ConfigError(f"switch rule ({i}, {j}) references unknown regimes")
        where = rule.where
        if where == NEVER:
            continue
        cost = _check_finite(f"switch cost ({i}, {j})", rule.cost)
        if cost <= 0:
            raise ConfigError(f"switch cost ({i}, {j}) must be > 0, got {cost}")
        if where == ALL_SITES:
            where = tuple(sorted(known_sites))
        if isinstance(where, str):
            if where != EVERYWHERE:
                raise ConfigError(
                    f"switch rule ({i}, {j}) has unknown 'where': {where!r}"
                )
        else:
            where = tuple(sorted(set(int(k) for k in where)))
            unknown = [k for k in where if k not in known_sites]
            if unknown:
                raise ConfigError(
                    f"switch rule ({i}, {j}) references unknown sites {unknown}"
                )
            if not where:
                continue  # empty site list == never
        if i in direct_indices:
            raise ConfigError(
                f"switches out of the direct-flight regime are not allowed "
                f"(rule ({i}, {j}))"
            )
        if j == waiting_index and where == EVERYWHERE:
            raise ConfigError(
                f"entry into the waiting regime must be restricted to stop-over "
                f"sites (rule ({i}, {j}) allows it everywhere)"
            )
        resolved[(i, j)] = SwitchRule(cost=cost, where=where)
    costs = SwitchingCosts(resolved)

    # Triangle inequality h_ij < h_iq + h_qj wherever all three pairs are
    # feasible, checked at deterministic probe points.
    probe_problem = Problem(
        label=spec.label,
        length=length,
        horizon=horizon,
        regimes=spec.regimes,
        sites=tuple(ordered_sites),
        costs=costs,
        terminal={"default": None},  # type: ignore[dict-item] -- not used here
        start=StartState(0.0, waiting_index),
        distance_scale=1.0,
        moving_rewards={},
    )
    for x in _probe_points(length, tuple(ordered_sites)):
        at = {
            (i, j): probe_problem.switch_cost(i, j, 0.0, x)
            for i in indices
            for j in indices
            if i != j
        }
        for (i, j), h_ij in at.items():
            if h_ij is None:
                continue
            for q in indices:
                if q in (i, j):
                    continue
                h_iq = at.get((i, q))
                h_qj = at.get((q, j))
                if h_iq is not None and h_qj is not None and h_ij >= h_iq + h_qj:
                    raise ConfigError(
                        f"triangle inequality violated at x = {x}: "
                        f"h[{i},{j}] = {h_ij} >= h[{i},{q}] + h[{q},{j}] = "
                        f"{h_iq + h_qj}"
                    )

    # Terminal profiles: default plus optional per-regime overrides.
    terminal = dict(spec.terminal)
    if "default" not in terminal:
        raise ConfigError("terminal rewards need a 'default' profile")
    for key in terminal:
        if key != "default" and key not in indices:
            raise ConfigError(f"terminal override for unknown regime {key!r}")

    # Moving-regime reward rates.
    moving_rewards = {}
    for k, v in dict(spec.moving_rewards).items():
        if k not in indices:
            raise ConfigError(f"moving_rewards references unknown regime {k}")
        if k == waiting_index:
            raise ConfigError(
                "the waiting regime earns staging rewards through sites, not "
                "moving_rewards"
            )
        moving_rewards[k] = _check_finite(f"moving reward for regime {k}", v)

    # Start state.
    if spec.start.regime not in indices:
        raise ConfigError(f"start regime {spec.start.regime} does not exist")
    if not (0.0 <= spec.start.x <= length):
        raise ConfigError(f"start position {spec.start.x} outside [0, {length}]")

    # Rescale distances and velocities.
    return Problem(
        label=spec.label,
        length=length / scale,
        horizon=horizon,
        regimes=tuple(
            replace(r, v=r.v / scale) for r in spec.regimes
        ),
        sites=tuple(
            replace(s, start=s.start / scale, width=s.width / scale)
            for s in ordered_sites
        ),
        costs=costs,
        terminal=terminal,
        start=StartState(x=spec.start.x / scale, regime=spec.start.regime),
        distance_scale=scale,
        moving_rewards=moving_rewards,
    )
