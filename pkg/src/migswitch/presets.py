"""Bundled problem presets and JSON configuration I/O.

Two presets ship with the package:

* ``table1`` -- a three-regime coastal migration with a wintering site and
  three stop-over sites of decreasing forage quality along the route; smooth
  seasonal terminal window centered at mid-season.
* ``table2`` -- a three-regime system with a single stop-over site at roughly
  two thirds of the route and a late seasonal window; used by the
  partial-information workflows.

Configurations are stored in physical units together with a
``distance_scale``; validation converts them to solver units. The JSON layout
is documented in ``config_schema.json`` (shipped with the package) and in the
README.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Union

from .model import (
    ConfigError,
    Problem,
    ProblemSpec,
    Regime,
    Site,
    StartState,
    SwitchRule,
    SwitchingCosts,
    validate_problem,
)
from .rewards import profile_from_dict, profile_to_dict

__all__ = [
    "PRESETS",
    "preset_spec",
    "load_problem",
    "spec_from_dict",
    "spec_to_dict",
    "default_grid_shape",
]

#: Default lattice resolution: nodes across [0, L] and steps per day.
DEFAULT_NX = 201
DEFAULT_STEPS_PER_DAY = 10


def _table1_spec() -> ProblemSpec:
    """Coastal three-regime preset with four staging sites."""
    # The distance scale calibrates the dimensionless diffusion level: with
    # mu fixed in solver units, arrival-time spread over a leg scales
    # linearly with it.  5301/12 keeps flight noise moderate (a few days of
    # arrival spread against the 18-day seasonal window), which makes
    # stop-over choices forage-driven rather than dominated by the
    # reflecting-shore geometry.
    length = 5301.0
    scale = length / 12.0
    horizon = 72.0
    regimes = (
        Regime(index=1, label="detour", v=373.33, mu=0.5, beta=0.02),
        Regime(index=2, label="direct", v=560.0, mu=1.0, beta=0.05),
        Regime(index=3, label="waiting", v=0.0, mu=0.0, beta=0.005),
    )
    # Site geometry (km): the wintering shoreline sits at the origin, the
    # rich main staging site hugs the early coastline, a poorer mudflat sits
    # mid-route, and a modest northern site lies within reach of the breeding
    # grounds, where a short remaining leg makes arrival easy to fine-tune.
    sites = (
        Site(index=0, start=0.0, width=212.0, staging_reward=0.00165),
        Site(index=2, start=600.0, width=212.0, staging_reward=0.00276),
        Site(index=1, start=1800.0, width=212.0, staging_reward=0.00096),
        Site(index=3, start=4300.0, width=212.0, staging_reward=0.000685),
    )
    h = 0.05
    costs = SwitchingCosts(
        {
            # Departure from the wintering grounds is irreversible: waiting
            # can only be re-entered at the en-route stop-over sites.
            (1, 2): SwitchRule(cost=h, where="sites"),
            (1, 3): SwitchRule(cost=h, where=(1, 2, 3)),
            (3, 1): SwitchRule(cost=h, where="sites"),
            (3, 2): SwitchRule(cost=h, where="sites"),
        }
    )
    terminal = {
        "default": profile_from_dict(
            {"kind": "gaussian", "center": horizon / 2.0, "sigma": horizon / 4.0}
        )
    }
    return ProblemSpec(
        label="table1",
        length=length,
        horizon=horizon,
        regimes=regimes,
        sites=sites,
        costs=costs,
        terminal=terminal,
        start=StartState(x=0.0, regime=1),
        distance_scale=scale,
        moving_rewards={1: 0.0, 2: 0.0},
    )


def _table2_spec() -> ProblemSpec:
    """Single-stopover preset used by the partial-information workflows."""
    scale = 1290.0
    length = 6450.0
    horizon = 70.0
    regimes = (
        Regime(index=1, label="detour", v=180.6, mu=0.01, beta=0.0005),
        Regime(index=2, label="direct", v=477.3, mu=0.011, beta=0.00055),
        Regime(index=3, label="waiting", v=0.0, mu=0.0, beta=0.0005),
    )
    sites = (
        Site(index=0, start=0.0, width=129.0, staging_reward=0.00165),
        Site(index=1, start=4300.0, width=129.0, staging_reward=0.00276),
    )
    h = 0.05
    costs = SwitchingCosts(
        {
            # direct flight can only be entered at the wintering site
            (1, 2): SwitchRule(cost=h, where=(0,)),
            (3, 2): SwitchRule(cost=h, where=(0,)),
            (1, 3): SwitchRule(cost=h, where=(0, 1)),
            (3, 1): SwitchRule(cost=h, where=(0, 1)),
        }
    )
    terminal = {
        "default": profile_from_dict(
            {
                "kind": "gaussian",
                "center": 3.0 * horizon / 4.0,
                "sigma": horizon / 8.0,
            }
        )
    }
    return ProblemSpec(
        label="table2",
        length=length,
        horizon=horizon,
        regimes=regimes,
        sites=sites,
        costs=costs,
        terminal=terminal,
        start=StartState(x=0.0, regime=1),
        distance_scale=scale,
        moving_rewards={1: 0.0, 2: 0.0},
    )


PRESETS = {
    "table1": _table1_spec,
    "table2": _table2_spec,
}


def preset_spec(name: str) -> ProblemSpec:
    try:
        return PRESETS[name]()
    except KeyError:
        raise ConfigError(
            f"unknown preset {name!r}; available: {sorted(PRESETS)}"
        ) from None


def default_grid_shape(spec_or_problem) -> tuple[int, int]:
    """Default (nx, nt) for a problem: 201 nodes, 10 time steps per day."""
    horizon = spec_or_problem.horizon
    return DEFAULT_NX, int(round(DEFAULT_STEPS_PER_DAY * horizon))


# -- JSON round trip ---------------------------------------------------------


def spec_to_dict(spec: ProblemSpec) -> dict:
    return {
        "label": spec.label,
        "length": spec.length,
        "horizon": spec.horizon,
        "distance_scale": spec.distance_scale,
        "regimes": [
            {"index": r.index, "label": r.label, "v": r.v, "mu": r.mu, "beta": r.beta}
            for r in spec.regimes
        ],
        "sites": [
            {
                "index": s.index,
                "start": s.start,
                "width": s.width,
                "staging_reward": s.staging_reward,
            }
            for s in spec.sites
        ],
        "switches": [
            {
                "from": i,
                "to": j,
                "cost": rule.cost,
                "where": rule.where if isinstance(rule.where, str) else list(rule.where),
            }
            for (i, j), rule in spec.costs.items()
        ],
        "moving_rewards": {str(k): v for k, v in sorted(dict(spec.moving_rewards).items())},
        "terminal": {
            str(k): profile_to_dict(v)
            for k, v in sorted(dict(spec.terminal).items(), key=lambda kv: str(kv[0]))
        },
        "start": {"x": spec.start.x, "regime": spec.start.regime},
    }


def _require(data: dict, key: str, context: str):
    if key not in data:
        raise ConfigError(f"{context} is missing required field {key!r}")
    return data[key]


def spec_from_dict(data: dict) -> ProblemSpec:
    if not isinstance(data, dict):
        raise ConfigError(f"problem configuration must be an object, got {type(data)}")
    regimes = []
    for entry in _require(data, "regimes", "configuration"):
        regimes.append(
            Regime(
                index=int(_require(entry, "index", "regime")),
                label=str(_require(entry, "label", "regime")),
                v=float(_require(entry, "v", "regime")),
                mu=float(_require(entry, "mu", "regime")),
                beta=float(_require(entry, "beta", "regime")),
            )
        )
    sites = []
    for entry in data.get("sites", []):
        sites.append(
            Site(
                index=int(_require(entry, "index", "site")),
                start=float(_require(entry, "start", "site")),
                width=float(_require(entry, "width", "site")),
                staging_reward=float(_require(entry, "staging_reward", "site")),
            )
        )
    rules = {}
    for entry in data.get("switches", []):
        i = int(_require(entry, "from", "switch rule"))
        j = int(_require(entry, "to", "switch rule"))
        where = _require(entry, "where", "switch rule")
        if isinstance(where, list):
            where = tuple(int(k) for k in where)
        rules[(i, j)] = SwitchRule(cost=float(_require(entry, "cost", "switch rule")), where=where)
    terminal_raw = _require(data, "terminal", "configuration")
    terminal = {}
    for key, value in terminal_raw.items():
        terminal["default" if key == "default" else int(key)] = profile_from_dict(value)
    start_raw = _require(data, "start", "configuration")
    moving = {int(k): float(v) for k, v in data.get("moving_rewards", {}).items()}
    return ProblemSpec(
        label=str(data.get("label", "custom")),
        length=float(_require(data, "length", "configuration")),
        horizon=float(_require(data, "horizon", "configuration")),
        regimes=tuple(regimes),
        sites=tuple(sites),
        costs=SwitchingCosts(rules),
        terminal=terminal,
        start=StartState(
            x=float(_require(start_raw, "x", "start")),
            regime=int(_require(start_raw, "regime", "start")),
        ),
        distance_scale=float(data.get("distance_scale", 1.0)),
        moving_rewards=moving,
    )


def load_problem(source: Union[str, Path, dict]) -> Problem:
    """Load and validate a problem from a JSON file path or a parsed dict."""
    if isinstance(source, (str, Path)):
        path = Path(source)
        if not path.exists():
            raise ConfigError(f"configuration file not found: {path}")
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"configuration file {path} is not valid JSON: {exc}") from exc
    else:
        data = source
    return validate_problem(spec_from_dict(data))
