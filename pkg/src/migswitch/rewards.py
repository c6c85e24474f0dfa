"""Terminal reward profiles.

A profile maps arrival time t in [0, T] to a reward level. The catalog covers
the shapes used by the bundled presets and scenario sweeps:

* ``GaussianPulse``   -- smooth seasonal window, peak value 1.
* ``TriangularPulse`` -- piecewise-linear window, peak value 1.
* ``StepProfile``     -- piecewise-constant levels on a fixed edge partition.
* ``ShiftedProfile``  -- time-shifted view of another profile.
* ``NoisyProfile``    -- a base profile plus a scaled high-frequency ripple,
  clamped at zero so rewards stay nonnegative.

``step_projection`` builds the piecewise-constant approximation of a profile
on n uniform cells (cell averages via midpoint quadrature), preserving the
integral of the source up to quadrature error.

All ``value`` methods accept scalars or numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

__all__ = [
    "GaussianPulse",
    "TriangularPulse",
    "StepProfile",
    "ShiftedProfile",
    "NoisyProfile",
    "RewardProfile",
    "step_projection",
    "eval_terminal",
    "profile_to_dict",
    "profile_from_dict",
]

ArrayLike = Union[float, np.ndarray]

# Panels per cell for the midpoint quadrature used by step_projection.
PROJECTION_PANELS = 1024


@dataclass(frozen=True)
class GaussianPulse:
    """exp(-(t - center)^2 / (2 sigma^2)); peak value 1 at t = center."""

    center: float
    sigma: float

    def __post_init__(self) -> None:
        if not (self.sigma > 0.0 and np.isfinite(self.sigma)):
            raise ValueError(f"gaussian profile needs sigma > 0, got {self.sigma}")

    def value(self, t: ArrayLike) -> ArrayLike:
        t = np.asarray(t, dtype=float)
        out = np.exp(-((t - self.center) ** 2) / (2.0 * self.sigma**2))
        return out if out.ndim else float(out)


@dataclass(frozen=True)
class TriangularPulse:
    """Linear rise on [start, peak], linear fall on [peak, end], 0 outside."""

    start: float
    peak: float
    end: float

    def __post_init__(self) -> None:
        if not (self.start < self.peak < self.end):
            raise ValueError(
                f"triangular profile needs start < peak < end, got "
                f"({self.start}, {self.peak}, {self.end})"
            )

    def value(self, t: ArrayLike) -> ArrayLike:
        t = np.asarray(t, dtype=float)
        rise = (t - self.start) / (self.peak - self.start)
        fall = (self.end - t) / (self.end - self.peak)
        out = np.where(
            (t >= self.start) & (t <= self.peak),
            rise,
            np.where((t > self.peak) & (t <= self.end), fall, 0.0),
        )
        out = np.asarray(out, dtype=float)
        return out if out.ndim else float(out)


@dataclass(frozen=True)
class StepProfile:
    """Piecewise constant: levels[k] on [edges[k], edges[k+1]).

    The final cell is closed on the right so the full domain is covered.
    """

    edges: tuple[float, ...]
    levels: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.edges) != len(self.levels) + 1:
            raise ValueError("step profile needs len(edges) == len(levels) + 1")
        diffs = np.diff(self.edges)
        if len(self.levels) == 0 or np.any(diffs <= 0):
            raise ValueError("step profile edges must be strictly increasing")

    def value(self, t: ArrayLike) -> ArrayLike:
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(np.asarray(self.edges), t, side="right") - 1
        idx = np.clip(idx, 0, len(self.levels) - 1)
        out = np.asarray(self.levels, dtype=float)[idx]
        return out if out.ndim else float(out)


@dataclass(frozen=True)
class ShiftedProfile:
    """value(t) = source.value(t + shift); positive shift moves the shape earlier."""

    source: "RewardProfile"
    shift: float

    def value(self, t: ArrayLike) -> ArrayLike:
        t = np.asarray(t, dtype=float)
        out = np.asarray(self.source.value(t + self.shift), dtype=float)
        return out if out.ndim else float(out)


@dataclass(frozen=True)
class NoisyProfile:
    """source(t) + amplitude * ripple * sin(frequency * pi * t / horizon), clamped at 0.

    ripple fixes the absolute scale of the oscillation; amplitude is the sweep
    parameter (amplitude = 0 reproduces the source exactly).
    """

    source: "RewardProfile"
    amplitude: float
    frequency: float
    horizon: float
    ripple: float = 0.1

    def __post_init__(self) -> None:
        if self.amplitude < 0.0:
            raise ValueError(f"noise amplitude must be >= 0, got {self.amplitude}")
        if not (self.horizon > 0.0):
            raise ValueError(f"noisy profile needs horizon > 0, got {self.horizon}")

    def value(self, t: ArrayLike) -> ArrayLike:
        t = np.asarray(t, dtype=float)
        wave = np.sin(self.frequency * np.pi * t / self.horizon)
        out = np.maximum(
            np.asarray(self.source.value(t), dtype=float)
            + self.amplitude * self.ripple * wave,
            0.0,
        )
        return out if out.ndim else float(out)


RewardProfile = Union[
    GaussianPulse, TriangularPulse, StepProfile, ShiftedProfile, NoisyProfile
]


def step_projection(
    source: RewardProfile,
    n_cells: int,
    horizon: float,
    panels: int = PROJECTION_PANELS,
) -> StepProfile:
    """Project a profile onto n_cells uniform cells of [0, horizon].

    Each level is the cell average of the source, computed with a midpoint
    rule using `panels` sub-intervals per cell, so the projected profile
    integrates to the same value as the source up to quadrature error.
    """
    if n_cells < 1:
        raise ValueError(f"step projection needs n_cells >= 1, got {n_cells}")
    if not (horizon > 0.0):
        raise ValueError(f"step projection needs horizon > 0, got {horizon}")
    edges = np.linspace(0.0, horizon, n_cells + 1)
    levels = []
    for k in range(n_cells):
        width = edges[k + 1] - edges[k]
        mids = edges[k] + (np.arange(panels) + 0.5) * (width / panels)
        levels.append(float(np.mean(np.asarray(source.value(mids), dtype=float))))
    return StepProfile(edges=tuple(float(e) for e in edges), levels=tuple(levels))


def eval_terminal(profile: RewardProfile, t: ArrayLike, horizon: float) -> ArrayLike:
    """Evaluate a terminal profile, rejecting times outside [0, horizon]."""
    arr = np.asarray(t, dtype=float)
    if np.any(arr < 0.0) or np.any(arr > horizon):
        raise ValueError(
            f"terminal reward queried outside [0, {horizon}]: "
            f"t in [{float(np.min(arr))}, {float(np.max(arr))}]"
        )
    return profile.value(t)


def profile_to_dict(profile: RewardProfile) -> dict:
    """Serialize a profile into plain JSON-compatible types."""
    if isinstance(profile, GaussianPulse):
        return {"kind": "gaussian", "center": profile.center, "sigma": profile.sigma}
    if isinstance(profile, TriangularPulse):
        return {
            "kind": "triangular",
            "start": profile.start,
            "peak": profile.peak,
            "end": profile.end,
        }
    if isinstance(profile, StepProfile):
        return {
            "kind": "step",
            "edges": list(profile.edges),
            "levels": list(profile.levels),
        }
    if isinstance(profile, ShiftedProfile):
        return {
            "kind": "shifted",
            "source": profile_to_dict(profile.source),
            "shift": profile.shift,
        }
    if isinstance(profile, NoisyProfile):
        return {
            "kind": "noisy",
            "source": profile_to_dict(profile.source),
            "amplitude": profile.amplitude,
            "frequency": profile.frequency,
            "horizon": profile.horizon,
            "ripple": profile.ripple,
        }
    raise TypeError(f"unknown reward profile type: {type(profile)!r}")


def profile_from_dict(data: dict) -> RewardProfile:
    """Inverse of profile_to_dict, with explicit errors for malformed input."""
    if not isinstance(data, dict) or "kind" not in data:
        raise ValueError(f"reward profile must be an object with a 'kind': {data!r}")
    kind = data["kind"]
    try:
        if kind == "gaussian":
            return GaussianPulse(center=float(data["center"]), sigma=float(data["sigma"]))
        if kind == "triangular":
            return TriangularPulse(
                start=float(data["start"]),
                peak=float(data["peak"]),
                end=float(data["end"]),
            )
        if kind == "step":
            return StepProfile(
                edges=tuple(float(e) for e in data["edges"]),
                levels=tuple(float(v) for v in data["levels"]),
            )
        if kind == "shifted":
            return ShiftedProfile(
                source=profile_from_dict(data["source"]), shift=float(data["shift"])
            )
        if kind == "noisy":
            return NoisyProfile(
                source=profile_from_dict(data["source"]),
                amplitude=float(data["amplitude"]),
                frequency=float(data["frequency"]),
                horizon=float(data["horizon"]),
                ripple=float(data.get("ripple", 0.1)),
            )
    except KeyError as exc:
        raise ValueError(f"reward profile '{kind}' missing field {exc}") from exc
    raise ValueError(f"unknown reward profile kind: {kind!r}")
