"""Switching-region extraction from a solved value field.

A lattice node (t_m, x_n) belongs to the switching region S_ij when regime j
is feasible there, the value of switching (V_j - h_ij) is the best available
among all feasible targets, and V_i offers no more than that switch value
(within a small tolerance scaled to the solved value range). The complement
of the union over j is regime i's continuation region.

The arrival column x = L is excluded: values there are pinned to the
terminal profile and carry no switching decision. The same goes for the
terminal row t = T.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .hjb import Grid, ValueField
from .model import Problem

__all__ = [
    "SwitchingRegions",
    "extract_regions",
    "region_boundary",
    "region_rows",
    "run_length_encode",
]

DEFAULT_TOL_FACTOR = 1e-6


@dataclass
class SwitchingRegions:
    """Boolean masks masks[a, b, m, n]: switch regimes[a] -> regimes[b] at (m, n)."""

    masks: np.ndarray  # (R, R, nt + 1, nx), row nt and column nx-1 all False
    grid: Grid
    regime_indices: tuple[int, ...]
    tol: float
    problem_hash: str
    _policy: np.ndarray | None = field(default=None, repr=False)

    def pair_mask(self, from_regime: int, to_regime: int) -> np.ndarray:
        a = self.regime_indices.index(from_regime)
        b = self.regime_indices.index(to_regime)
        return self.masks[a, b]

    @property
    def policy_array(self) -> np.ndarray:
        """int8 array (R, nt + 1, nx): target regime index, or -1 to stay.

        Where several targets tie (all attain the switch maximum), the
        smallest target regime index wins.
        """
        if self._policy is None:
            n_reg = self.masks.shape[0]
            policy = np.full(self.masks.shape[0:1] + self.masks.shape[2:], -1,
                             dtype=np.int8)
            for b in range(n_reg - 1, -1, -1):
                target = self.regime_indices[b]
                for a in range(n_reg):
                    policy[a][self.masks[a, b]] = target
            self._policy = policy
        return self._policy

    def policy(self, t: float, x: float, regime_index: int) -> int:
        """Nearest-node policy lookup: target regime index or -1 to stay."""
        g = self.grid
        m = int(np.floor(t / g.dt + 0.5))
        m = min(max(m, 0), g.nt)
        n = int(np.floor(x / g.dx + 0.5))
        n = min(max(n, 0), g.nx - 1)
        a = self.regime_indices.index(regime_index)
        return int(self.policy_array[a, m, n])

    def node_count(self, from_regime: int, to_regime: int) -> int:
        return int(self.pair_mask(from_regime, to_regime).sum())


def extract_regions(
    problem: Problem,
    fld: ValueField,
    tol_factor: float = DEFAULT_TOL_FACTOR,
) -> SwitchingRegions:
    """Classify every interior lattice node against the switching obstacle."""
    grid = fld.grid
    v = fld.values
    n_reg = v.shape[0]
    feasible, cost = problem.switch_tables(grid.x_nodes)
    tol = tol_factor * max(fld.value_range, np.finfo(float).tiny)

    masks = np.zeros((n_reg, n_reg, grid.nt + 1, grid.nx), dtype=bool)
    for a in range(n_reg):
        # candidate switch values for every target regime, -inf where barred
        cand = np.where(
            feasible[a][:, np.newaxis, :],
            v - cost[a][:, np.newaxis, :],
            -np.inf,
        )
        best = cand.max(axis=0)
        attains = cand == best[np.newaxis, :, :]
        binds = v[a] <= best + tol
        masks[a] = feasible[a][:, np.newaxis, :] & attains & binds[np.newaxis, :, :]
    masks[:, :, grid.nt, :] = False
    masks[:, :, :, grid.nx - 1] = False
    return SwitchingRegions(
        masks=masks,
        grid=grid,
        regime_indices=fld.regime_indices,
        tol=tol,
        problem_hash=fld.problem_hash,
    )


def region_boundary(regions: SwitchingRegions, from_regime: int, to_regime: int
                    ) -> list[tuple[int, int]]:
    """Lattice cells of S_ij with a 4-neighbour outside it (or on the array edge).

    Returned in lexicographic (time_index, node_index) order.
    """
    mask = regions.pair_mask(from_regime, to_regime)
    if not mask.any():
        return []
    interior = np.zeros_like(mask)
    interior[1:-1, 1:-1] = (
        mask[1:-1, 1:-1]
        & mask[:-2, 1:-1]
        & mask[2:, 1:-1]
        & mask[1:-1, :-2]
        & mask[1:-1, 2:]
    )
    edge = mask & ~interior
    return [(int(m), int(n)) for m, n in np.argwhere(edge)]


def region_rows(regions: SwitchingRegions) -> list[dict]:
    """Flat per-node rows for CSV export, ordered by pair then node."""
    g = regions.grid
    rows = []
    n_reg = regions.masks.shape[0]
    for a in range(n_reg):
        for b in range(n_reg):
            mask = regions.masks[a, b]
            if not mask.any():
                continue
            for m, n in np.argwhere(mask):
                rows.append(
                    {
                        "from_regime": regions.regime_indices[a],
                        "to_regime": regions.regime_indices[b],
                        "time_index": int(m),
                        "node_index": int(n),
                        "t": float(m * g.dt),
                        "x": float(n * g.dx),
                    }
                )
    return rows


def run_length_encode(regions: SwitchingRegions) -> dict:
    """Compact JSON-able description: per pair, per time row, node-index runs."""
    g = regions.grid
    payload: dict = {
        "grid": {"nx": g.nx, "nt": g.nt, "length": g.length, "horizon": g.horizon},
        "regimes": list(regions.regime_indices),
        "tolerance": regions.tol,
        "problem_hash": regions.problem_hash,
        "pairs": [],
    }
    n_reg = regions.masks.shape[0]
    for a in range(n_reg):
        for b in range(n_reg):
            mask = regions.masks[a, b]
            if not mask.any():
                continue
            runs = []
            for m in range(g.nt + 1):
                row = mask[m]
                if not row.any():
                    continue
                padded = np.diff(np.concatenate(([0], row.view(np.int8), [0])))
                starts = np.flatnonzero(padded == 1)
                ends = np.flatnonzero(padded == -1) - 1
                for s, e in zip(starts, ends):
                    runs.append([int(m), int(s), int(e)])
            payload["pairs"].append(
                {
                    "from_regime": regions.regime_indices[a],
                    "to_regime": regions.regime_indices[b],
                    "node_count": int(mask.sum()),
                    "runs": runs,
                }
            )
    return payload
