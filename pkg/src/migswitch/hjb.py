"""Implicit finite-difference solver for the switching variational inequality.

For each regime i the value function satisfies, backward in time,

    min( -dV_i/dt + beta_i V_i - v_i dV_i/dx - mu_i d2V_i/dx2 - f_i,
         V_i - max_{j != i feasible} (V_j - h_ij) ) = 0

on (0, T) x (0, L), with a reflecting (zero-derivative) wall at x = 0, the
arrival reward V_i(t, L) = g_i(t) on the right boundary, and V_i(T, x) = 0
for x < L (the corner (T, L) takes the boundary value g_i(T)).

Each backward step solves, per regime, the implicit scheme

    -(V[m+1,n] - V[m,n])/dt - v (V[m,n+1] - V[m,n])/dx
        - mu (V[m,n+1] - 2 V[m,n] + V[m,n-1])/dx^2 + beta V[m,n] = f[m,n]

(one-sided convection difference; the assembled tridiagonal matrix is an
M-matrix for v >= 0, so the step is unconditionally stable and monotone),
followed by the simultaneous obstacle projection

    V[i,m,n] <- max(Vhat[i,m,n], max_{j != i} (Vhat[j,m,n] - h_ij(x_n)))

applied to every column except the pinned arrival boundary. The zero-derivative
wall enters through the ghost-node mirror V[-1] = V[1].
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import solve_banded

from .model import Problem

__all__ = [
    "Grid",
    "ValueField",
    "ComplementarityResidual",
    "solve_backward",
    "implicit_step",
    "apply_obstacle",
    "residual",
    "save_value_field",
    "load_value_field",
]


@dataclass(frozen=True)
class Grid:
    """Uniform space-time lattice: nx nodes on [0, L], nt steps on [0, T]."""

    nx: int
    nt: int
    length: float
    horizon: float

    def __post_init__(self) -> None:
        if self.nx < 3:
            raise ValueError(f"grid needs nx >= 3, got {self.nx}")
        if self.nt < 1:
            raise ValueError(f"grid needs nt >= 1, got {self.nt}")
        if not (self.length > 0 and self.horizon > 0):
            raise ValueError("grid needs positive length and horizon")

    @property
    def dx(self) -> float:
        return self.length / (self.nx - 1)

    @property
    def dt(self) -> float:
        return self.horizon / self.nt

    @property
    def x_nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.length, self.nx)

    @property
    def t_nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.nt + 1)

    @classmethod
    def for_problem(cls, problem: Problem, nx: int, nt: int) -> "Grid":
        return cls(nx=nx, nt=nt, length=problem.length, horizon=problem.horizon)


@dataclass
class ValueField:
    """Solved value functions: values[a, m, n] = V of regimes[a] at (t_m, x_n)."""

    values: np.ndarray  # (R, nt + 1, nx)
    grid: Grid
    regime_indices: tuple[int, ...]
    problem_hash: str

    def regime_slice(self, regime_index: int) -> np.ndarray:
        return self.values[self.regime_indices.index(regime_index)]

    def at_start(self, regime_index: int, x: float = 0.0) -> float:
        """V at t = 0 for the node nearest x."""
        n = int(round(x / self.grid.dx))
        n = min(max(n, 0), self.grid.nx - 1)
        return float(self.regime_slice(regime_index)[0, n])

    @property
    def value_range(self) -> float:
        return float(self.values.max() - self.values.min())


@dataclass
class ComplementarityResidual:
    """Discrete residual diagnostics on interior nodes.

    pde[a, m, n-1]     : residual of the implicit scheme at (t_m, x_n),
    gap[a, m, n-1]     : V_i - best feasible switch target (inf if none),
    combined           : elementwise min of the two,
    for m = 0..nt-1 and n = 1..nx-2.
    """

    pde: np.ndarray
    gap: np.ndarray
    combined: np.ndarray

    @property
    def max_abs_combined(self) -> float:
        return float(np.max(np.abs(self.combined)))

    @property
    def min_combined(self) -> float:
        return float(np.min(self.combined))


def _banded_matrix(v: float, mu: float, beta: float, grid: Grid) -> np.ndarray:
    """Banded (ab) form of the implicit-step matrix for one regime."""
    nx, dx, dt = grid.nx, grid.dx, grid.dt
    c = v * dt / dx
    d = mu * dt / dx**2
    diag = np.full(nx, 1.0 + c + 2.0 * d + beta * dt)
    diag[nx - 1] = 1.0  # pinned arrival boundary
    upper = np.full(nx, -(c + d))
    upper[1] = -(c + 2.0 * d)  # ghost-node mirror at the reflecting wall
    lower = np.full(nx, -d)
    lower[nx - 2] = 0.0  # row nx-1 is the identity row
    ab = np.zeros((3, nx))
    ab[0, 1:] = upper[1:]
    ab[1, :] = diag
    ab[2, :-1] = lower[:-1]
    return ab


def _prefactored(problem: Problem, grid: Grid) -> list[np.ndarray]:
    return [_banded_matrix(r.v, r.mu, r.beta, grid) for r in problem.regimes]


def implicit_step(
    problem: Problem,
    grid: Grid,
    v_next: np.ndarray,
    t: float,
    f_rows: np.ndarray | None = None,
    matrices: list[np.ndarray] | None = None,
) -> np.ndarray:
    """One backward implicit step for every regime (no obstacle projection).

    v_next holds the already-known row at t + dt; returns the unconstrained
    solution row at time t, with the arrival column set to each regime's
    terminal profile value g_i(t).
    """
    if matrices is None:
        matrices = _prefactored(problem, grid)
    if f_rows is None:
        x = grid.x_nodes
        f_rows = np.stack(
            [np.asarray(problem.eval_running(r.index, t, x)) for r in problem.regimes]
        )
    out = np.empty_like(v_next)
    for a, regime in enumerate(problem.regimes):
        rhs = v_next[a] + grid.dt * f_rows[a]
        rhs[-1] = problem.eval_terminal(regime.index, t)
        out[a] = solve_banded((1, 1), matrices[a], rhs)
    return out


def apply_obstacle(
    v_hat: np.ndarray, feasible: np.ndarray, cost: np.ndarray
) -> np.ndarray:
    """Simultaneous projection onto the switching obstacle.

    v_hat: (R, nx) unconstrained row; feasible/cost: (R, R, nx) tables from
    Problem.switch_tables. All regimes are lifted against the same input row.
    The caller pins boundary columns afterwards.
    """
    candidates = np.where(feasible, v_hat[np.newaxis, :, :] - cost, -np.inf)
    obstacle = candidates.max(axis=1)
    return np.maximum(v_hat, obstacle)


def solve_backward(problem: Problem, grid: Grid) -> ValueField:
    """Solve the full backward sweep and return the value field."""
    if abs(grid.length - problem.length) > 1e-12 * max(1.0, problem.length):
        raise ValueError(
            f"grid length {grid.length} does not match problem length {problem.length}"
        )
    if abs(grid.horizon - problem.horizon) > 1e-12 * max(1.0, problem.horizon):
        raise ValueError(
            f"grid horizon {grid.horizon} does not match problem horizon "
            f"{problem.horizon}"
        )
    nx, nt = grid.nx, grid.nt
    x = grid.x_nodes
    regimes = problem.regimes
    n_reg = len(regimes)

    feasible, cost = problem.switch_tables(x)
    matrices = _prefactored(problem, grid)
    # running rewards are time-invariant in this model; evaluate rows once
    f_rows = np.stack(
        [np.asarray(problem.eval_running(r.index, 0.0, x)) for r in regimes]
    )

    values = np.zeros((n_reg, nt + 1, nx))
    for a, regime in enumerate(regimes):
        values[a, nt, :] = 0.0
        values[a, nt, nx - 1] = problem.eval_terminal(regime.index, problem.horizon)

    t_nodes = grid.t_nodes
    for m in range(nt - 1, -1, -1):
        v_hat = implicit_step(
            problem, grid, values[:, m + 1, :], float(t_nodes[m]), f_rows, matrices
        )
        projected = apply_obstacle(v_hat, feasible, cost)
        projected[:, nx - 1] = v_hat[:, nx - 1]  # keep the arrival boundary exact
        values[:, m, :] = projected

    return ValueField(
        values=values,
        grid=grid,
        regime_indices=tuple(r.index for r in regimes),
        problem_hash=problem.problem_hash(),
    )


def residual(problem: Problem, grid: Grid, field: ValueField) -> ComplementarityResidual:
    """Discrete complementarity residual of a solved field on interior nodes."""
    v = field.values
    nx, nt, dx, dt = grid.nx, grid.nt, grid.dx, grid.dt
    x = grid.x_nodes
    feasible, cost = problem.switch_tables(x)
    f_rows = np.stack(
        [np.asarray(problem.eval_running(r.index, 0.0, x)) for r in problem.regimes]
    )

    inner = slice(1, nx - 1)
    pde = np.empty((len(problem.regimes), nt, nx - 2))
    gap = np.empty_like(pde)
    for a, regime in enumerate(problem.regimes):
        va = v[a]
        dt_term = -(va[1:, inner] - va[:-1, inner]) / dt
        dx_term = -regime.v * (va[:-1, 2:] - va[:-1, inner]) / dx
        dxx_term = (
            -regime.mu * (va[:-1, 2:] - 2.0 * va[:-1, inner] + va[:-1, :-2]) / dx**2
        )
        pde[a] = (
            dt_term + dx_term + dxx_term + regime.beta * va[:-1, inner] - f_rows[a, inner]
        )
        # obstacle gap against the same (projected) row
        cand = np.where(
            feasible[a][:, np.newaxis, :],
            v[:, :-1, :] - cost[a][:, np.newaxis, :],
            -np.inf,
        )
        obstacle = cand.max(axis=0)
        with np.errstate(invalid="ignore"):
            g = va[:-1, :] - obstacle
        gap[a] = g[:, inner]
    combined = np.minimum(pde, gap)
    return ComplementarityResidual(pde=pde, gap=gap, combined=combined)


def save_value_field(field: ValueField, path: str | Path) -> tuple[Path, Path]:
    """Write values as a binary .npy plus a JSON sidecar with grid metadata."""
    path = Path(path)
    npy_path = path.with_suffix(".npy")
    sidecar_path = path.with_suffix(".json")
    np.save(npy_path, field.values)
    sidecar = {
        "format": "migswitch-value-field-v1",
        "shape": list(field.values.shape),
        "dtype": str(field.values.dtype),
        "axes": ["regime", "time", "space"],
        "regime_indices": list(field.regime_indices),
        "grid": {
            "nx": field.grid.nx,
            "nt": field.grid.nt,
            "length": field.grid.length,
            "horizon": field.grid.horizon,
        },
        "problem_hash": field.problem_hash,
    }
    sidecar_path.write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    return npy_path, sidecar_path


def load_value_field(path: str | Path) -> ValueField:
    path = Path(path)
    values = np.load(path.with_suffix(".npy"))
    meta = json.loads(path.with_suffix(".json").read_text())
    grid = Grid(
        nx=meta["grid"]["nx"],
        nt=meta["grid"]["nt"],
        length=meta["grid"]["length"],
        horizon=meta["grid"]["horizon"],
    )
    return ValueField(
        values=values,
        grid=grid,
        regime_indices=tuple(meta["regime_indices"]),
        problem_hash=meta["problem_hash"],
    )
