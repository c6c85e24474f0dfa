"""Controlled lattice random walks driven by an extracted switching policy.

The simulator discretises each regime's drift-diffusion onto a spatial
lattice of pitch dx with a shared time step dt = dx^2 / M, where

    M = max( sum_j mu_j,  2 * max_j mu_j ).

Matching the first two increment moments per step gives, for regime j,

    p_right = mu_j / M + v_j dx / (2 M)
    p_left  = mu_j / M - v_j dx / (2 M)
    p_stay  = 1 - p_right - p_left.

The max() in M keeps p_stay nonnegative when one regime carries more than
half the summed diffusivity (the plain sum would push its stay probability
below zero); when the sum already dominates, M is the plain sum. A waiting
regime (v = mu = 0) never moves. p_left >= 0 requires mu_j >= v_j dx / 2
for every moving regime, which bounds the usable lattice pitch.

Paths evolve synchronously. Each step: apply the policy switch for the
current node (nearest node of the solver grid), collect running rewards
(left rectangle rule), accumulate the mortality discount, then move. The
wall at x = 0 reflects (a left move from node 0 lands on node 1, mirroring
the solver's ghost node), and the arrival column absorbs. A final partial
step scales the move probabilities by dt_eff / dt, which preserves the
increment moments over the shortened interval.

Randomness: one uniform per path per step, drawn from a per-path generator
spawned from the ensemble seed, so path k of an ensemble is identical to
the single path simulated with spawn child k.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import ConfigError, Problem
from .regions import SwitchingRegions

__all__ = [
    "LatticeCalibration",
    "calibrate",
    "Trajectory",
    "EnsembleResult",
    "run_ensemble",
    "simulate_path",
    "length_of_stay",
]

_BLOCK = 512  # uniforms drawn per path at a time


@dataclass(frozen=True)
class LatticeCalibration:
    """Move probabilities for every regime on a common space-time lattice."""

    dx: float
    dt: float
    total_rate: float  # the normalising constant M
    regime_indices: tuple[int, ...]
    p_left: np.ndarray
    p_right: np.ndarray
    p_stay: np.ndarray

    def n_nodes(self, length: float) -> int:
        return int(round(length / self.dx)) + 1


def calibrate(problem: Problem, dx: float | None = None) -> LatticeCalibration:
    """Build lattice probabilities; dx defaults to length/200 and is snapped
    so that the domain holds a whole number of cells."""
    if dx is None:
        dx = problem.length / 200.0
    n_cells = max(1, int(round(problem.length / dx)))
    dx = problem.length / n_cells

    mus = np.array([r.mu for r in problem.regimes])
    vs = np.array([r.v for r in problem.regimes])
    total = max(float(mus.sum()), 2.0 * float(mus.max()))
    if total <= 0.0:
        raise ConfigError(
            "lattice calibration needs at least one regime with mu > 0"
        )
    dt = dx**2 / total

    p_right = mus / total + vs * dx / (2.0 * total)
    p_left = mus / total - vs * dx / (2.0 * total)
    if (p_left < 0.0).any():
        bad = int(np.argmin(p_left))
        regime = problem.regimes[bad]
        raise ConfigError(
            f"regime {regime.index} needs mu >= v*dx/2 on the walk lattice "
            f"(mu={regime.mu}, v={regime.v}, dx={dx:.6g}); use a smaller dx"
        )
    p_stay = 1.0 - (p_left + p_right)
    return LatticeCalibration(
        dx=dx,
        dt=dt,
        total_rate=total,
        regime_indices=tuple(r.index for r in problem.regimes),
        p_left=p_left,
        p_right=p_right,
        p_stay=p_stay,
    )


@dataclass
class Trajectory:
    """Recorded single path: node positions and regimes at step boundaries."""

    times: np.ndarray
    positions: np.ndarray  # physical x
    regimes: np.ndarray  # regime indices
    switches: list[dict]
    arrived: bool
    arrival_time: float  # nan when the horizon ran out first


@dataclass
class EnsembleResult:
    """Per-path outcome arrays for one simulated ensemble."""

    n_paths: int
    seed: int
    calibration: LatticeCalibration
    problem_hash: str
    arrived: np.ndarray  # bool
    arrival_time: np.ndarray  # float, nan if not arrived
    terminal_discount: np.ndarray  # exp(-int beta) at arrival, 0 otherwise
    flow_value: np.ndarray  # discounted running rewards minus switch costs
    final_regime: np.ndarray  # regime index at absorption or horizon
    switch_count: np.ndarray
    site_wait: np.ndarray  # (n_paths, n_sites) waiting occupancy per site
    trajectories: dict[int, Trajectory] = field(default_factory=dict)

    @property
    def arrival_fraction(self) -> float:
        return float(self.arrived.mean())

    def terminal_value(self, profile) -> np.ndarray:
        """Discounted terminal reward under an arbitrary arrival-time profile."""
        out = np.zeros(self.n_paths)
        hit = self.arrived
        if hit.any():
            out[hit] = self.terminal_discount[hit] * np.asarray(
                profile.value(self.arrival_time[hit])
            )
        return out

    def realized(self, problem: Problem) -> np.ndarray:
        """Per-path payoff scored with the problem's own terminal profiles."""
        out = self.flow_value.copy()
        for index in np.unique(self.final_regime[self.arrived]):
            sel = self.arrived & (self.final_regime == index)
            profile = problem.terminal_profile(int(index))
            out[sel] += self.terminal_discount[sel] * np.asarray(
                profile.value(self.arrival_time[sel])
            )
        return out

    def rescored(self, profile) -> np.ndarray:
        """Per-path payoff with one profile replacing every terminal reward."""
        return self.flow_value + self.terminal_value(profile)

    def summary(self, problem: Problem) -> dict:
        payoff = self.realized(problem)
        hit = self.arrived
        return {
            "n_paths": self.n_paths,
            "seed": self.seed,
            "mean_payoff": float(payoff.mean()),
            "se_payoff": float(payoff.std(ddof=1) / np.sqrt(self.n_paths)),
            "arrival_fraction": self.arrival_fraction,
            "median_arrival_time": (
                float(np.median(self.arrival_time[hit])) if hit.any() else None
            ),
            "mean_switch_count": float(self.switch_count.mean()),
            "mean_site_wait": [float(w) for w in self.site_wait.mean(axis=0)],
        }


def length_of_stay(result: EnsembleResult) -> np.ndarray:
    """Mean stop-over occupancy per site, averaged over visiting paths only.

    Sites nobody visited report 0.
    """
    wait = result.site_wait
    visitors = (wait > 0.0).sum(axis=0)
    totals = wait.sum(axis=0)
    out = np.zeros(wait.shape[1])
    nonzero = visitors > 0
    out[nonzero] = totals[nonzero] / visitors[nonzero]
    return out


def _policy_tables(problem: Problem, regions: SwitchingRegions):
    indices = regions.regime_indices
    if indices != tuple(range(1, len(indices) + 1)):
        raise ValueError(f"regime indices must be contiguous from 1, got {indices}")
    policy = regions.policy_array  # (R, nt+1, nx_pde), values are indices or -1
    _, cost = problem.switch_tables(regions.grid.x_nodes)
    return policy, cost


def run_ensemble(
    problem: Problem,
    regions: SwitchingRegions,
    n_paths: int,
    seed: int,
    dx: float | None = None,
    record_paths: tuple[int, ...] = (),
) -> EnsembleResult:
    """Simulate n_paths policy-following walkers from the problem start state."""
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    calib = calibrate(problem, dx if dx is not None else regions.grid.dx)
    pde = regions.grid
    policy, cost_table = _policy_tables(problem, regions)

    nx = calib.n_nodes(problem.length)
    last = nx - 1
    dt = calib.dt
    horizon = problem.horizon
    n_steps = int(np.ceil(horizon / dt - 1e-12))

    x_sim = np.arange(nx) * calib.dx
    node_to_pde = np.clip(
        np.floor(x_sim / pde.dx + 0.5).astype(int), 0, pde.nx - 1
    )
    site_id = np.full(nx, -1, dtype=int)
    for k, s in enumerate(problem.sites):
        site_id[(x_sim >= s.start - 1e-12) & (x_sim <= s.end + 1e-12)] = k
    n_sites = len(problem.sites)

    n_reg = len(problem.regimes)
    beta = np.array([r.beta for r in problem.regimes])
    waiting_slot = problem.waiting_index - 1
    running = np.zeros((n_reg, nx))
    for a, r in enumerate(problem.regimes):
        for n in range(nx):
            running[a, n] = problem.eval_running(r.index, 0.0, float(x_sim[n]))

    start_node = int(np.floor(problem.start.x / calib.dx + 0.5))
    start_slot = problem.start.regime - 1

    children = np.random.SeedSequence(seed).spawn(n_paths)
    gens = [np.random.Generator(np.random.PCG64(c)) for c in children]

    pos = np.full(n_paths, start_node, dtype=np.int64)
    slot = np.full(n_paths, start_slot, dtype=np.int64)
    alive = np.ones(n_paths, dtype=bool)
    disc = np.zeros(n_paths)
    flow = np.zeros(n_paths)
    arrived = np.zeros(n_paths, dtype=bool)
    arrival_time = np.full(n_paths, np.nan)
    tdisc = np.zeros(n_paths)
    final_regime = np.zeros(n_paths, dtype=np.int64)
    switch_count = np.zeros(n_paths, dtype=np.int64)
    site_wait = np.zeros((n_paths, n_sites))

    recorders: dict[int, dict] = {}
    for k in record_paths:
        if not (0 <= k < n_paths):
            raise ValueError(f"record_paths index {k} out of range")
        recorders[k] = {"nodes": [start_node], "slots": [start_slot], "switches": []}

    uniforms = np.empty((n_paths, _BLOCK))
    idx_all = np.arange(n_paths)

    for step in range(n_steps):
        col = step % _BLOCK
        if col == 0:
            want = min(_BLOCK, n_steps - step)
            for i, g in enumerate(gens):
                uniforms[i, :want] = g.random(want)
        if not alive.any():
            break
        t = step * dt
        dt_eff = min(dt, horizon - t)
        scale = dt_eff / dt

        live = np.flatnonzero(alive)
        live_at_start = {k: bool(alive[k]) for k in recorders}
        m_pde = min(int(np.floor(t / pde.dt + 0.5)), pde.nt)
        npde = node_to_pde[pos[live]]
        target = policy[slot[live], m_pde, npde]
        doswitch = target >= 0
        if doswitch.any():
            who = live[doswitch]
            tgt_slot = target[doswitch].astype(np.int64) - 1
            paid = cost_table[slot[who], tgt_slot, node_to_pde[pos[who]]]
            flow[who] -= np.exp(-disc[who]) * paid
            for k, j, cost_k in zip(who, tgt_slot, paid):
                if int(k) in recorders:
                    recorders[int(k)]["switches"].append(
                        {
                            "t": float(t),
                            "x": float(pos[k] * calib.dx),
                            "from_regime": int(slot[k] + 1),
                            "to_regime": int(j + 1),
                            "cost": float(cost_k),
                        }
                    )
            slot[who] = tgt_slot
            switch_count[who] += 1

        f_step = running[slot[live], pos[live]]
        flow[live] += np.exp(-disc[live]) * f_step * dt_eff

        waiting_here = live[(slot[live] == waiting_slot) & (site_id[pos[live]] >= 0)]
        if waiting_here.size:
            np.add.at(
                site_wait, (waiting_here, site_id[pos[waiting_here]]), dt_eff
            )

        disc[live] += beta[slot[live]] * dt_eff

        u = uniforms[live, col]
        pr = calib.p_right[slot[live]] * scale
        pl = calib.p_left[slot[live]] * scale
        move = np.where(u < pr, 1, 0) + np.where(u >= 1.0 - pl, -1, 0)
        newpos = pos[live] + move
        np.abs(newpos, out=newpos)  # reflecting wall mirrors node -1 onto 1
        pos[live] = newpos

        hit = live[newpos == last]
        if hit.size:
            arrived[hit] = True
            arrival_time[hit] = t + dt_eff
            tdisc[hit] = np.exp(-disc[hit])
            final_regime[hit] = slot[hit] + 1
            alive[hit] = False

        for k, rec in recorders.items():
            if live_at_start[k]:
                rec["nodes"].append(int(pos[k]))
                rec["slots"].append(int(slot[k]))

    final_regime[alive] = slot[alive] + 1

    trajectories = {}
    for k, rec in recorders.items():
        nodes = np.array(rec["nodes"])
        times = np.minimum(np.arange(len(nodes)) * dt, horizon)
        trajectories[k] = Trajectory(
            times=times,
            positions=nodes * calib.dx,
            regimes=np.array(rec["slots"]) + 1,
            switches=rec["switches"],
            arrived=bool(arrived[k]),
            arrival_time=float(arrival_time[k]),
        )

    return EnsembleResult(
        n_paths=n_paths,
        seed=seed,
        calibration=calib,
        problem_hash=problem.problem_hash(),
        arrived=arrived,
        arrival_time=arrival_time,
        terminal_discount=tdisc,
        flow_value=flow,
        final_regime=final_regime,
        switch_count=switch_count,
        site_wait=site_wait,
        trajectories=trajectories,
    )


def simulate_path(
    problem: Problem,
    regions: SwitchingRegions,
    seed: int,
    path_index: int = 0,
    dx: float | None = None,
) -> Trajectory:
    """Single recorded walk, identical to path `path_index` of the ensemble
    run with the same seed (per-path generators are spawned by index)."""
    result = run_ensemble(
        problem,
        regions,
        n_paths=path_index + 1,
        seed=seed,
        dx=dx,
        record_paths=(path_index,),
    )
    return result.trajectories[path_index]
