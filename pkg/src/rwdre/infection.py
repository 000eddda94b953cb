"""One-dimensional infection model driven by a Poisson cloud of random walks.

Initially every particle at a site <= 0 is infected.  A particle sharing a
site with an infected particle at time n is infected from time n + 1 on.
The observable of interest is the rightmost infected position.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import rand_hier as rh
from . import stats
from .environment import increments, steps_per_block

__all__ = [
    "InfectionState",
    "init_infection",
    "init_from_counts",
    "step_infection",
    "window_observable",
    "InfectionRun",
    "run_infection",
    "front_speed_experiment",
    "monotonicity_coupling",
    "runs_to_csv",
]

_LAYER_BASE = 0


@dataclass
class _Keys:
    seed: int
    replica: int
    laziness: float
    z: np.ndarray
    idx: np.ndarray
    layer: np.ndarray
    cache: np.ndarray = field(default=None)  # (n, cached steps) int8

    def steps(self, upto: int) -> np.ndarray:
        have = 0 if self.cache is None else self.cache.shape[1]
        if upto > have:
            per = steps_per_block(1, self.laziness)
            chunk = per * max(1, -(-max(upto - have, 256) // per))
            parts = []
            for lay in np.unique(self.layer):
                sel = np.flatnonzero(self.layer == lay)
                inc = increments(self.seed, self.replica, rh.Stream.TRAJ_FUTURE, self.z[sel, None], self.idx[sel],
                                 chunk, 1, self.laziness, first_block=have // per, layer=int(lay))[:, :, 0]
                parts.append((sel, inc))
            new = np.zeros((len(self.z), chunk), dtype=np.int8)
            for sel, inc in parts:
                new[sel] = inc
            self.cache = new if self.cache is None else np.concatenate([self.cache, new], axis=1)
        return self.cache


@dataclass
class InfectionState:
    positions: np.ndarray
    infected: np.ndarray
    t: int
    keys: _Keys | None = None

    @property
    def degenerate(self) -> bool:
        return not self.infected.any()

    @property
    def front(self) -> int | None:
        if not self.infected.any():
            return None
        return int(self.positions[self.infected].max())

    def front_particle(self) -> int:
        """Lowest-index infected particle at the front."""
        cand = np.flatnonzero(self.infected & (self.positions == self.front))
        return int(cand[0])

    @property
    def infected_count(self) -> int:
        return int(self.infected.sum())


def _from_sites(z: np.ndarray, idx: np.ndarray, layer: np.ndarray, seed: int, replica: int,
                laziness: float) -> InfectionState:
    keys = _Keys(seed, replica, laziness, z.astype(np.int64), idx.astype(np.int64), layer.astype(np.int64))
    return InfectionState(z.astype(np.int64).copy(), z <= 0, 0, keys)


def init_infection(rho: float | Sequence[float], A: int, seed: int, replica: int = 0,
                   laziness: float = 0.0) -> InfectionState:
    """Poisson(rho) particles per site of [-A, A]; infected iff the site is <= 0.

    A sequence of densities superposes independent layers (layer j has density
    rho[j]), which is how coupled systems of increasing density share particles.
    """
    rhos = [rho] if np.isscalar(rho) else list(rho)
    sites = np.arange(-A, A + 1, dtype=np.int64)
    zs, ids, lays = [], [], []
    for j, r in enumerate(rhos):
        cnt = rh.poissons(seed, r, int(rh.Stream.INITIAL_COUNT), replica, sites, t=j)
        z = np.repeat(sites, cnt)
        zs.append(z)
        ids.append(np.arange(len(z)) - np.repeat(np.cumsum(cnt) - cnt, cnt))
        lays.append(np.full(len(z), j))
    return _from_sites(np.concatenate(zs), np.concatenate(ids), np.concatenate(lays), seed, replica, laziness)


def init_from_counts(counts: dict[int, int], seed: int = 0, replica: int = 0, laziness: float = 0.0) -> InfectionState:
    sites = np.array(list(counts), dtype=np.int64)
    cnt = np.array(list(counts.values()), dtype=np.int64)
    z = np.repeat(sites, cnt)
    idx = np.arange(len(z)) - np.repeat(np.cumsum(cnt) - cnt, cnt)
    return _from_sites(z, idx, np.zeros(len(z), dtype=np.int64), seed, replica, laziness)


def _spread(positions: np.ndarray, infected: np.ndarray) -> np.ndarray:
    """Infection flags one step later: anyone sharing a site with an infected particle."""
    if not infected.any():
        return infected.copy()
    lo = positions.min()
    hot = np.zeros(int(positions.max() - lo) + 1, dtype=bool)
    hot[positions[infected] - lo] = True
    return infected | hot[positions - lo]


def step_infection(state: InfectionState, increments_row: np.ndarray | None = None) -> InfectionState:
    """Move every particle one step, then apply the contacts of the previous time."""
    if increments_row is None:
        increments_row = state.keys.steps(state.t + 1)[:, state.t]
    new_inf = _spread(state.positions, state.infected)
    return InfectionState(state.positions + increments_row, new_inf, state.t + 1, state.keys)


def window_observable(positions: np.ndarray, front: int, r: int) -> int:
    """1 when at least two particles sit at even offsets within r of the front."""
    off = positions - front
    return int(np.count_nonzero((np.abs(off) <= r) & (off % 2 == 0)) >= 2)


@dataclass
class InfectionRun:
    replica: int
    degenerate: bool
    front: np.ndarray  # X_n, n = 0..T
    infected_count: np.ndarray
    srw: np.ndarray  # coupled lone walk from X_0
    window: np.ndarray  # g_r at each time

    @property
    def dominated(self) -> bool:
        return bool((self.front >= self.srw).all())


def run_infection(rho, T: int, seed: int, replica: int = 0, A: int | None = None, r: int = 10,
                  laziness: float = 0.0, state: InfectionState | None = None) -> InfectionRun:
    """Evolve T steps; the front is exact when A >= 2T + 64 (see init)."""
    if state is None:
        A = 2 * T + 64 if A is None else A
        state = init_infection(rho, A, seed, replica, laziness)
    if state.degenerate:
        z = np.zeros(0, dtype=np.int64)
        return InfectionRun(replica, True, z, z, z, z)
    inc = state.keys.steps(T)
    front = np.zeros(T + 1, dtype=np.int64)
    count = np.zeros(T + 1, dtype=np.int64)
    srw = np.zeros(T + 1, dtype=np.int64)
    win = np.zeros(T + 1, dtype=np.int64)
    pos, inf = state.positions.copy(), state.infected.copy()
    for n in range(T + 1):
        infp = pos[inf]
        fr = int(infp.max())
        front[n] = fr
        count[n] = len(infp)
        win[n] = window_observable(pos, fr, r)
        if n == T:
            break
        lead = int(np.flatnonzero(inf & (pos == fr))[0])
        srw[n + 1] = (srw[n] if n else fr) + int(inc[lead, n])
        inf = _spread(pos, inf)
        pos = pos + inc[:, n]
    srw[0] = front[0]
    return InfectionRun(replica, False, front, count, srw, win)


def front_speed_experiment(rho: float, T: int, replicas: Sequence[int], seed: int, r: int = 10,
                           v_grid: Sequence[float] = (0.0, 0.05, 0.1, 0.2), laziness: float = 0.0, mapper=map):
    runs = list(mapper(lambda rep: run_infection(rho, T, seed, rep, r=r, laziness=laziness), replicas))
    return summarize_runs(runs, T, v_grid), runs


def summarize_runs(runs: Sequence[InfectionRun], T: int, v_grid: Sequence[float] = (0.0, 0.05, 0.1, 0.2)) -> dict:
    good = [u for u in runs if not u.degenerate]
    speeds = np.array([u.front[-1] / T for u in good])
    mean, se = stats.mean_se(speeds)
    z = 2.5758293035489004
    tails = {}
    for v in v_grid:
        k = int(np.sum(speeds < v))
        tails[v] = (k / max(len(good), 1), stats.wilson_ci(k, len(good)))
    return {
        "speed": mean,
        "se": se,
        "ci99": (mean - z * se, mean + z * se),
        "tails": tails,
        "degenerate": len(runs) - len(good),
        "dominated_all": all(u.dominated for u in good),
        "window_means": [float(u.window.mean()) for u in good],
    }


def monotonicity_coupling(rho_layers: Sequence[float], T: int, seed: int, replica: int = 0,
                          laziness: float = 0.0) -> np.ndarray:
    """Fronts (len(rho_layers), T+1) of systems using the first j+1 layers; shared particles share keys."""
    A = 2 * T + 64
    full = init_infection(rho_layers, A, seed, replica, laziness)
    inc = full.keys.steps(T)
    out = []
    for j in range(len(rho_layers)):
        sel = full.keys.layer <= j
        pos = full.positions[sel].copy()
        inf = full.infected[sel].copy()
        step = inc[sel]
        fr = np.full(T + 1, np.iinfo(np.int64).min, dtype=np.int64)
        for n in range(T + 1):
            if inf.any():
                fr[n] = pos[inf].max()
            if n == T:
                break
            inf = _spread(pos, inf)
            pos = pos + step[:, n]
        out.append(fr)
    return np.array(out)


def runs_to_csv(runs: Sequence[InfectionRun], dest, header_lines: Sequence[str] = (), every: int = 1):
    with open(dest, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write("replica,t,front,infectedCount\n")
        for u in runs:
            for t in range(0, len(u.front), every):
                fh.write(f"{u.replica},{t},{int(u.front[t])},{int(u.infected_count[t])}\n")
