"""Soft local times, lattice heat kernels, pavings and the walker/Poisson coupling."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats as sps

from . import rand_hier as rh

__all__ = [
    "HeatKernel",
    "heat_kernel",
    "exact_heat_kernel_1d",
    "SLTState",
    "NeedMorePoints",
    "soft_local_times",
    "keyed_soft_local_times",
    "poisson_points",
    "paving_sparse_check",
    "integration_bound",
    "CouplingResult",
    "couple_srw_poisson",
    "coupling_bound",
    "sparse_starts",
]

_CEILING_TAIL = 1e-9


# ---------------------------------------------------------------------------
# heat kernel


@dataclass
class HeatKernel:
    dim: int
    laziness: float
    n_max: int
    table: np.ndarray  # (n_max + 1,) + (2 n_max + 1,) * d, index x + n_max

    def p(self, n: int, x) -> np.ndarray:
        """p_n(0, x) for x of shape (k, d); zero outside the reachable box."""
        x = np.asarray(x, dtype=np.int64).reshape(-1, self.dim)
        out = np.zeros(len(x))
        inside = (np.abs(x) <= self.n_max).all(axis=1)
        idx = tuple((x[inside] + self.n_max).T)
        out[inside] = self.table[n][idx]
        return out

    def row(self, n: int) -> np.ndarray:
        return self.table[n]

    def sup(self, n: int) -> float:
        return float(self.table[n].max())

    def fitted_constants(self, n_min: int = 1) -> dict:
        d = self.dim
        ns = np.arange(max(1, n_min), self.n_max + 1)
        c_sup = max(n ** (d / 2) * self.table[n].max() for n in ns)
        c_lip = 0.0
        for n in ns:
            diffs = max(np.abs(np.diff(self.table[n], axis=a)).max() for a in range(d))
            c_lip = max(c_lip, n ** ((d + 1) / 2) * diffs)
        grid = np.stack(np.meshgrid(*[np.arange(-self.n_max, self.n_max + 1)] * d, indexing="ij"), axis=-1)
        radius = np.sqrt((grid.astype(float) ** 2).sum(axis=-1))
        tail = {}
        for n in ns[ns >= 2]:
            tail[int(n)] = float(self.table[n][radius > math.sqrt(n) * math.log(n)].sum())
        return {"C_sup": float(c_sup), "C_lip": float(c_lip), "tail": tail}


def heat_kernel(d: int, laziness: float, n_max: int, memory_budget_mb: float = 1024.0) -> HeatKernel:
    """p_n(0, .) for n <= n_max by repeated convolution with the one-step law."""
    width = 2 * n_max + 1
    need = (n_max + 1) * width ** d * 8
    if need > memory_budget_mb * 2 ** 20:
        from .environment import ResourceError
        raise ResourceError("heat-kernel table exceeds the memory budget", need)
    table = np.zeros((n_max + 1,) + (width,) * d)
    origin = (n_max,) * d
    table[0][origin] = 1.0
    move = (1.0 - laziness) / (2 * d)
    for n in range(n_max):
        cur = table[n]
        nxt = laziness * cur
        for a in range(d):
            lo = [slice(None)] * d
            hi = [slice(None)] * d
            lo[a], hi[a] = slice(1, None), slice(None, -1)
            shifted = np.zeros_like(cur)
            shifted[tuple(lo)] = cur[tuple(hi)]  # mass moving +e_a
            nxt = nxt + move * shifted
            shifted = np.zeros_like(cur)
            shifted[tuple(hi)] = cur[tuple(lo)]  # mass moving -e_a
            nxt = nxt + move * shifted
        table[n + 1] = nxt
    return HeatKernel(d, laziness, n_max, table)


def exact_heat_kernel_1d(n: int, x: int, laziness) -> "Fraction":
    """Exact p_n(0, x) in d = 1 by counting moves: k of the n steps move, (k + x)/2 of them to the right."""
    from fractions import Fraction

    lz = Fraction(laziness)
    total = Fraction(0)
    for k in range(abs(x), n + 1):
        if (k + x) % 2:
            continue
        total += math.comb(n, k) * lz ** (n - k) * (1 - lz) ** k * Fraction(math.comb(k, (k + x) // 2), 2 ** k)
    return total


# ---------------------------------------------------------------------------
# soft local times


class NeedMorePoints(RuntimeError):
    pass


@dataclass
class SLTState:
    g: np.ndarray  # (J, S) densities w.r.t. mu
    mu: np.ndarray  # (S,)
    point_site: np.ndarray  # (P,)
    point_v: np.ndarray  # (P,)
    xi: np.ndarray  # (J,)
    G: np.ndarray  # (S,) final soft local time
    matched: np.ndarray  # (J,) point index matched at step j
    ceiling: float = math.inf

    @property
    def Z(self) -> np.ndarray:
        """Site index of the j-th sample."""
        return self.point_site[self.matched]

    def G_after(self, k: int) -> np.ndarray:
        return (self.xi[:k, None] * self.g[:k]).sum(axis=0)

    def covered_count(self, k: int, t: float) -> int:
        """#points with t g_k(z_i) + G_{k-1}(z_i) >= v_i (k is 1-based)."""
        Gp = self.G_after(k - 1)
        s = self.point_site
        return int(np.count_nonzero(t * self.g[k - 1][s] + Gp[s] >= self.point_v))


def soft_local_times(g, point_site, point_v, mu=None) -> SLTState:
    """xi_k = inf{t : t g_k(z_i) + G_{k-1}(z_i) >= v_i for at least k points}.

    Raises NeedMorePoints when the supplied points cannot reach k coverings.
    """
    g = np.atleast_2d(np.asarray(g, dtype=float))
    J, S = g.shape
    mu = np.ones(S) if mu is None else np.asarray(mu, dtype=float)
    site = np.asarray(point_site, dtype=np.int64)
    v = np.asarray(point_v, dtype=float)
    G = np.zeros(S)
    covered = np.zeros(len(v), dtype=bool)
    xi = np.zeros(J)
    matched = np.full(J, -1, dtype=np.int64)
    for k in range(J):
        gk = g[k][site]
        need = (k + 1) - int(covered.sum())
        live = np.flatnonzero(~covered & (gk > 0))
        if need <= 0:
            xi[k] = 0.0
            continue
        if len(live) < need:
            raise NeedMorePoints(f"step {k + 1}: {len(live)} reachable points for {need} coverings")
        t = (v[live] - G[site[live]]) / gk[live]
        order = np.argsort(t, kind="stable")[:need]
        xi[k] = t[order[-1]]
        hit = live[order]
        covered[hit] = True
        matched[k] = hit[0] if need == 1 else hit[-1]
        G += xi[k] * g[k]
        # points reached exactly at xi_k by float ties are covered too
        covered |= G[site] >= v
    return SLTState(g, mu, site, v, xi, G, matched)


def poisson_points(seed: int, replica: int, sites: np.ndarray, ceiling: float, mu=None, batch: int | None = None):
    """Keyed Poisson points of intensity mu(z) dv on sites x [0, ceiling).

    Heights at a site are partial sums of keyed exponential gaps, so raising
    the ceiling only appends points.
    """
    sites = np.asarray(sites, dtype=np.int64).reshape(len(sites), -1)
    S = len(sites)
    mu = np.ones(S) if mu is None else np.asarray(mu, dtype=float)
    batch = batch or int(ceiling * mu.max() + 6 * math.sqrt(ceiling * mu.max() + 1) + 8)
    heights = np.zeros((S, 0))
    top = np.zeros(S)
    active = np.arange(S)
    m0 = 0
    while len(active):
        m = np.arange(m0, m0 + batch)
        xs = np.repeat(sites[active], batch, axis=0)
        ii = np.tile(m, len(active))
        gaps = rh.exponentials(seed, int(rh.Stream.SLT_POINTS), replica, xs, 0, ii).reshape(len(active), batch)
        gaps = gaps / mu[active, None]
        block = np.full((S, batch), np.inf)
        block[active] = top[active, None] + np.cumsum(gaps, axis=1)
        top[active] = block[active, -1]
        heights = np.concatenate([heights, block], axis=1)
        active = active[top[active] < ceiling]
        m0 += batch
    s_idx, col = np.nonzero(heights < ceiling)
    v = heights[s_idx, col]
    order = np.argsort(v, kind="stable")
    return s_idx[order], v[order]


def _initial_ceiling(g: np.ndarray) -> float:
    J = g.shape[0]
    if J == 0:
        return 0.0
    return float(sps.gamma.isf(_CEILING_TAIL, J) * g.max())


def keyed_soft_local_times(g, sites, seed: int, replica: int, mu=None, min_ceiling: float = 0.0) -> SLTState:
    """Soft local times against keyed points, raising the ceiling until it is provably sufficient.

    Points above V never bind once max G_J < V, so the result equals the
    untruncated construction.
    """
    g = np.atleast_2d(np.asarray(g, dtype=float))
    V = max(_initial_ceiling(g), float(min_ceiling), 1e-12)
    while True:
        site, v = poisson_points(seed, replica, sites, V, mu)
        try:
            st = soft_local_times(g, site, v, mu)
        except NeedMorePoints:
            V *= 2
            continue
        if st.G.max(initial=0.0) < V:
            st.ceiling = V
            return st
        V *= 2


# ---------------------------------------------------------------------------
# pavings and the integration bound


def _cells(points: np.ndarray, L: int) -> dict:
    pts = np.asarray(points, dtype=np.int64)
    if pts.ndim == 1:
        pts = pts[:, None]
    cells, counts = np.unique(np.floor_divide(pts, L), axis=0, return_counts=True)
    return {tuple(c): int(k) for c, k in zip(cells, counts)}


def paving_sparse_check(points, L: int, rho: float) -> bool:
    """Every cell of the aligned L-paving holds at most rho L^d points."""
    if L < 1:
        raise ValueError("L must be >= 1")
    pts = np.asarray(points, dtype=np.int64)
    if pts.size == 0:
        return True
    d = 1 if pts.ndim == 1 else pts.shape[1]
    return max(_cells(pts, L).values()) <= rho * L ** d


def integration_bound(points, L: int, rho: float, n: int, hk: HeatKernel, c: float | None = None):
    """(lhs, rhs, ratio, c_min) for sum_j p_n(0, x_j) <= rho (1 + c L (log n)^d / sqrt n)."""
    pts = np.asarray(points, dtype=np.int64).reshape(-1, hk.dim)
    if not paving_sparse_check(pts, L, rho):
        raise ValueError("points are not rho-sparse for the L-paving")
    if n < L:
        raise ValueError("need n >= L")
    lhs = float(hk.p(n, pts).sum())
    scale = L * math.log(n) ** hk.dim / math.sqrt(n)
    c_min = max(0.0, (lhs / rho - 1.0) / scale) if scale > 0 else 0.0
    c = c_min if c is None else c
    rhs = rho * (1 + c * scale)
    return lhs, rhs, lhs / rhs if rhs else math.inf, c_min


# ---------------------------------------------------------------------------
# coupling of walkers with a Poisson cloud


def sparse_starts(L: int, rho: float, cells: int, dim: int = 1) -> np.ndarray:
    """floor(rho L^d) points per cell, spread evenly, over a cube of cells^d paving cells."""
    per = int(math.floor(rho * L ** dim))
    out = []
    for cell in itertools.product(range(cells), repeat=dim):
        base = np.array(cell) * L
        offs = list(itertools.product(range(L), repeat=dim))
        step = max(1, len(offs) // max(per, 1))
        for j in range(per):
            out.append(base + np.array(offs[(j * step) % len(offs)]))
    return np.array(out, dtype=np.int64).reshape(-1, dim)


def coupling_bound(H_size: int, rho: float, rho_prime: float, L: int, n: int, d: int, c: float) -> float:
    return 1.0 - H_size * math.exp(-(rho_prime - rho) * L + c * rho * L ** 2 * math.log(n) ** d / math.sqrt(n))


@dataclass
class CouplingResult:
    rho_primes: list[float]
    dominated: np.ndarray  # (replicas, len(rho_primes)) bool
    supG: np.ndarray  # (replicas,)
    replicas: list[int]
    H_size: int

    def frequency(self) -> np.ndarray:
        return self.dominated.mean(axis=0)


def couple_srw_poisson(starts, L: int, rho: float, rho_primes: Sequence[float], n: int, hk: HeatKernel,
                       replicas: Sequence[int], seed: int, H=None) -> CouplingResult:
    """Soft-local-time coupling of walkers at time n with Poisson(rho') clouds.

    Sample j is the site of the j-th matched point, which has law p_n(x_j, .).
    Domination on H means every site of H holds at most as many samples as
    points with height < rho'.  It is asserted whenever sup_H G_J <= rho'.
    """
    starts = np.asarray(starts, dtype=np.int64).reshape(-1, hk.dim)
    if max(rho_primes) < rho:
        raise ValueError("rho' must be >= rho")
    if not paving_sparse_check(starts, L, rho):
        raise ValueError("starts are not rho-sparse")
    d = hk.dim
    J = len(starts)
    if J:
        lo, hi = starts.min(axis=0) - n, starts.max(axis=0) + n
    else:
        lo, hi = np.zeros(d, np.int64), np.zeros(d, np.int64)
    grid = np.stack(np.meshgrid(*[np.arange(a, b + 1) for a, b in zip(lo, hi)], indexing="ij"), axis=-1).reshape(-1, d)
    g = np.array([hk.p(n, grid - x) for x in starts]).reshape(J, len(grid))
    if H is None:
        inH = np.ones(len(grid), dtype=bool) if not J else (
            (grid >= starts.min(axis=0)) & (grid <= starts.max(axis=0))).all(axis=1)
    else:
        Hs = {tuple(h) for h in np.asarray(H, dtype=np.int64).reshape(-1, d)}
        inH = np.array([tuple(z) in Hs for z in grid])
    rps = list(rho_primes)
    dom = np.zeros((len(replicas), len(rps)), dtype=bool)
    supG = np.zeros(len(replicas))
    for r_i, rep in enumerate(replicas):
        if J == 0:
            dom[r_i] = True
            continue
        st = keyed_soft_local_times(g, grid, seed, rep, min_ceiling=max(rps) * 1.0000001)
        sample_counts = np.bincount(st.Z, minlength=len(grid))
        supG[r_i] = st.G[inH].max(initial=0.0)
        for k, rp in enumerate(rps):
            cloud = np.bincount(st.point_site[st.point_v < rp], minlength=len(grid))
            ok = bool((sample_counts[inH] <= cloud[inH]).all())
            if supG[r_i] <= rp and not ok:
                raise AssertionError(f"domination violated with sup G = {supG[r_i]} <= {rp} (replica {rep})")
            dom[r_i, k] = ok
    return CouplingResult(rps, dom, supG, list(replicas), int(inH.sum()))
