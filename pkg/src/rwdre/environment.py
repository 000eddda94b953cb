"""Poisson cloud of double-sided lazy random walks on a finite space-time window.

Particles start at every site of an enlarged box whose radius covers every
trajectory that can reach the requested window, so the occupation field is
exact inside the window.  Increments are keyed by (site, particle index,
block), which makes any particle's path recomputable on demand.
"""
from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Sequence

import numpy as np

from . import rand_hier as rh

__all__ = [
    "EnvConfig",
    "Environment",
    "Trajectory",
    "OccupationField",
    "ConeClass",
    "ResourceError",
    "RangeError",
    "generate",
    "from_positions",
    "forced",
    "classify_trajectory",
    "cone_membership",
    "cross_mask",
]


class ResourceError(MemoryError):
    def __init__(self, message: str, required_bytes: int):
        super().__init__(f"{message} (requires ~{required_bytes:,} bytes)")
        self.required_bytes = required_bytes


class RangeError(ValueError):
    pass


@dataclass(frozen=True)
class EnvConfig:
    dim: int = 1
    rho: float = 1.0
    laziness: float = 0.5
    A: int = 10
    T: int = 10
    T_past: int = 0
    seed: int = 0
    replica: int = 0
    memory_budget_mb: float = 2048.0

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if not (self.rho >= 0 and math.isfinite(self.rho)):
            raise ValueError("rho must be finite and >= 0")
        if not 0 <= self.laziness < 1:
            raise ValueError("laziness must lie in [0, 1)")
        if min(self.A, self.T, self.T_past) < 0:
            raise ValueError("A, T and T_past must be >= 0")

    @property
    def box_radius(self) -> int:
        return self.A + self.T + self.T_past

    @property
    def n_times(self) -> int:
        return self.T_past + self.T + 1


# ---------------------------------------------------------------------------
# increments


_MAX_HOLD_BITS = 8


def _bit_layout(dim: int, laziness: float):
    """(hold bits b, hold threshold m, direction bits) when laziness = m / 2^b exactly.

    Each step then reads b + log2(2d) raw bits: it holds when the low b bits
    are < m, otherwise the next bits pick one of the 2d directions.
    """
    n_dir = 2 * dim
    if n_dir & (n_dir - 1):
        return None
    dir_bits = n_dir.bit_length() - 1
    if laziness == 0.0:
        return 0, 0, dir_bits
    frac = Fraction(laziness)
    hold_bits = frac.denominator.bit_length() - 1
    if frac.denominator != 1 << hold_bits or hold_bits > _MAX_HOLD_BITS:
        return None
    return hold_bits, frac.numerator, dir_bits


def steps_per_block(dim: int, laziness: float) -> int:
    layout = _bit_layout(dim, laziness)
    return 4 if layout is None else 128 // (layout[0] + layout[2])


def increments(seed: int, replica: int, stream: rh.Stream, z: np.ndarray, idx: np.ndarray,
               n_steps: int, dim: int, laziness: float, first_block: int = 0, layer: int = 0) -> np.ndarray:
    """Lazy nearest-neighbour increments, shape (n, n_steps, dim), int8.

    Steps start at ``first_block * steps_per_block``; ``layer`` (stored in the
    key's time slot) separates superposed particle families at the same site.
    """
    n = len(idx)
    if n == 0 or n_steps == 0:
        return np.zeros((n, n_steps, dim), dtype=np.int8)
    layout = _bit_layout(dim, laziness)
    if layout is not None:
        bps = layout[0] + layout[2]
        per_block = 128 // bps
    else:
        per_block = 4
    n_blocks = -(-n_steps // per_block)
    zz = np.repeat(z, n_blocks, axis=0)
    ii = np.repeat(idx, n_blocks)
    bb = np.tile(np.arange(first_block, first_block + n_blocks), n)
    words = rh.random_words(seed, int(stream), replica, zz, layer, ii, bb)
    if layout is not None:
        raw = words.astype("<u4").view(np.uint8).reshape(n, n_blocks * 16)
        if 8 % bps == 0:
            table = _byte_table(dim, *layout)
            return table[raw].reshape(n, n_blocks * per_block, dim)[:, :n_steps]
        bits = np.unpackbits(raw.reshape(n, n_blocks, 16), axis=2, bitorder="little")[:, :, : per_block * bps]
        bits = bits.reshape(n, n_blocks * per_block, bps)[:, :n_steps]
        code = np.zeros((n, n_steps), dtype=np.int64)
        for m in range(bps):
            code |= bits[..., m].astype(np.int64) << m
        return _code_table(dim, *layout)[code]
    # general laziness: one 32-bit word per step
    u = words.reshape(n, n_blocks * 4)[:, :n_steps].astype(np.float64) / 4294967296.0
    hold = u < laziness
    direction = np.minimum(((u - laziness) / (1.0 - laziness) * (2 * dim)).astype(np.int64), 2 * dim - 1)
    direction[hold] = 2 * dim
    return _moves(dim, with_hold=True)[direction]


def _moves(dim: int, with_hold: bool = False) -> np.ndarray:
    """Row j < 2d is direction j (axis j // 2, sign + for even j); optional zero row."""
    m = np.zeros((2 * dim + int(with_hold), dim), dtype=np.int8)
    for j in range(2 * dim):
        m[j, j // 2] = 1 - 2 * (j % 2)
    return m


def _code_table(dim: int, hold_bits: int, hold_m: int, dir_bits: int) -> np.ndarray:
    codes = np.arange(1 << (hold_bits + dir_bits))
    out = _moves(dim)[codes >> hold_bits]
    hold = (codes & ((1 << hold_bits) - 1)) < hold_m
    out[hold] = 0
    return out


def _byte_table(dim: int, hold_bits: int, hold_m: int, dir_bits: int) -> np.ndarray:
    bps = hold_bits + dir_bits
    codes = _code_table(dim, hold_bits, hold_m, dir_bits)
    b = np.arange(256)
    cols = [(b >> (s * bps)) & ((1 << bps) - 1) for s in range(8 // bps)]
    return np.stack([codes[c] for c in cols], axis=1)  # (256, steps per byte, dim)


# ---------------------------------------------------------------------------
# occupation field


class OccupationField:
    """N(x, t) over the window [-A, A]^d x [-T_past, T].

    Three storage modes: a dense array when it fits the memory budget, a
    per-time sorted table of occupied sites, or ``lazy``, which keeps
    time-major particle positions and counts a site only when asked.
    """

    def __init__(self, dim: int, A: int, t_min: int, t_max: int, dense: np.ndarray | None = None,
                 sparse: dict[int, tuple[np.ndarray, np.ndarray]] | None = None,
                 lazy: np.ndarray | None = None):
        self.dim, self.A, self.t_min, self.t_max = dim, A, t_min, t_max
        self.width = 2 * A + 1
        self._dense = dense
        self._sparse = sparse
        self._lazy = lazy  # (n_times, n_particles, d)

    @property
    def mode(self) -> str:
        return "dense" if self._dense is not None else "sparse" if self._sparse is not None else "lazy"

    @property
    def is_dense(self) -> bool:
        return self._dense is not None

    def _site_code(self, x: np.ndarray) -> np.ndarray:
        code = np.zeros(x.shape[:-1], dtype=np.int64)
        for a in range(self.dim):
            code = code * self.width + (x[..., a] + self.A)
        return code

    def in_window(self, x, t) -> np.ndarray:
        x = np.asarray(x).reshape(-1, self.dim)
        t = np.asarray(t).reshape(-1)
        return (np.abs(x) <= self.A).all(axis=1) & (t >= self.t_min) & (t <= self.t_max)

    def count_at(self, x: Sequence[int], t: int) -> int:
        """Scalar lookup without window validation; callers check bounds."""
        if self._dense is not None:
            code = 0
            for c in x:
                code = code * self.width + c + self.A
            return int(self._dense[t - self.t_min, code])
        if self._lazy is not None:
            row = self._lazy[t - self.t_min]
            if self.dim == 1:
                return int(np.count_nonzero(row[:, 0] == x[0]))
            return int(np.count_nonzero((row == np.asarray(x, dtype=row.dtype)).all(axis=1)))
        sites, cnt = self._sparse.get(int(t), (np.empty(0, np.int64), np.empty(0, np.int64)))
        code = int(self._site_code(np.asarray(x, dtype=np.int64)))
        j = int(np.searchsorted(sites, code))
        return int(cnt[j]) if j < len(sites) and sites[j] == code else 0

    def counts(self, x, t) -> np.ndarray:
        x = np.asarray(x, dtype=np.int64).reshape(-1, self.dim)
        t = np.asarray(t, dtype=np.int64).reshape(-1)
        t = np.broadcast_to(t, (len(x),)) if t.size == 1 else t
        if not self.in_window(x, t).all():
            raise RangeError("occupation query outside the materialized window")
        if self._dense is not None:
            return self._dense[t - self.t_min, self._site_code(x)].astype(np.int64)
        return np.array([self.count_at(xi, int(ti)) for xi, ti in zip(x.tolist(), t.tolist())], dtype=np.int64)

    def at(self, x, t) -> int:
        return int(self.counts(np.asarray(x).reshape(1, -1), [t])[0])

    def slice(self, t: int) -> np.ndarray:
        """Dense d-dimensional array N(., t) (index x + A)."""
        shape = (self.width,) * self.dim
        if self._dense is not None:
            return self._dense[t - self.t_min].reshape(shape).astype(np.int64)
        size = self.width ** self.dim
        if self._lazy is not None:
            row = self._lazy[t - self.t_min].astype(np.int64)
            inside = (np.abs(row) <= self.A).all(axis=1)
            return np.bincount(self._site_code(row[inside]), minlength=size).reshape(shape)
        arr = np.zeros(size, dtype=np.int64)
        sites, cnt = self._sparse.get(int(t), (np.empty(0, np.int64), np.empty(0, np.int64)))
        arr[sites] = cnt
        return arr.reshape(shape)

    def total(self, t: int) -> int:
        return int(self.slice(t).sum())

    def rows(self) -> Iterator[tuple]:
        """(x..., t, N) rows in (t, x) lexicographic order, zeros included."""
        grid = list(itertools.product(range(-self.A, self.A + 1), repeat=self.dim))
        for t in range(self.t_min, self.t_max + 1):
            sl = self.slice(t).reshape(-1)
            for code, x in enumerate(grid):
                yield (*x, t, int(sl[code]))


# ---------------------------------------------------------------------------
# trajectories and cones


class ConeClass(enum.Enum):
    ANGLE = "Angle"
    INVERTED = "Inverted"
    CROSS = "Cross"
    NEITHER = "Neither"


@dataclass
class Trajectory:
    start: tuple[int, ...]
    index: int
    t_min: int
    positions: np.ndarray  # (n_times, d) for times t_min .. t_min + n_times - 1

    @property
    def t_max(self) -> int:
        return self.t_min + len(self.positions) - 1

    def at(self, t: int) -> np.ndarray:
        return self.positions[t - self.t_min]


def as_fraction(v) -> Fraction:
    """Slopes live as small-denominator rationals so cone tests are exact."""
    if isinstance(v, Fraction):
        return v
    return Fraction(v).limit_denominator(1000)


def cone_membership(times: np.ndarray, positions: np.ndarray, y: Sequence[int], vbar, R: int):
    """Elementwise membership of (positions[s], times[s]) in the forward cone and backward region of y.

    Forward: n >= 0, (x - x0).e1 >= vbar n, |x - x0|_1 <= R n.
    Backward: n <= 0, (x - x0).e1 < vbar n.
    """
    vb = as_fraction(vbar)
    p, q = vb.numerator, vb.denominator
    x0 = np.asarray(y[:-1], dtype=np.int64)
    n = np.asarray(times, dtype=np.int64) - int(y[-1])
    rel = np.asarray(positions, dtype=np.int64).reshape(len(n), -1) - x0
    lhs = q * rel[:, 0]
    fwd = (n >= 0) & (lhs >= p * n) & (np.abs(rel).sum(axis=1) <= R * n)
    bwd = (n <= 0) & (lhs < p * n)
    return fwd, bwd


def classify_trajectory(w: Trajectory, y: Sequence[int], vbar, R: int, T_c: int | None = None):
    """Classify w against the cones at y; returns (ConeClass, truncated)."""
    times = np.arange(w.t_min, w.t_max + 1)
    fwd, bwd = cone_membership(times, w.positions, y, vbar, R)
    a, b = bool(fwd.any()), bool(bwd.any())
    cls = ConeClass.CROSS if a and b else ConeClass.ANGLE if a else ConeClass.INVERTED if b else ConeClass.NEITHER
    horizon = T_c if T_c is not None else 0
    truncated = (w.t_max - y[-1] < horizon) or (y[-1] - w.t_min < horizon) or y[-1] > w.t_max or y[-1] < w.t_min
    return cls, bool(truncated)


def cross_mask(pos: np.ndarray, t_min: int, queries: np.ndarray, vbar, R: int) -> np.ndarray:
    """Bool (n, Q): trajectory j meets both the backward region and the forward cone of query k.

    A prefix-min / suffix-max screen on q x.e1 - p t picks candidates (v = p/q);
    candidates are then checked exactly against the full forward cone.
    """
    vb = as_fraction(vbar)
    p, q = vb.numerator, vb.denominator
    n_times = pos.shape[1]
    times = np.arange(t_min, t_min + n_times, dtype=np.int64)
    t0 = queries[:, -1]
    t0i = t0 - t_min
    c = q * queries[:, 0] - p * t0
    f = q * pos[:, :, 0].astype(np.int64) - p * times
    pmin = np.minimum.accumulate(f, axis=1)
    smax = np.maximum.accumulate(f[:, ::-1], axis=1)[:, ::-1]
    cand = (pmin[:, t0i] < c) & (smax[:, t0i] >= c)
    mask = np.zeros_like(cand)
    rows, cols = np.nonzero(cand)
    if len(rows):
        order = np.argsort(cols, kind="stable")
        rows, cols = rows[order], cols[order]
        cuts = np.flatnonzero(np.diff(cols)) + 1
        for grp_r, grp_c in zip(np.split(rows, cuts), np.split(cols, cuts)):
            k = grp_c[0]
            seg = pos[grp_r, t0i[k]:, :].astype(np.int64) - queries[k, :-1]
            n = times[t0i[k]:] - t0[k]
            ok = (q * seg[:, :, 0] >= p * n) & (np.abs(seg).sum(axis=2) <= R * n)
            mask[grp_r, k] = ok.any(axis=1)
    return mask


# ---------------------------------------------------------------------------
# environment


class Environment:
    """A realized window: particle keys, occupation field, keyed uniforms."""

    def __init__(self, config: EnvConfig, sites: np.ndarray, counts: np.ndarray):
        self.config = config
        self.dim = config.dim
        self.z = np.repeat(sites, counts, axis=0).astype(np.int64)
        self.idx = (np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)).astype(np.int64)
        self.t_min = -config.T_past
        self.t_max = config.T
        self.field: OccupationField | None = None
        self._positions: np.ndarray | None = None
        self._time_major: np.ndarray | None = None
        budget = int(config.memory_budget_mb * 2 ** 20)
        bound = config.box_radius + max(config.T, config.T_past)
        self._pos_dtype = np.int16 if bound < 2 ** 15 else np.int32
        self._cache_bytes = self.n_particles * config.n_times * self.dim * np.dtype(self._pos_dtype).itemsize
        self._cache_ok = self._cache_bytes <= budget // 2

    @property
    def n_particles(self) -> int:
        return len(self.idx)

    # -- trajectories -------------------------------------------------------

    def _positions_for(self, sel: np.ndarray) -> np.ndarray:
        cfg = self.config
        z, idx = self.z[sel], self.idx[sel]
        fut = increments(cfg.seed, cfg.replica, rh.Stream.TRAJ_FUTURE, z, idx, cfg.T, self.dim, cfg.laziness)
        out = np.empty((len(idx), cfg.n_times, self.dim), dtype=self._pos_dtype)
        start = z.astype(self._pos_dtype)
        out[:, cfg.T_past] = start
        if cfg.T:
            out[:, cfg.T_past + 1:] = start[:, None, :] + np.cumsum(fut, axis=1, dtype=self._pos_dtype)
        if cfg.T_past:
            past = increments(cfg.seed, cfg.replica, rh.Stream.TRAJ_PAST, z, idx, cfg.T_past, self.dim, cfg.laziness)
            back = start[:, None, :] + np.cumsum(past, axis=1, dtype=self._pos_dtype)
            out[:, : cfg.T_past] = back[:, ::-1]
        return out

    def positions(self, sel=None) -> np.ndarray:
        """Positions (n_sel, n_times, d) over times t_min..t_max."""
        if sel is None:
            sel = np.arange(self.n_particles)
        sel = np.asarray(sel)
        if self._positions is not None:
            return self._positions[sel]
        if self._time_major is not None:
            return self._time_major[:, sel].transpose(1, 0, 2)
        return self._positions_for(sel)

    def iter_chunks(self, chunk: int = 4096) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        for lo in range(0, self.n_particles, chunk):
            sel = np.arange(lo, min(lo + chunk, self.n_particles))
            yield sel, self.positions(sel)

    def trajectory(self, j: int) -> Trajectory:
        return Trajectory(tuple(int(c) for c in self.z[j]), int(self.idx[j]), self.t_min,
                          self.positions(np.array([j]))[0].astype(np.int64))

    def trajectories(self) -> "TrajectoryList":
        return TrajectoryList(self)

    # -- fields ---------------------------------------------------------------

    def occupation(self, x, t) -> np.ndarray:
        return self.field.counts(x, t)

    def in_window(self, x, t) -> np.ndarray:
        return self.field.in_window(x, t)

    def uniforms_at(self, x, t) -> np.ndarray:
        x = np.asarray(x, dtype=np.int64).reshape(-1, self.dim)
        t = np.asarray(t, dtype=np.int64).reshape(-1)
        if not self.in_window(x, t).all():
            raise RangeError("uniform field query outside the window")
        return rh.uniforms(self.config.seed, int(rh.Stream.UNIFORM_FIELD), self.config.replica, x, t)

    def uniform_at(self, y: Sequence[int]) -> float:
        return float(self.uniforms_at(np.array(y[:-1]), [y[-1]])[0])

    def uniform_key(self, y: Sequence[int]) -> rh.RandomKey:
        return rh.RandomKey(rh.Stream.UNIFORM_FIELD, self.config.replica, tuple(int(c) for c in y[:-1]), int(y[-1]))

    # -- cones ------------------------------------------------------------------

    def iter_cross_masks(self, queries: np.ndarray, vbar, R: int, chunk: int = 2048):
        """Yield (particle indices, bool mask (n_chunk, Q)) of Cross membership at each query."""
        queries = np.asarray(queries, dtype=np.int64).reshape(-1, self.dim + 1)
        t0 = queries[:, -1]
        if ((t0 < self.t_min) | (t0 > self.t_max)).any():
            raise RangeError("cone query time outside the materialized horizon")
        for sel, pos in self.iter_chunks(chunk):
            yield sel, cross_mask(pos, self.t_min, queries, vbar, R)

    def cross_counts(self, queries, vbar, R: int) -> np.ndarray:
        queries = np.asarray(queries, dtype=np.int64).reshape(-1, self.dim + 1)
        total = np.zeros(len(queries), dtype=np.int64)
        for _, mask in self.iter_cross_masks(queries, vbar, R):
            total += mask.sum(axis=0)
        return total


class TrajectoryList(Sequence):
    """Lazily materialized view of every particle's trajectory."""

    def __init__(self, env: Environment):
        self._env = env

    def __len__(self):
        return self._env.n_particles

    def __getitem__(self, j):
        if isinstance(j, slice):
            return [self._env.trajectory(k) for k in range(*j.indices(len(self)))]
        if j < 0:
            j += len(self)
        if not 0 <= j < len(self):
            raise IndexError(j)
        return self._env.trajectory(j)


def _box_sites(dim: int, radius: int) -> np.ndarray:
    axis = np.arange(-radius, radius + 1, dtype=np.int64)
    grids = np.meshgrid(*([axis] * dim), indexing="ij")
    return np.stack([g.reshape(-1) for g in grids], axis=1)


def estimate_bytes(config: EnvConfig) -> dict[str, int]:
    cells = (2 * config.A + 1) ** config.dim * config.n_times
    sites = (2 * config.box_radius + 1) ** config.dim
    particles = config.rho * sites
    return {
        "dense_field": cells * 4,
        "sparse_field": int(particles * config.n_times * 16),
        "particles": int(particles * 16),
    }


def generate(config: EnvConfig, chunk: int = 4096, field_mode: str = "auto") -> Environment:
    """Materialize the window; the result exposes ``trajectories()`` and ``field``.

    ``field_mode`` is "auto" (dense if it fits, else sparse) or "lazy"
    (time-major positions, counted on demand; fastest for a single walker).
    """
    budget = int(config.memory_budget_mb * 2 ** 20)
    est = estimate_bytes(config)
    if est["particles"] > budget:
        raise ResourceError("particle table exceeds the memory budget", est["particles"])
    sites = _box_sites(config.dim, config.box_radius)
    counts = rh.poissons(config.seed, config.rho, int(rh.Stream.INITIAL_COUNT), config.replica, sites)
    env = Environment(config, sites, counts)
    if field_mode == "lazy":
        return _generate_lazy(env, chunk, budget)
    if field_mode != "auto":
        raise ValueError(f"unknown field mode {field_mode!r}")
    use_dense = est["dense_field"] <= budget // 2
    if not use_dense and est["sparse_field"] > budget // 2:
        raise ResourceError("occupation field exceeds the memory budget", min(est["dense_field"], est["sparse_field"]))
    cache = np.empty((env.n_particles, config.n_times, config.dim), dtype=env._pos_dtype) if env._cache_ok else None

    def chunks():
        for lo in range(0, env.n_particles, chunk):
            sel = np.arange(lo, min(lo + chunk, env.n_particles))
            pos = env._positions_for(sel)
            if cache is not None:
                cache[sel] = pos
            yield pos

    env.field = _accumulate_field(config, env.t_min, chunks(), use_dense)
    env._positions = cache
    return env


def _generate_lazy(env: Environment, chunk: int, budget: int) -> Environment:
    cfg = env.config
    need = env.n_particles * cfg.n_times * cfg.dim * np.dtype(env._pos_dtype).itemsize
    if need > budget:
        raise ResourceError("time-major position table exceeds the memory budget", need)
    tm = np.empty((cfg.n_times, env.n_particles, cfg.dim), dtype=env._pos_dtype)
    for lo in range(0, env.n_particles, chunk):
        sel = np.arange(lo, min(lo + chunk, env.n_particles))
        tm[:, sel] = env._positions_for(sel).transpose(1, 0, 2)
    env._time_major = tm
    env.field = OccupationField(cfg.dim, cfg.A, env.t_min, env.t_max, lazy=tm)
    return env


def _accumulate_field(config: EnvConfig, t_min: int, chunks, use_dense: bool) -> OccupationField:
    width = 2 * config.A + 1
    per_time = width ** config.dim
    n_cells = per_time * config.n_times
    itype = np.int32 if n_cells < 2 ** 31 else np.int64
    dense = np.zeros(n_cells, dtype=np.int32) if use_dense else None
    sparse_parts: list[np.ndarray] = []
    tcol = (np.arange(config.n_times) * per_time).astype(itype)
    for pos in chunks:
        inside = np.abs(pos[:, :, 0]) <= config.A
        code = pos[:, :, 0].astype(itype) + config.A
        for a in range(1, config.dim):
            inside &= np.abs(pos[:, :, a]) <= config.A
            code = code * width + (pos[:, :, a].astype(itype) + config.A)
        code += tcol
        flat = code[inside]
        if use_dense:
            dense += np.bincount(flat, minlength=n_cells).astype(np.int32)
        else:
            sparse_parts.append(flat.astype(np.int64))
    t_max = t_min + config.n_times - 1
    if use_dense:
        return OccupationField(config.dim, config.A, t_min, t_max, dense=dense.reshape(config.n_times, per_time))
    allflat = np.concatenate(sparse_parts) if sparse_parts else np.empty(0, np.int64)
    uniq, cnt = np.unique(allflat, return_counts=True)
    tidx = uniq // per_time
    table = {}
    for ti in np.unique(tidx):
        m = tidx == ti
        table[int(ti) + t_min] = (uniq[m] % per_time, cnt[m])
    return OccupationField(config.dim, config.A, t_min, t_max, sparse=table)


def from_positions(config: EnvConfig, positions: np.ndarray) -> Environment:
    """Environment over explicit trajectories (n, n_times, d) covering times -T_past..T.

    Used for hand-built configurations; uniforms stay keyed by (seed, replica).
    """
    positions = np.asarray(positions, dtype=np.int64)
    if positions.ndim == 2:
        positions = positions[:, :, None]
    n, n_times, dim = positions.shape
    if dim != config.dim or n_times != config.n_times:
        raise ValueError("positions shape does not match the config horizon")
    if n and np.abs(np.diff(positions, axis=1)).sum(axis=2).max(initial=0) > 1:
        raise ValueError("trajectory increments must have l1 size <= 1")
    sites = positions[:, config.T_past, :]
    env = Environment(config, sites, np.ones(n, dtype=np.int64))
    env._positions = positions.astype(np.int32)
    env.field = _accumulate_field(config, env.t_min, [positions] if n else [], True)
    return env


def forced(config: EnvConfig, counts: dict) -> Environment:
    """Environment whose initial counts are given explicitly (all other sites empty).

    Particles keep their keyed increments, so only the initial configuration is forced.
    """
    sites = np.array([list(k) if isinstance(k, tuple) else [k] for k in counts], dtype=np.int64).reshape(-1, config.dim)
    cnt = np.array(list(counts.values()), dtype=np.int64)
    env = Environment(config, sites, cnt)
    env._positions = env._positions_for(np.arange(env.n_particles)) if env.n_particles else np.zeros(
        (0, config.n_times, config.dim), dtype=env._pos_dtype)
    env.field = _accumulate_field(config, env.t_min, [env._positions], True)
    return env


def field_to_csv(fld: OccupationField, path, header_lines: Sequence[str] = ()):
    names = [f"x{a + 1}" for a in range(fld.dim)] if fld.dim > 1 else ["x"]
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write(",".join(names + ["t", "N"]) + "\n")
        for row in fld.rows():
            fh.write(",".join(str(v) for v in row) + "\n")
