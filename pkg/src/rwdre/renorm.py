"""Multiscale arithmetic and exact crossing events.

Scales L_{k+1} = floor(sqrt(L_k)) L_k are exact integers.  Everything
involving fractional powers is evaluated in interval arithmetic, and an
inequality flag is set only when it holds for the whole enclosure.

Crossing events are decided by an exact minimisation of the average of g
over all R-Lipschitz paths of a box, by dynamic programming over layers.
"""
from __future__ import annotations

import contextlib
import functools
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import mpmath
import numpy as np
from mpmath import iv
from scipy import stats as sps

from . import stats
from .environment import EnvConfig, generate

__all__ = [
    "scale_sequence",
    "ScaleTable",
    "build_scale_table",
    "check_ko_condition",
    "ko_scan",
    "BoxIndex",
    "box_geometry",
    "moves",
    "CrossingProblem",
    "CrossingResult",
    "min_chi_over_crossings",
    "brute_force_min_chi",
    "cascade_witness",
    "PkConfig",
    "crossing_problem_from_env",
    "estimate_pk",
    "union_bound",
    "recursion_constant",
    "density_control_experiment",
    "interpolation_check",
    "pk_rows_to_csv",
]

DPS = 40  # working digits; tables report 30


# ---------------------------------------------------------------------------
# scales


def scale_sequence(L0: int, k_top: int) -> list[int]:
    return list(_levels_and_roots(int(L0), k_top)[0])


@functools.lru_cache(maxsize=8)
def _levels_and_roots(L0: int, k_top: int):
    """(L_0..L_ktop, floor sqrt of each); the roots are the expensive part."""
    if L0 < 4:
        raise ValueError("L0 must be >= 4")
    levels, roots = [L0], []
    for k in range(k_top + 1):
        roots.append(math.isqrt(levels[-1]))
        if k < k_top:
            levels.append(roots[-1] * levels[-1])
    return tuple(levels), tuple(roots)


@contextlib.contextmanager
def _iv_prec():
    old = iv.dps
    iv.dps = DPS
    try:
        yield
    finally:
        iv.dps = old


def _iv(x):
    with _iv_prec():
        return iv.mpf(x)


def _neg_power(L: int, e: int):
    """Enclosure of L^(-1/e)."""
    with _iv_prec():
        return iv.exp(-iv.log(iv.mpf(L)) / e)


def _lo(x) -> mpmath.mpf:
    return mpmath.mpf(x.a)


def _hi(x) -> mpmath.mpf:
    return mpmath.mpf(x.b)


def _ge(a, b) -> bool:
    """a >= b certainly."""
    return bool(_lo(a) >= _hi(b))


@dataclass
class ScaleTable:
    L0: int
    k_hat: int
    direction: str
    levels: list[int]
    rho: list  # interval enclosures, index k - k_hat
    v: list
    iota: object
    v_inf: object
    flags: dict[str, bool]
    per_level: list[dict] = field(default_factory=list)

    @property
    def k_top(self) -> int:
        return len(self.levels) - 1

    def rows(self, digits: int = 30) -> list[dict]:
        out = []
        for j, k in enumerate(range(self.k_hat, self.k_top + 1)):
            out.append({
                "k": k,
                "L_k": format_int(self.levels[k]),
                "rho_k": _mid(self.rho[j], digits),
                "v_k": _mid(self.v[j], digits),
                **self.per_level[j],
            })
        return out

    def all_flags(self) -> bool:
        return all(self.flags.values())


def _mid(x, digits: int = 30) -> str:
    with mpmath.workdps(DPS):
        return mpmath.nstr((mpmath.mpf(x.a) + mpmath.mpf(x.b)) / 2, digits)


def format_int(n: int, max_digits: int = 60) -> str:
    s = str(n) if n.bit_length() < 4 * max_digits else None
    if s is not None and len(s) <= max_digits:
        return s
    with mpmath.workdps(20):
        lg = mpmath.log10(mpmath.mpf(n))
    digits = int(mpmath.floor(lg)) + 1
    mant = mpmath.power(10, lg - mpmath.floor(lg))
    return f"{mpmath.nstr(mant, 12)}e+{digits - 1}"


def _tail_sum(levels: list[int], start: int):
    """Enclosure of sum_{k >= start} L_k^(-1/16), extending the sequence until the tail is negligible.

    Levels past the given list are carried as enclosures of log L_k (no
    huge square roots).  Once consecutive terms shrink at least by half,
    the remainder after a term a is at most a, which is added to the upper end.
    """
    total = _iv(0)
    k = start
    with _iv_prec():
        logs = [iv.log(iv.mpf(L)) for L in levels[start:start + 2]]
        if not logs:
            logs = [_next_log(iv.log(iv.mpf(levels[-1])))]
            for _ in range(start - len(levels)):
                logs.append(_next_log(logs[-1]))
            logs = logs[-1:]
        while True:
            while len(logs) < 2:
                logs.append(_next_log(logs[-1]))
            a = iv.exp(-logs[0] / 16)
            b = iv.exp(-logs[1] / 16)
            total = total + a
            if _hi(b) <= _lo(a) / 2 and _hi(b) < _lo(total) * mpmath.mpf(10) ** (-DPS):
                return total + iv.mpf([0, b.b * 2])
            logs.pop(0)
            k += 1


def _next_log(lg):
    """log L_{k+1} from log L_k: 1.5 log L_k + log(floor(sqrt L_k) / sqrt L_k)."""
    corr = iv.log(1 - iv.exp(-lg / 2))
    return 1.5 * lg + iv.mpf([corr.a, 0])


def build_scale_table(L0: int, k_top: int, rho_hat=1, v_hat=1, direction: str = "nonincreasing",
                      k_hat: int = 0) -> ScaleTable:
    if direction not in ("nonincreasing", "nondecreasing"):
        raise ValueError("direction must be 'nonincreasing' or 'nondecreasing'")
    levels, roots = map(list, _levels_and_roots(int(L0), k_top))
    if not 0 <= k_hat <= k_top:
        raise ValueError("need 0 <= k_hat <= k_top")
    with _iv_prec():
        vh = iv.mpf(mpmath.mpf(v_hat)) if not isinstance(v_hat, str) else iv.mpf(v_hat)
        rh_ = iv.mpf(mpmath.mpf(rho_hat)) if not isinstance(rho_hat, str) else iv.mpf(rho_hat)
        floor_hat = _neg_power(levels[k_hat], 16)
        if _hi(vh) < _lo(floor_hat) or _lo(vh) > 1:
            raise ValueError("v_hat must lie in [L_khat^(-1/16), 1]")
        sign = 1 if direction == "nonincreasing" else -1
        rho = [rh_]
        v = [vh]
        per = []
        flags = {"L_exact": True, "lowerbound_Lk": True, "k2large": True, "k2large_chain": True,
                 "rho_floor": True, "v_floor": True, "iota_bound": True, "v_monotone": True}
        for k in range(k_hat, k_top + 1):
            Lk = levels[k]
            s = roots[k]
            sq = s * s
            is_root = sq <= Lk < sq + 2 * s + 1
            a16 = _neg_power(Lk, 16)
            a8 = _neg_power(Lk, 8)
            row = {"lowerbound": sq <= Lk and 4 * sq >= Lk}
            flags["lowerbound_Lk"] &= row["lowerbound"]
            if k < k_top:
                flags["L_exact"] &= is_root and levels[k + 1] == s * Lk
                ratio = iv.mpf(4) / s  # 4 L_k / L_{k+1}
                vk = v[-1]
                gap = vk * a16
                row["k2large"] = _ge(gap, ratio)
                row["chain"] = (not _ge(vk, a16)) or (_ge(gap, a8) and _ge(a8, ratio))
                flags["k2large"] &= row["k2large"]
                flags["k2large_chain"] &= row["chain"]
                v.append(vk * (1 - a16))
                rho.append(rho[-1] * (1 + sign * a16))
                flags["v_monotone"] &= bool(_hi(v[-1]) <= _lo(vk))
            row["rho_floor"] = _ge(rho[k - k_hat], a16)
            row["v_floor"] = _ge(v[k - k_hat], a16)
            flags["rho_floor"] &= row["rho_floor"]
            flags["v_floor"] &= row["v_floor"]
            per.append(row)
        tail = _tail_sum(levels, k_hat)
        iota = iv.exp(2 * tail)
        if direction == "nonincreasing":
            flags["iota_bound"] = all(_hi(r) <= _lo(iota * rh_) and _hi(rh_) <= _lo(r) for r in rho)
        else:
            flags["iota_bound"] = all(_lo(r) >= _hi(rh_ / iota) and _hi(r) <= _lo(rh_) for r in rho)
        # v_inf = v_hat prod (1 - a_k): the finite product times a tail factor in [1 - tail', 1]
        prod = vh
        for k in range(k_hat, k_top + 1):
            prod = prod * (1 - _neg_power(levels[k], 16))
        rest = _tail_sum(levels, k_top + 1)
        v_inf = prod * iv.mpf([1 - rest.b, 1])
        flags["v_inf_positive"] = bool(_lo(v_inf) > 0)
    return ScaleTable(L0, k_hat, direction, levels, rho, v, iota, v_inf, flags, per)


def log_scale(L0: int, k: int):
    """Enclosure of log L_k.

    Exact integers are used while they stay small; beyond that
    log L_{k+1} = 1.5 log L_k + log(floor(sqrt L_k) / sqrt L_k), and the last
    term lies in [log(1 - L_k^(-1/2)), 0].
    """
    L = int(L0)
    if L < 4:
        raise ValueError("L0 must be >= 4")
    j = 0
    while j < k and L.bit_length() < 8000:
        L = math.isqrt(L) * L
        j += 1
    with _iv_prec():
        lg = iv.log(iv.mpf(L))
        for _ in range(j, k):
            inv_sqrt = iv.exp(-lg / 2)
            lg = lg * iv.mpf(1.5) + iv.mpf([iv.log(1 - inv_sqrt).a, 0])
        return lg


def check_ko_condition(k: int, d: int, gamma, Co, co, L0) -> bool:
    """Whether C_o L_k^{2d+1} (e^{-(2-b)(log L_k)^gamma} + e^{-c_o L_k^{1/16} + b (log L_k)^{3/2}}) < 1, b = (3/2)^{3/2}.

    The answer is True only if the upper end of the enclosure is below 1.
    """
    gamma = mpmath.mpf(gamma)
    if not (1 < gamma <= 1.5):
        raise ValueError("gamma must lie in (1, 3/2]")
    if Co < 1 or co <= 0:
        raise ValueError("need Co >= 1 and co > 0")
    with _iv_prec():
        lg = log_scale(int(L0), k)
        b = iv.mpf(1.5) ** iv.mpf(1.5)
        t1 = -(2 - b) * iv.exp(iv.mpf(gamma) * iv.log(lg))
        t2 = -iv.mpf(co) * iv.exp(lg / 16) + b * iv.exp(iv.mpf(1.5) * iv.log(lg))
        hi = max(t1.b, t2.b)
        log_sum = iv.exp(t1 - hi) + iv.exp(t2 - hi)
        log_lhs = iv.log(iv.mpf(Co)) + (2 * d + 1) * lg + hi + iv.log(log_sum)
        return bool(log_lhs.b < 0)


def ko_scan(d: int, gamma, Co, co, L0, k_max: int = 30) -> list[bool]:
    return [check_ko_condition(k, d, gamma, Co, co, L0) for k in range(k_max + 1)]


# ---------------------------------------------------------------------------
# boxes and crossings


@dataclass(frozen=True)
class BoxIndex:
    k: int
    y: tuple[int, ...]  # (x_1..x_d, s)


def box_geometry(L: int, R: int, d: int):
    """Spatial range [-2RL, 3RL)^d, times [0, L), base [0, RL)^d, all relative to the box origin."""
    return {"lo": -2 * R * L, "hi": 3 * R * L, "t": (0, L), "base": (0, R * L)}


def moves(d: int, R: int) -> np.ndarray:
    """All z in Z^d with |z|_1 <= R, lexicographic."""
    rng = range(-R, R + 1)
    return np.array([z for z in itertools.product(rng, repeat=d) if sum(map(abs, z)) <= R], dtype=np.int64)


@dataclass
class CrossingProblem:
    """g over the box, array (L,) + (5RL,)^d indexed [t, x + 2RL]."""
    g: np.ndarray
    R: int = 1
    H: np.ndarray | None = None  # (L,) + (5RL,)^d + (n_moves,) admissible moves
    site_mask: np.ndarray | None = None  # (L,) + (5RL,)^d sites a path may visit
    start_mask: np.ndarray | None = None  # (5RL,)^d, defaults to the base

    def __post_init__(self):
        self.g = np.asarray(self.g)
        if self.g.dtype != object and (np.abs(self.g) > 1).any():
            raise ValueError("g must take values in [-1, 1]")

    @property
    def L(self) -> int:
        return self.g.shape[0]

    @property
    def dim(self) -> int:
        return self.g.ndim - 1

    @property
    def offset(self) -> int:
        return 2 * self.R * self.L

    def base_mask(self) -> np.ndarray:
        if self.start_mask is not None:
            return np.asarray(self.start_mask, dtype=bool)
        w = 5 * self.R * self.L
        m = np.zeros((w,) * self.dim, dtype=bool)
        sl = slice(self.offset, self.offset + self.R * self.L)
        m[(sl,) * self.dim] = True
        return m


@dataclass
class CrossingResult:
    feasible: bool
    total: float | None  # min of sum g
    L: int
    path: np.ndarray | None  # (L, d) coordinates relative to the box origin

    @property
    def chi(self):
        return None if self.total is None else self.total / self.L


def _shift(arr: np.ndarray, z: Sequence[int], fill) -> np.ndarray:
    """out[y] = arr[y - z], `fill` where y - z leaves the array."""
    out = np.full_like(arr, fill)
    src, dst = [], []
    for zi, n in zip(z, arr.shape):
        if zi >= 0:
            src.append(slice(0, n - zi))
            dst.append(slice(zi, n))
        else:
            src.append(slice(-zi, n))
            dst.append(slice(0, n + zi))
    out[tuple(dst)] = arr[tuple(src)]
    return out


def min_chi_over_crossings(problem: CrossingProblem) -> CrossingResult:
    """Exact min over admissible crossings of sum_t g(sigma(t), t), with a minimiser."""
    g = problem.g
    L, d = problem.L, problem.dim
    mv = moves(d, problem.R)
    inf = math.inf
    is_obj = g.dtype == object
    g = g if is_obj else g.astype(np.float64)
    start = problem.base_mask()
    if problem.site_mask is not None:
        start = start & problem.site_mask[0]
    D = np.where(start, g[0], inf)
    if is_obj:
        D = D.astype(object)
    choice = np.zeros((L,) + g.shape[1:], dtype=np.int16)
    for t in range(L - 1):
        cands = []
        for j, z in enumerate(mv):
            src = D
            if problem.H is not None:
                src = np.where(problem.H[t][..., j], D, inf)
            cands.append(_shift(src, z, inf))
        stack = np.stack(cands)
        if is_obj:
            best_j = np.zeros(stack.shape[1:], dtype=np.int16)
            best = stack[0].copy()
            for j in range(1, len(mv)):
                better = np.array([a < b for a, b in zip(stack[j].ravel(), best.ravel())]).reshape(best.shape)
                best = np.where(better, stack[j], best)
                best_j = np.where(better, j, best_j)
        else:
            best_j = np.argmin(stack, axis=0).astype(np.int16)
            best = np.take_along_axis(stack, best_j[None].astype(np.int64), axis=0)[0]
        choice[t + 1] = best_j
        reach = np.array([b != inf for b in best.ravel()]).reshape(best.shape) if is_obj else np.isfinite(best)
        if problem.site_mask is not None:
            reach &= problem.site_mask[t + 1]
        D = np.where(reach, best + g[t + 1], inf)
        if is_obj:
            D = D.astype(object)
    final = D
    if problem.H is not None:
        ok_last = problem.H[L - 1].any(axis=-1)
        final = np.where(ok_last, D, inf)
    flat = final.ravel()
    if is_obj:
        finite = [i for i, v in enumerate(flat) if v != inf]
        if not finite:
            return CrossingResult(False, None, L, None)
        best_i = min(finite, key=lambda i: flat[i])
    else:
        best_i = int(np.argmin(flat))
        if not np.isfinite(flat[best_i]):
            return CrossingResult(False, None, L, None)
    x = np.array(np.unravel_index(best_i, final.shape), dtype=np.int64)
    path = np.zeros((L, d), dtype=np.int64)
    path[L - 1] = x
    for t in range(L - 1, 0, -1):
        x = x - mv[choice[t][tuple(x)]]
        path[t - 1] = x
    return CrossingResult(True, flat[best_i], L, path - problem.offset)


def brute_force_min_chi(problem: CrossingProblem) -> CrossingResult:
    """Exhaustive enumeration over every start and move sequence (small boxes only)."""
    g = problem.g
    L, d = problem.L, problem.dim
    mv = moves(d, problem.R)
    starts = np.argwhere(problem.base_mask())
    best, best_path = None, None
    for x0 in starts:
        for seq in itertools.product(range(len(mv)), repeat=L - 1):
            x = x0.copy()
            pts = [x.copy()]
            ok = problem.site_mask is None or bool(problem.site_mask[0][tuple(x)])
            for t, j in enumerate(seq):
                if not ok:
                    break
                if problem.H is not None and not problem.H[t][tuple(x)][j]:
                    ok = False
                    break
                x = x + mv[j]
                if problem.site_mask is not None and not problem.site_mask[t + 1][tuple(x)]:
                    ok = False
                pts.append(x.copy())
            if not ok:
                continue
            if problem.H is not None and not problem.H[L - 1][tuple(x)].any():
                continue
            total = g[0][tuple(pts[0])]
            for t in range(1, L):
                total = total + g[t][tuple(pts[t])]
            if best is None or total < best:
                best, best_path = total, np.array(pts)
    if best is None:
        return CrossingResult(False, None, L, None)
    return CrossingResult(True, best, L, best_path - problem.offset)


def cascade_witness(problem: CrossingProblem, L_k: int, v_k, v_k1, k: int = 0) -> list[dict]:
    """Slices of the minimising crossing whose own average is below v_k.

    The box has duration L_{k+1}, a multiple of L_k.  When the minimum is
    below v_{k+1} and v_k - v_{k+1} >= 4 L_k / L_{k+1}, at least three slices
    qualify and two of them are at least two slabs apart.  Anything else is a
    bug and raises.
    """
    L1 = problem.L
    if L1 % L_k:
        raise ValueError("box duration must be a multiple of L_k")
    J = L1 // L_k
    if v_k > 1 or v_k - v_k1 < 4 * L_k / L1:
        raise ValueError("need v_k <= 1 and v_k - v_{k+1} >= 4 L_k / L_{k+1}")
    res = min_chi_over_crossings(problem)
    if not res.feasible or not res.chi < v_k1:
        return []
    path = res.path
    out = []
    for j in range(J):
        seg = path[j * L_k:(j + 1) * L_k]
        vals = [problem.g[j * L_k + i][tuple(seg[i] + problem.offset)] for i in range(L_k)]
        chi = sum(vals) / L_k
        if chi < v_k:
            x = np.floor_divide(seg[0], L_k)
            out.append({"slab": j, "index": BoxIndex(k, (*map(int, x), j)), "chi": chi})
    slabs = [w["slab"] for w in out]
    if len(out) < 3 or max(slabs) - min(slabs) < 2:
        raise AssertionError(f"cascade broken: witnesses {slabs} for chi {res.chi}")
    return out


# ---------------------------------------------------------------------------
# Monte Carlo events on environment windows


@dataclass(frozen=True)
class PkConfig:
    dim: int = 1
    rho: float = 1.0
    laziness: float = 0.5
    L: int = 16
    R: int = 1
    K: int = 1
    observable: str = "occupied"  # g = 1{N >= K}; "one" gives g = 1
    threshold: float = 1.0  # event {min chi < threshold}
    seed: int = 0


def _observable(cfg: PkConfig, counts: np.ndarray) -> np.ndarray:
    if cfg.observable == "one":
        return np.ones(counts.shape)
    if cfg.observable == "occupied":
        return (counts >= cfg.K).astype(np.float64)
    if cfg.observable == "signed":
        return np.where(counts >= cfg.K, 1.0, -1.0)
    raise ValueError(f"unknown observable {cfg.observable!r}")


def crossing_problem_from_env(cfg: PkConfig, replica: int, L: int | None = None) -> CrossingProblem:
    L = cfg.L if L is None else L
    R, d = cfg.R, cfg.dim
    if cfg.observable == "one":
        return CrossingProblem(np.ones((L,) + (5 * R * L,) * d), R)
    A = 3 * R * L
    env = generate(EnvConfig(dim=d, rho=cfg.rho, laziness=cfg.laziness, A=A, T=L - 1, T_past=0,
                             seed=cfg.seed, replica=replica), field_mode="auto")
    lo, hi = A - 2 * R * L, A + 3 * R * L
    counts = np.stack([env.field.slice(t)[(slice(lo, hi),) * d] for t in range(L)])
    return CrossingProblem(_observable(cfg, counts), R)


def _crossing_event(args):
    cfg, replica, L = args
    res = min_chi_over_crossings(crossing_problem_from_env(cfg, replica, L))
    return bool(res.feasible and res.chi < cfg.threshold)


def estimate_pk(cfg: PkConfig, replicas: Sequence[int], mapper: Callable = map, L: int | None = None):
    """Frequency of {some crossing has chi < threshold}; returns (phat, (lo, hi), hits)."""
    hits = list(mapper(_crossing_event, [(cfg, r, L) for r in replicas]))
    k = sum(hits)
    return k / len(hits), stats.wilson_ci(k, len(hits)), hits


def union_bound(rho: float, K: int, L: int, R: int = 1, d: int = 1) -> float:
    """(5RL)^d L P(Poisson(rho) < K), a bound for boxes where some site holds fewer than K particles."""
    return min(1.0, (5 * R * L) ** d * L * float(sps.poisson.cdf(K - 1, rho)))


def recursion_constant(p_k: float, p_k1: float, L_k: int, rho: float, d: int, co: float = 1.0) -> float:
    """Smallest C_o making p_{k+1} <= C_o L_k^{2d+1} (p_k^2 + exp(-c_o rho L_k^{1/8}))."""
    rhs = L_k ** (2 * d + 1) * (p_k ** 2 + math.exp(-co * rho * L_k ** 0.125))
    return max(1.0, p_k1 / rhs) if rhs > 0 else math.inf


def _density_event(args):
    cfg, replica, L, eps, v_half = args
    R, d = cfg.R, cfg.dim
    ell = L  # longest prefix examined
    A = R * ell
    env = generate(EnvConfig(dim=d, rho=cfg.rho, laziness=cfg.laziness, A=A, T=ell - 1, seed=cfg.seed,
                             replica=replica), field_mode="auto")
    counts = np.stack([env.field.slice(t) for t in range(ell)])
    g = (counts >= cfg.K).astype(np.float64) - (1 - eps)
    mv = moves(d, R)
    D = np.full(counts.shape[1:], math.inf)
    D[(A,) * d] = g[0][(A,) * d]
    mask = None
    if v_half is not None:
        xs = np.arange(-A, A + 1)
        x1 = np.broadcast_to(xs.reshape((-1,) + (1,) * (d - 1)), counts.shape[1:])
        # paths may not touch {x.e1 <= -L + v n}
        mask = [x1 > -L + v_half * t for t in range(ell)]
        D = np.where(mask[0], D, math.inf)
    first = -(-L // (2 * R))
    for t in range(ell):
        if t > 0:
            D = np.min(np.stack([_shift(D, z, math.inf) for z in mv]), axis=0) + g[t]
            if mask is not None:
                D = np.where(mask[t], D, math.inf)
        if t + 1 >= first and D.min() < 0:
            return True
    return False


def density_control_experiment(cfg: PkConfig, eps: float, Ls: Sequence[int], replicas: Sequence[int],
                               v: float | None = None, mapper: Callable = map) -> list[dict]:
    """P(some Lipschitz path from the origin and some L/(2R) <= l <= L has fewer than (1-eps) l occupied steps).

    With v given, only paths avoiding {x.e1 <= -L + v n} count.
    """
    out = []
    for L in Ls:
        if cfg.K == 0:
            hits = [False] * len(replicas)
        elif cfg.rho == 0:
            hits = [True] * len(replicas)
        else:
            hits = list(mapper(_density_event, [(cfg, r, L, eps, v) for r in replicas]))
        k = sum(hits)
        lo, hi = stats.wilson_ci(k, len(hits))
        out.append({"L": L, "rho": cfg.rho, "K": cfg.K, "eps": eps, "phat": k / len(hits), "ci_lo": lo,
                    "ci_hi": hi, "n": len(hits)})
    return out


def interpolation_check(cfg: PkConfig, L_lo: int, L_mid: int, L_hi: int, threshold: float,
                        replicas: Sequence[int], mapper: Callable = map) -> dict:
    """Failure frequency at an intermediate length against the two bracketing scales."""
    cfg = PkConfig(**{**cfg.__dict__, "threshold": threshold})
    freq = {}
    for L in (L_lo, L_mid, L_hi):
        p, ci, hits = estimate_pk(cfg, replicas, mapper, L=L)
        freq[L] = (p, math.sqrt(max(p * (1 - p), 1e-300) / len(hits)))
    bound = max(freq[L_lo][0], freq[L_hi][0]) + 3 * math.sqrt(
        freq[L_mid][1] ** 2 + max(freq[L_lo][1], freq[L_hi][1]) ** 2)
    return {"freq": freq, "bound": bound, "passed": freq[L_mid][0] <= bound}


def pk_rows_to_csv(rows: Sequence[dict], dest, header_lines: Sequence[str] = ()):
    with open(dest, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write("k,L_k,rho_k,v_k,phat,ci_lo,ci_hi\n")
        for r in rows:
            fh.write(f"{r['k']},{r['L_k']},{r['rho_k']},{r['v_k']},{r['phat']!r},{r['ci_lo']!r},{r['ci_hi']!r}\n")
