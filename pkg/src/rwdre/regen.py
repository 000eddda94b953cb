"""Regeneration times, blocks and the block estimators of velocity and covariance."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import stats
from .environment import Environment, as_fraction
from .walker import WalkerPath, default_vbar, record_times

__all__ = [
    "RegenConfig",
    "RegenBlock",
    "RegenResult",
    "find_regeneration",
    "velocity_estimate",
    "covariance_estimate",
    "iid_diagnostics",
    "standardized_batch_sums",
    "influence_field",
    "blocks_to_csv",
]


@dataclass(frozen=True)
class RegenConfig:
    v_star: float
    T_c: int
    R: int = 1
    vbar: Fraction | None = None

    def __post_init__(self):
        vb = default_vbar(self.v_star) if self.vbar is None else as_fraction(self.vbar)
        object.__setattr__(self, "vbar", vb)
        if not 0 < vb < as_fraction(self.v_star):
            raise ValueError("need 0 < vbar < v_star")
        if self.T_c < 1:
            raise ValueError("T_c must be >= 1")


@dataclass
class RegenBlock:
    replica: int
    index: int
    start: int  # path index of the block's first point
    tau: int
    displacement: tuple[int, ...]
    truncated: bool
    conditioned: bool  # distributed as under the cone-conditioned law

    @property
    def usable(self) -> bool:
        return self.conditioned and not self.truncated


@dataclass
class RegenResult:
    blocks: list[RegenBlock]
    records: list[int]
    cone_ok: np.ndarray
    cross_count: np.ndarray  # -1 where the cone check already failed
    truncated: np.ndarray
    origin_regenerates: bool

    def diagnostic(self) -> dict:
        k = slice(1, None)
        return {
            "records": len(self.records) - 1,
            "cone_failed": int((~self.cone_ok[k]).sum()),
            "cross_failed": int((self.cross_count[k] > 0).sum()),
            "truncated": int(self.truncated[k].sum()),
            "regenerations": len(self.blocks),
        }


def _cone_ok(x: np.ndarray, start: int, vbar: Fraction, R: int) -> bool:
    seg = x[start:].astype(np.int64) - x[start]
    n = np.arange(len(seg), dtype=np.int64)
    p, q = vbar.numerator, vbar.denominator
    return bool(((q * seg[:, 0] >= p * n) & (np.abs(seg).sum(axis=1) <= R * n)).all())


def find_regeneration(env: Environment, path: WalkerPath, config: RegenConfig, start: int = 0,
                      replica: int | None = None) -> RegenResult:
    """Scan record times of the path from index ``start``.

    A record time R_k (k >= 1) regenerates when the walker stays in the forward
    cone of Y_{R_k} over the rest of the path and no trajectory is Cross at
    Y_{R_k}.  Since records after a record are the tail of the same sequence,
    the restarted scans of successive blocks reduce to one pass.  A check is
    truncated when fewer than T_c steps of look-ahead (or look-back) exist.
    """
    vb, R = config.vbar, config.R
    replica = env.config.replica if replica is None else replica
    pos = path.positions
    rel = record_times(pos[start:, 0], vb)
    recs = [start + r for r in rel]
    x = pos.astype(np.int64)
    p, q = vb.numerator, vb.denominator
    f = q * x[:, 0] - p * np.arange(len(x), dtype=np.int64)
    smin = np.minimum.accumulate(f[::-1])[::-1]
    last = len(x) - 1
    cone = np.zeros(len(recs), dtype=bool)
    for j, r in enumerate(recs):
        # the suffix-min screen settles the e1 edge; the l1 edge is checked exactly
        cone[j] = smin[r] >= f[r] and _cone_ok(x, r, vb, R)
    t0 = path.t0
    trunc = np.array([(last - r) < config.T_c or (t0 + r - env.t_min) < config.T_c for r in recs])
    cross = np.full(len(recs), -1, dtype=np.int64)
    todo = np.flatnonzero(cone)
    if len(todo):
        queries = np.array([path.point(recs[j]) for j in todo])
        cross[todo] = env.cross_counts(queries, vb, R)
    ok = cone & (cross == 0)
    origin_ok = bool(ok[0])
    regen = [j for j in range(1, len(recs)) if ok[j]]
    blocks: list[RegenBlock] = []
    prev_j = 0
    for b, j in enumerate(regen):
        s, e = recs[prev_j], recs[j]
        blocks.append(RegenBlock(
            replica=replica,
            index=b,
            start=s,
            tau=e - s,
            displacement=tuple(int(v) for v in (x[e] - x[s])),
            truncated=bool(trunc[prev_j] or trunc[j]),
            conditioned=origin_ok if b == 0 else True,
        ))
        prev_j = j
    return RegenResult(blocks, recs, cone, cross, trunc, origin_ok)


def _usable(blocks: Sequence[RegenBlock]):
    use = [b for b in blocks if b.usable]
    return use, len(blocks) - len(use)


def velocity_estimate(blocks: Sequence[RegenBlock], min_blocks: int = 30):
    """v = E[X_tau] / E[tau] with delta-method SE per coordinate; returns (v, se, excluded)."""
    use, excluded = _usable(blocks)
    if len(use) < min_blocks:
        raise stats.InsufficientDataError(f"{len(use)} usable blocks, need {min_blocks}")
    tau = np.array([b.tau for b in use], dtype=float)
    X = np.array([b.displacement for b in use], dtype=float)
    v, se = zip(*(stats.ratio_estimator(X[:, a], tau) for a in range(X.shape[1])))
    return np.array(v), np.array(se), excluded


def covariance_estimate(blocks: Sequence[RegenBlock], v: np.ndarray | None = None, min_blocks: int = 100):
    use, _ = _usable(blocks)
    if len(use) < min_blocks:
        raise stats.InsufficientDataError(f"{len(use)} usable blocks, need {min_blocks}")
    tau = np.array([b.tau for b in use], dtype=float)
    X = np.array([b.displacement for b in use], dtype=float)
    if v is None:
        v = X.sum(axis=0) / tau.sum()
    Z = X - np.outer(tau, v)
    sigma = Z.T @ Z / len(use) / tau.mean()
    return (sigma + sigma.T) / 2


def _by_replica(blocks: Sequence[RegenBlock]):
    out: dict[int, list[RegenBlock]] = {}
    for b in blocks:
        if b.usable:
            out.setdefault(b.replica, []).append(b)
    return [sorted(v, key=lambda b: b.index) for _, v in sorted(out.items())]


def iid_diagnostics(blocks: Sequence[RegenBlock], alpha: float = 0.01) -> list[stats.GateResult]:
    """Lag-1 autocorrelation of tau and X.e1 and split-half KS for both."""
    seqs = _by_replica(blocks)
    flat = [b for s in seqs for b in s]
    if len(flat) < 100:
        raise stats.InsufficientDataError("iid diagnostics need >= 100 blocks")
    taus = [[b.tau for b in s] for s in seqs]
    xs = [[b.displacement[0] for b in s] for s in seqs]
    out = [
        stats.lag1_autocorrelation(taus, alpha, "lag1-tau"),
        stats.lag1_autocorrelation(xs, alpha, "lag1-x1"),
    ]
    half = len(flat) // 2
    t_all = np.array([b.tau for b in flat], dtype=float)
    x_all = np.array([b.displacement[0] for b in flat], dtype=float)
    out.append(stats.ks_two_sample(t_all[:half], t_all[half:], alpha, "split-half-ks-tau"))
    out.append(stats.ks_two_sample(x_all[:half], x_all[half:], alpha, "split-half-ks-x1"))
    return out


def standardized_batch_sums(blocks: Sequence[RegenBlock], v: np.ndarray, sigma: np.ndarray,
                            batch: int = 20) -> np.ndarray:
    """sum(X - v tau) / sqrt(Sigma_11 sum tau) over consecutive same-replica batches."""
    out = []
    s11 = float(sigma[0, 0])
    for seq in _by_replica(blocks):
        for lo in range(0, len(seq) - batch + 1, batch):
            grp = seq[lo:lo + batch]
            tau = sum(b.tau for b in grp)
            dev = sum(b.displacement[0] for b in grp) - float(v[0]) * tau
            out.append(dev / math.sqrt(s11 * tau))
    return np.array(out)


def influence_field(env: Environment, y: Sequence[int], x_bullet: Sequence[int], horizon: int, vbar,
                    R: int = 1):
    """h(y) = inf{l : no trajectory is Cross at both y and y + (l x., l)}; returns (h, capped)."""
    y = np.asarray(y, dtype=np.int64)
    step = np.array([*x_bullet, 1], dtype=np.int64)
    fld = env.field
    ls = []
    for l in range(horizon + 1):
        pt = y + l * step
        if pt[-1] > env.t_max or (pt[:-1] > fld.A).any() or (pt[:-1] < -fld.A).any():
            break
        ls.append(pt)
    if not ls:
        raise ValueError("y lies outside the window")
    queries = np.array(ls)
    common = np.zeros(len(ls), dtype=bool)
    for _, mask in env.iter_cross_masks(queries, vbar, R):
        common |= (mask & mask[:, :1]).any(axis=0)
    free = np.flatnonzero(~common)
    if len(free):
        return int(free[0]), False
    return len(ls), True


def blocks_to_csv(blocks: Sequence[RegenBlock], dest, header_lines: Sequence[str] = ()):
    dim = len(blocks[0].displacement) if blocks else 1
    names = ["dx"] if dim == 1 else [f"dx{a + 1}" for a in range(dim)]
    with open(dest, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write(",".join(["replica", "blockIndex", "tau", *names, "truncated"]) + "\n")
        for b in blocks:
            fh.write(",".join([str(b.replica), str(b.index), str(b.tau), *map(str, b.displacement),
                               str(int(b.truncated))]) + "\n")
