"""Occupation-dependent transition kernels alpha(k, x) as threshold tables."""
from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

Step = tuple[int, ...]

_NORM_TOL = 1e-12


class KernelError(ValueError):
    pass


@dataclass(frozen=True)
class KernelRow:
    kmin: int
    probs: Mapping[Step, float]


@dataclass(frozen=True)
class Kernel:
    """Piecewise-constant kernel: occupation k uses the row with the largest kmin <= k."""

    dim: int
    rows: tuple[KernelRow, ...]
    steps: tuple[Step, ...] = field(init=False)
    range: int = field(init=False)

    def __post_init__(self):
        if self.dim < 1:
            raise KernelError("dimension must be >= 1")
        if not self.rows:
            raise KernelError("kernel needs at least one row")
        kmins = [r.kmin for r in self.rows]
        if kmins[0] != 0:
            raise KernelError("first row must have kmin = 0")
        if any(b <= a for a, b in zip(kmins, kmins[1:])):
            raise KernelError("row thresholds must be strictly increasing")
        support = set()
        for r in self.rows:
            total = 0.0
            for x, p in r.probs.items():
                if len(x) != self.dim:
                    raise KernelError(f"step {x} has wrong dimension")
                if p < 0:
                    raise KernelError(f"negative probability {p} at step {x}")
                total += p
                if p > 0:
                    support.add(tuple(int(c) for c in x))
            if abs(total - 1.0) > _NORM_TOL:
                raise KernelError(f"row kmin={r.kmin} sums to {total}, not 1")
        object.__setattr__(self, "steps", tuple(sorted(support)))
        object.__setattr__(self, "range", max(sum(abs(c) for c in x) for x in self.steps))

    @classmethod
    def from_rows(cls, dim: int, rows: Sequence[tuple[int, Mapping[Step, float]]]) -> "Kernel":
        return cls(dim, tuple(KernelRow(int(k), {tuple(x): float(p) for x, p in probs.items()}) for k, probs in rows))

    @classmethod
    def from_config(cls, rows: Sequence[Mapping], dim: int | None = None) -> "Kernel":
        """Build from ``[{kmin, steps: [{dx: [...], p: ...}]}]``."""
        parsed = []
        for row in rows:
            probs: dict[Step, float] = {}
            for st in row["steps"]:
                dx = tuple(int(c) for c in st["dx"])
                probs[dx] = probs.get(dx, 0.0) + float(st["p"])
            parsed.append((int(row["kmin"]), probs))
        if dim is None:
            dim = len(next(iter(parsed[0][1])))
        return cls.from_rows(dim, parsed)

    def to_config(self) -> list[dict]:
        return [
            {"kmin": r.kmin, "steps": [{"dx": list(x), "p": p} for x, p in sorted(r.probs.items())]}
            for r in self.rows
        ]

    def row_index(self, k: int) -> int:
        return bisect.bisect_right([r.kmin for r in self.rows], k) - 1

    def alpha(self, k: int, x: Step) -> float:
        return self.rows[self.row_index(k)].probs.get(tuple(x), 0.0)

    def drift(self, k: int) -> float:
        """Mean e1-displacement at occupation k."""
        return sum(p * x[0] for x, p in self.rows[self.row_index(k)].probs.items())

    @property
    def top_kmin(self) -> int:
        return self.rows[-1].kmin


def unit_step(dim: int, axis: int = 0, sign: int = 1) -> Step:
    v = [0] * dim
    v[axis] = sign
    return tuple(v)


def deterministic_kernel(dim: int = 1) -> Kernel:
    return Kernel.from_rows(dim, [(0, {unit_step(dim): 1.0})])


def symmetric_kernel(dim: int = 1) -> Kernel:
    probs = {}
    for a in range(dim):
        for s in (1, -1):
            probs[unit_step(dim, a, s)] = 1.0 / (2 * dim)
    return Kernel.from_rows(dim, [(0, probs)])


def two_row_kernel(p_right: float = 0.75, threshold: int = 1) -> Kernel:
    """d = 1: symmetric below ``threshold``, right-biased at or above it."""
    return Kernel.from_rows(
        1,
        [(0, {(1,): 0.5, (-1,): 0.5}), (threshold, {(1,): p_right, (-1,): 1.0 - p_right})],
    )


@dataclass(frozen=True)
class DriftReport:
    v_bullet: float
    x_bullet: Step | None
    p_bullet: dict[int, float]
    assumption_s: bool
    assumption_d: bool
    assumption_r: bool

    def p_bullet_at(self, k: int) -> float:
        top = max(self.p_bullet)
        return self.p_bullet[min(k, top)]


def analyze(kernel: Kernel) -> DriftReport:
    """Drift v., the distinguished step x. and its floors p.(k).

    For a threshold table every liminf over k is attained by the top row and
    every inf over l >= k is a minimum over finitely many rows.
    """
    top = kernel.rows[-1]
    v_bullet = sum(p * x[0] for x, p in top.probs.items())
    candidates = [x for x in kernel.steps if x[0] > 0 and top.probs.get(x, 0.0) > 0]
    x_bullet = None
    if candidates:
        # largest floor over the top row wins; ties broken lexicographically
        x_bullet = min(candidates, key=lambda x: (-top.probs[x], x))
    p_bullet: dict[int, float] = {}
    if x_bullet is not None:
        floor = float("inf")
        row_floor = []
        for r in reversed(kernel.rows):
            floor = min(floor, r.probs.get(x_bullet, 0.0))
            row_floor.append(floor)
        row_floor.reverse()
        for k in range(top.kmin + 1):
            p_bullet[k] = row_floor[kernel.row_index(k)]
    return DriftReport(
        v_bullet=v_bullet,
        x_bullet=x_bullet,
        p_bullet=p_bullet,
        assumption_s=True,
        assumption_d=v_bullet > 0,
        assumption_r=x_bullet is not None,
    )


@dataclass(frozen=True)
class IntervalPartition:
    """Per-occupation tiling of [0, 1) into step intervals.

    ``bounds[k]`` holds cumulative right endpoints aligned with ``steps[k]``;
    occupations above ``k_max`` reuse the top table.
    """

    k_max: int
    steps: dict[int, tuple[Step, ...]]
    bounds: dict[int, np.ndarray]

    def intervals(self, k: int) -> list[tuple[Step, float, float]]:
        k = min(k, self.k_max)
        out = []
        lo = 0.0
        for x, hi in zip(self.steps[k], self.bounds[k]):
            out.append((x, lo, float(hi)))
            lo = float(hi)
        return out

    def step_for(self, k: int, u: float) -> Step:
        k = min(k, self.k_max)
        idx = int(np.searchsorted(self.bounds[k], u, side="right"))
        return self.steps[k][min(idx, len(self.steps[k]) - 1)]

    def step_table(self, dim: int):
        """Dense arrays for vectorized sampling: (k_max+1, n_steps) bounds and step vectors."""
        width = max(len(v) for v in self.steps.values())
        b = np.ones((self.k_max + 1, width))
        s = np.zeros((self.k_max + 1, width, dim), dtype=np.int64)
        for k in range(self.k_max + 1):
            n = len(self.steps[k])
            b[k, :n] = self.bounds[k]
            s[k, :n] = self.steps[k]
            s[k, n:] = self.steps[k][-1]
        return b, s


def build_partitions(kernel: Kernel, k_max: int, report: DriftReport | None = None,
                     strict: bool = True) -> IntervalPartition:
    """Intervals with I^k_{x.} anchored at 0, remaining steps lexicographic.

    With ``strict=False`` a kernel without a forward step gets plain
    lexicographic intervals (no nesting guarantee) instead of an error.
    """
    report = report or analyze(kernel)
    if not report.assumption_r and strict:
        raise KernelError("no forward step: no x with x.e1 > 0 and positive top-row mass")
    xb = report.x_bullet
    k_max = max(int(k_max), kernel.top_kmin)
    steps: dict[int, tuple[Step, ...]] = {}
    bounds: dict[int, np.ndarray] = {}
    for k in range(k_max + 1):
        probs = kernel.rows[kernel.row_index(k)].probs
        order = ([xb] if xb is not None else []) + [x for x in sorted(probs) if x != xb and probs[x] > 0]
        cum = np.cumsum([probs.get(x, 0.0) for x in order])
        cum[-1] = 1.0
        steps[k] = tuple(order)
        bounds[k] = cum
    return IntervalPartition(k_max, steps, bounds)


def check_nesting(partition: IntervalPartition, report: DriftReport) -> bool:
    """[0, p.(k)) lies inside I^l_{x.} for every k <= l <= k_max."""
    for k in range(partition.k_max + 1):
        pk = report.p_bullet_at(k)
        for l in range(k, partition.k_max + 1):
            x, lo, hi = partition.intervals(l)[0]
            if x != report.x_bullet or lo != 0.0 or hi < pk:
                return False
    return True
