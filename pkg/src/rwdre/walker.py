"""The random walker driven by the occupation field and keyed uniforms."""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import rand_hier as rh
from .environment import Environment, RangeError, as_fraction
from .kernel import IntervalPartition, Kernel, analyze, build_partitions

__all__ = [
    "WalkerPath",
    "WindowExceededError",
    "evolve",
    "quenched_drift",
    "martingale_residual",
    "record_times",
    "default_vbar",
    "ballisticity_hits",
    "path_to_csv",
]


class WindowExceededError(RangeError):
    def __init__(self, step: int, point):
        super().__init__(f"walker left the window at step {step} (point {tuple(point)})")
        self.step = step


@dataclass
class WalkerPath:
    origin: tuple[int, ...]
    positions: np.ndarray  # (T+1, d) spatial positions X_l
    occupation: np.ndarray  # N(Y_l), l = 0..T-1
    drift: np.ndarray  # d(Y_l), l = 0..T-1

    @property
    def steps(self) -> int:
        return len(self.positions) - 1

    @property
    def t0(self) -> int:
        return self.origin[-1]

    def x1(self) -> np.ndarray:
        return self.positions[:, 0]

    def point(self, l: int) -> tuple[int, ...]:
        return (*(int(c) for c in self.positions[l]), self.t0 + l)


def default_vbar(v_star: float) -> Fraction:
    return min(as_fraction(v_star), Fraction(1, 2)) / 3


class _StepSampler:
    def __init__(self, partition: IntervalPartition):
        self.k_max = partition.k_max
        self.bounds = [list(map(float, partition.bounds[k])) for k in range(partition.k_max + 1)]
        self.steps = [partition.steps[k] for k in range(partition.k_max + 1)]

    def __call__(self, k: int, u: float):
        k = min(k, self.k_max)
        j = bisect.bisect_right(self.bounds[k], u)
        st = self.steps[k]
        return st[min(j, len(st) - 1)]


def evolve(env: Environment, kernel: Kernel, partition: IntervalPartition | None = None,
           y0: Sequence[int] | None = None, steps: int | None = None) -> WalkerPath:
    """Y_{l+1} = Y_l + (x, 1) where U_{Y_l} falls in I^{N(Y_l)}_x."""
    dim = env.dim
    if partition is None:
        partition = build_partitions(kernel, kernel.top_kmin, strict=False)
    y0 = tuple(int(c) for c in (y0 if y0 is not None else (0,) * (dim + 1)))
    if steps is None:
        steps = env.t_max - y0[-1]
    sample = _StepSampler(partition)
    drift_of = [kernel.drift(k) for k in range(partition.k_max + 1)]
    fld = env.field
    A = fld.A
    count_at = fld.count_at
    seed, replica = env.config.seed, env.config.replica
    stream = int(rh.Stream.UNIFORM_FIELD)

    pos = np.zeros((steps + 1, dim), dtype=np.int64)
    occ = np.zeros(steps, dtype=np.int64)
    dr = np.zeros(steps)
    x = list(y0[:-1])
    t = y0[-1]
    pos[0] = x
    for l in range(steps):
        if any(abs(c) > A for c in x) or not (fld.t_min <= t <= fld.t_max):
            raise WindowExceededError(l, (*x, t))
        k = count_at(x, t)
        u = rh.uniform_scalar(seed, stream, replica, tuple(x), t)
        st = sample(k, u)
        occ[l] = k
        dr[l] = drift_of[min(k, partition.k_max)]
        x = [a + b for a, b in zip(x, st)]
        t += 1
        pos[l + 1] = x
    if any(abs(c) > A for c in x):
        raise WindowExceededError(steps, (*x, t))
    return WalkerPath(y0, pos, occ, dr)


def quenched_drift(env: Environment, kernel: Kernel, y: Sequence[int]) -> float:
    k = int(env.occupation(np.array(y[:-1]), [y[-1]])[0])
    return kernel.drift(k)


def martingale_residual(path: WalkerPath) -> np.ndarray:
    """M_l = (X_l - X_0).e1 - sum_{k<l} d(Y_k)."""
    disp = (path.positions[:, 0] - path.positions[0, 0]).astype(np.float64)
    comp = np.concatenate([[0.0], np.cumsum(path.drift)])
    return disp - comp


def record_times(path_or_x, vbar) -> list[int]:
    """R_0 = 0 and R_{k+1} = min{n > R_k : (X_n - X_{R_k}).e1 > vbar (n - R_k)}."""
    x = path_or_x.x1() if isinstance(path_or_x, WalkerPath) else np.asarray(path_or_x)
    vb = as_fraction(vbar)
    p, q = vb.numerator, vb.denominator
    f = (q * np.asarray(x, dtype=np.int64) - p * np.arange(len(x), dtype=np.int64)).tolist()
    out = [0]
    cur = f[0]
    for n in range(1, len(f)):
        if f[n] > cur:
            out.append(n)
            cur = f[n]
    return out


def ballisticity_hits(path: WalkerPath, v_star, Ls: Sequence[int]) -> list[bool]:
    """Whether Y_n enters {x.e1 <= -L + v_star n} (relative to Y_0) for some n <= T."""
    vs = as_fraction(v_star)
    p, q = vs.numerator, vs.denominator
    x = path.x1().astype(np.int64) - int(path.positions[0, 0])
    worst = int((q * x - p * np.arange(len(x))).min())
    return [worst <= -q * int(L) for L in Ls]


def path_to_csv(path: WalkerPath, dest, header_lines: Sequence[str] = ()):
    dim = path.positions.shape[1]
    names = ["x"] if dim == 1 else [f"x{a + 1}" for a in range(dim)]
    m = martingale_residual(path)
    with open(dest, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write(",".join(["step", *names, "N_seen", "drift", "M"]) + "\n")
        for l in range(path.steps + 1):
            n_seen = int(path.occupation[l]) if l < path.steps else ""
            drift = repr(float(path.drift[l])) if l < path.steps else ""
            coords = ",".join(str(int(c)) for c in path.positions[l])
            fh.write(f"{l},{coords},{n_seen},{drift},{m[l]!r}\n")
