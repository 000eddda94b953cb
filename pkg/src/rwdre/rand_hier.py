"""Keyed, order-independent randomness.

Every random quantity in the package is a pure function of a 64-bit master
seed and a coordinate key.  Keys are packed injectively into the 128-bit
counter of a Philox4x32-10 block cipher whose 64-bit key is the master seed,
so each (seed, key) pair owns a distinct cipher block.  Nothing here keeps
state, which is what lets the environment be materialized lazily and in any
order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

__all__ = [
    "Stream",
    "RandomKey",
    "KeyRangeError",
    "philox4x32",
    "encode_keys",
    "random_words",
    "uniforms",
    "uniform",
    "uniform_scalar",
    "poissons",
    "poisson",
    "exponentials",
]

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = 0x9E3779B9
_W1 = 0xBB67AE85
_MASK32 = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)

# Field widths of the 128-bit counter (high word | low word).
_STREAM_BITS = 4
_REPLICA_BITS = 20
_TIME_BITS = 24
_INDEX_BITS = 16
_STEP_BITS = 24
_SPACE_BITS = 40


class Stream(IntEnum):
    INITIAL_COUNT = 0
    TRAJ_FUTURE = 1
    TRAJ_PAST = 2
    UNIFORM_FIELD = 3
    REPLICA = 4
    SLT_POINTS = 5


class KeyRangeError(ValueError):
    """A key coordinate does not fit its fixed-width field."""


def space_bits(dim: int) -> int:
    if dim < 1 or dim > 4:
        raise KeyRangeError(f"dimension {dim} outside supported range 1..4")
    return _SPACE_BITS // dim


def _check_range(name: str, values: np.ndarray, lo: int, hi: int) -> None:
    if values.size and (values.min() < lo or values.max() > hi):
        raise KeyRangeError(
            f"{name} out of range [{lo}, {hi}]: got [{values.min()}, {values.max()}]"
        )


def encode_keys(stream, replica, x=None, t=0, i=0, step=0):
    """Pack key fields into (hi, lo) uint64 counter halves.

    ``x`` is an integer array of shape (n, d) or (n,) for d = 1; the scalar
    fields broadcast against it.  Signed fields are offset, never wrapped.
    """
    stream_v = np.asarray(stream, dtype=np.int64)
    replica_v = np.asarray(replica, dtype=np.int64)
    t_v = np.asarray(t, dtype=np.int64)
    i_v = np.asarray(i, dtype=np.int64)
    step_v = np.asarray(step, dtype=np.int64)
    if x is None:
        x_v = np.zeros((1, 1), dtype=np.int64)
    else:
        x_v = np.asarray(x, dtype=np.int64)
        if x_v.ndim <= 1:
            x_v = x_v.reshape(-1, 1)
    dim = x_v.shape[-1]
    wbits = space_bits(dim)
    half_t = 1 << (_TIME_BITS - 1)
    half_x = 1 << (wbits - 1)
    _check_range("stream", stream_v, 0, (1 << _STREAM_BITS) - 1)
    _check_range("replica", replica_v, 0, (1 << _REPLICA_BITS) - 1)
    _check_range("time", t_v, -half_t, half_t - 1)
    _check_range("particle index", i_v, 0, (1 << _INDEX_BITS) - 1)
    _check_range("step index", step_v, 0, (1 << _STEP_BITS) - 1)
    _check_range("spatial coordinate", x_v, -half_x, half_x - 1)

    space = np.zeros(x_v.shape[:-1], dtype=np.uint64)
    for c in range(dim):
        space = (space << np.uint64(wbits)) | (x_v[..., c] + half_x).astype(np.uint64)
    hi = (
        (stream_v.astype(np.uint64) << np.uint64(128 - 64 - _STREAM_BITS))
        | (replica_v.astype(np.uint64) << np.uint64(_TIME_BITS + _INDEX_BITS))
        | ((t_v + half_t).astype(np.uint64) << np.uint64(_INDEX_BITS))
        | i_v.astype(np.uint64)
    )
    lo = (step_v.astype(np.uint64) << np.uint64(_SPACE_BITS)) | space
    hi, lo = np.broadcast_arrays(hi, lo)
    return np.ascontiguousarray(hi), np.ascontiguousarray(lo)


def philox4x32(c0, c1, c2, c3, k0: int, k1: int, rounds: int = 10):
    """Philox4x32 on uint64 arrays holding 32-bit words."""
    c0 = np.asarray(c0, dtype=np.uint64)
    c1 = np.asarray(c1, dtype=np.uint64)
    c2 = np.asarray(c2, dtype=np.uint64)
    c3 = np.asarray(c3, dtype=np.uint64)
    for _ in range(rounds):
        p0 = _M0 * c0
        p1 = _M1 * c2
        hi0 = p0 >> _SHIFT32
        hi1 = p1 >> _SHIFT32
        c0, c1, c2, c3 = (
            hi1 ^ c1 ^ np.uint64(k0),
            p1 & _MASK32,
            hi0 ^ c3 ^ np.uint64(k1),
            p0 & _MASK32,
        )
        k0 = (k0 + _W0) & 0xFFFFFFFF
        k1 = (k1 + _W1) & 0xFFFFFFFF
    return c0, c1, c2, c3


def _philox_scalar(c0: int, c1: int, c2: int, c3: int, k0: int, k1: int) -> tuple[int, int, int, int]:
    for _ in range(10):
        p0 = 0xD2511F53 * c0
        p1 = 0xCD9E8D57 * c2
        c0, c1, c2, c3 = ((p1 >> 32) ^ c1 ^ k0, p1 & 0xFFFFFFFF, (p0 >> 32) ^ c3 ^ k1, p0 & 0xFFFFFFFF)
        k0 = (k0 + _W0) & 0xFFFFFFFF
        k1 = (k1 + _W1) & 0xFFFFFFFF
    return c0, c1, c2, c3


def uniform_scalar(seed: int, stream: int, replica: int, x: tuple[int, ...], t: int = 0, i: int = 0,
                   step: int = 0) -> float:
    """Pure-Python twin of ``uniforms`` for one key; used in sequential loops."""
    dim = len(x)
    wbits = space_bits(dim)
    half_x = 1 << (wbits - 1)
    half_t = 1 << (_TIME_BITS - 1)
    if not (0 <= replica < (1 << _REPLICA_BITS) and -half_t <= t < half_t and 0 <= i < (1 << _INDEX_BITS)
            and 0 <= step < (1 << _STEP_BITS) and 0 <= stream < (1 << _STREAM_BITS)
            and all(-half_x <= c < half_x for c in x)):
        raise KeyRangeError(f"key out of range: stream={stream} replica={replica} x={x} t={t} i={i} step={step}")
    space = 0
    for c in x:
        space = (space << wbits) | (c + half_x)
    hi = (stream << (64 - _STREAM_BITS)) | (replica << (_TIME_BITS + _INDEX_BITS)) | ((t + half_t) << _INDEX_BITS) | i
    lo = (step << _SPACE_BITS) | space
    k0, k1 = _seed_words(seed)
    w = _philox_scalar(lo & 0xFFFFFFFF, lo >> 32, hi & 0xFFFFFFFF, hi >> 32, k0, k1)
    return ((w[0] >> 5) * 67108864.0 + (w[1] >> 6)) / 9007199254740992.0


def _seed_words(seed: int) -> tuple[int, int]:
    if not 0 <= int(seed) < (1 << 64):
        raise KeyRangeError(f"seed {seed} is not a 64-bit unsigned integer")
    seed = int(seed)
    return seed & 0xFFFFFFFF, seed >> 32


def random_words(seed: int, stream, replica=0, x=None, t=0, i=0, step=0, attempt: int = 0):
    """Four independent 32-bit words per key, as a (n, 4) uint64 array.

    ``attempt`` perturbs the cipher key, giving further independent blocks
    for rejection samplers without consuming a key field.
    """
    hi, lo = encode_keys(stream, replica, x, t, i, step)
    return _cipher(seed, hi, lo, attempt)


def _cipher(seed: int, hi, lo, attempt: int = 0):
    k0, k1 = _seed_words(seed)
    if attempt:
        k1 = (k1 ^ ((attempt * 0x85EBCA6B) & 0xFFFFFFFF)) & 0xFFFFFFFF
        k0 = (k0 + attempt) & 0xFFFFFFFF
    w = philox4x32(lo & _MASK32, lo >> _SHIFT32, hi & _MASK32, hi >> _SHIFT32, k0, k1)
    return np.stack(w, axis=-1)


def _words_to_unit(w_a, w_b):
    """53-bit uniform in [0, 1) from two 32-bit words."""
    a = (w_a >> np.uint64(5)).astype(np.float64)
    b = (w_b >> np.uint64(6)).astype(np.float64)
    return (a * 67108864.0 + b) / 9007199254740992.0


def uniforms(seed: int, stream, replica=0, x=None, t=0, i=0, step=0, which: int = 0, attempt: int = 0):
    """Vectorized uniform variates; ``which`` in {0, 1} picks a word pair."""
    w = random_words(seed, stream, replica, x, t, i, step, attempt)
    return _words_to_unit(w[..., 2 * which], w[..., 2 * which + 1])


@dataclass(frozen=True)
class RandomKey:
    stream: Stream
    replica: int = 0
    x: tuple[int, ...] = (0,)
    t: int = 0
    i: int = 0
    step: int = 0

    def __post_init__(self):
        # validate eagerly so bad keys fail at construction
        encode_keys(int(self.stream), self.replica, np.array([self.x]), self.t, self.i, self.step)

    def fields(self):
        return dict(
            stream=int(self.stream),
            replica=self.replica,
            x=np.array([self.x], dtype=np.int64),
            t=self.t,
            i=self.i,
            step=self.step,
        )

    def shifted(self, dx: tuple[int, ...], dt: int) -> "RandomKey":
        """Key of the translated coordinate, the space-time shift acting on keys."""
        return RandomKey(
            self.stream,
            self.replica,
            tuple(a + b for a, b in zip(self.x, dx)),
            self.t + dt,
            self.i,
            self.step,
        )


def uniform(seed: int, key: RandomKey) -> float:
    return float(uniforms(seed, **key.fields())[0])


def exponentials(seed: int, stream, replica=0, x=None, t=0, i=0, step=0, which: int = 0):
    u = uniforms(seed, stream, replica, x, t, i, step, which)
    return -np.log1p(-u)


_INVERSION_MAX = 30.0


def _poisson_inversion(u: np.ndarray, rho: float) -> np.ndarray:
    kmax = int(rho + 40.0 * math.sqrt(rho) + 40)
    k = np.arange(kmax + 1)
    lgam = np.array([math.lgamma(j + 1.0) for j in range(kmax + 1)])
    cdf = np.cumsum(np.exp(k * math.log(rho) - rho - lgam))
    cdf[-1] = 1.0
    return np.searchsorted(cdf, u, side="right").astype(np.int64)


def _poisson_ptrs(seed: int, hi, lo, rho: float) -> np.ndarray:
    """Hoermann's transformed rejection (PTRS), one cipher block per attempt."""
    slam = math.sqrt(rho)
    loglam = math.log(rho)
    b = 0.931 + 2.53 * slam
    a = -0.059 + 0.02483 * b
    log_invalpha = math.log(1.1239 + 1.1328 / (b - 3.4))
    vr = 0.9277 - 3.6224 / (b - 2)
    n = hi.size
    out = np.full(n, -1, dtype=np.int64)
    pending = np.arange(n)
    attempt = 0
    while pending.size:
        attempt += 1
        if attempt > 10_000:
            raise RuntimeError("Poisson rejection sampler failed to terminate")
        w = _cipher(seed, hi[pending], lo[pending], attempt)
        u = _words_to_unit(w[:, 0], w[:, 1]) - 0.5
        v = _words_to_unit(w[:, 2], w[:, 3])
        us = 0.5 - np.abs(u)
        with np.errstate(divide="ignore", invalid="ignore"):
            k = np.floor((2 * a / us + b) * u + rho + 0.43)
            quick = (us >= 0.07) & (v <= vr)
            shape_ok = (k >= 0) & ~((us < 0.013) & (v > us))
            kk = np.maximum(k, 0)
            lgam = np.array([math.lgamma(q + 1.0) for q in kk])
            lhs = np.log(v) + log_invalpha - np.log(a / (us * us) + b)
            accept = quick | (shape_ok & (lhs <= -rho + kk * loglam - lgam))
        out[pending[accept]] = k[accept].astype(np.int64)
        pending = pending[~accept]
    return out


def poissons(seed: int, rho: float, stream, replica=0, x=None, t=0, i=0, step=0) -> np.ndarray:
    """Vectorized Poisson(rho) variates, one per key.

    Inversion for rho <= 30, transformed rejection above.
    """
    if not (math.isfinite(rho) and rho >= 0):
        raise ValueError(f"Poisson parameter must be finite and >= 0, got {rho}")
    hi, lo = encode_keys(stream, replica, x, t, i, step)
    hi, lo = hi.reshape(-1), lo.reshape(-1)
    if rho == 0:
        return np.zeros(hi.size, dtype=np.int64)
    if rho <= _INVERSION_MAX:
        w = _cipher(seed, hi, lo)
        return _poisson_inversion(_words_to_unit(w[:, 0], w[:, 1]), rho)
    return _poisson_ptrs(seed, hi, lo, rho)


def poisson(seed: int, key: RandomKey, rho: float) -> int:
    return int(poissons(seed, rho, **key.fields())[0])
