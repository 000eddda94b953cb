"""Estimators and pass/fail gates used by the experiments."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats as sps

__all__ = [
    "GateResult",
    "InsufficientDataError",
    "ks_test",
    "ks_two_sample",
    "anderson_darling_normal",
    "chi_square_gof",
    "slope_fit",
    "ratio_estimator",
    "wilson_ci",
    "mean_se",
    "lag1_autocorrelation",
    "bootstrap_ratio_se",
]


class InsufficientDataError(ValueError):
    pass


@dataclass
class GateResult:
    name: str
    statistic: float
    threshold: float
    passed: bool
    n: int
    p_value: float | None = None
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        pv = "" if self.p_value is None else f" p={self.p_value:.4g}"
        return f"{tag} {self.name}: stat={self.statistic:.6g} threshold={self.threshold:.6g}{pv} n={self.n}"


def _p_gate(name, stat, p, alpha, n, **detail) -> GateResult:
    return GateResult(name, float(stat), alpha, bool(p >= alpha), n, float(p), detail)


def ks_test(sample, cdf: Callable | str, alpha: float = 0.01, name: str = "ks") -> GateResult:
    """Two-sided one-sample KS with the asymptotic p-value."""
    x = np.asarray(sample, dtype=float)
    if len(x) < 20:
        raise InsufficientDataError("KS test needs n >= 20")
    res = sps.kstest(x, cdf, method="asymp")
    return _p_gate(name, res.statistic, res.pvalue, alpha, len(x))


def ks_two_sample(a, b, alpha: float = 0.01, name: str = "ks2") -> GateResult:
    a, b = np.asarray(a, float), np.asarray(b, float)
    if min(len(a), len(b)) < 20:
        raise InsufficientDataError("two-sample KS needs both samples >= 20")
    res = sps.ks_2samp(a, b)
    return _p_gate(name, res.statistic, res.pvalue, alpha, len(a) + len(b))


def anderson_darling_normal(sample, alpha: float = 0.01, name: str = "anderson-darling") -> GateResult:
    """Composite normality test (mean and variance estimated)."""
    x = np.asarray(sample, dtype=float)
    if len(x) < 8:
        raise InsufficientDataError("Anderson-Darling needs n >= 8")
    res = sps.anderson(x, "norm")
    levels = list(res.significance_level)
    crit = float(res.critical_values[levels.index(alpha * 100)]) if alpha * 100 in levels else float(
        np.interp(alpha * 100, levels[::-1], res.critical_values[::-1]))
    return GateResult(name, float(res.statistic), crit, bool(res.statistic < crit), len(x))


def chi_square_gof(observed, expected_probs, alpha: float = 0.01, min_expected: float = 5.0,
                   name: str = "chi-square") -> GateResult:
    """Pearson chi-square; adjacent cells with small expectation are pooled."""
    obs = np.asarray(observed, dtype=float)
    probs = np.asarray(expected_probs, dtype=float)
    n = obs.sum()
    exp = probs / probs.sum() * n
    o_cells, e_cells = [], []
    acc_o = acc_e = 0.0
    for o, e in zip(obs, exp):
        acc_o += o
        acc_e += e
        if acc_e >= min_expected:
            o_cells.append(acc_o)
            e_cells.append(acc_e)
            acc_o = acc_e = 0.0
    if acc_e > 0 or acc_o > 0:
        if e_cells:
            o_cells[-1] += acc_o
            e_cells[-1] += acc_e
        else:
            o_cells.append(acc_o)
            e_cells.append(acc_e)
    if len(e_cells) < 2:
        return GateResult(name, 0.0, alpha, True, int(n), 1.0, {"cells": len(e_cells)})
    res = sps.chisquare(o_cells, e_cells)
    return _p_gate(name, res.statistic, res.pvalue, alpha, int(n), cells=len(e_cells))


def slope_fit(xs, ys):
    """Least squares line; returns (slope, stderr, r_squared)."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if len(x) < 4:
        raise InsufficientDataError("slope fit needs at least 4 points")
    if np.ptp(x) == 0:
        raise ValueError("degenerate abscissae")
    res = sps.linregress(x, y)
    r2 = 1.0 if np.ptp(y) == 0 else float(res.rvalue ** 2)
    return float(res.slope), float(res.stderr), r2


def ratio_estimator(nums, dens):
    """mean(nums) / mean(dens) with the delta-method standard error."""
    a = np.asarray(nums, dtype=float)
    b = np.asarray(dens, dtype=float)
    n = len(a)
    if n == 0:
        raise InsufficientDataError("empty sample")
    mb = b.mean()
    if mb == 0:
        raise ZeroDivisionError("denominator mean is zero")
    r = a.mean() / mb
    if n < 2:
        return float(r), float("nan")
    resid = a - r * b
    se = math.sqrt(float(np.sum(resid ** 2)) / (n - 1) / n) / abs(mb)
    return float(r), float(se)


def bootstrap_ratio_se(nums, dens, n_boot: int = 2000, rng: np.random.Generator | None = None) -> float:
    rng = rng or np.random.default_rng(0)
    a = np.asarray(nums, float)
    b = np.asarray(dens, float)
    idx = rng.integers(0, len(a), size=(n_boot, len(a)))
    return float(np.std(a[idx].mean(axis=1) / b[idx].mean(axis=1), ddof=1))


def wilson_ci(successes: int, n: int, z: float = 2.5758293035489004):
    """Wilson score interval; default z gives 99% coverage."""
    if n == 0:
        return 0.0, 1.0
    ph = successes / n
    denom = 1 + z * z / n
    center = (ph + z * z / (2 * n)) / denom
    half = z * math.sqrt(ph * (1 - ph) / n + z * z / (4 * n * n)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def mean_se(x):
    x = np.asarray(x, dtype=float)
    if len(x) < 2:
        return float(x.mean()) if len(x) else float("nan"), float("nan")
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(len(x)))


def lag1_autocorrelation(series: Sequence[Sequence[float]], alpha: float = 0.01, name: str = "lag1"):
    """Pooled lag-1 autocorrelation over several independent sequences.

    Pairs never straddle two sequences.  Under independence r is roughly
    N(0, 1/m) with m the number of pairs.
    """
    seqs = [np.asarray(s, dtype=float) for s in series]
    allv = np.concatenate(seqs) if seqs else np.empty(0)
    mu = allv.mean() if len(allv) else 0.0
    var = allv.var() if len(allv) else 0.0
    num = 0.0
    m = 0
    for s in seqs:
        if len(s) >= 2:
            num += float(np.sum((s[:-1] - mu) * (s[1:] - mu)))
            m += len(s) - 1
    if m < 20 or var == 0:
        raise InsufficientDataError("lag-1 autocorrelation needs >= 20 pairs and nonzero variance")
    r = num / m / var
    z = sps.norm.ppf(1 - alpha / 2)
    band = z / math.sqrt(m)
    p = 2 * sps.norm.sf(abs(r) * math.sqrt(m))
    return GateResult(name, r, band, bool(abs(r) <= band), m, float(p), {"ci": (r - band, r + band)})
