"""Experiment drivers: replica kernels, reductions, gates and result tables.

Every per-replica function is a module-level function of (parameters,
replica) so that it can be shipped to worker processes.  Results are
reduced in replica order, hence outputs do not depend on the worker count.
"""
from __future__ import annotations

import functools
import json
import math
import os
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from . import config as cfgmod
from . import infection as inf
from . import kernel as kern
from . import regen as rg
from . import renorm as rn
from . import slt
from . import stats
from .environment import EnvConfig, generate
from .parallel import replica_map
from .walker import ballisticity_hits, evolve, martingale_residual

__all__ = [
    "Table",
    "ExperimentResult",
    "run_experiment",
    "write_outputs",
    "parse_big_int",
    "lln_runs",
    "lln_gates",
    "ballisticity_gates",
    "regen_runs",
    "regen_gates",
    "clt_gates",
    "covariance_runs",
    "covariance_gates",
    "slt_xi_sample",
    "RUNNERS",
]


@dataclass
class Table:
    name: str
    columns: list[str]
    rows: list[Sequence]


@dataclass
class ExperimentResult:
    name: str
    gates: list[stats.GateResult]
    summary: dict
    tables: list[Table] = field(default_factory=list)
    quick: bool = False
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return all(g.passed for g in self.gates)


def parse_big_int(text) -> int:
    """Integers such as '10^50', '10**50' or plain digits."""
    s = str(text).replace(" ", "")
    for op in ("**", "^"):
        if op in s:
            base, exp = s.split(op)
            return int(base) ** int(exp)
    return int(s)


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def write_table(table: Table, path, header: Sequence[str]):
    with open(path, "w", newline="") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        fh.write(",".join(table.columns) + "\n")
        for row in table.rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_outputs(result: ExperimentResult, cfg: dict, out_dir) -> dict:
    os.makedirs(out_dir, exist_ok=True)
    header = cfgmod.header_lines(cfg)
    paths = {}
    for t in result.tables:
        p = os.path.join(out_dir, f"{t.name}.csv")
        write_table(t, p, header)
        paths[t.name] = p
    summary = {
        "experiment": result.name,
        "passed": result.passed,
        "mode": "quick" if result.quick else "full",
        "seconds": round(result.seconds, 3),
        "gates": [g.to_dict() for g in result.gates],
        "summary": result.summary,
        "config": cfg,
    }
    with open(os.path.join(out_dir, f"{result.name}.summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True, default=_json_default)
    return paths


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.bool_,)):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Fraction):
        return str(o)
    return str(o)


def _tol(cfg: dict, quick: bool):
    alpha = cfg["gates"]["alpha"]
    k = cfg["gates"]["se_mult"]
    return (alpha / 10, k + 1) if quick else (alpha, k)


def _kernel(cfg: dict) -> kern.Kernel:
    kc = cfg["kernel"]
    if kc["rows"]:
        return kern.Kernel.from_config(kc["rows"], cfg["env"]["dim"])
    preset = kc["preset"]
    if preset == "two-row":
        return kern.two_row_kernel(kc["p_right"], kc["threshold"])
    if preset == "symmetric":
        return kern.symmetric_kernel(cfg["env"]["dim"])
    if preset == "deterministic":
        return kern.deterministic_kernel(cfg["env"]["dim"])
    raise cfgmod.ConfigError(f"'kernel.preset' {preset!r} is not known")


def _mapper(workers: int) -> Callable:
    return lambda fn, reps: replica_map(fn, reps, workers)


# ---------------------------------------------------------------------------
# walker: LLN and ballisticity


@dataclass(frozen=True)
class LLNParams:
    dim: int
    rho: float
    laziness: float
    A: int
    T: int
    T_short: int
    seed: int
    kernel_rows: tuple
    vstar: float
    Ls: tuple
    field_mode: str = "lazy"


def _lln_replica(p: LLNParams, replica: int) -> dict:
    env = generate(EnvConfig(dim=p.dim, rho=p.rho, laziness=p.laziness, A=p.A, T=p.T, seed=p.seed,
                             replica=replica), field_mode=p.field_mode)
    k = kern.Kernel.from_config(_thaw_rows(p.kernel_rows), p.dim)
    path = evolve(env, k, steps=p.T)
    hits = ballisticity_hits(path, p.vstar, p.Ls)
    return {"replica": replica, "xT": int(path.positions[-1, 0]), "xS": int(path.positions[p.T_short, 0]),
            "hits": hits}


def _freeze(rows):
    return tuple(json.dumps(r, sort_keys=True) for r in rows)


def _thaw_rows(rows: tuple) -> list:
    return [json.loads(r) for r in rows]


def lln_params(cfg: dict) -> LLNParams:
    T = cfg["walker"]["steps"]
    A = cfg["env"]["window"]["A"] or T
    fm = cfg["env"]["field_mode"]
    return LLNParams(cfg["env"]["dim"], cfg["env"]["rho"], cfg["env"]["laziness"], A, T,
                     cfg["walker"]["T_short"], cfg["run"]["seed"], _freeze(_kernel(cfg).to_config()),
                     cfg["walker"]["vstar"], tuple(cfg["walker"]["L"]), "lazy" if fm == "auto" else fm)


def lln_runs(cfg: dict, replicas: Sequence[int], workers: int = 1) -> list[dict]:
    p = lln_params(cfg)
    return replica_map(functools.partial(_lln_replica, p), replicas, workers)


def lln_gates(runs: list[dict], T: int, T_short: int, se_mult: float = 3.0) -> tuple[list, dict]:
    vT = np.array([r["xT"] / T for r in runs])
    vS = np.array([r["xS"] / T_short for r in runs])
    m, se = stats.mean_se(vT)
    z = 2.5758293035489004
    lo, hi = m - z * se, m + z * se
    g1 = stats.GateResult("lln-ci-excludes-0", m, 0.0, bool(lo > 0 or hi < 0), len(vT),
                          detail={"ci99": (lo, hi), "se": se})
    dm, dse = stats.mean_se(vT - vS)
    g2 = stats.GateResult("lln-T-vs-Tshort", abs(dm), se_mult * dse, bool(abs(dm) <= se_mult * dse), len(vT),
                          detail={"v_short": float(vS.mean()), "diff": dm, "paired_se": dse})
    return [g1, g2], {"v": m, "se": se, "ci99": (lo, hi), "v_short": float(vS.mean()), "diff": dm}


def ballisticity_gates(runs: list[dict], Ls: Sequence[int]) -> tuple[list, dict]:
    n = len(runs)
    rows = []
    for j, L in enumerate(Ls):
        k = sum(bool(r["hits"][j]) for r in runs)
        rows.append((L, k / n, *stats.wilson_ci(k, n)))
    worst = 0.0
    ok = True
    for a, b in zip(rows, rows[1:]):
        # nonincreasing within CI overlap: the later estimate may exceed the earlier only if the intervals overlap
        if b[1] > a[1] and b[2] > a[3]:
            ok = False
        worst = max(worst, b[1] - a[1])
    g = stats.GateResult("ballisticity-trend", worst, 0.0, ok, n,
                         detail={"rows": [dict(zip(("L", "p", "ci_lo", "ci_hi"), r)) for r in rows]})
    return [g], {"rows": rows}


def _run_lln(cfg, replicas, workers, quick) -> ExperimentResult:
    runs = lln_runs(cfg, replicas, workers)
    _, k = _tol(cfg, quick)
    gates, summ = lln_gates(runs, cfg["walker"]["steps"], cfg["walker"]["T_short"], k)
    table = Table("walker_lln", ["replica", "T", "xT", "T_short", "xT_short"],
                  [(r["replica"], cfg["walker"]["steps"], r["xT"], cfg["walker"]["T_short"], r["xS"]) for r in runs])
    tables = [table]
    if cfg["walker"]["dump_path"]:
        tables.append(_path_table(cfg, replicas[0]))
    return ExperimentResult("walker-lln", gates, summ, tables, quick)


def _path_table(cfg: dict, replica: int) -> Table:
    p = lln_params(cfg)
    env = generate(EnvConfig(dim=p.dim, rho=p.rho, laziness=p.laziness, A=p.A, T=p.T, seed=p.seed,
                             replica=replica), field_mode=p.field_mode)
    path = evolve(env, _kernel(cfg), steps=p.T)
    m = martingale_residual(path)
    names = ["x"] if p.dim == 1 else [f"x{a + 1}" for a in range(p.dim)]
    rows = []
    for l in range(path.steps + 1):
        occ = int(path.occupation[l]) if l < path.steps else ""
        dr = float(path.drift[l]) if l < path.steps else ""
        rows.append((replica, l, *path.positions[l], occ, dr, float(m[l])))
    return Table("walker_path", ["replica", "step", *names, "N_seen", "drift", "M"], rows)


def _run_ballisticity(cfg, replicas, workers, quick) -> ExperimentResult:
    runs = lln_runs(cfg, replicas, workers)
    Ls = cfg["walker"]["L"]
    gates, summ = ballisticity_gates(runs, Ls)
    rows = [(r["replica"], L, int(r["hits"][j])) for r in runs for j, L in enumerate(Ls)]
    return ExperimentResult("ballisticity", gates, summ, [Table("ballisticity", ["replica", "L", "hit"], rows)], quick)


# ---------------------------------------------------------------------------
# regeneration and CLT


@dataclass(frozen=True)
class RegenParams:
    dim: int
    rho: float
    laziness: float
    T: int
    T_past: int
    seed: int
    kernel_rows: tuple
    vstar: float
    T_c: int
    R: int
    vbar: str


def _regen_replica(p: RegenParams, replica: int) -> dict:
    env = generate(EnvConfig(dim=p.dim, rho=p.rho, laziness=p.laziness, A=p.T, T=p.T, T_past=p.T_past,
                             seed=p.seed, replica=replica), field_mode="lazy")
    k = kern.Kernel.from_config(_thaw_rows(p.kernel_rows), p.dim)
    path = evolve(env, k, steps=p.T)
    rc = rg.RegenConfig(p.vstar, p.T_c, p.R, Fraction(p.vbar) if p.vbar else None)
    res = rg.find_regeneration(env, path, rc, replica=replica)
    return {"replica": replica, "blocks": res.blocks, "xT": int(path.positions[-1, 0]),
            "diagnostic": res.diagnostic()}


def regen_params(cfg: dict) -> RegenParams:
    T = cfg["walker"]["steps"]
    Tp = cfg["env"]["window"]["Tpast"] or T
    return RegenParams(cfg["env"]["dim"], cfg["env"]["rho"], cfg["env"]["laziness"], T, Tp, cfg["run"]["seed"],
                       _freeze(_kernel(cfg).to_config()), cfg["regen"]["vstar"], cfg["regen"]["Tc"],
                       cfg["regen"]["R"], str(cfg["regen"]["vbar"]))


def regen_runs(cfg: dict, replicas: Sequence[int], workers: int = 1) -> list[dict]:
    return replica_map(functools.partial(_regen_replica, regen_params(cfg)), replicas, workers)


def regen_gates(runs: list[dict], T: int, alpha: float = 0.01, se_mult: float = 3.0,
                min_blocks: int = 100) -> tuple[list, dict]:
    blocks = [b for r in runs for b in r["blocks"]]
    usable = [b for b in blocks if b.usable]
    summ = {"blocks": len(blocks), "usable": len(usable),
            "diagnostics": [r["diagnostic"] for r in runs]}
    gates = []
    direct, dse = stats.mean_se([r["xT"] / T for r in runs])
    summ["v_direct"], summ["se_direct"] = direct, dse
    try:
        v, se, excl = rg.velocity_estimate(blocks, min_blocks=min_blocks)
    except stats.InsufficientDataError as exc:
        gates.append(stats.GateResult("regen-velocity", math.nan, se_mult, False, len(usable), detail={"error": str(exc)}))
        return gates, summ
    comb = math.sqrt(se[0] ** 2 + dse ** 2)
    summ.update(v_regen=float(v[0]), se_regen=float(se[0]), excluded=excl)
    gates.append(stats.GateResult("regen-velocity-vs-direct", abs(float(v[0]) - direct), se_mult * comb,
                                  bool(abs(float(v[0]) - direct) <= se_mult * comb), len(usable),
                                  detail={"v_regen": float(v[0]), "v_direct": direct, "combined_se": comb}))
    try:
        gates.extend(rg.iid_diagnostics(blocks, alpha))
    except stats.InsufficientDataError as exc:
        gates.append(stats.GateResult("iid-diagnostics", math.nan, alpha, False, len(usable), detail={"error": str(exc)}))
    return gates, summ


def clt_gates(runs: list[dict], alpha: float = 0.01, batch: int = 20, min_blocks: int = 500) -> tuple[list, dict]:
    blocks = [b for r in runs for b in r["blocks"]]
    usable = [b for b in blocks if b.usable]
    if len(usable) < min_blocks:
        return [stats.GateResult("clt-anderson-darling", math.nan, alpha, False, len(usable),
                                 detail={"error": f"{len(usable)} usable blocks, need {min_blocks}"})], {}
    v, _, _ = rg.velocity_estimate(blocks, min_blocks=1)
    sigma = rg.covariance_estimate(blocks, v, min_blocks=1)
    z = rg.standardized_batch_sums(blocks, v, sigma, batch)
    g = stats.anderson_darling_normal(z, alpha, "clt-anderson-darling")
    g.detail.update(blocks=len(usable), batches=len(z))
    return [g], {"v": v.tolist(), "sigma": sigma.tolist(), "batches": len(z), "usable": len(usable)}


def _block_table(runs: list[dict]) -> Table:
    blocks = [b for r in runs for b in r["blocks"]]
    dim = len(blocks[0].displacement) if blocks else 1
    names = ["dx"] if dim == 1 else [f"dx{a + 1}" for a in range(dim)]
    return Table("regen_blocks", ["replica", "blockIndex", "tau", *names, "truncated"],
                 [(b.replica, b.index, b.tau, *b.displacement, b.truncated) for b in blocks])


def _run_regen(cfg, replicas, workers, quick) -> ExperimentResult:
    runs = regen_runs(cfg, replicas, workers)
    alpha, k = _tol(cfg, quick)
    gates, summ = regen_gates(runs, cfg["walker"]["steps"], alpha, k, 30 if quick else 100)
    return ExperimentResult("regen", gates, summ, [_block_table(runs)], quick)


def _run_clt(cfg, replicas, workers, quick) -> ExperimentResult:
    runs = regen_runs(cfg, replicas, workers)
    alpha, _ = _tol(cfg, quick)
    gates, summ = clt_gates(runs, alpha, cfg["regen"]["batch"], 100 if quick else 500)
    return ExperimentResult("clt", gates, summ, [_block_table(runs)], quick)


# ---------------------------------------------------------------------------
# covariance decay of the occupation field


@dataclass(frozen=True)
class CovParams:
    rho: float
    laziness: float
    A: int
    times: tuple
    seed: int


def _cov_replica(p: CovParams, replica: int) -> list[float]:
    env = generate(EnvConfig(dim=1, rho=p.rho, laziness=p.laziness, A=p.A, T=max(p.times), seed=p.seed,
                             replica=replica), field_mode="auto")
    n0 = env.field.slice(0).astype(float) - p.rho
    return [float(np.mean(n0 * (env.field.slice(t) - p.rho))) for t in p.times]


def covariance_runs(cfg: dict, replicas: Sequence[int], workers: int = 1) -> np.ndarray:
    c = cfg["covariance"]
    p = CovParams(c["rho"], c["laziness"], c["A"], tuple(c["times"]), cfg["run"]["seed"])
    return np.array(replica_map(functools.partial(_cov_replica, p), replicas, workers))


def covariance_gates(cov: np.ndarray, rho: float, laziness: float, times: Sequence[int],
                     se_mult: float = 3.0, slope_tol: float = 0.15) -> tuple[list, dict]:
    """Cov(N(x,t), N(x,0)) against rho p_t(0,0), site-pooled, SE across replicas."""
    hk = slt.heat_kernel(1, laziness, max(times)) if max(times) <= 2048 else None
    gates = []
    rows = []
    for j, t in enumerate(times):
        m, se = stats.mean_se(cov[:, j])
        exact = rho * float(hk.p(t, [[0]])[0])
        rows.append({"t": t, "cov": m, "se": se, "exact": exact})
        gates.append(stats.GateResult(f"cov-t{t}", abs(m - exact), se_mult * se, bool(abs(m - exact) <= se_mult * se),
                                      len(cov), detail={"cov": m, "exact": exact}))
    means = np.array([r["cov"] for r in rows])
    if (means > 0).all():
        slope, sse, r2 = stats.slope_fit(np.log(times), np.log(means))
    else:
        slope, sse, r2 = math.nan, math.nan, math.nan
    gates.append(stats.GateResult("cov-slope", slope, slope_tol, bool(abs(slope + 0.5) <= slope_tol), len(times),
                                  detail={"stderr": sse, "r2": r2}))
    return gates, {"rows": rows, "slope": slope}


def _run_covariance(cfg, replicas, workers, quick) -> ExperimentResult:
    c = cfg["covariance"]
    cov = covariance_runs(cfg, replicas, workers)
    _, k = _tol(cfg, quick)
    gates, summ = covariance_gates(cov, c["rho"], c["laziness"], c["times"], k)
    rows = [(r, t, cov[i, j]) for i, r in enumerate(replicas) for j, t in enumerate(c["times"])]
    return ExperimentResult("covariance-decay", gates, summ, [Table("covariance", ["replica", "t", "cov"], rows)], quick)


# ---------------------------------------------------------------------------
# infection


@dataclass(frozen=True)
class InfParams:
    rho: float
    T: int
    seed: int
    r: int
    laziness: float


def _inf_replica(p: InfParams, replica: int) -> inf.InfectionRun:
    return inf.run_infection(p.rho, p.T, p.seed, replica, r=p.r, laziness=p.laziness)


def infection_runs(cfg: dict, replicas: Sequence[int], workers: int = 1) -> list[inf.InfectionRun]:
    c = cfg["infection"]
    p = InfParams(c["rho"], c["T"], cfg["run"]["seed"], c["r"], c["laziness"])
    return replica_map(functools.partial(_inf_replica, p), replicas, workers)


def infection_gates(runs, T: int, v_grid=(0.0, 0.05, 0.1, 0.2), window_min: float = 0.1,
                    window_frac: float = 0.95) -> tuple[list, dict]:
    s = inf.summarize_runs(runs, T, v_grid)
    lo, hi = s["ci99"]
    good = [u for u in runs if not u.degenerate]
    frac = float(np.mean([m >= window_min for m in s["window_means"]])) if good else 0.0
    gates = [
        stats.GateResult("infection-speed-ci-excludes-0", s["speed"], 0.0, bool(lo > 0), len(good),
                         detail={"ci99": (lo, hi), "degenerate": s["degenerate"]}),
        stats.GateResult("infection-srw-domination", float(sum(u.dominated for u in good)), float(len(good)),
                         bool(s["dominated_all"]), len(good)),
        stats.GateResult("infection-window", frac, window_frac, bool(frac >= window_frac), len(good),
                         detail={"threshold": window_min}),
    ]
    s = {k: v for k, v in s.items() if k != "window_means"}
    s["tails"] = {str(k): v for k, v in s["tails"].items()}
    return gates, s


def _run_infection(cfg, replicas, workers, quick) -> ExperimentResult:
    c = cfg["infection"]
    runs = infection_runs(cfg, replicas, workers)
    gates, summ = infection_gates(runs, c["T"], c["v_grid"])
    every = max(1, c["csv_every"])
    rows = [(u.replica, t, int(u.front[t]), int(u.infected_count[t]))
            for u in runs for t in range(0, len(u.front), every)]
    return ExperimentResult("infection", gates, summ, [Table("infection", ["replica", "t", "front", "infectedCount"], rows)],
                            quick)


# ---------------------------------------------------------------------------
# soft local times


def _xi_instance(seed: int, replica: int) -> np.ndarray:
    """xi's of one randomised instance: a few sites, random densities, keyed Poisson points."""
    u = slt.rh.uniforms(seed, int(slt.rh.Stream.REPLICA), replica, None, 0, np.arange(64))
    S = 2 + int(u[0] * 7)
    J = 1 + int(u[1] * 5)
    w = -np.log(u[2:2 + J * S]).reshape(J, S)  # Dirichlet(1,...,1) rows
    g = w / w.sum(axis=1, keepdims=True)
    sites = np.arange(S, dtype=np.int64)[:, None]
    return slt.keyed_soft_local_times(g, sites, seed, replica).xi


def slt_xi_sample(seed: int, instances: int, workers: int = 1) -> np.ndarray:
    parts = replica_map(functools.partial(_xi_instance, seed), range(instances), workers)
    return np.concatenate(parts)


@dataclass(frozen=True)
class CouplingParams:
    L: int
    rho: float
    rho_primes: tuple
    n: int
    cells: int
    dim: int
    laziness: float
    seed: int


@functools.lru_cache(maxsize=4)
def _hk_cached(d: int, laziness: float, n: int) -> slt.HeatKernel:
    return slt.heat_kernel(d, laziness, n)


def _coupling_replica(p: CouplingParams, replica: int):
    hk = _hk_cached(p.dim, p.laziness, p.n)
    starts = slt.sparse_starts(p.L, p.rho, p.cells, p.dim)
    res = slt.couple_srw_poisson(starts, p.L, p.rho, list(p.rho_primes), p.n, hk, [replica], p.seed)
    return res.dominated[0].tolist(), float(res.supG[0]), res.H_size


def coupling_runs(cfg: dict, replicas: Sequence[int], workers: int = 1):
    c = cfg["slt"]
    p = CouplingParams(c["L"], c["rho"], tuple(c["rho_primes"]), c["n"], c["cells"], c["dim"], c["laziness"],
                       cfg["run"]["seed"])
    return replica_map(functools.partial(_coupling_replica, p), replicas, workers)


def coupling_gates(runs, rho_primes: Sequence[float], target: float = 0.99) -> tuple[list, dict]:
    dom = np.array([r[0] for r in runs], dtype=float)
    supG = np.array([r[1] for r in runs])
    n = len(runs)
    freq = dom.mean(axis=0)
    se = np.sqrt(np.maximum(freq * (1 - freq), 1e-12) / n)
    top = int(np.argmax(rho_primes))
    gates = [stats.GateResult("coupling-frequency", float(freq[top]), target, bool(freq[top] >= target), n,
                              detail={"rho_prime": rho_primes[top]})]
    order = np.argsort(rho_primes)
    worst, ok = 0.0, True
    for a, b in zip(order, order[1:]):
        drop = freq[a] - freq[b]
        worst = max(worst, drop)
        if drop > 2 * math.sqrt(se[a] ** 2 + se[b] ** 2):
            ok = False
    gates.append(stats.GateResult("coupling-monotone", worst, 0.0, ok, n))
    # domination must hold wherever sup_H G <= rho'
    cover = [(int((supG <= rp).sum()), int((dom[:, j] * (supG <= rp)).sum())) for j, rp in enumerate(rho_primes)]
    qok = all(a == b for a, b in cover)
    gates.append(stats.GateResult("qineq-domination", float(sum(b for _, b in cover)), float(sum(a for a, _ in cover)),
                                  qok, n))
    return gates, {"frequency": dict(zip(map(str, rho_primes), freq.tolist())), "se": se.tolist(),
                   "qineq_replicas": cover, "H_size": runs[0][2] if runs else 0}


def _run_slt(cfg, replicas, workers, quick) -> ExperimentResult:
    c = cfg["slt"]
    runs = coupling_runs(cfg, replicas, workers)
    gates, summ = coupling_gates(runs, c["rho_primes"])
    if c["instances"]:
        alpha, _ = _tol(cfg, quick)
        xi = slt_xi_sample(cfg["run"]["seed"], c["instances"], workers)
        gates.append(stats.ks_test(xi, "expon", alpha, "slt-xi-exp1"))
    rows = [(r, int(dom), supG, rp) for r, (doms, supG, _) in zip(replicas, runs)
            for dom, rp in zip(doms, c["rho_primes"])]
    return ExperimentResult("slt-coupling", gates, summ,
                            [Table("slt_coupling", ["replica", "dominated", "supG", "threshold"], rows)], quick)


def heat_kernel_table(d: int, laziness: float, nmax: int) -> tuple[Table, dict, list]:
    hk = slt.heat_kernel(d, laziness, nmax)
    names = ["x"] if d == 1 else [f"x{a + 1}" for a in range(d)]
    rows = []
    width = 2 * nmax + 1
    grid = np.array(np.unravel_index(np.arange(width ** d), (width,) * d)).T - nmax
    norm_err, sym_err = 0.0, 0.0
    for n in range(nmax + 1):
        tab = hk.row(n)
        norm_err = max(norm_err, abs(tab.sum() - 1))
        sym_err = max(sym_err, float(np.abs(tab - np.flip(tab)).max()))
        if d > 1:
            sym_err = max(sym_err, float(np.abs(tab - tab.T).max()))
        flat = tab.ravel()
        nz = np.flatnonzero(flat)
        for i in nz:
            rows.append((n, *grid[i], float(flat[i])))
    consts = hk.fitted_constants(1)
    gates = [stats.GateResult("hk-normalisation", norm_err, 1e-12, norm_err <= 1e-12, nmax + 1),
             stats.GateResult("hk-symmetry", sym_err, 1e-15, sym_err <= 1e-15, nmax + 1)]
    summ = {"C_sup": consts["C_sup"], "C_lip": consts["C_lip"],
            "tail": {str(k): v for k, v in consts["tail"].items()}}
    return Table("heat_kernel", ["n", *names, "p"], rows), summ, gates


def _run_heat_kernel(cfg, replicas, workers, quick) -> ExperimentResult:
    c = cfg["heat_kernel"]
    table, summ, gates = heat_kernel_table(c["d"], c["laziness"], c["nmax"])
    return ExperimentResult("heat-kernel", gates, summ, [table], quick)


# ---------------------------------------------------------------------------
# renormalisation


def scales_result(L0: int, k_top: int, rho_hat=1.0, v_hat=1.0, direction="nonincreasing", k_hat=0):
    tb = rn.build_scale_table(L0, k_top, rho_hat, v_hat, direction, k_hat)
    flag_names = ["lowerbound", "k2large", "chain", "rho_floor", "v_floor"]
    rows = [(r["k"], r["L_k"], r["rho_k"], r["v_k"], *[int(r.get(f, True)) for f in flag_names]) for r in tb.rows()]
    table = Table("scales", ["k", "L_k", "rho_k", "v_k", *flag_names], rows)
    gates = [stats.GateResult(f"scales-{name}", float(ok), 1.0, bool(ok), len(tb.levels))
             for name, ok in tb.flags.items()]
    summ = {"iota": rn._mid(tb.iota), "v_inf": rn._mid(tb.v_inf), "flags": tb.flags,
            "L1": rn.format_int(tb.levels[1]) if len(tb.levels) > 1 else None}
    return tb, table, gates, summ


def _run_scales(cfg, replicas, workers, quick) -> ExperimentResult:
    c = cfg["renorm"]
    _, table, gates, summ = scales_result(parse_big_int(c["L0"]), c["k_top"], c["rho_hat"], c["v_hat"],
                                          c["direction"], c["k_hat"])
    return ExperimentResult("scales", gates, summ, [table], quick)


def pk_rows(cfg: dict, replicas: Sequence[int], workers: int = 1) -> tuple[list[dict], list]:
    c = cfg["renorm"]
    L0 = int(c["pk_L0"])
    levels = c["k_levels"]
    tb = rn.build_scale_table(L0, max(levels) + 1, c["rho"], c["v_hat"], c["direction"], 0)
    out, gates = [], []
    for k in levels:
        Lk = tb.levels[k]
        rho_k = float(rn._mid(tb.rho[k], 17))
        v_k = float(rn._mid(tb.v[k], 17))
        pc = rn.PkConfig(dim=cfg["env"]["dim"], rho=rho_k, laziness=c["laziness"], L=Lk, R=c["R"], K=c["K"],
                         observable=c["observable"], threshold=v_k, seed=cfg["run"]["seed"])
        phat, (lo, hi), _ = rn.estimate_pk(pc, replicas, _mapper(workers))
        out.append({"k": k, "L_k": Lk, "rho_k": rho_k, "v_k": v_k, "phat": phat, "ci_lo": lo, "ci_hi": hi})
        if c["observable"] == "one":
            gates.append(stats.GateResult(f"pk-k{k}-zero", phat, 0.0, phat == 0.0, len(replicas)))
        elif c["observable"] == "occupied" and v_k <= 1:
            ub = rn.union_bound(rho_k, c["K"], Lk, c["R"], cfg["env"]["dim"])
            gates.append(stats.GateResult(f"pk-k{k}-union-bound", lo, ub, bool(lo <= ub), len(replicas),
                                          detail={"phat": phat}))
    return out, gates


def _run_pk(cfg, replicas, workers, quick) -> ExperimentResult:
    rows, gates = pk_rows(cfg, replicas, workers)
    r = cfg["renorm"]
    summ = {"rows": rows}
    if len(rows) >= 2:
        summ["recursion_Co"] = rn.recursion_constant(rows[0]["phat"], rows[1]["phat"], rows[0]["L_k"],
                                                     rows[0]["rho_k"], cfg["env"]["dim"])
    table = Table("pk", ["k", "L_k", "rho_k", "v_k", "phat", "ci_lo", "ci_hi"],
                  [(x["k"], x["L_k"], x["rho_k"], x["v_k"], x["phat"], x["ci_lo"], x["ci_hi"]) for x in rows])
    return ExperimentResult("pk", gates, summ, [table], quick)


RUNNERS: dict[str, Callable] = {
    "walker-lln": _run_lln,
    "ballisticity": _run_ballisticity,
    "regen": _run_regen,
    "clt": _run_clt,
    "covariance-decay": _run_covariance,
    "infection": _run_infection,
    "slt-coupling": _run_slt,
    "heat-kernel": _run_heat_kernel,
    "scales": _run_scales,
    "pk": _run_pk,
}


def run_experiment(cfg: dict, workers: int | None = None, quick: bool = False) -> ExperimentResult:
    name = cfg["run"]["experiment"]
    n = cfgmod.replicas_for(cfg, quick)
    workers = workers or cfg["run"]["workers"]
    t0 = time.perf_counter()
    res = RUNNERS[name](cfg, list(range(n)), workers, quick)
    res.seconds = time.perf_counter() - t0
    res.quick = quick
    return res
