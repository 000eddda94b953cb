"""The acceptance suite: eleven criteria with pinned seeds and configurations."""
from __future__ import annotations

import filecmp
import json
import os
import tempfile
import time
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from . import config as cfgmod
from . import experiments as ex
from . import renorm as rn
from . import stats

__all__ = ["CriterionResult", "CRITERIA", "run_criterion", "run_all", "criterion_config"]

SEED = 20161


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    seconds: float
    budget_s: float
    quick: bool
    gates: list[dict] = field(default_factory=list)
    detail: dict = field(default_factory=dict)

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        mode = " [quick]" if self.quick else ""
        return f"{tag} criterion {self.number:>2} {self.title}{mode} ({self.seconds:.1f}s, budget {self.budget_s:.0f}s)"


def criterion_config(experiment: str, quick: bool = False, **overrides) -> dict:
    """Pinned configuration of the runs behind the statistical criteria."""
    base = {
        "walker-lln": {"env": {"rho": 3.0, "laziness": 0.5}, "walker": {"steps": 2000, "T_short": 1000}},
        "ballisticity": {"env": {"rho": 3.0, "laziness": 0.5}, "walker": {"steps": 2000, "L": [10, 20, 40]}},
        "regen": {"env": {"rho": 3.0, "laziness": 0.875, "window": {"Tpast": 2000}},
                  "walker": {"steps": 2000}, "regen": {"vstar": 0.4, "Tc": 500}},
        "covariance-decay": {"covariance": {"rho": 5.0}},
        "slt-coupling": {"slt": {"L": 8, "rho": 1.0, "rho_primes": [1.5, 2.0, 5.0, 10.0], "n": 256, "cells": 8}},
        "infection": {"infection": {"rho": 2.0, "T": 2000, "r": 10}},
    }
    data = json.loads(json.dumps(base.get(experiment, {})))
    data.setdefault("run", {})["seed"] = SEED
    cfg = cfgmod.resolve(data, experiment, **overrides)
    cfg["run"]["replicas"] = cfgmod.replicas_for(cfg, quick)
    return cfg


def _gates(gs) -> list[dict]:
    return [g.to_dict() for g in gs]


# each criterion returns (passed, gates, detail)


def c1_scales(quick: bool, workers: int, out_dir: str):
    L0 = 10 ** 50
    tb_ni, _, g_ni, s_ni = ex.scales_result(L0, 20, 1.0, 1.0, "nonincreasing")
    tb_nd, _, g_nd, _ = ex.scales_result(L0, 20, 1.0, 1.0, "nondecreasing")
    exact = tb_ni.levels[1] == 10 ** 75
    want = ["L_exact", "lowerbound_Lk", "k2large", "k2large_chain", "iota_bound", "v_floor", "rho_floor"]
    ok = exact and all(tb_ni.flags[f] for f in want) and tb_nd.flags["iota_bound"] and tb_nd.flags["rho_floor"]
    gates = [stats.GateResult("L1-equals-10^75", float(exact), 1.0, exact, 1)] + g_ni + [
        stats.GateResult(f"nondecreasing-{g.name}", g.statistic, g.threshold, g.passed, g.n) for g in g_nd]
    return ok, _gates(gates), {"iota": s_ni["iota"], "v_inf": s_ni["v_inf"]}


def _random_problem(rng: np.random.Generator, d: int, L: int, with_h: bool) -> rn.CrossingProblem:
    w = 5 * L
    g = rng.integers(-8, 9, size=(L,) + (w,) * d) / 8.0
    H = None
    if with_h:
        H = rng.random((L,) + (w,) * d + (len(rn.moves(d, 1)),)) < 0.75
    return rn.CrossingProblem(g, 1, H)


def c2_dp_oracle(quick: bool, workers: int, out_dir: str):
    rng = np.random.default_rng(SEED)
    n = 50 if quick else 200
    mism = 0
    infeasible = 0
    total = 0
    for d, Lmax in ((1, 6), (2, 4)):
        for i in range(n):
            L = int(rng.integers(1, Lmax + 1))
            p = _random_problem(rng, d, L, with_h=bool(i % 2))
            a = rn.min_chi_over_crossings(p)
            b = rn.brute_force_min_chi(p)
            total += 1
            infeasible += not b.feasible
            if a.feasible != b.feasible or a.total != b.total:
                mism += 1
    g = stats.GateResult("dp-equals-enumeration", float(mism), 0.0, mism == 0, total,
                         detail={"infeasible_instances": infeasible})
    return mism == 0, _gates([g]), {"instances": total, "mismatches": mism}


def c3_covariance(quick: bool, workers: int, out_dir: str):
    cfg = criterion_config("covariance-decay", quick)
    res = ex.run_experiment(cfg, workers, quick)
    ex.write_outputs(res, cfg, os.path.join(out_dir, "covariance-decay"))
    return res.passed, _gates(res.gates), {"slope": res.summary["slope"]}


_LLN_CACHE: dict = {}


def _lln(quick: bool, workers: int):
    key = quick
    if key not in _LLN_CACHE:
        cfg = criterion_config("walker-lln", quick)
        _LLN_CACHE[key] = (cfg, ex.lln_runs(cfg, range(cfg["run"]["replicas"]), workers))
    return _LLN_CACHE[key]


def c4_lln(quick: bool, workers: int, out_dir: str):
    cfg, runs = _lln(quick, workers)
    gates, summ = ex.lln_gates(runs, 2000, 1000, 4.0 if quick else 3.0)
    return all(g.passed for g in gates), _gates(gates), summ


_REGEN_CACHE: dict = {}


def _regen(quick: bool, workers: int):
    if quick not in _REGEN_CACHE:
        cfg = criterion_config("regen", quick)
        _REGEN_CACHE[quick] = (cfg, ex.regen_runs(cfg, range(cfg["run"]["replicas"]), workers))
    return _REGEN_CACHE[quick]


def c5_regen(quick: bool, workers: int, out_dir: str):
    cfg, runs = _regen(quick, workers)
    alpha, k = (0.001, 4.0) if quick else (0.01, 3.0)
    gates, summ = ex.regen_gates(runs, 2000, alpha, k, 30 if quick else 100)
    summ.pop("diagnostics", None)
    return all(g.passed for g in gates), _gates(gates), summ


def c6_clt(quick: bool, workers: int, out_dir: str):
    _, runs = _regen(quick, workers)
    gates, summ = ex.clt_gates(runs, 0.001 if quick else 0.01, 20, 100 if quick else 500)
    return all(g.passed for g in gates), _gates(gates), summ


def c7_slt(quick: bool, workers: int, out_dir: str):
    inst = 1000 if quick else 10_000
    xi = ex.slt_xi_sample(SEED, inst, workers)
    g_ks = stats.ks_test(xi, "expon", 0.001 if quick else 0.01, "xi-exp1-ks")
    g_ks.detail["instances"] = inst
    cfg = criterion_config("slt-coupling", quick,
                           **{"slt.rho_primes": [1.05, 1.1, 1.25, 1.5]})
    runs = ex.coupling_runs(cfg, range(100 if quick else 300), workers)
    gates, summ = ex.coupling_gates(runs, cfg["slt"]["rho_primes"])
    q = [g for g in gates if g.name == "qineq-domination"]
    ok = g_ks.passed and all(g.passed for g in q)
    return ok, _gates([g_ks] + q), {"xi_count": len(xi), "qineq_replicas": summ["qineq_replicas"]}


def c8_coupling(quick: bool, workers: int, out_dir: str):
    cfg = criterion_config("slt-coupling", quick)
    res = ex.run_experiment(cfg, workers, quick)
    ex.write_outputs(res, cfg, os.path.join(out_dir, "slt-coupling"))
    want = [g for g in res.gates if g.name in ("coupling-frequency", "coupling-monotone")]
    return all(g.passed for g in want), _gates(res.gates), res.summary


def c9_infection(quick: bool, workers: int, out_dir: str):
    cfg = criterion_config("infection", quick)
    runs = ex.infection_runs(cfg, range(cfg["run"]["replicas"]), workers)
    gates, summ = ex.infection_gates(runs, 2000)
    return all(g.passed for g in gates), _gates(gates), summ


def c10_ballisticity(quick: bool, workers: int, out_dir: str):
    _, runs = _lln(quick, workers)
    gates, summ = ex.ballisticity_gates(runs, (10, 20, 40))
    return all(g.passed for g in gates), _gates(gates), summ


def c11_determinism(quick: bool, workers: int, out_dir: str):
    checks = {}
    small = {
        "walker-lln": {"run.replicas": 6, "walker.steps": 200, "walker.T_short": 100},
        "slt-coupling": {"run.replicas": 12},
        "infection": {"run.replicas": 4, "infection.T": 200},
    }
    with tempfile.TemporaryDirectory() as tmp:
        for name, ov in small.items():
            cfg = criterion_config(name, False, **ov)
            outs = []
            for w in (1, 2):
                d = os.path.join(tmp, f"{name}-w{w}")
                cfg["run"]["workers"] = w
                res = ex.run_experiment(cfg, w, False)
                outs.append(ex.write_outputs(res, cfg, d))
            same = all(filecmp.cmp(outs[0][k], outs[1][k], shallow=False) for k in outs[0])
            checks[name] = same
    ok = all(checks.values())
    g = stats.GateResult("byte-identical-csv", float(sum(checks.values())), float(len(checks)), ok, len(checks),
                         detail=checks)
    return ok, _gates([g]), checks


CRITERIA: dict[int, tuple[str, float, Callable]] = {
    1: ("scale arithmetic", 1, c1_scales),
    2: ("DP oracle equivalence", 30, c2_dp_oracle),
    3: ("environment covariance oracle", 300, c3_covariance),
    4: ("LLN gate", 600, c4_lln),
    5: ("regeneration consistency", 600, c5_regen),
    6: ("CLT gate", 600, c6_clt),
    7: ("soft local times", 120, c7_slt),
    8: ("coupling bound", 300, c8_coupling),
    9: ("infection front", 600, c9_infection),
    10: ("ballisticity trend", 600, c10_ballisticity),
    11: ("determinism", 60, c11_determinism),
}


def run_criterion(number: int, quick: bool = False, workers: int = 1, out_dir: str | None = None) -> CriterionResult:
    title, budget, fn = CRITERIA[number]
    out_dir = out_dir or tempfile.mkdtemp(prefix="rwdre-acc-")
    t0 = time.perf_counter()
    passed, gates, detail = fn(quick, workers, out_dir)
    return CriterionResult(number, title, bool(passed), time.perf_counter() - t0, budget, quick, gates, detail)


def run_all(out_dir: str, quick: bool = False, workers: int = 1, only=None, echo: Callable = print):
    os.makedirs(out_dir, exist_ok=True)
    results = []
    for n in sorted(only or CRITERIA):
        r = run_criterion(n, quick, workers, out_dir)
        echo(r.line())
        results.append(r)
    report = {"mode": "quick" if quick else "full", "seed": SEED, "passed": all(r.passed for r in results),
              "criteria": [asdict(r) for r in results]}
    with open(os.path.join(out_dir, "acceptance.json"), "w") as fh:
        json.dump(report, fh, indent=2, default=ex._json_default)
    return results
