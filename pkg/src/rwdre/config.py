"""Experiment configuration: TOML files validated against a fixed schema."""
from __future__ import annotations

import copy
import json
import sys
from typing import Any, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

EXPERIMENTS = (
    "walker-lln",
    "regen",
    "clt",
    "ballisticity",
    "pk",
    "scales",
    "infection",
    "slt-coupling",
    "heat-kernel",
    "covariance-decay",
)

_ANY_LIST = list

# section -> key -> default; nested tables are dicts of the same shape
DEFAULTS: dict[str, Any] = {
    "run": {"experiment": "", "seed": 1, "replicas": 0, "workers": 1},
    "env": {"dim": 1, "rho": 3.0, "laziness": 0.5, "field_mode": "auto",
            "window": {"A": 0, "T": 2000, "Tpast": 0}},
    "kernel": {"preset": "two-row", "p_right": 0.75, "threshold": 1, "rows": []},
    "walker": {"vstar": 0.4, "steps": 2000, "T_short": 1000, "L": [10, 20, 40], "dump_path": False},
    "regen": {"vstar": 0.4, "Tc": 500, "R": 1, "vbar": "", "batch": 20},
    "infection": {"rho": 2.0, "T": 2000, "r": 10, "laziness": 0.0, "csv_every": 10,
                  "v_grid": [0.0, 0.05, 0.1, 0.2]},
    "slt": {"L": 8, "rho": 1.0, "rho_primes": [1.5, 2.0, 5.0, 10.0], "n": 256, "cells": 8, "dim": 1,
            "laziness": 0.5, "instances": 0},
    "heat_kernel": {"d": 1, "laziness": 0.5, "nmax": 64},
    "covariance": {"rho": 5.0, "laziness": 0.5, "A": 2000, "times": [16, 32, 64, 128, 256, 512, 1024]},
    "renorm": {"L0": "100000000000000000000000000000000000000000000000000", "k_top": 20, "k_hat": 0,
               "rho_hat": 1.0, "v_hat": 1.0, "direction": "nonincreasing", "R": 1, "K": 1,
               "observable": "occupied", "k_levels": [0, 1], "pk_L0": 16, "rho": 50.0, "laziness": 0.5},
    "gates": {"alpha": 0.01, "se_mult": 3.0},
}

# replica counts used when a config leaves run.replicas at 0
DEFAULT_REPLICAS = {
    "walker-lln": 500,
    "ballisticity": 500,
    "regen": 12,
    "clt": 12,
    "infection": 300,
    "slt-coupling": 1000,
    "covariance-decay": 100,
    "pk": 200,
    "scales": 0,
    "heat-kernel": 0,
}

QUICK_REPLICAS = {
    "walker-lln": 40,
    "ballisticity": 40,
    "regen": 3,
    "clt": 3,
    "infection": 30,
    "slt-coupling": 100,
    "covariance-decay": 12,
    "pk": 30,
    "scales": 0,
    "heat-kernel": 0,
}


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key path."""


def _merge(base: dict, over: Mapping, path: str) -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown key '{where}'")
        ref = base[key]
        if isinstance(ref, dict):
            if not isinstance(val, Mapping):
                raise ConfigError(f"'{where}' must be a table")
            out[key] = _merge(ref, val, where)
            continue
        out[key] = _coerce(ref, val, where)
    return out


def _coerce(ref, val, where: str):
    if isinstance(ref, bool):
        if not isinstance(val, bool):
            raise ConfigError(f"'{where}' must be a boolean")
        return val
    if isinstance(ref, int):
        if isinstance(val, bool) or not isinstance(val, int):
            raise ConfigError(f"'{where}' must be an integer")
        return val
    if isinstance(ref, float):
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise ConfigError(f"'{where}' must be a number")
        return float(val)
    if isinstance(ref, str):
        if isinstance(val, (int, float)) and not isinstance(val, bool) and where.endswith(("L0", "vbar")):
            return str(val)
        if not isinstance(val, str):
            raise ConfigError(f"'{where}' must be a string")
        return val
    if isinstance(ref, list):
        if not isinstance(val, list):
            raise ConfigError(f"'{where}' must be an array")
        return val
    return val


def resolve(data: Mapping | None = None, experiment: str | None = None, **overrides) -> dict:
    """Defaults merged with ``data``; ``overrides`` are dotted keys such as ``run.seed``."""
    cfg = _merge(DEFAULTS, data or {}, "")
    for dotted, val in overrides.items():
        if val is None:
            continue
        parts = dotted.split(".")
        patch: dict = {}
        cur = patch
        for p in parts[:-1]:
            cur = cur.setdefault(p, {})
        cur[parts[-1]] = val
        cfg = _merge(cfg, patch, "")
    if experiment:
        file_exp = cfg["run"]["experiment"]
        if file_exp and file_exp != experiment:
            raise ConfigError(f"'run.experiment' is {file_exp!r} but {experiment!r} was requested")
        cfg["run"]["experiment"] = experiment
    exp = cfg["run"]["experiment"]
    if exp not in EXPERIMENTS:
        raise ConfigError(f"'run.experiment' must be one of {', '.join(EXPERIMENTS)}")
    if cfg["run"]["replicas"] < 0:
        raise ConfigError("'run.replicas' must be >= 0")
    if cfg["run"]["workers"] < 1:
        raise ConfigError("'run.workers' must be >= 1")
    if cfg["renorm"]["direction"] not in ("nonincreasing", "nondecreasing"):
        raise ConfigError("'renorm.direction' must be nonincreasing or nondecreasing")
    try:
        int(cfg["renorm"]["L0"])
    except ValueError:
        raise ConfigError("'renorm.L0' must be an integer") from None
    return cfg


def load(path, experiment: str | None = None, **overrides) -> dict:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return resolve(data, experiment, **overrides)


def replicas_for(cfg: dict, quick: bool = False) -> int:
    n = cfg["run"]["replicas"]
    if n:
        return n
    table = QUICK_REPLICAS if quick else DEFAULT_REPLICAS
    return table[cfg["run"]["experiment"]]


def header_lines(cfg: dict) -> list[str]:
    """Header lines echoed at the top of every CSV (worker count excluded)."""
    echo = copy.deepcopy(cfg)
    echo["run"].pop("workers", None)
    return [f"seed={cfg['run']['seed']}", "config=" + json.dumps(echo, sort_keys=True, separators=(",", ":"))]
