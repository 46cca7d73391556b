"""Grid search over the clustering threshold theta and the slicing coverage gamma.

Every grid point repairs the network on the same stratified training subset
and is scored by

    w_acc (1 - acc) + w_dp DP + w_eo EO + w_dpr (1 - min(DPR, 1/DPR))

(lower is better). An infinite DPR scores the last term as 1. Trial ``k`` of
the flattened grid is seeded with ``seed + k``, so serial and parallel runs
give identical results.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError, DatasetTooSmallError, TuningError
from .metrics import FairnessReport
from .repair import RepairConfig, fairneuron_repair

log = logging.getLogger(__name__)

MIN_SUBSET = 50


def log_grid(lo: float, hi: float, n: int) -> list:
    if n == 1:
        return [lo]
    return [float(v) for v in np.logspace(math.log10(lo), math.log10(hi), n)]


def linear_grid(lo: float, hi: float, n: int) -> list:
    if n == 1:
        return [lo]
    return [float(v) for v in np.linspace(lo, hi, n)]


@dataclass
class GridSpec:
    theta_grid: list = field(default_factory=lambda: log_grid(1e-4, 1.0, 9))
    gamma_grid: list = field(default_factory=lambda: linear_grid(0.5, 1.0, 6))
    subset_fraction: float = 0.10
    w_acc: float = 1.0
    w_dp: float = 1.0
    w_eo: float = 1.0
    w_dpr: float = 1.0

    def __post_init__(self):
        self.theta_grid = [float(t) for t in self.theta_grid]
        self.gamma_grid = [float(g) for g in self.gamma_grid]
        if not self.theta_grid or not self.gamma_grid:
            raise ConfigError("theta and gamma grids must be non-empty")
        if any(not 1e-4 <= t <= 1.0 for t in self.theta_grid):
            raise ConfigError("theta grid must lie within [1e-4, 1]")
        if any(not 0.5 <= g <= 1.0 for g in self.gamma_grid):
            raise ConfigError("gamma grid must lie within [0.5, 1]")
        if not 0.0 < self.subset_fraction <= 1.0:
            raise ConfigError("subset_fraction must lie in (0, 1]")

    def points(self) -> list:
        """Grid points in index order: theta-major, both axes ascending."""
        return [(t, g) for t in sorted(self.theta_grid) for g in sorted(self.gamma_grid)]


def objective(report: FairnessReport, grid: GridSpec) -> float:
    if report.dp is None or report.eo is None or report.dpr is None:
        undefined = sorted(report.errors) or ["dp/eo/dpr"]
        raise ValueError(f"objective needs every metric; undefined: {', '.join(undefined)}")
    dpr = report.dpr
    if math.isinf(dpr) or dpr == 0.0:
        folded = 0.0
    else:
        folded = min(dpr, 1.0 / dpr)
    return (grid.w_acc * (1.0 - report.acc) + grid.w_dp * report.dp + grid.w_eo * report.eo
            + grid.w_dpr * (1.0 - folded))


@dataclass
class TrialResult:
    index: int
    theta: float
    gamma: float
    score: float
    report: FairnessReport
    wall_time: float
    n_biased: int = 0

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "theta": self.theta,
            "gamma": self.gamma,
            "score": self.score,
            "n_biased": self.n_biased,
            "wall_time": self.wall_time,
            "report": self.report.to_dict(),
        }


@dataclass
class TuningResult:
    theta: float
    gamma: float
    score: float
    trials: list
    failures: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "best": {"theta": self.theta, "gamma": self.gamma, "score": self.score},
            "trials": [t.to_dict() for t in self.trials],
            "failures": [{"theta": t, "gamma": g, "error": e} for t, g, e in self.failures],
        }


def stratified_subset(data, fraction: float, seed) -> np.ndarray:
    """Row positions of a seeded subset with each (S, Y) cell sampled at ``fraction``.

    Each non-empty cell keeps at least one row. Positions come back sorted.
    """
    rng = np.random.default_rng(seed)
    s = np.asarray(data.S)
    y = np.asarray(data.Y)
    picked = []
    for sv in (0, 1):
        for yv in (0, 1):
            cell = np.flatnonzero((s == sv) & (y == yv))
            if len(cell) == 0:
                continue
            k = max(1, int(round(fraction * len(cell))))
            picked.append(rng.choice(cell, size=k, replace=False))
    return np.sort(np.concatenate(picked)) if picked else np.zeros(0, dtype=np.int64)


def _run_trial(args):
    index, theta, gamma, net, subset, eval_data, base_cfg, seed, grid = args
    t0 = time.perf_counter()
    cfg = base_cfg.replace(theta=theta, gamma=gamma,
                           train=dataclasses.replace(base_cfg.train, seed=int(seed + index)))
    outcome = fairneuron_repair(net, subset, cfg, eval_data)
    score = objective(outcome.after, grid)
    return TrialResult(index, theta, gamma, score, outcome.after, time.perf_counter() - t0,
                       len(outcome.split.biased))


def tune(net, train_data, grid: Optional[GridSpec] = None, base_cfg: Optional[RepairConfig] = None,
         seed: int = 0, workers: int = 1, eval_data=None, executor: str = "thread") -> TuningResult:
    """Repair ``net`` on a stratified subset of ``train_data`` at every grid point.

    Trials are scored on ``eval_data`` when given, otherwise on the subset
    itself. Failed trials are collected; if every trial fails a TuningError
    lists them. The best point is the minimum score, ties broken by smaller
    theta and then smaller gamma.
    """
    grid = grid or GridSpec()
    base_cfg = base_cfg or RepairConfig()
    idx = stratified_subset(train_data, grid.subset_fraction, seed)
    if len(idx) < MIN_SUBSET:
        raise DatasetTooSmallError(f"tuning subset has {len(idx)} rows; need at least {MIN_SUBSET}")
    subset = train_data.subset(idx)
    scored_on = subset if eval_data is None else eval_data
    tasks = [(k, t, g, net, subset, scored_on, base_cfg, seed, grid) for k, (t, g) in enumerate(grid.points())]

    results, failures = [], []

    def collect(task, fut_result):
        try:
            res = fut_result()
        except Exception as exc:  # one bad grid point must not sink the search
            log.warning("trial theta=%g gamma=%g failed: %s", task[1], task[2], exc)
            failures.append((task[1], task[2], f"{type(exc).__name__}: {exc}"))
        else:
            results.append(res)

    if workers > 1:
        pool_cls = ProcessPoolExecutor if executor == "process" else ThreadPoolExecutor
        with pool_cls(max_workers=workers) as pool:
            futures = [(task, pool.submit(_run_trial, task)) for task in tasks]
            for task, fut in futures:
                collect(task, fut.result)
    else:
        for task in tasks:
            collect(task, lambda task=task: _run_trial(task))

    if not results:
        raise TuningError(failures)
    results.sort(key=lambda r: r.index)
    best = min(results, key=lambda r: (r.score, r.theta, r.gamma))
    return TuningResult(best.theta, best.gamma, best.score, results, failures)


def save_tuning_report(result: TuningResult, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(result.to_dict(), fh, indent=1)


def write_surface_csv(result: TuningResult, path) -> None:
    """One row per trial: theta, gamma, score and the four metrics."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["theta", "gamma", "score", "acc", "dp", "eo", "dpr"])
        for t in result.trials:
            r = t.report
            dpr = "inf" if r.dpr_is_inf else r.dpr
            w.writerow([repr(t.theta), repr(t.gamma), repr(t.score), r.acc, r.dp, r.eo, dpr])
