"""Seeded multi-trial experiments and Table-style reporting.

Trial ``i`` uses seed ``master_seed + i`` for the data split, the network
initialisation and every training run in that trial. All methods compared in
one batch share the trial's split and its naive model.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
import os
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .baselines import reweigh, roc_postprocess, select_margin
from .datasets import load_dataset, load_schema, split
from .errors import ConfigError
from .metrics import FairnessReport, FairnessThresholds, evaluate
from .nn import TrainConfig, build_network, train
from .repair import RepairConfig, divide_samples, random_split_like, train_on_split, uniform_retrain
from .tuning import GridSpec, tune

log = logging.getLogger(__name__)

METHODS = ("naive", "fairneuron", "reweighing", "roc", "random_control", "pure_dropout", "pure_ordinary")
METRICS = ("acc", "dp", "eo", "dpr")


@dataclass(frozen=True)
class DatasetPreset:
    schema: str
    filename: str
    hidden: int
    head: str
    label: str


PRESETS = {
    "census": DatasetPreset("adult", "adult.data", 128, "softmax", "Census"),
    "credit": DatasetPreset("german", "german.data", 32, "softmax", "Credit"),
    "compas": DatasetPreset("compas", "compas-scores-two-years.csv", 32, "linear", "COMPAS"),
}
ALIASES = {"adult": "census", "german": "credit"}


def resolve_dataset(name: str) -> str:
    key = ALIASES.get(name.lower(), name.lower())
    if key not in PRESETS:
        raise ConfigError(f"unknown dataset {name!r}; expected one of {sorted(PRESETS)}")
    return key


def default_data_dir() -> Path:
    return Path(os.environ.get("FAIRREPAIR_DATA", "data"))


@dataclass
class ExperimentConfig:
    dataset: str = "compas"
    data_path: Optional[str] = None
    schema: Optional[str] = None
    method: str = "fairneuron"
    trials: int = 10
    master_seed: int = 0
    naive_epochs: int = 30
    repair: RepairConfig = field(default_factory=RepairConfig)
    grid: Optional[GridSpec] = None
    thresholds: FairnessThresholds = field(default_factory=FairnessThresholds)
    workers: int = 1

    def __post_init__(self):
        self.dataset = resolve_dataset(self.dataset)
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}")
        if self.naive_epochs < 1:
            raise ConfigError("naive_epochs must be at least 1")

    @property
    def preset(self) -> DatasetPreset:
        return PRESETS[self.dataset]

    def resolved_path(self) -> Path:
        if self.data_path:
            return Path(self.data_path)
        return default_data_dir() / self.preset.filename

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "data_path": str(self.resolved_path()),
            "schema": self.schema or self.preset.schema,
            "method": self.method,
            "trials": self.trials,
            "master_seed": self.master_seed,
            "naive_epochs": self.naive_epochs,
            "repair": _plain(dataclasses.asdict(self.repair)),
            "grid": None if self.grid is None else _plain(dataclasses.asdict(self.grid)),
            "thresholds": dataclasses.asdict(self.thresholds),
        }


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


@dataclass
class TrialRecord:
    trial: int
    seed: int
    report: Optional[FairnessReport]
    timings: dict = field(default_factory=dict)
    error: Optional[str] = None
    extra: dict = field(default_factory=dict)

    def to_dict(self, timings: bool = True) -> dict:
        doc = {
            "trial": self.trial,
            "seed": self.seed,
            "report": None if self.report is None else self.report.to_dict(),
            "error": self.error,
            "extra": self.extra,
        }
        if timings:
            doc["timings"] = self.timings
        return doc


def _metric_values(trials, metric) -> list:
    vals = []
    for t in trials:
        if t.report is None:
            continue
        v = getattr(t.report, metric)
        if v is not None:
            vals.append(float(v))
    return vals


def aggregate(values) -> dict:
    """Mean and sample standard deviation; infinities propagate to the mean."""
    if not values:
        return {"mean": None, "std": None, "n": 0}
    if any(math.isinf(v) for v in values):
        return {"mean": math.inf, "std": None, "n": len(values)}
    mean = math.fsum(values) / len(values)
    std = statistics.stdev(values) if len(values) > 1 else 0.0
    return {"mean": mean, "std": std, "n": len(values)}


@dataclass
class ReportRecord:
    dataset: str
    method: str
    trials: list
    config: dict
    version: str = __version__

    @property
    def failed(self) -> list:
        return [t for t in self.trials if t.error is not None]

    def summary(self) -> dict:
        return {m: aggregate(_metric_values(self.trials, m)) for m in METRICS}

    def mean(self, metric: str) -> Optional[float]:
        return self.summary()[metric]["mean"]

    def to_dict(self, timings: bool = True) -> dict:
        summary = {
            m: {k: _json_num(v) for k, v in agg.items()} for m, agg in self.summary().items()
        }
        return {
            "dataset": self.dataset,
            "method": self.method,
            "version": self.version,
            "config": self.config,
            "summary": summary,
            "trials": [t.to_dict(timings) for t in self.trials],
        }

    def to_json(self, timings: bool = True) -> str:
        return json.dumps(self.to_dict(timings), indent=1, sort_keys=True)


def _json_num(v):
    if isinstance(v, float) and math.isinf(v):
        return "inf"
    return v


def load_record(path) -> ReportRecord:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    trials = [
        TrialRecord(
            t["trial"], t["seed"],
            None if t["report"] is None else FairnessReport.from_dict(t["report"]),
            t.get("timings", {}), t.get("error"), t.get("extra", {}),
        )
        for t in doc["trials"]
    ]
    return ReportRecord(doc["dataset"], doc["method"], trials, doc["config"], doc.get("version", __version__))


# -- running -----------------------------------------------------------------

def load_experiment_data(cfg: ExperimentConfig):
    schema = load_schema(cfg.schema or cfg.preset.schema)
    return load_dataset(cfg.resolved_path(), schema)


def train_naive(data_split, preset: DatasetPreset, seed: int, epochs: int = 30, weights=None):
    """The accuracy-only reference model for one trial."""
    train_part = data_split.train
    out = 2 if preset.head == "softmax" else 1
    h = preset.hidden
    net = build_network([train_part.n_features, h, h, h, out], preset.head, 0.5, seed)
    tcfg = TrainConfig(max_epochs=epochs, seed=seed, per_sample_weights=weights)
    net, _ = train(net, train_part, tcfg, data_split.validation)
    return net


class _Trial:
    """Artifacts shared by every method within one trial."""

    def __init__(self, cfg: ExperimentConfig, data, index: int):
        self.cfg = cfg
        self.index = index
        self.seed = cfg.master_seed + index
        self.split = split(data, self.seed)
        t0 = time.perf_counter()
        self.naive = train_naive(self.split, cfg.preset, self.seed, cfg.naive_epochs)
        self.naive_time = time.perf_counter() - t0
        self.repair_cfg = cfg.repair.replace(train=dataclasses.replace(cfg.repair.train, seed=self.seed))
        self._path_split = None
        self._path_timings = {}

    def path_split(self):
        if self._path_split is None:
            if self.cfg.grid is not None:
                t0 = time.perf_counter()
                best = tune(self.naive, self.split.train, self.cfg.grid, self.repair_cfg, seed=self.seed,
                            eval_data=self.split.validation)
                self._path_timings["tuning"] = time.perf_counter() - t0
                self.repair_cfg = self.repair_cfg.replace(theta=best.theta, gamma=best.gamma)
            self._path_split = divide_samples(self.naive, self.split.train, self.repair_cfg, self._path_timings)
        return self._path_split

    def run(self, method: str) -> TrialRecord:
        test = self.split.test
        th = self.cfg.thresholds
        timings = {"naive_training": self.naive_time}
        extra = {}
        t0 = time.perf_counter()
        if method == "naive":
            report = evaluate(self.naive, test, th)
        elif method == "fairneuron":
            sp = self.path_split()
            timings.update(self._path_timings)
            t1 = time.perf_counter()
            net = train_on_split(self.naive, self.split.train, sp, self.repair_cfg)
            timings["training"] = time.perf_counter() - t1
            report = evaluate(net, test, th)
            extra = {"n_biased": len(sp.biased), "n_ordinary": len(sp.ordinary), "M": sp.max_frequency,
                     "theta": self.repair_cfg.theta, "gamma": self.repair_cfg.gamma}
        elif method == "random_control":
            sp = random_split_like(self.path_split(), self.split.train.n_rows, self.seed)
            net = train_on_split(self.naive, self.split.train, sp, self.repair_cfg)
            report = evaluate(net, test, th)
            extra = {"n_biased": len(sp.biased)}
        elif method in ("pure_dropout", "pure_ordinary"):
            net = uniform_retrain(self.naive, self.split.train, self.repair_cfg, method == "pure_dropout")
            report = evaluate(net, test, th)
        elif method == "reweighing":
            w = reweigh(self.split.train)
            net = train_naive(self.split, self.cfg.preset, self.seed, self.cfg.naive_epochs, w.weights)
            report = evaluate(net, test, th)
        elif method == "roc":
            fav = self.split.train.favorable_label
            val = self.split.validation
            roc = select_margin(self.naive.positive_score(val.X), val.Y, val.S, favorable_label=fav)
            y_hat = roc_postprocess(self.naive.positive_score(test.X), test.S, roc)
            report = evaluate(None, test, th, y_hat=y_hat)
            extra = {"margin": roc.margin}
        else:
            raise ConfigError(f"unknown method {method!r}")
        timings["method_total"] = time.perf_counter() - t0
        return TrialRecord(self.index, self.seed, report, timings, None, extra)


def _run_trial(cfg, data, index, methods) -> dict:
    seed = cfg.master_seed + index
    try:
        trial = _Trial(cfg, data, index)
    except Exception as exc:
        log.error("trial %d setup failed: %s", index, exc)
        return {m: TrialRecord(index, seed, None, error=f"{type(exc).__name__}: {exc}") for m in methods}
    out = {}
    for m in methods:
        try:
            out[m] = trial.run(m)
        except Exception as exc:
            log.error("trial %d method %s failed: %s", index, m, exc)
            out[m] = TrialRecord(index, seed, None, error=f"{type(exc).__name__}: {exc}")
    return out


def run_comparison(cfg: ExperimentConfig, methods, data=None) -> dict:
    """Run several methods over the same trials; returns ``{method: ReportRecord}``.

    Within a trial every method sees the same split and naive model.
    """
    methods = list(dict.fromkeys(methods))
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise ConfigError(f"unknown methods {bad}")
    data = load_experiment_data(cfg) if data is None else data
    indices = range(cfg.trials)
    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            per_trial = list(pool.map(lambda i: _run_trial(cfg, data, i, methods), indices))
    else:
        per_trial = [_run_trial(cfg, data, i, methods) for i in indices]
    records = {}
    for m in methods:
        echo = dataclasses.replace(cfg, method=m).to_dict()
        records[m] = ReportRecord(cfg.dataset, m, [t[m] for t in per_trial], echo)
    return records


def run_experiment(cfg: ExperimentConfig, data=None) -> ReportRecord:
    return run_comparison(cfg, [cfg.method], data)[cfg.method]


# -- tables ------------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return "n/a"
    if math.isinf(v):
        return "inf"
    return f"{v:.3f}"


def emit_table(records, fmt: str = "text") -> str:
    """Render records as a Dataset/Method table with columns Acc, DP, EO, DPR.

    ``text`` gives an aligned table of means (with sample std); ``csv`` gives
    full-precision means and stds. Records keep the order they are given in.
    """
    if not records:
        raise ValueError("emit_table needs at least one record")
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        header = ["dataset", "method"]
        for m in METRICS:
            header += [f"{m}_mean", f"{m}_std"]
        w.writerow(header)
        for r in records:
            s = r.summary()
            row = [r.dataset, r.method]
            for m in METRICS:
                row += [_csv_num(s[m]["mean"]), _csv_num(s[m]["std"])]
            w.writerow(row)
        return buf.getvalue()
    if fmt != "text":
        raise ValueError("format must be 'text' or 'csv'")
    header = ["Dataset", "Method", "Acc", "DP", "EO", "DPR"]
    rows = [header]
    for r in records:
        s = r.summary()
        cells = [PRESETS[r.dataset].label if r.dataset in PRESETS else r.dataset, r.method]
        for m in METRICS:
            mean, std = s[m]["mean"], s[m]["std"]
            cell = _fmt(mean)
            if std is not None and mean is not None and not math.isinf(mean) and s[m]["n"] > 1:
                cell += f" ±{std:.3f}"
            cells.append(cell)
        rows.append(cells)
    widths = [max(len(row[i]) for row in rows) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def _csv_num(v) -> str:
    if v is None:
        return ""
    if math.isinf(v):
        return "inf"
    return repr(float(v))
