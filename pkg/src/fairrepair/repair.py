"""Selective-dropout retraining and the end-to-end repair pipeline.

The pipeline profiles the biased network, slices every training sample to
an activation path, splits samples into ordinary and biased groups by path
frequency, and continues training the network: dropout off on ordinary
samples, dropout on for biased samples.
"""

from __future__ import annotations

import dataclasses
import logging
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .clustering import ClusterParams, SampleSplit, build_path_table, get_samples_divided
from .errors import ConfigError, StageError
from .metrics import FairnessReport, FairnessThresholds, evaluate
from .nn import Adam, Network, TrainConfig, data_targets, fit_pass
from .slicing import SliceParams, profile_averages, slice_dataset

log = logging.getLogger(__name__)

INTERLEAVE_MODES = ("epoch_alternating", "block_sequential")


@dataclass
class RepairConfig:
    theta: float = 0.03
    gamma: float = 0.8
    dropout_rate: float = 0.5
    retrain_epochs: int = 20
    train: TrainConfig = field(default_factory=TrainConfig)
    interleave: str = "epoch_alternating"
    seed_neuron: str = "argmax"
    slice_workers: int = 1

    def __post_init__(self):
        ClusterParams(self.theta)
        SliceParams(self.gamma, self.seed_neuron)
        if self.retrain_epochs < 1:
            raise ConfigError("retrain_epochs must be at least 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError("dropout_rate must lie in [0, 1)")
        if self.interleave not in INTERLEAVE_MODES:
            raise ConfigError(f"interleave must be one of {INTERLEAVE_MODES}")

    def replace(self, **changes) -> "RepairConfig":
        return dataclasses.replace(self, **changes)


@dataclass
class RepairOutcome:
    network: Network
    before: Optional[FairnessReport]
    after: Optional[FairnessReport]
    split: SampleSplit
    timings: dict
    total_time: float

    def to_dict(self) -> dict:
        return {
            "before": None if self.before is None else self.before.to_dict(),
            "after": None if self.after is None else self.after.to_dict(),
            "split": {
                "n_ordinary": len(self.split.ordinary),
                "n_biased": len(self.split.biased),
                "n_biased_paths": len(self.split.biased_keys),
                "theta": self.split.theta,
                "M": self.split.max_frequency,
            },
            "timings": dict(self.timings),
            "total_time": self.total_time,
        }


def _with_dropout_rate(net: Network, rate: float) -> Network:
    net = net.copy()
    net.config = dataclasses.replace(net.config, dropout_rate=rate)
    return net


def selective_train(net: Network, ordinary, biased, cfg: RepairConfig) -> Network:
    """Continue training a copy of ``net``.

    ``epoch_alternating``: each epoch makes one pass over ``ordinary`` with
    dropout off, then one over ``biased`` with dropout on.
    ``block_sequential``: all ordinary epochs first, then all biased epochs.
    Adam moments start fresh and persist across passes; the learning rate is
    held at ``cfg.train.learning_rate``. Shuffling and dropout masks are both
    derived from ``cfg.train.seed``, so the result does not depend on the
    generator state the input network carries.
    """
    n_ord = 0 if ordinary is None else ordinary.X.shape[0]
    n_bias = 0 if biased is None else biased.X.shape[0]
    if n_ord + n_bias == 0:
        raise ValueError("selective_train needs at least one sample")
    if n_bias == 0:
        log.warning("biased set is empty; selective training reduces to ordinary fine-tuning")
    net = _with_dropout_rate(net, cfg.dropout_rate)
    net.rng = np.random.default_rng([cfg.train.seed, 1])
    opt = Adam(net, cfg.train)
    shuffle_rng = np.random.default_rng(cfg.train.seed)
    bs = cfg.train.batch_size

    def pass_over(data, dropout, epoch):
        if data is None or data.X.shape[0] == 0:
            return
        fit_pass(net, opt, np.asarray(data.X, dtype=np.float64), data_targets(net, data),
                 None, bs, shuffle_rng, dropout, epoch)

    if cfg.interleave == "epoch_alternating":
        for epoch in range(cfg.retrain_epochs):
            pass_over(ordinary, False, epoch)
            pass_over(biased, True, epoch)
    else:
        for epoch in range(cfg.retrain_epochs):
            pass_over(ordinary, False, epoch)
        for epoch in range(cfg.retrain_epochs):
            pass_over(biased, True, epoch)
    net.dropout_enabled = False
    return net


def divide_samples(net: Network, train_data, cfg: RepairConfig, timings: Optional[dict] = None):
    """Slice and cluster ``train_data``; returns a SampleSplit of row positions."""
    timings = {} if timings is None else timings
    t0 = time.perf_counter()
    try:
        params = SliceParams(cfg.gamma, cfg.seed_neuron)
        profile = profile_averages(net, train_data.X)
        paths = slice_dataset(net, train_data, params, profile, workers=cfg.slice_workers)
    except Exception as exc:
        raise StageError("slicing", exc) from exc
    t1 = time.perf_counter()
    try:
        table = build_path_table(paths)
        split = get_samples_divided(table, ClusterParams(cfg.theta))
    except Exception as exc:
        raise StageError("clustering", exc) from exc
    t2 = time.perf_counter()
    timings["slicing"] = t1 - t0
    timings["clustering"] = t2 - t1
    return split


def train_on_split(net: Network, train_data, split: SampleSplit, cfg: RepairConfig) -> Network:
    ordinary = train_data.subset(split.ordinary)
    biased = train_data.subset(split.biased)
    try:
        return selective_train(net, ordinary, biased, cfg)
    except Exception as exc:
        raise StageError("training", exc) from exc


def fairneuron_repair(net: Network, train_data, cfg: Optional[RepairConfig] = None, eval_data=None,
                      thresholds: Optional[FairnessThresholds] = None) -> RepairOutcome:
    """Repair ``net`` (left untouched) and report fairness before and after on ``eval_data``."""
    cfg = cfg or RepairConfig()
    start = time.perf_counter()
    timings = {}
    split = divide_samples(net, train_data, cfg, timings)
    t0 = time.perf_counter()
    repaired = train_on_split(net, train_data, split, cfg)
    timings["training"] = time.perf_counter() - t0
    before = after = None
    if eval_data is not None:
        t0 = time.perf_counter()
        before = evaluate(net, eval_data, thresholds)
        after = evaluate(repaired, eval_data, thresholds)
        timings["evaluation"] = time.perf_counter() - t0
    return RepairOutcome(repaired, before, after, split, timings, time.perf_counter() - start)


def random_split_like(split: SampleSplit, n_rows: int, seed) -> SampleSplit:
    """A split with the same number of biased samples, drawn uniformly at random."""
    rng = np.random.default_rng(seed)
    biased = np.sort(rng.choice(n_rows, size=len(split.biased), replace=False))
    mask = np.ones(n_rows, dtype=bool)
    mask[biased] = False
    return SampleSplit(np.flatnonzero(mask).tolist(), biased.tolist(), [], split.theta, split.max_frequency)


def uniform_retrain(net: Network, train_data, cfg: RepairConfig, dropout: bool) -> Network:
    """Continue training on every sample with dropout uniformly on or off."""
    if dropout:
        return selective_train(net, None, train_data, cfg)
    return selective_train(net, train_data, None, cfg)
