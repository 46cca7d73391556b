"""Accuracy and group-fairness metrics: DP, DPR and EO.

``S = 1`` marks the disadvantaged group, ``S = 0`` the privileged one, and
``y_hat = 1`` is the favourable outcome.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import UndefinedGroupError


@dataclass
class PredictionSet:
    y_hat: np.ndarray
    y: np.ndarray
    s: np.ndarray

    def __post_init__(self):
        self.y_hat = np.asarray(self.y_hat, dtype=np.int64)
        self.y = np.asarray(self.y, dtype=np.int64)
        self.s = np.asarray(self.s, dtype=np.int64)
        if not (self.y_hat.shape == self.y.shape == self.s.shape) or self.y.ndim != 1:
            raise ValueError("y_hat, y and s must be 1-d vectors of equal length")
        for name in ("y_hat", "y", "s"):
            if not np.isin(getattr(self, name), (0, 1)).all():
                raise ValueError(f"{name} must be binary")


@dataclass
class FairnessThresholds:
    epsilon: float = 0.1
    tau: float = 0.8
    nu: float = 0.1

    def __post_init__(self):
        for name in ("epsilon", "tau", "nu"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"threshold {name} must lie in [0, 1], got {v}")


def _positive_rate(p: PredictionSet, group: int, metric: str) -> float:
    mask = p.s == group
    n = int(mask.sum())
    if n == 0:
        raise UndefinedGroupError(f"{metric}: group S={group} is empty", metric)
    return float(p.y_hat[mask].sum()) / n


def _tpr(p: PredictionSet, group: int, metric: str) -> float:
    mask = (p.s == group) & (p.y == 1)
    n = int(mask.sum())
    if n == 0:
        raise UndefinedGroupError(f"{metric}: group S={group} has no Y=1 rows", metric)
    return float(p.y_hat[mask].sum()) / n


def demographic_parity(p: PredictionSet) -> float:
    return abs(_positive_rate(p, 0, "dp") - _positive_rate(p, 1, "dp"))


def demographic_parity_ratio(p: PredictionSet) -> float:
    """P(y_hat=1 | S=1) / P(y_hat=1 | S=0).

    Returns ``math.inf`` when only the privileged rate is zero and 1.0 when
    both rates are zero.
    """
    r0 = _positive_rate(p, 0, "dpr")
    r1 = _positive_rate(p, 1, "dpr")
    if r0 == 0.0:
        return 1.0 if r1 == 0.0 else math.inf
    return r1 / r0


def equal_opportunity(p: PredictionSet) -> float:
    return abs(_tpr(p, 0, "eo") - _tpr(p, 1, "eo"))


def accuracy(p: PredictionSet) -> float:
    if len(p.y) == 0:
        return math.nan
    return float((p.y_hat == p.y).mean())


@dataclass
class FairnessReport:
    acc: float
    dp: Optional[float]
    dpr: Optional[float]
    eo: Optional[float]
    group_positive_rates: dict = field(default_factory=dict)
    group_tprs: dict = field(default_factory=dict)
    # "s{S}_y{Y}" -> row count
    counts: dict = field(default_factory=dict)
    passes: dict = field(default_factory=dict)
    errors: dict = field(default_factory=dict)

    @property
    def dpr_is_inf(self) -> bool:
        return self.dpr is not None and math.isinf(self.dpr)

    def to_dict(self) -> dict:
        return {
            "acc": self.acc,
            "dp": self.dp,
            "dpr": None if self.dpr_is_inf else self.dpr,
            "dpr_is_inf": self.dpr_is_inf,
            "eo": self.eo,
            "group_stats": {
                "positive_rate": self.group_positive_rates,
                "tpr": self.group_tprs,
                "counts": self.counts,
            },
            "passes": self.passes,
            "errors": self.errors,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "FairnessReport":
        dpr = math.inf if doc.get("dpr_is_inf") else doc.get("dpr")
        stats = doc.get("group_stats", {})
        return cls(
            acc=doc["acc"],
            dp=doc.get("dp"),
            dpr=dpr,
            eo=doc.get("eo"),
            group_positive_rates=stats.get("positive_rate", {}),
            group_tprs=stats.get("tpr", {}),
            counts=stats.get("counts", {}),
            passes=doc.get("passes", {}),
            errors=doc.get("errors", {}),
        )


def report_from_predictions(p: PredictionSet, thresholds: Optional[FairnessThresholds] = None) -> FairnessReport:
    """Compute every metric; a metric whose group is undefined is recorded
    under ``errors`` and left as None while the others are still filled in."""
    thresholds = thresholds or FairnessThresholds()
    rep = FairnessReport(acc=accuracy(p), dp=None, dpr=None, eo=None)
    for s in (0, 1):
        for y in (0, 1):
            rep.counts[f"s{s}_y{y}"] = int(((p.s == s) & (p.y == y)).sum())
        gm = p.s == s
        if gm.any():
            rep.group_positive_rates[f"s{s}"] = float(p.y_hat[gm].mean())
        pm = gm & (p.y == 1)
        if pm.any():
            rep.group_tprs[f"s{s}"] = float(p.y_hat[pm].mean())
    for name, fn in (("dp", demographic_parity), ("dpr", demographic_parity_ratio), ("eo", equal_opportunity)):
        try:
            setattr(rep, name, fn(p))
        except UndefinedGroupError as exc:
            rep.errors[name] = str(exc)
    if rep.dp is not None:
        rep.passes["dp"] = rep.dp <= thresholds.epsilon
    if rep.dpr is not None:
        rep.passes["dpr"] = rep.dpr >= thresholds.tau
    if rep.eo is not None:
        rep.passes["eo"] = rep.eo <= thresholds.nu
    return rep


def evaluate(net, data, thresholds: Optional[FairnessThresholds] = None, y_hat=None) -> FairnessReport:
    """Evaluate ``net`` on an encoded dataset (or score precomputed ``y_hat``)."""
    if y_hat is None:
        y_hat = net.predict(data.X)
    return report_from_predictions(PredictionSet(y_hat, data.Y, data.S), thresholds)
