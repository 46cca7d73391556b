"""Reference fixers used for comparison runs.

* ``reweigh`` (pre-processing): each training row gets the weight
  ``P(S=s) P(Y=y) / P(S=s, Y=y)`` of its (S, Y) cell, which makes S and Y
  independent under the weighted empirical distribution.
* ``roc_postprocess`` (post-processing, reject-option classification):
  predictions whose positive-class score falls inside the band
  ``[0.5 - m, 0.5 + m]`` are overridden in favour of the disadvantaged group.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, DegenerateCellError
from .metrics import PredictionSet, accuracy, demographic_parity

DEFAULT_MARGINS = tuple(round(0.01 * k, 2) for k in range(50))


@dataclass
class SampleWeights:
    weights: np.ndarray
    # (s, y) -> weight of that cell
    cell_weights: dict

    def __len__(self):
        return len(self.weights)


def reweigh(data) -> SampleWeights:
    s = np.asarray(data.S, dtype=np.int64)
    y = np.asarray(data.Y, dtype=np.int64)
    n = len(y)
    if n == 0:
        raise DegenerateCellError((0, 0))
    cells = {}
    for sv in (0, 1):
        for yv in (0, 1):
            n_cell = int(((s == sv) & (y == yv)).sum())
            if n_cell == 0:
                raise DegenerateCellError((sv, yv))
            p_s = (s == sv).sum() / n
            p_y = (y == yv).sum() / n
            cells[(sv, yv)] = float(p_s * p_y / (n_cell / n))
    w = np.empty(n, dtype=np.float64)
    for (sv, yv), cw in cells.items():
        w[(s == sv) & (y == yv)] = cw
    # Exact weights already average to one; rescaling only removes rounding.
    w /= w.mean()
    return SampleWeights(w, cells)


@dataclass(frozen=True)
class ROCConfig:
    margin: float = 0.1
    # The label that counts as the favourable outcome; the band hands it to S=1.
    favorable_label: int = 1

    def __post_init__(self):
        if not 0.0 <= self.margin < 0.5:
            raise ConfigError(f"ROC margin must lie in [0, 0.5), got {self.margin}")
        if self.favorable_label not in (0, 1):
            raise ConfigError("favorable_label must be 0 or 1")


def roc_postprocess(scores, s, cfg: ROCConfig) -> np.ndarray:
    """Threshold at 0.5 outside the band; inside it S=1 gets the favourable
    label and S=0 the unfavourable one."""
    scores = np.asarray(scores, dtype=np.float64)
    s = np.asarray(s, dtype=np.int64)
    if scores.shape != s.shape:
        raise ValueError("scores and s must have the same shape")
    if ((scores < 0) | (scores > 1)).any():
        raise ValueError("scores must lie in [0, 1]")
    y_hat = (scores > 0.5).astype(np.int64)
    if cfg.margin > 0:
        band = np.abs(scores - 0.5) <= cfg.margin
        fav = cfg.favorable_label
        y_hat[band] = np.where(s[band] == 1, fav, 1 - fav)
    return y_hat


def select_margin(scores, y, s, margins: Sequence[float] = DEFAULT_MARGINS, max_acc_drop: float = 0.05,
                  favorable_label: int = 1) -> ROCConfig:
    """Smallest margin minimising DP among those that lose at most
    ``max_acc_drop`` accuracy relative to the plain 0.5 threshold."""
    y = np.asarray(y)
    base = accuracy(PredictionSet(roc_postprocess(scores, s, ROCConfig(0.0, favorable_label)), y, s))
    best: Optional[tuple] = None
    for m in sorted(margins):
        cfg = ROCConfig(m, favorable_label)
        p = PredictionSet(roc_postprocess(scores, s, cfg), y, s)
        if accuracy(p) < base - max_acc_drop:
            continue
        dp = demographic_parity(p)
        if best is None or dp < best[0]:
            best = (dp, cfg)
    return best[1] if best is not None else ROCConfig(0.0, favorable_label)
