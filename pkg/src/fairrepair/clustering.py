"""Group samples by activation path and split them into ordinary and biased sets."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import SliceParamError
from .slicing import key_digest


@dataclass
class PathEntry:
    edges: np.ndarray
    members: list = field(default_factory=list)

    @property
    def frequency(self) -> int:
        return len(self.members)


@dataclass
class PathTable:
    entries: dict  # canonical key -> PathEntry, ordered by key

    @property
    def max_frequency(self) -> int:
        return max(e.frequency for e in self.entries.values())

    @property
    def n_samples(self) -> int:
        return sum(e.frequency for e in self.entries.values())

    def frequencies(self) -> dict:
        return {k: e.frequency for k, e in self.entries.items()}


@dataclass(frozen=True)
class ClusterParams:
    theta: float = 0.03

    def __post_init__(self):
        if not 0.0 < self.theta <= 1.0:
            raise SliceParamError(f"theta must lie in (0, 1], got {self.theta}")


@dataclass
class SampleSplit:
    ordinary: list
    biased: list
    biased_keys: list
    theta: float = 0.0
    max_frequency: int = 0

    def to_dict(self) -> dict:
        return {
            "biased_path_keys": [key_digest(k) for k in self.biased_keys],
            "ordinary_sample_ids": [int(i) for i in self.ordinary],
            "biased_sample_ids": [int(i) for i in self.biased],
            "theta": self.theta,
            "M": self.max_frequency,
        }


def build_path_table(paths) -> PathTable:
    if not paths:
        raise ValueError("cannot build a path table from an empty path list")
    groups = {}
    for p in paths:
        key = p.canonical_key
        entry = groups.get(key)
        if entry is None:
            entry = groups[key] = PathEntry(p.edges)
        entry.members.append(int(p.sample_id))
    return PathTable({k: groups[k] for k in sorted(groups)})


def get_samples_divided(table: PathTable, params: ClusterParams) -> SampleSplit:
    """Paths with frequency ``<= theta * M`` are biased; their members go to the
    biased list, everything else is ordinary. Sample ids come back sorted.

    Paths that reach the maximum frequency ``M`` define the reference
    behaviour and are never biased, so ``theta = 1`` does not sweep every
    path into the biased set when all frequencies are equal.
    """
    if not table.entries:
        raise ValueError("empty path table")
    m = table.max_frequency
    threshold = params.theta * m
    ordinary, biased, keys = [], [], []
    for key, entry in table.entries.items():
        if entry.frequency <= threshold and entry.frequency < m:
            biased.extend(entry.members)
            keys.append(key)
        else:
            ordinary.extend(entry.members)
    return SampleSplit(sorted(ordinary), sorted(biased), keys, params.theta, m)


def dump_split(split: SampleSplit, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(split.to_dict(), fh, indent=1)
