"""Activation-path slicing of a dense network.

Each sample's path is found by walking backwards from a seed output neuron.
At every frontier neuron ``q`` with relative activation ``v_q`` the
predecessors are ranked by ``|rel(n) * w(n -> q)|`` (ties: lower index first)
and taken greedily while the running sum of magnitudes is still
``<= gamma * |v_q|``. Selected predecessors form the next frontier; a neuron
reached from several successors is expanded once. Neurons with ``v_q == 0``
contribute no edges. Biases never appear in paths.

The per-sample walk runs in the compiled ``_kernels`` extension when it is
importable, otherwise in the numpy fallback ``_kernels_py``. Setting
``FAIRREPAIR_PURE_PYTHON=1`` forces the fallback.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels_py
from .errors import InputShapeError, SliceParamError
from .nn import Network, forward_batch_post

try:
    if os.environ.get("FAIRREPAIR_PURE_PYTHON"):
        raise ImportError("pure-Python backend requested")
    from . import _kernels as _compiled
except ImportError:
    _compiled = None

BACKENDS = {"python": _kernels_py}
if _compiled is not None:
    BACKENDS["cython"] = _compiled
DEFAULT_BACKEND = "cython" if _compiled is not None else "python"


def get_backend(name: Optional[str] = None):
    name = name or DEFAULT_BACKEND
    if name not in BACKENDS:
        raise ValueError(f"backend {name!r} unavailable (have {sorted(BACKENDS)})")
    return BACKENDS[name]


@dataclass(frozen=True)
class SliceParams:
    gamma: float = 0.8
    # "argmax" seeds from the predicted output neuron, "label" from the true class.
    seed_neuron: str = "argmax"

    def __post_init__(self):
        if not (0.0 < self.gamma <= 1.0) or math.isnan(self.gamma):
            raise SliceParamError(f"gamma must lie in (0, 1], got {self.gamma}")
        if self.seed_neuron not in ("argmax", "label"):
            raise SliceParamError("seed_neuron must be 'argmax' or 'label'")


@dataclass
class ActivationProfile:
    means: list  # one array per layer, input layer included

    def __post_init__(self):
        if not all(np.isfinite(m).all() for m in self.means):
            raise InputShapeError("activation profile must be finite")

    @classmethod
    def zeros(cls, net: Network) -> "ActivationProfile":
        return cls([np.zeros(s) for s in net.config.layer_sizes])

    def check(self, net: Network):
        if [len(m) for m in self.means] != net.config.layer_sizes:
            raise InputShapeError("profile shape does not match the network")


@dataclass
class ActivationPath:
    """Edges are int32 rows ``(layer, pre, post)`` in lexicographic order;
    ``layer`` indexes the pre-synaptic layer."""

    edges: np.ndarray
    sample_id: int = -1

    @property
    def canonical_key(self) -> bytes:
        return np.ascontiguousarray(self.edges, dtype=np.int32).tobytes()

    @property
    def edge_set(self) -> frozenset:
        return frozenset(map(tuple, self.edges.tolist()))

    def __len__(self):
        return len(self.edges)


def key_digest(key: bytes) -> str:
    return hashlib.sha1(key).hexdigest()


def profile_averages(net: Network, X) -> ActivationProfile:
    """Per-neuron mean post-activation over ``X`` (dropout bypassed).

    Each mean is computed from exact ``math.fsum`` sums plus one residual
    correction, so it does not depend on row order or chunking.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise InputShapeError("profile needs a non-empty 2-d sample matrix")
    n = X.shape[0]
    post = forward_batch_post(net, X)
    means = [np.array([_exact_mean(col, n) for col in a.T]) for a in post]
    return ActivationProfile(means)


def _exact_mean(col, n) -> float:
    q = math.fsum(col) / n
    # residual sum(col) - n*q, summed exactly, refines the rounded quotient
    residual = math.fsum(np.concatenate([col, np.full(n, -q)]))
    return q + residual / n


def relative_activations(trace, profile: ActivationProfile) -> list:
    """``post - profile`` per layer for a ForwardTrace (or a list of layer arrays)."""
    post = trace.post if hasattr(trace, "post") else trace
    if [len(a) for a in post] != [len(m) for m in profile.means]:
        raise InputShapeError("trace and profile shapes differ")
    return [np.asarray(a) - m for a, m in zip(post, profile.means)]


def pack_network(net: Network):
    sizes = np.array(net.config.layer_sizes, dtype=np.int32)
    w_flat = np.concatenate([w.ravel() for w in net.weights])
    w_off = np.zeros(len(net.weights), dtype=np.int64)
    np.cumsum([w.size for w in net.weights[:-1]], out=w_off[1:])
    layer_off = np.zeros(len(sizes), dtype=np.int64)
    np.cumsum(sizes[:-1], out=layer_off[1:])
    return w_flat, w_off, sizes, layer_off


def _seeds(net: Network, out_post, labels, params: SliceParams):
    if net.head == "linear":
        return np.zeros(out_post.shape[0], dtype=np.int64)
    if params.seed_neuron == "label":
        if labels is None:
            raise SliceParamError("seed_neuron='label' needs labels")
        return np.asarray(labels, dtype=np.int64)
    return np.argmax(out_post, axis=1).astype(np.int64)


def _relative_matrix(net: Network, X, profile: ActivationProfile):
    post = forward_batch_post(net, X)
    rel = np.hstack([a - m for a, m in zip(post, profile.means)])
    return rel, post[-1]


def _split_paths(edges, offsets, start_id=0):
    return [
        ActivationPath(edges[offsets[k]:offsets[k + 1]], start_id + k)
        for k in range(len(offsets) - 1)
    ]


def get_activation_path(net: Network, sample, params: SliceParams, profile: ActivationProfile,
                        label=None, backend=None) -> ActivationPath:
    profile.check(net)
    x = np.asarray(sample, dtype=np.float64)
    if x.ndim != 1:
        raise InputShapeError("get_activation_path takes a single sample vector")
    rel, out = _relative_matrix(net, x[None, :], profile)
    seeds = _seeds(net, out, None if label is None else [label], params)
    edges, offsets = get_backend(backend).extract_paths(rel, *pack_network(net), seeds, params.gamma)
    return _split_paths(edges, offsets)[0]


def slice_dataset(net: Network, data, params: SliceParams, profile: Optional[ActivationProfile] = None,
                  workers: int = 1, chunk_size: int = 2048, backend=None) -> list:
    """One ActivationPath per row of ``data`` (tagged with its row index).

    ``profile`` defaults to the averages over ``data`` itself. With
    ``workers > 1`` chunks are sliced on a thread pool; results are returned
    in row order and are identical to the sequential run.
    """
    X = np.asarray(data.X if hasattr(data, "X") else data, dtype=np.float64)
    labels = getattr(data, "Y", None)
    if profile is None:
        profile = profile_averages(net, X)
    profile.check(net)
    packed = pack_network(net)
    kernel = get_backend(backend)
    n = X.shape[0]

    def run(start):
        stop = min(start + chunk_size, n)
        rel, out = _relative_matrix(net, X[start:stop], profile)
        lab = None if labels is None else labels[start:stop]
        seeds = _seeds(net, out, lab, params)
        edges, offsets = kernel.extract_paths(rel, *packed, seeds, params.gamma)
        return _split_paths(edges, offsets, start)

    starts = range(0, n, chunk_size)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(run, starts))
    else:
        chunks = [run(s) for s in starts]
    return [p for chunk in chunks for p in chunk]


def dump_paths(paths, path) -> None:
    """JSON lines: ``{"sample_id", "canonical_key", "edges": [[l, pre, post], ...]}``.

    ``canonical_key`` in the dump is the SHA-1 hex digest of the packed edge
    list; equal digests mean equal edge sets.
    """
    with open(path, "w", encoding="utf-8") as fh:
        for p in paths:
            rec = {"sample_id": int(p.sample_id), "canonical_key": key_digest(p.canonical_key),
                   "edges": p.edges.tolist()}
            fh.write(json.dumps(rec) + "\n")


def load_paths(path) -> list:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                edges = np.array(rec["edges"], dtype=np.int32).reshape(-1, 3)
                out.append(ActivationPath(edges, rec["sample_id"]))
    return out
