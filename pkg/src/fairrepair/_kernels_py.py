"""Pure-numpy path extraction; same contract as the compiled ``_kernels``.

Inputs are packed by :func:`fairrepair.slicing.pack_network`:

* ``rel``      (n, total_neurons) relative activations, layers side by side
* ``w_flat``   every weight matrix raveled (C order) and concatenated
* ``w_off``    start of each weight matrix in ``w_flat``
* ``sizes``    neurons per layer
* ``layer_off`` start column of each layer in ``rel``
* ``seeds``    output-neuron index to start from, per sample

Returns ``(edges, offsets)``: int32 rows ``(layer, pre, post)`` for all
samples, each sample's edges sorted lexicographically, and an int64 offset
array of length n + 1.
"""

import numpy as np


def extract_paths(rel, w_flat, w_off, sizes, layer_off, seeds, gamma):
    rel = np.asarray(rel, dtype=np.float64)
    n = rel.shape[0]
    n_layers = len(sizes)
    mats = [
        w_flat[w_off[l]:w_off[l] + sizes[l + 1] * sizes[l]].reshape(sizes[l + 1], sizes[l])
        for l in range(n_layers - 1)
    ]
    chunks = []
    offsets = np.zeros(n + 1, dtype=np.int64)
    for k in range(n):
        row = rel[k]
        acts = [row[layer_off[l]:layer_off[l] + sizes[l]] for l in range(n_layers)]
        edges = _sample_edges(mats, acts, int(seeds[k]), gamma)
        chunks.append(edges)
        offsets[k + 1] = offsets[k] + len(edges)
    if chunks:
        all_edges = np.concatenate(chunks).astype(np.int32)
    else:
        all_edges = np.zeros((0, 3), dtype=np.int32)
    return all_edges.reshape(-1, 3), offsets


def _sample_edges(mats, acts, seed, gamma):
    top = len(acts) - 1
    frontier = np.array([seed], dtype=np.int64)
    parts = []
    for l in range(top, 0, -1):
        v = acts[l][frontier]
        frontier = frontier[v != 0.0]
        if frontier.size == 0:
            break
        target = gamma * np.abs(acts[l][frontier])
        mag = np.abs(acts[l - 1][None, :] * mats[l - 1][frontier, :])
        order = np.argsort(-mag, axis=1, kind="stable")
        sorted_mag = np.take_along_axis(mag, order, axis=1)
        # Running total *before* each candidate, accumulated left to right.
        before = np.zeros_like(sorted_mag)
        np.cumsum(sorted_mag[:, :-1], axis=1, out=before[:, 1:])
        take = before <= target[:, None]
        q_idx, pos = np.nonzero(take)
        pre = order[q_idx, pos]
        post = frontier[q_idx]
        parts.append(np.column_stack([np.full(pre.size, l - 1), pre, post]))
        frontier = np.unique(pre)
    if not parts:
        return np.zeros((0, 3), dtype=np.int64)
    edges = np.vstack(parts)
    order = np.lexsort((edges[:, 2], edges[:, 1], edges[:, 0]))
    return edges[order]
