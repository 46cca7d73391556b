# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
# distutils: language = c++
"""Compiled activation-path extraction. See ``_kernels_py`` for the contract."""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs
from libc.stdlib cimport qsort
from libcpp.vector cimport vector

cnp.import_array()


cdef struct Contrib:
    double mag
    int idx


cdef struct Edge:
    int layer
    int pre
    int post


cdef int _by_magnitude(const void* a, const void* b) noexcept nogil:
    cdef const Contrib* x = <const Contrib*>a
    cdef const Contrib* y = <const Contrib*>b
    if x.mag > y.mag:
        return -1
    if x.mag < y.mag:
        return 1
    return x.idx - y.idx


cdef int _by_edge(const void* a, const void* b) noexcept nogil:
    cdef const Edge* x = <const Edge*>a
    cdef const Edge* y = <const Edge*>b
    if x.layer != y.layer:
        return x.layer - y.layer
    if x.pre != y.pre:
        return x.pre - y.pre
    return x.post - y.post


cdef void _sample_edges(
    const double* row,
    const double* w_flat,
    const long long* w_off,
    const int* sizes,
    const long long* layer_off,
    int n_layers,
    int seed,
    double gamma,
    vector[Edge]& out,
    vector[Contrib]& scratch,
    vector[char]& in_front,
    vector[char]& in_next,
) noexcept nogil:
    cdef int l, q, i, k, n_prev, n_cur
    cdef double v, target, total, w
    cdef const double* prev_act
    cdef const double* wrow
    cdef Edge e
    cdef size_t start = out.size()

    for i in range(in_front.size()):
        in_front[i] = 0
    in_front[seed] = 1
    for l in range(n_layers - 1, 0, -1):
        n_cur = sizes[l]
        n_prev = sizes[l - 1]
        prev_act = row + layer_off[l - 1]
        for i in range(n_prev):
            in_next[i] = 0
        for q in range(n_cur):
            if not in_front[q]:
                continue
            v = row[layer_off[l] + q]
            if v == 0.0:
                continue
            target = gamma * fabs(v)
            wrow = w_flat + w_off[l - 1] + <long long>q * n_prev
            for i in range(n_prev):
                scratch[i].mag = fabs(prev_act[i] * wrow[i])
                scratch[i].idx = i
            qsort(&scratch[0], n_prev, sizeof(Contrib), _by_magnitude)
            total = 0.0
            for k in range(n_prev):
                if total <= target:
                    e.layer = l - 1
                    e.pre = scratch[k].idx
                    e.post = q
                    out.push_back(e)
                    in_next[e.pre] = 1
                    total = total + scratch[k].mag
                else:
                    break
        for i in range(n_prev):
            in_front[i] = in_next[i]
    if out.size() > start:
        qsort(&out[start], out.size() - start, sizeof(Edge), _by_edge)


def extract_paths(rel, w_flat, w_off, sizes, layer_off, seeds, double gamma):
    cdef double[:, ::1] rel_v = np.ascontiguousarray(rel, dtype=np.float64)
    cdef double[::1] w_v = np.ascontiguousarray(w_flat, dtype=np.float64)
    cdef long long[::1] woff_v = np.ascontiguousarray(w_off, dtype=np.int64)
    cdef int[::1] sizes_v = np.ascontiguousarray(sizes, dtype=np.int32)
    cdef long long[::1] loff_v = np.ascontiguousarray(layer_off, dtype=np.int64)
    cdef long long[::1] seeds_v = np.ascontiguousarray(seeds, dtype=np.int64)
    cdef Py_ssize_t n = rel_v.shape[0]
    cdef int n_layers = sizes_v.shape[0]
    cdef int widest = 0
    cdef Py_ssize_t k
    for k in range(n_layers):
        if sizes_v[k] > widest:
            widest = sizes_v[k]

    cdef vector[Edge] out
    cdef vector[Contrib] scratch
    cdef vector[char] in_front
    cdef vector[char] in_next
    scratch.resize(widest)
    in_front.resize(widest)
    in_next.resize(widest)
    offsets = np.zeros(n + 1, dtype=np.int64)
    cdef long long[::1] off_v = offsets

    with nogil:
        for k in range(n):
            _sample_edges(&rel_v[k, 0], &w_v[0], &woff_v[0], &sizes_v[0], &loff_v[0],
                          n_layers, <int>seeds_v[k], gamma, out, scratch, in_front, in_next)
            off_v[k + 1] = out.size()

    edges = np.empty((out.size(), 3), dtype=np.int32)
    cdef int[:, ::1] ev = edges
    cdef size_t j
    for j in range(out.size()):
        ev[j, 0] = out[j].layer
        ev[j, 1] = out[j].pre
        ev[j, 2] = out[j].post
    return edges, offsets
