"""Compiled CART regression kernels: split search, breadth-first growth, routing."""

from __future__ import annotations

import numba
import numpy as np


@numba.njit(cache=True)
def _splitmix_next(state):
    # splitmix64; state is a length-1 uint64 array
    state[0] = state[0] + np.uint64(0x9E3779B97F4A7C15)
    z = state[0]
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@numba.njit(cache=True)
def _shuffled_features(n_features, state):
    order = np.arange(n_features)
    for i in range(n_features - 1, 0, -1):
        j = np.int64(_splitmix_next(state) % np.uint64(i + 1))
        order[i], order[j] = order[j], order[i]
    return order


@numba.njit(cache=True)
def _best_split_on_feature(X, y, idx, feature, parent_mean):
    """Best midpoint threshold on one feature. Returns (gain, threshold, n_left); gain < 0 if none."""
    n = idx.shape[0]
    vals = np.empty(n)
    for i in range(n):
        vals[i] = X[idx[i], feature]
    order = np.argsort(vals, kind="mergesort")
    total = 0.0
    for i in range(n):
        total += y[idx[i]] - parent_mean
    best_gain, best_thr, best_left = -1.0, 0.0, 0
    left_sum = 0.0
    for i in range(n - 1):
        left_sum += y[idx[order[i]]] - parent_mean
        a = vals[order[i]]
        b = vals[order[i + 1]]
        if not b > a:
            continue
        n_l = i + 1
        n_r = n - n_l
        right_sum = total - left_sum
        # SSE(parent) - SSE(left) - SSE(right), on targets centred at the parent mean
        gain = left_sum * left_sum / n_l + right_sum * right_sum / n_r - total * total / n
        if gain > best_gain:
            thr = 0.5 * (a + b)
            if thr >= b:  # a and b adjacent doubles
                thr = a
            best_gain, best_thr, best_left = gain, thr, n_l
    return best_gain, best_thr, best_left


@numba.njit(cache=True)
def grow_tree(X, y, sample_idx, max_depth, min_node_size, features_per_split, seed):
    """Grow a CART regression tree breadth-first; node ids follow creation order.

    ``max_depth < 0`` means unlimited. A node becomes a leaf when it is at
    ``max_depth``, holds fewer than ``min_node_size`` samples, has constant
    targets, or has no feature with two distinct values. Per node a random
    order of the features is drawn; the first ``features_per_split`` are
    searched, and further ones only if none of those admits a split.

    Returns (feature, threshold, left, right, value, n_samples, depth).
    """
    n_features = X.shape[1]
    cap = 2 * sample_idx.shape[0] + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap)
    count = np.zeros(cap, dtype=np.int64)
    depth = np.zeros(cap, dtype=np.int64)
    state = np.empty(1, dtype=np.uint64)
    state[0] = seed

    # node sample sets live in one buffer; each node owns a contiguous slice
    buf = sample_idx.copy()
    start = np.zeros(cap, dtype=np.int64)
    stop = np.zeros(cap, dtype=np.int64)
    stop[0] = buf.shape[0]
    n_nodes = 1
    head = 0
    while head < n_nodes:
        node = head
        head += 1
        idx = buf[start[node]:stop[node]]
        n = idx.shape[0]
        s = 0.0
        lo, hi = np.inf, -np.inf
        for i in range(n):
            v = y[idx[i]]
            s += v
            lo = min(lo, v)
            hi = max(hi, v)
        mean = s / n
        value[node] = mean
        count[node] = n
        if (max_depth >= 0 and depth[node] >= max_depth) or n < min_node_size or n < 2 or hi == lo:
            continue
        order = _shuffled_features(n_features, state)
        best_gain, best_f, best_thr = -1.0, -1, 0.0
        for rank in range(n_features):
            if rank >= features_per_split and best_f >= 0:
                break
            f = order[rank]
            gain, thr, _ = _best_split_on_feature(X, y, idx, f, mean)
            if gain > best_gain or (gain == best_gain and gain >= 0 and f < best_f):
                best_gain, best_f, best_thr = gain, f, thr
        if best_f < 0:
            continue
        # stable partition of the node slice by the chosen split
        tmp = np.empty(n, dtype=idx.dtype)
        n_l = 0
        for i in range(n):
            if X[idx[i], best_f] <= best_thr:
                tmp[n_l] = idx[i]
                n_l += 1
        k = n_l
        for i in range(n):
            if not X[idx[i], best_f] <= best_thr:
                tmp[k] = idx[i]
                k += 1
        buf[start[node]:stop[node]] = tmp
        feature[node] = best_f
        threshold[node] = best_thr
        for child, a, b in ((n_nodes, start[node], start[node] + n_l),
                            (n_nodes + 1, start[node] + n_l, stop[node])):
            start[child] = a
            stop[child] = b
            depth[child] = depth[node] + 1
        left[node] = n_nodes
        right[node] = n_nodes + 1
        n_nodes += 2
    return (feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes],
            value[:n_nodes], count[:n_nodes], depth[:n_nodes])


@numba.njit(cache=True)
def route(X, feature, threshold, left, right, value):
    """Leaf value for each row of X; "left if x[feature] <= threshold"."""
    out = np.empty(X.shape[0])
    for i in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]
    return out


@numba.njit(cache=True)
def route_mean(X, roots, feature, threshold, left, right, value):
    """Mean leaf value over several trees packed into shared arrays.

    ``roots[b]`` is the index of tree b's root; child indices are absolute.
    Tree predictions are summed in tree order, then divided by the count.
    """
    out = np.empty(X.shape[0])
    for i in range(X.shape[0]):
        total = 0.0
        for b in range(roots.shape[0]):
            node = roots[b]
            while feature[node] >= 0:
                if X[i, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            total += value[node]
        out[i] = total / roots.shape[0]
    return out
