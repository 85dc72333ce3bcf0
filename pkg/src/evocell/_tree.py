"""Compiled CART kernels for the forest surrogate.

The builder grows one variance-reduction regression tree over binary
(one-hot) features, splitting at the fixed threshold 0.5. Split search at
each node walks a fresh random permutation of the features, stops once
``max_features`` non-constant candidates have been examined and a usable
split exists, and keeps walking while no usable split has been found.
Equal-gain candidates resolve to the lowest feature index so the fitted
tree is a pure function of (data, seed).
"""

from __future__ import annotations

import numpy as np
from numba import njit

LEAF = -1


@njit(cache=True)
def build_tree(X, y, order, min_samples_leaf, max_features, seed):
    """Fit one regression tree; returns (feature, left, right, value) arrays.

    ``order`` holds the (possibly bootstrapped) sample indices this tree
    trains on; it is partitioned in place as nodes split.
    """
    np.random.seed(seed)
    n = order.shape[0]
    p = X.shape[1]
    max_nodes = 2 * n + 1
    feature = np.full(max_nodes, LEAF, np.int64)
    left = np.full(max_nodes, LEAF, np.int64)
    right = np.full(max_nodes, LEAF, np.int64)
    value = np.zeros(max_nodes, np.float64)

    stack_node = np.empty(max_nodes, np.int64)
    stack_lo = np.empty(max_nodes, np.int64)
    stack_hi = np.empty(max_nodes, np.int64)
    n_nodes = 1
    top = 0
    stack_node[0] = 0
    stack_lo[0] = 0
    stack_hi[0] = n

    while top >= 0:
        node = stack_node[top]
        lo = stack_lo[top]
        hi = stack_hi[top]
        top -= 1
        m = hi - lo

        s = 0.0
        sq = 0.0
        for k in range(lo, hi):
            v = y[order[k]]
            s += v
            sq += v * v
        value[node] = s / m
        node_sse = sq - s * s / m
        if node_sse <= 1e-15 or m < 2 * min_samples_leaf:
            continue

        perm = np.random.permutation(p)
        best_gain = -1.0
        best_f = -1
        examined = 0
        for j in range(p):
            if examined >= max_features and best_f >= 0:
                break
            f = perm[j]
            m1 = 0
            s1 = 0.0
            q1 = 0.0
            for k in range(lo, hi):
                i = order[k]
                if X[i, f] > 0.5:
                    m1 += 1
                    s1 += y[i]
                    q1 += y[i] * y[i]
            if m1 == 0 or m1 == m:
                continue  # constant in this node: not a candidate
            examined += 1
            m0 = m - m1
            if m1 < min_samples_leaf or m0 < min_samples_leaf:
                continue
            s0 = s - s1
            q0 = sq - q1
            gain = node_sse - (q0 - s0 * s0 / m0) - (q1 - s1 * s1 / m1)
            if gain < 0.0:
                gain = 0.0
            if gain > best_gain or (gain == best_gain and f < best_f):
                best_gain = gain
                best_f = f
        if best_f < 0:
            continue

        mid = lo
        for k in range(lo, hi):
            if X[order[k], best_f] <= 0.5:
                tmp = order[mid]
                order[mid] = order[k]
                order[k] = tmp
                mid += 1
        feature[node] = best_f
        lc = n_nodes
        rc = n_nodes + 1
        n_nodes += 2
        left[node] = lc
        right[node] = rc
        top += 1
        stack_node[top] = lc
        stack_lo[top] = lo
        stack_hi[top] = mid
        top += 1
        stack_node[top] = rc
        stack_lo[top] = mid
        stack_hi[top] = hi

    return feature[:n_nodes], left[:n_nodes], right[:n_nodes], value[:n_nodes]


@njit(cache=True)
def predict_tree(X, feature, left, right, value, out):
    """Accumulate this tree's predictions for every row of X into ``out``."""
    for i in range(X.shape[0]):
        node = 0
        while feature[node] != LEAF:
            if X[i, feature[node]] <= 0.5:
                node = left[node]
            else:
                node = right[node]
        out[i] += value[node]
