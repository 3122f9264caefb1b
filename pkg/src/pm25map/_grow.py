"""Numba kernels for CART growth and traversal.

The grower is a single iterative routine shared by the two split modes:
best-of-subset threshold scanning (random forest) and uniform random
thresholds (extra trees). All randomness comes from an xorshift64* stream
seeded per tree, so results are bit-identical regardless of how trees are
scheduled across threads.
"""

from __future__ import annotations

import numpy as np
from numba import njit, types

SPLIT_BEST = 0
SPLIT_RANDOM = 1

_U64 = np.uint64
_INV_2_53 = 1.0 / 9007199254740992.0  # 2^-53


@njit(types.uint64(types.uint64), cache=True, nogil=True, inline="always")
def _splitmix64(x):
    x = (x + _U64(0x9E3779B97F4A7C15)) & _U64(0xFFFFFFFFFFFFFFFF)
    z = x
    z = ((z ^ (z >> _U64(30))) * _U64(0xBF58476D1CE4E5B9)) & _U64(0xFFFFFFFFFFFFFFFF)
    z = ((z ^ (z >> _U64(27))) * _U64(0x94D049BB133111EB)) & _U64(0xFFFFFFFFFFFFFFFF)
    return z ^ (z >> _U64(31))


@njit(types.uint64(types.uint64[:]), cache=True, nogil=True, inline="always")
def _next_u64(state):
    x = state[0]
    x ^= x >> _U64(12)
    x ^= (x << _U64(25)) & _U64(0xFFFFFFFFFFFFFFFF)
    x ^= x >> _U64(27)
    state[0] = x
    return (x * _U64(0x2545F4914F6CDD1D)) & _U64(0xFFFFFFFFFFFFFFFF)


@njit(types.float64(types.uint64[:]), cache=True, nogil=True, inline="always")
def _uniform_open(state):
    # strictly inside (0, 1)
    return (np.float64(_next_u64(state) >> _U64(11)) + 0.5) * _INV_2_53


@njit(cache=True, nogil=True)
def grow_tree(X, y, max_depth, min_leaf, max_features, split_mode, seed):
    """Grow one regression tree; returns packed node arrays.

    Splits minimize the summed child SSE (equivalently maximize variance
    reduction); a split is taken only for strictly positive gain. Ties break
    to the lowest feature index, then the smallest threshold, so results do
    not depend on the random candidate order when all features are scanned.
    """
    n, d = X.shape
    cap = 2 * n + 1
    node_feature = np.full(cap, -1, dtype=np.int64)
    node_threshold = np.zeros(cap, dtype=np.float64)
    node_left = np.full(cap, -1, dtype=np.int64)
    node_right = np.full(cap, -1, dtype=np.int64)
    node_value = np.zeros(cap, dtype=np.float64)

    idx = np.arange(n)
    tmp = np.empty(n, dtype=np.int64)
    vbuf = np.empty(n, dtype=np.float64)

    state = np.empty(1, dtype=np.uint64)
    state[0] = _splitmix64(_U64(seed) ^ _U64(0x8E51F9D3A27C4B6D))
    if state[0] == _U64(0):
        state[0] = _U64(1)

    fperm = np.arange(d)

    # stack of (start, end, depth, node)
    stack = np.empty((4 * n + 64, 4), dtype=np.int64)
    top = 0
    stack[0, 0] = 0
    stack[0, 1] = n
    stack[0, 2] = 0
    stack[0, 3] = 0
    n_nodes = 1

    while top >= 0:
        start = stack[top, 0]
        end = stack[top, 1]
        depth = stack[top, 2]
        node = stack[top, 3]
        top -= 1

        m = end - start
        ysum = 0.0
        ymin = y[idx[start]]
        ymax = ymin
        for i in range(start, end):
            yv = y[idx[i]]
            ysum += yv
            if yv < ymin:
                ymin = yv
            elif yv > ymax:
                ymax = yv
        node_value[node] = ysum / m

        if (m < 2 * min_leaf
                or (max_depth >= 0 and depth >= max_depth)
                or ymin == ymax):
            continue

        # shuffled feature order; constant features do not use up the budget
        for i in range(d - 1, 0, -1):
            j = int(_next_u64(state) % _U64(i + 1))
            fperm[i], fperm[j] = fperm[j], fperm[i]

        best_gain = 0.0
        best_feat = -1
        best_thr = 0.0
        tried = 0

        for fi in range(d):
            if tried >= max_features:
                break
            f = fperm[fi]
            fmin = X[idx[start], f]
            fmax = fmin
            for i in range(start, end):
                v = X[idx[i], f]
                vbuf[i - start] = v
                if v < fmin:
                    fmin = v
                elif v > fmax:
                    fmax = v
            if fmax <= fmin:
                continue
            tried += 1

            if split_mode == SPLIT_BEST:
                order = np.argsort(vbuf[:m])
                cum = 0.0
                for i in range(m - 1):
                    yv = y[idx[start + order[i]]]
                    cum += yv
                    lo = vbuf[order[i]]
                    hi = vbuf[order[i + 1]]
                    if hi <= lo:
                        continue
                    nl = i + 1
                    nr = m - nl
                    if nl < min_leaf or nr < min_leaf:
                        continue
                    sr = ysum - cum
                    gain = (cum * cum / nl + sr * sr / nr
                            - ysum * ysum / m)
                    thr = lo + (hi - lo) / 2.0
                    if thr >= hi:
                        thr = lo
                    if gain > best_gain or (
                            gain == best_gain and gain > 0.0
                            and (f < best_feat
                                 or (f == best_feat and thr < best_thr))):
                        best_gain = gain
                        best_feat = f
                        best_thr = thr
            else:
                thr = fmin + _uniform_open(state) * (fmax - fmin)
                if thr >= fmax:
                    thr = fmin + (fmax - fmin) / 2.0
                nl = 0
                cum = 0.0
                for i in range(m):
                    if vbuf[i] <= thr:
                        nl += 1
                        cum += y[idx[start + i]]
                nr = m - nl
                if nl < min_leaf or nr < min_leaf:
                    continue
                sr = ysum - cum
                gain = cum * cum / nl + sr * sr / nr - ysum * ysum / m
                if gain > best_gain or (
                        gain == best_gain and gain > 0.0
                        and (f < best_feat
                             or (f == best_feat and thr < best_thr))):
                    best_gain = gain
                    best_feat = f
                    best_thr = thr

        if best_feat < 0:
            continue

        # stable partition: left block keeps relative order, then right block
        nl = 0
        nr = 0
        for i in range(start, end):
            if X[idx[i], best_feat] <= best_thr:
                idx[start + nl] = idx[i]
                nl += 1
            else:
                tmp[nr] = idx[i]
                nr += 1
        for i in range(nr):
            idx[start + nl + i] = tmp[i]

        left_node = n_nodes
        right_node = n_nodes + 1
        n_nodes += 2
        node_feature[node] = best_feat
        node_threshold[node] = best_thr
        node_left[node] = left_node
        node_right[node] = right_node

        top += 1
        stack[top, 0] = start + nl
        stack[top, 1] = end
        stack[top, 2] = depth + 1
        stack[top, 3] = right_node
        top += 1
        stack[top, 0] = start
        stack[top, 1] = start + nl
        stack[top, 2] = depth + 1
        stack[top, 3] = left_node

    return (node_feature[:n_nodes].copy(), node_threshold[:n_nodes].copy(),
            node_left[:n_nodes].copy(), node_right[:n_nodes].copy(),
            node_value[:n_nodes].copy())


@njit(cache=True, nogil=True)
def predict_tree_kernel(feature, threshold, left, right, value, X, out):
    for i in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]
