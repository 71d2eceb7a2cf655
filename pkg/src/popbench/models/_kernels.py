"""Compiled inner loops: tree growing, tree evaluation, coordinate descent.

Trees are stored as flat node arrays. ``feature[k] == -1`` marks a leaf; an
internal node sends ``x[feature] <= threshold`` to ``left[k]``.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_MASK64 = np.uint64(0xFFFFFFFFFFFFFFFF)


@njit(cache=True, nogil=True)
def _splitmix64(state):
    state = (state + np.uint64(0x9E3779B97F4A7C15)) & _MASK64
    z = state
    z = ((z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)) & _MASK64
    z = ((z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)) & _MASK64
    return state, z ^ (z >> np.uint64(31))


@njit(cache=True, nogil=True)
def _sample_features(perm, mtry, state):
    """Partial Fisher-Yates: first ``mtry`` entries of ``perm`` become the sample."""
    p = perm.size
    for i in range(mtry):
        state, r = _splitmix64(state)
        j = i + np.int64(r % np.uint64(p - i))
        tmp = perm[i]
        perm[i] = perm[j]
        perm[j] = tmp
    return state


@njit(cache=True, nogil=True)
def _midpoint(a, b):
    t = a + (b - a) / 2.0
    if t >= b or t < a:
        t = a
    return t


@njit(cache=True, nogil=True)
def grow_variance_tree(X, y, samples, mtry, min_node_size, max_depth, seed):
    """Exact greedy regression tree minimizing weighted child variance.

    ``samples`` may contain repeats (bootstrap). Nodes with fewer than
    ``2 * min_node_size`` samples, pure nodes, and nodes at ``max_depth``
    (when ``max_depth >= 0``) become leaves.
    """
    n = samples.size
    p = X.shape[1]
    cap = 2 * n + 1
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    value = np.zeros(cap)

    idx = samples.copy()
    perm = np.arange(p)
    feats = np.empty(mtry, np.int64)
    st_node = np.empty(cap, np.int64)
    st_lo = np.empty(cap, np.int64)
    st_hi = np.empty(cap, np.int64)
    st_depth = np.empty(cap, np.int64)
    sp = 0
    st_node[0] = 0
    st_lo[0] = 0
    st_hi[0] = n
    st_depth[0] = 0
    sp = 1
    n_nodes = 1
    state = np.uint64(seed)
    vals = np.empty(n)
    ys = np.empty(n)

    while sp > 0:
        sp -= 1
        node = st_node[sp]
        lo = st_lo[sp]
        hi = st_hi[sp]
        depth = st_depth[sp]
        m = hi - lo
        ymin = np.inf
        ymax = -np.inf
        total = 0.0
        for k in range(lo, hi):
            v = y[idx[k]]
            total += v
            if v < ymin:
                ymin = v
            if v > ymax:
                ymax = v
        if ymin == ymax:
            value[node] = ymin
            continue
        mean = total / m
        value[node] = mean
        if m < 2 * min_node_size or (max_depth >= 0 and depth >= max_depth):
            continue

        sse = 0.0
        for k in range(lo, hi):
            d = y[idx[k]] - mean
            sse += d * d

        if mtry >= p:
            for i in range(p):
                feats[i] = i
        else:
            state = _sample_features(perm, mtry, state)
            for i in range(mtry):
                feats[i] = perm[i]
            feats[:mtry] = np.sort(feats[:mtry])

        best_score = 1e-12 * sse
        best_f = -1
        best_t = 0.0
        for fi in range(mtry):
            f = feats[fi]
            for k in range(m):
                vals[k] = X[idx[lo + k], f]
            order = np.argsort(vals[:m], kind="mergesort")
            for k in range(m):
                ys[k] = y[idx[lo + order[k]]] - mean
            csum = 0.0
            for k in range(m):
                csum += ys[k]
            sl = 0.0
            for k in range(m - 1):
                sl += ys[k]
                a = vals[order[k]]
                b = vals[order[k + 1]]
                if a == b:
                    continue
                nl = k + 1
                nr = m - nl
                sr = csum - sl
                score = sl * sl / nl + sr * sr / nr
                if score > best_score:
                    best_score = score
                    best_f = f
                    best_t = _midpoint(a, b)
        if best_f < 0:
            continue

        # stable in-place partition of idx[lo:hi]
        nl = 0
        buf = np.empty(m, np.int64)
        for k in range(lo, hi):
            if X[idx[k], best_f] <= best_t:
                idx[lo + nl] = idx[k]
                nl += 1
            else:
                buf[k - lo - nl] = idx[k]
        for k in range(m - nl):
            idx[lo + nl + k] = buf[k]

        feature[node] = best_f
        threshold[node] = best_t
        lnode = n_nodes
        rnode = n_nodes + 1
        n_nodes += 2
        left[node] = lnode
        right[node] = rnode
        # push right first so the left subtree is expanded first
        st_node[sp] = rnode
        st_lo[sp] = lo + nl
        st_hi[sp] = hi
        st_depth[sp] = depth + 1
        sp += 1
        st_node[sp] = lnode
        st_lo[sp] = lo
        st_hi[sp] = lo + nl
        st_depth[sp] = depth + 1
        sp += 1

    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), value[:n_nodes].copy())


@njit(cache=True, nogil=True)
def grow_gradient_tree(X, grad, hess, rows, cols, max_depth, reg_lambda, gamma, min_child_weight):
    """Second-order exact greedy tree on ``rows`` x ``cols`` (both sorted).

    Returns unscaled leaf weights ``-G / (H + reg_lambda)``.
    """
    n = rows.size
    cap = 2 * n + 1
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    value = np.zeros(cap)

    idx = rows.copy()
    st_node = np.empty(cap, np.int64)
    st_lo = np.empty(cap, np.int64)
    st_hi = np.empty(cap, np.int64)
    st_depth = np.empty(cap, np.int64)
    st_node[0] = 0
    st_lo[0] = 0
    st_hi[0] = n
    st_depth[0] = 0
    sp = 1
    n_nodes = 1
    vals = np.empty(n)
    gs = np.empty(n)
    hs = np.empty(n)

    while sp > 0:
        sp -= 1
        node = st_node[sp]
        lo = st_lo[sp]
        hi = st_hi[sp]
        depth = st_depth[sp]
        m = hi - lo
        G = 0.0
        H = 0.0
        for k in range(lo, hi):
            G += grad[idx[k]]
            H += hess[idx[k]]
        value[node] = -G / (H + reg_lambda)
        if depth >= max_depth or m < 2:
            continue
        parent = G * G / (H + reg_lambda)

        best_gain = 0.0
        best_f = -1
        best_t = 0.0
        for fi in range(cols.size):
            f = cols[fi]
            for k in range(m):
                vals[k] = X[idx[lo + k], f]
            order = np.argsort(vals[:m], kind="mergesort")
            for k in range(m):
                gs[k] = grad[idx[lo + order[k]]]
                hs[k] = hess[idx[lo + order[k]]]
            gl = 0.0
            hl = 0.0
            for k in range(m - 1):
                gl += gs[k]
                hl += hs[k]
                a = vals[order[k]]
                b = vals[order[k + 1]]
                if a == b:
                    continue
                hr = H - hl
                if hl < min_child_weight or hr < min_child_weight:
                    continue
                gr = G - gl
                gain = 0.5 * (gl * gl / (hl + reg_lambda) + gr * gr / (hr + reg_lambda) - parent) - gamma
                if gain > best_gain:
                    best_gain = gain
                    best_f = f
                    best_t = _midpoint(a, b)
        if best_f < 0:
            continue

        nl = 0
        buf = np.empty(m, np.int64)
        for k in range(lo, hi):
            if X[idx[k], best_f] <= best_t:
                idx[lo + nl] = idx[k]
                nl += 1
            else:
                buf[k - lo - nl] = idx[k]
        for k in range(m - nl):
            idx[lo + nl + k] = buf[k]

        feature[node] = best_f
        threshold[node] = best_t
        lnode = n_nodes
        rnode = n_nodes + 1
        n_nodes += 2
        left[node] = lnode
        right[node] = rnode
        st_node[sp] = rnode
        st_lo[sp] = lo + nl
        st_hi[sp] = hi
        st_depth[sp] = depth + 1
        sp += 1
        st_node[sp] = lnode
        st_lo[sp] = lo
        st_hi[sp] = lo + nl
        st_depth[sp] = depth + 1
        sp += 1

    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), value[:n_nodes].copy())


@njit(cache=True, nogil=True)
def predict_tree(X, feature, threshold, left, right, value):
    out = np.empty(X.shape[0])
    for i in range(X.shape[0]):
        k = 0
        while feature[k] >= 0:
            if X[i, feature[k]] <= threshold[k]:
                k = left[k]
            else:
                k = right[k]
        out[i] = value[k]
    return out


@njit(cache=True, nogil=True)
def predict_packed(X, offsets, feature, threshold, left, right, value):
    """Per-tree predictions (n_trees, n_rows) for trees packed end to end.

    Child indices are tree-local; ``offsets[t]`` is tree t's first node.
    """
    n_trees = offsets.size - 1
    out = np.empty((n_trees, X.shape[0]))
    for t in range(n_trees):
        base = offsets[t]
        for i in range(X.shape[0]):
            k = 0
            while feature[base + k] >= 0:
                if X[i, feature[base + k]] <= threshold[base + k]:
                    k = left[base + k]
                else:
                    k = right[base + k]
            out[t, i] = value[base + k]
    return out


@njit(cache=True, nogil=True)
def _soft_threshold(z, g):
    if z > g:
        return z - g
    if z < -g:
        return z + g
    return 0.0


@njit(cache=True, nogil=True)
def enet_path(X, y, lambdas, alpha, tol, max_iter, active):
    """Cyclic coordinate descent along a decreasing lambda path with warm starts.

    Minimizes (1/2n)||y - X b||^2 + lam * (alpha ||b||_1 + (1 - alpha) ||b||^2 / 2)
    for each lam. ``X`` columns are expected centred; ``active`` masks out
    zero-variance columns. Returns (coefficients (L, p), sweeps used (L,)).
    """
    n, p = X.shape
    L = lambdas.size
    beta = np.zeros(p)
    r = y.copy()
    xsq = np.zeros(p)
    for j in range(p):
        if active[j]:
            s = 0.0
            for i in range(n):
                s += X[i, j] * X[i, j]
            xsq[j] = s / n
    out = np.zeros((L, p))
    sweeps = np.zeros(L, np.int64)
    for li in range(L):
        l1 = lambdas[li] * alpha
        l2 = lambdas[li] * (1.0 - alpha)
        it = 0
        while it < max_iter:
            it += 1
            max_delta = 0.0
            for j in range(p):
                if not active[j]:
                    continue
                bj = beta[j]
                dot = 0.0
                for i in range(n):
                    dot += X[i, j] * r[i]
                z = dot / n + xsq[j] * bj
                new = _soft_threshold(z, l1) / (xsq[j] + l2)
                d = new - bj
                if d != 0.0:
                    for i in range(n):
                        r[i] -= X[i, j] * d
                    beta[j] = new
                    ad = abs(d)
                    if ad > max_delta:
                        max_delta = ad
            if max_delta < tol:
                break
        out[li] = beta
        sweeps[li] = it
    return out, sweeps
