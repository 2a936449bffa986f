"""Compiled tree growth for ungated trees (random-forest members)."""

import numpy as np
from numba import njit


@njit(cache=True)
def grow_tree(X, r, max_depth, min_leaf, n_feat, max_cuts, seed):
    np.random.seed(seed)
    n, p = X.shape
    cap = 2 * n + 1
    if max_depth < 30:
        cap = min(cap, 2 ** (max_depth + 1))
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.full(cap, np.nan)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap)
    count = np.zeros(cap, dtype=np.int64)
    depth = np.zeros(cap, dtype=np.int64)
    lo = np.full((cap, p), -np.inf)
    hi = np.full((cap, p), np.inf)
    start = np.zeros(cap, dtype=np.int64)
    stop = np.zeros(cap, dtype=np.int64)

    perm = np.arange(n)
    feats = np.arange(p)
    n_nodes = 1
    start[0], stop[0] = 0, n
    count[0] = n
    value[0] = r.mean()
    stack = np.zeros(cap, dtype=np.int64)
    top = 1
    while top > 0:
        top -= 1
        node = stack[top]
        s, e = start[node], stop[node]
        m = e - s
        if depth[node] >= max_depth or m < 2 * min_leaf:
            continue
        idx = perm[s:e]
        rn = r[idx]
        total = rn.sum()
        sst = 0.0
        for i in range(m):
            sst += rn[i] * rn[i]
        # partial Fisher-Yates for the feature subset
        if n_feat < p:
            for i in range(n_feat):
                k = i + np.random.randint(p - i)
                tmp = feats[i]
                feats[i] = feats[k]
                feats[k] = tmp
            chosen = np.sort(feats[:n_feat].copy())
        else:
            chosen = np.arange(p)
        best_gain = -1.0
        best_j = -1
        best_cut = 0.0
        for jj in range(chosen.shape[0]):
            j = chosen[jj]
            x = X[idx, j]
            order = np.argsort(x, kind="mergesort")
            xs = x[order]
            cs = np.cumsum(rn[order])
            n_valid = 0
            for i in range(min_leaf, m - min_leaf + 1):
                if xs[i] > xs[i - 1]:
                    n_valid += 1
            if n_valid == 0:
                continue
            keep = np.ones(n_valid, dtype=np.bool_)
            if n_valid > max_cuts:
                keep[:] = False
                for q in range(max_cuts):
                    keep[int(np.round(q * (n_valid - 1) / (max_cuts - 1)))] = True
            v = -1
            j_gain = -1.0
            j_pos = -1
            for i in range(min_leaf, m - min_leaf + 1):
                if xs[i] > xs[i - 1]:
                    v += 1
                    if not keep[v]:
                        continue
                    lft = cs[i - 1]
                    g = lft * lft / i + (total - lft) ** 2 / (m - i) - total * total / m
                    if g > j_gain:
                        j_gain = g
                        j_pos = i
            if best_j < 0 or j_gain > best_gain + 1e-12 * max(1.0, abs(best_gain)):
                best_gain = j_gain
                best_j = j
                best_cut = 0.5 * (xs[j_pos - 1] + xs[j_pos])
        if best_j < 0 or best_gain <= 1e-12 * max(1.0, sst):
            continue
        # stable in-place partition of perm[s:e]
        buf = np.empty(m, dtype=np.int64)
        nl = 0
        for i in range(m):
            if X[idx[i], best_j] < best_cut:
                buf[nl] = idx[i]
                nl += 1
        k = nl
        for i in range(m):
            if not X[idx[i], best_j] < best_cut:
                buf[k] = idx[i]
                k += 1
        perm[s:e] = buf
        feature[node] = best_j
        threshold[node] = best_cut
        li = n_nodes
        ri = n_nodes + 1
        n_nodes += 2
        left[node], right[node] = li, ri
        for c, cs_, ce_ in ((li, s, s + nl), (ri, s + nl, e)):
            start[c], stop[c] = cs_, ce_
            count[c] = ce_ - cs_
            depth[c] = depth[node] + 1
            lo[c] = lo[node]
            hi[c] = hi[node]
            acc = 0.0
            for i in range(cs_, ce_):
                acc += r[perm[i]]
            value[c] = acc / (ce_ - cs_)
        hi[li, best_j] = min(hi[li, best_j], best_cut)
        lo[ri, best_j] = max(lo[ri, best_j], best_cut)
        stack[top] = ri
        stack[top + 1] = li
        top += 2
    k = n_nodes
    return (feature[:k], threshold[:k], left[:k], right[:k], value[:k], count[:k],
            depth[:k], lo[:k], hi[:k])


@njit(cache=True)
def apply_tree(X, feature, threshold, left, right):
    n = X.shape[0]
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        node = 0
        while left[node] >= 0:
            if X[i, feature[node]] < threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out
