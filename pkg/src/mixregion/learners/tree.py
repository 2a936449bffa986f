"""Greedy variance-reduction regression tree with an optional significance gate."""

from __future__ import annotations

import math

import numpy as np
from scipy import stats
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ..core import Clause, RectRegion
from ._grow import apply_tree, grow_tree
from ._validation import check_offset, check_xy, check_x


def maxstat_pvalue(t: float, n: int, n_left_min: int, n_left_max: int, n_cuts: int) -> float:
    """P-value of a two-sample statistic maximised over candidate cut points.

    Takes the smaller of two upper bounds: the Lausen-Schumacher approximation
    for maximally selected statistics and a Bonferroni bound over the cuts.
    """
    b = abs(t)
    if b == 0:
        return 1.0
    bonf = min(1.0, n_cuts * 2 * stats.t.sf(b, max(n - 2, 1)))
    eps1 = n_left_min / n
    eps2 = n_left_max / n
    if n_cuts <= 1 or eps1 >= eps2:
        return bonf
    phi = stats.norm.pdf(b)
    log_term = math.log(eps2 * (1 - eps1) / ((1 - eps2) * eps1))
    ls = phi * (b - 1 / b) * log_term + 4 * phi / b
    return float(min(bonf, max(ls, 0.0), 1.0))


class RegressionTree(BaseEstimator, RegressorMixin):
    """CART-style regression tree.

    Splits greedily on squared-error reduction over midpoints between sorted
    unique values. When ``alpha`` is set, a split is kept only if its two-sample
    t statistic (adjusted for the search over cut points, and over variables
    when ``bonferroni``) is significant at ``alpha``.

    Rows with ``x < cut`` go left and rows with ``x >= cut`` go right, so the
    node regions use a closed lower bound and an open upper bound.
    """

    def __init__(self, max_depth=3, min_leaf=5, alpha=None, bonferroni=True,
                 max_features=None, max_cuts=255, random_state=None):
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.alpha = alpha
        self.bonferroni = bonferroni
        self.max_features = max_features
        self.max_cuts = max_cuts
        self.random_state = random_state

    def _n_features_per_split(self, p):
        mf = self.max_features
        if mf is None:
            return p
        if isinstance(mf, float):
            return max(1, min(p, int(math.ceil(mf * p))))
        return max(1, min(p, int(mf)))

    def _best_split(self, xn, rn, features):
        n = rn.shape[0]
        total = rn.sum()
        best = None  # (gain, feature, cut, n_left, n_cuts, nl_min, nl_max)
        n_tested = 0
        for j in features:
            x = xn[:, j]
            order = np.argsort(x, kind="stable")
            xs = x[order]
            cs = np.cumsum(rn[order])
            pos = np.flatnonzero(xs[1:] > xs[:-1]) + 1
            pos = pos[(pos >= self.min_leaf) & (pos <= n - self.min_leaf)]
            if pos.size == 0:
                continue
            n_tested += 1
            if pos.size > self.max_cuts:
                pick = np.unique(np.round(np.linspace(0, pos.size - 1, self.max_cuts)).astype(int))
                pos = pos[pick]
            left = cs[pos - 1]
            gain = left**2 / pos + (total - left) ** 2 / (n - pos) - total**2 / n
            i = int(np.argmax(gain))
            if best is None or gain[i] > best[0] + 1e-12 * max(1.0, abs(best[0])):
                cut = 0.5 * (xs[pos[i] - 1] + xs[pos[i]])
                best = (float(gain[i]), int(j), float(cut), int(pos[i]), int(pos.size),
                        int(pos[0]), int(pos[-1]))
        return best, n_tested

    def _significant(self, best, rn, n_tested):
        if self.alpha is None:
            return True
        gain, _, _, _, n_cuts, nl_min, nl_max = best
        n = rn.shape[0]
        sse = float(np.sum((rn - rn.mean()) ** 2)) - gain
        if n <= 2:
            return False
        s2 = sse / (n - 2)
        if s2 <= 1e-300:
            return gain > 0
        t = math.sqrt(max(gain, 0.0) / s2)
        p = maxstat_pvalue(t, n, nl_min, nl_max, n_cuts)
        if self.bonferroni:
            p = min(1.0, p * max(n_tested, 1))
        return p <= self.alpha

    def fit(self, X, y, offset=None):
        X, y = check_xy(X, y)
        offset = check_offset(offset, y.shape[0])
        if self.max_depth < 1 or self.min_leaf < 1:
            raise ValueError("max_depth and min_leaf must be positive")
        resid = y - offset if offset is not None else y
        n, p = X.shape
        rng = np.random.default_rng(self.random_state)
        n_feat = self._n_features_per_split(p)
        self.n_features_in_ = p
        if self.alpha is None:
            return self._grow(X, resid, n_feat, int(rng.integers(0, 2**31 - 1)))

        feature, threshold, left, right, value, count, depth = [], [], [], [], [], [], []
        lo, hi = [], []

        def new_node(idx, d, lo_b, hi_b):
            feature.append(-1)
            threshold.append(np.nan)
            left.append(-1)
            right.append(-1)
            value.append(float(resid[idx].mean()))
            count.append(int(idx.size))
            depth.append(d)
            lo.append(lo_b)
            hi.append(hi_b)
            return len(feature) - 1

        root = new_node(np.arange(n), 0, np.full(p, -np.inf), np.full(p, np.inf))
        stack = [(root, np.arange(n))]
        while stack:
            node, idx = stack.pop()
            if depth[node] >= self.max_depth or idx.size < 2 * self.min_leaf:
                continue
            xn, rn = X[idx], resid[idx]
            if n_feat < p:
                features = np.sort(rng.choice(p, n_feat, replace=False))
            else:
                features = range(p)
            best, n_tested = self._best_split(xn, rn, features)
            if best is None or best[0] <= 1e-12 * max(1.0, float(np.sum(rn**2))):
                continue
            if not self._significant(best, rn, n_tested):
                continue
            _, j, cut, _, _, _, _ = best
            go_left = xn[:, j] < cut
            feature[node] = j
            threshold[node] = cut
            hi_l = hi[node].copy()
            hi_l[j] = min(hi_l[j], cut)
            lo_r = lo[node].copy()
            lo_r[j] = max(lo_r[j], cut)
            li = new_node(idx[go_left], depth[node] + 1, lo[node].copy(), hi_l)
            ri = new_node(idx[~go_left], depth[node] + 1, lo_r, hi[node].copy())
            left[node], right[node] = li, ri
            stack.append((ri, idx[~go_left]))
            stack.append((li, idx[go_left]))

        self.feature_ = np.array(feature, dtype=np.int64)
        self.threshold_ = np.array(threshold, dtype=float)
        self.children_left_ = np.array(left, dtype=np.int64)
        self.children_right_ = np.array(right, dtype=np.int64)
        self.value_ = np.array(value, dtype=float)
        self.n_node_samples_ = np.array(count, dtype=np.int64)
        self.node_depth_ = np.array(depth, dtype=np.int64)
        self.node_lower_ = np.array(lo)
        self.node_upper_ = np.array(hi)
        return self

    def _grow(self, X, resid, n_feat, seed):
        """Ungated growth on already validated float arrays."""
        (self.feature_, self.threshold_, self.children_left_, self.children_right_,
         self.value_, self.n_node_samples_, self.node_depth_, self.node_lower_,
         self.node_upper_) = grow_tree(X, resid, self.max_depth, self.min_leaf, n_feat,
                                       self.max_cuts, seed)
        self.n_features_in_ = X.shape[1]
        return self

    @property
    def n_leaves_(self) -> int:
        return int(np.sum(self.children_left_ < 0))

    def apply(self, X):
        check_is_fitted(self, "value_")
        X = check_x(X, self.n_features_in_)
        return apply_tree(X, self.feature_, self.threshold_, self.children_left_,
                          self.children_right_)

    def predict(self, X, offset=None):
        pred = self.value_[self.apply(X)]
        offset = check_offset(offset, pred.shape[0])
        return pred if offset is None else pred + offset

    def node_region(self, node: int, names) -> RectRegion | None:
        clauses = []
        for j, name in enumerate(names):
            lo, hi = self.node_lower_[node, j], self.node_upper_[node, j]
            if np.isfinite(lo) or np.isfinite(hi):
                clauses.append(Clause(name, float(lo), float(hi), True, False))
        return RectRegion(tuple(clauses)) if clauses else None

    def leaf_regions(self, names) -> list[RectRegion]:
        """Regions of the terminal leaves; empty when the tree never split."""
        check_is_fitted(self, "value_")
        leaves = np.flatnonzero(self.children_left_ < 0)
        if leaves.size == 1:
            return []
        return [self.node_region(i, names) for i in leaves]

    def node_regions(self, names) -> list[RectRegion]:
        """Path conjunctions of every non-root node."""
        check_is_fitted(self, "value_")
        return [self.node_region(i, names) for i in range(1, self.feature_.shape[0])]
