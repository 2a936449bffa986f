import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_offset, check_x, check_xy
from ._grow import apply_tree
from .tree import RegressionTree


class RandomForest(BaseEstimator, RegressorMixin):
    """Bagged regression trees with per-split feature subsampling."""

    def __init__(self, n_trees=50, max_features=1 / 3, max_depth=8, min_leaf=5,
                 random_state=None):
        self.n_trees = n_trees
        self.max_features = max_features
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.random_state = random_state

    def fit(self, X, y, offset=None):
        X, y = check_xy(X, y)
        offset = check_offset(offset, y.shape[0])
        target = y if offset is None else y - offset
        n = X.shape[0]
        rng = np.random.default_rng(self.random_state)
        self.trees_ = []
        for seed in rng.integers(0, 2**31 - 1, size=self.n_trees):
            boot = np.random.default_rng(seed).integers(0, n, size=n)
            tree = RegressionTree(max_depth=self.max_depth, min_leaf=self.min_leaf,
                                  max_features=self.max_features, random_state=int(seed))
            n_feat = tree._n_features_per_split(X.shape[1])
            self.trees_.append(tree._grow(X[boot], target[boot], n_feat, int(seed)))
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X, offset=None):
        check_is_fitted(self, "trees_")
        X = check_x(X, self.n_features_in_)
        pred = np.mean([t.value_[apply_tree(X, t.feature_, t.threshold_, t.children_left_,
                                            t.children_right_)] for t in self.trees_], axis=0)
        offset = check_offset(offset, X.shape[0])
        return pred if offset is None else pred + offset
