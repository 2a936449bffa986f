"""Rule-ensemble discovery of rectangular exposure regions.

Shallow trees grown on the exposures propose candidate regions (every node's
path conjunction); a lasso on the rule indicators keeps the predictive ones;
within each variable set the rule with the extreme coefficient is retained.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .core import RectRegion, evaluate_region
from .learners import PenalizedGLM, RegressionTree
from .learners._validation import check_offset, check_x, check_xy


@dataclass(frozen=True)
class RuleCandidate:
    region: RectRegion
    coefficient: float
    origin: int
    support: int

    @property
    def varset(self) -> tuple[str, ...]:
        return self.region.varset

    def to_dict(self) -> dict:
        return {**self.region.to_dict(), "coefficient": self.coefficient,
                "origin_tree": self.origin, "support": self.support}


@dataclass(frozen=True)
class RuleConfig:
    n_trees: int = 50
    max_depth: int = 3
    max_vars: int = 3
    min_leaf: int = 10
    alpha: float | None = 0.05
    subsample: float = 0.7
    feature_fraction: float = 0.7
    learning_rate: float = 0.1
    n_lambdas: int = 50
    lambda_selection: str = "1se"
    inner_folds: int = 5


def _feature_subset(rng, m, fraction):
    k = max(min(m, 2), int(math.ceil(fraction * m)))
    return np.sort(rng.choice(m, size=k, replace=False)) if k < m else np.arange(m)


def generate_candidate_rules(a, target, names, config: RuleConfig = RuleConfig(), seed=0,
                             return_origins=False):
    """Grow ``config.n_trees`` shallow trees (half bagged, half boosted) and
    collect every node's path conjunction, deduplicated by canonical string.

    Each tree's significance gate runs at ``alpha / n_trees`` so that pure
    noise rarely produces any candidate.
    """
    a = np.asarray(a, dtype=float)
    target = np.asarray(target, dtype=float)
    n, m = a.shape
    rng = np.random.default_rng(seed)
    n_sub = max(2 * config.min_leaf, int(round(config.subsample * n)))
    alpha = None if config.alpha is None else config.alpha / max(config.n_trees, 1)
    n_bag = (config.n_trees + 1) // 2
    seen: dict[str, tuple[RectRegion, int]] = {}
    resid = target - target.mean()

    for t in range(config.n_trees):
        rows = np.sort(rng.choice(n, size=min(n_sub, n), replace=False))
        cols = _feature_subset(rng, m, config.feature_fraction)
        boosted = t >= n_bag
        y_fit = resid[rows] if boosted else target[rows]
        tree = RegressionTree(max_depth=config.max_depth, min_leaf=config.min_leaf, alpha=alpha)
        tree.fit(a[np.ix_(rows, cols)], y_fit)
        if boosted:
            resid = resid - config.learning_rate * tree.predict(a[:, cols])
        if tree.feature_.shape[0] == 1:
            continue
        sub_names = [names[j] for j in cols]
        for region in tree.node_regions(sub_names):
            if region is None or len(region.varset) > config.max_vars:
                continue
            key = str(region)
            if key in seen:
                continue
            ind = evaluate_region(region, a, names)
            if ind.min() == ind.max():
                continue
            seen[key] = (region, t)
    regions = [r for r, _ in seen.values()]
    if return_origins:
        return regions, [o for _, o in seen.values()]
    return regions


def rule_matrix(regions, a, names) -> np.ndarray:
    if not regions:
        return np.zeros((np.asarray(a).shape[0], 0))
    return np.column_stack([evaluate_region(r, a, names) for r in regions]).astype(float)


def select_rules(candidates, a, target, names, config: RuleConfig = RuleConfig(), origins=None,
                 seed=0, lambdas=None):
    """Lasso on rule indicators; returns the rules with nonzero coefficients.

    Also returns the fitted :class:`PenalizedGLM` as second element.
    """
    if not candidates:
        raise ValueError("no candidate rules to select from")
    R = rule_matrix(candidates, a, names)
    model = PenalizedGLM(n_lambdas=config.n_lambdas, selection=config.lambda_selection,
                         cv=config.inner_folds, lambdas=lambdas, random_state=seed)
    model.fit(R, target)
    origins = origins if origins is not None else [-1] * len(candidates)
    support = R.sum(axis=0).astype(int)
    selected = [
        RuleCandidate(candidates[j], float(model.coef_[j]), int(origins[j]), int(support[j]))
        for j in model.nonzero_
    ]
    return selected, model


def best_rule_per_varset(selected, direction="max") -> dict[tuple[str, ...], RuleCandidate]:
    """Keep the largest (``"max"``) or smallest (``"min"``) coefficient per variable set.

    Ties go to the rule covering more rows, then to the lexicographically
    smaller canonical string.
    """
    if direction not in ("max", "min"):
        raise ValueError("direction must be 'max' or 'min'")
    sign = 1.0 if direction == "max" else -1.0
    best: dict[tuple[str, ...], RuleCandidate] = {}
    for cand in selected:
        cur = best.get(cand.varset)
        if cur is None:
            best[cand.varset] = cand
            continue
        key_new = (sign * cand.coefficient, cand.support, _neg(str(cand.region)))
        key_cur = (sign * cur.coefficient, cur.support, _neg(str(cur.region)))
        if key_new > key_cur:
            best[cand.varset] = cand
    return dict(sorted(best.items()))


def _neg(s: str):
    # reverses lexicographic order inside a max() comparison
    return tuple(-ord(ch) for ch in s) + (1,)


class RuleEnsemble(BaseEstimator, RegressorMixin):
    """Additive model ``a0 + sum_m a_m 1{A in R_m}`` over lasso-selected rules.

    ``refit`` keeps the candidate basis and the cross-validated lambda and
    re-estimates the coefficients only.
    """

    def __init__(self, feature_names=None, n_trees=50, max_depth=3, min_leaf=10, alpha=0.05,
                 subsample=0.7, lambda_selection="1se", random_state=0):
        self.feature_names = feature_names
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.alpha = alpha
        self.subsample = subsample
        self.lambda_selection = lambda_selection
        self.random_state = random_state

    def _config(self):
        return RuleConfig(n_trees=self.n_trees, max_depth=self.max_depth,
                          max_vars=min(3, self.max_depth), min_leaf=self.min_leaf,
                          alpha=self.alpha, subsample=self.subsample,
                          lambda_selection=self.lambda_selection)

    def _names(self, p):
        return list(self.feature_names) if self.feature_names is not None else [f"A{j + 1}" for j in range(p)]

    def fit(self, X, y, offset=None):
        X, y = check_xy(X, y)
        offset = check_offset(offset, y.shape[0])
        target = y if offset is None else y - offset
        self.names_ = self._names(X.shape[1])
        self.candidates_, self.origins_ = generate_candidate_rules(
            X, target, self.names_, self._config(), seed=self.random_state, return_origins=True)
        self.n_features_in_ = X.shape[1]
        return self._select(X, target)

    def refit(self, X, y, offset=None):
        check_is_fitted(self, "candidates_")
        X, y = check_xy(X, y)
        offset = check_offset(offset, y.shape[0])
        lambdas = None if getattr(self, "lambda_", None) is None else [self.lambda_]
        return self._select(X, y if offset is None else y - offset, lambdas)

    def _select(self, X, target, lambdas=None):
        if self.candidates_:
            self.rules_, model = select_rules(self.candidates_, X, target, self.names_,
                                              self._config(), self.origins_,
                                              seed=self.random_state, lambdas=lambdas)
            self.intercept_ = model.intercept_
            self.lambda_ = model.lambda_
        else:
            self.rules_ = []
            self.intercept_ = float(target.mean())
            self.lambda_ = None
        return self

    def predict(self, X, offset=None):
        check_is_fitted(self, "rules_")
        X = check_x(X, self.n_features_in_)
        pred = np.full(X.shape[0], self.intercept_)
        for rule in self.rules_:
            pred += rule.coefficient * evaluate_region(rule.region, X, self.names_)
        offset = check_offset(offset, X.shape[0])
        return pred if offset is None else pred + offset

    def best_rules(self, direction="max"):
        check_is_fitted(self, "rules_")
        return best_rule_per_varset(self.rules_, direction) if self.rules_ else {}
