"""Cross-validated selection (discrete) or convex combination of library learners."""

from __future__ import annotations

import warnings

import numpy as np
from scipy.optimize import minimize, nnls
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_offset, check_x, check_xy
from .library import LearnerSpec, make_learner


class LearnerFailureWarning(UserWarning):
    pass


def convex_weights(Z, y):
    """Non-negative weights summing to one that minimise ``||y - Z w||^2``."""
    L = Z.shape[1]
    if L == 1:
        return np.ones(1)
    w0, _ = nnls(Z, y)
    w0 = w0 / w0.sum() if w0.sum() > 0 else np.full(L, 1 / L)
    res = minimize(
        lambda w: np.mean((y - Z @ w) ** 2),
        w0,
        jac=lambda w: -2 * Z.T @ (y - Z @ w) / len(y),
        bounds=[(0.0, 1.0)] * L,
        constraints=[{"type": "eq", "fun": lambda w: w.sum() - 1.0, "jac": lambda w: np.ones(L)}],
        method="SLSQP",
        options={"ftol": 1e-12, "maxiter": 500},
    )
    w = np.clip(res.x if res.success else w0, 0.0, None)
    w[w < 1e-8] = 0.0
    return w / w.sum()


class SuperLearner(BaseEstimator, RegressorMixin):
    """V-fold cross-validated ensemble over a library of :class:`LearnerSpec`.

    ``mode="discrete"`` refits the learner with the smallest CV risk;
    ``mode="convex"`` refits every member with a positive weight.
    """

    def __init__(self, library, mode="convex", v=5, random_state=0):
        self.library = library
        self.mode = mode
        self.v = v
        self.random_state = random_state

    def fit(self, X, y, offset=None):
        X, y = check_xy(X, y)
        offset = check_offset(offset, y.shape[0])
        library = list(self.library)
        if not library:
            raise ValueError("empty learner library")
        if self.v < 2:
            raise ValueError("need at least 2 inner folds")
        if self.mode not in ("discrete", "convex"):
            raise ValueError(f"unknown mode {self.mode!r}")
        n = y.shape[0]
        rng = np.random.default_rng(self.random_state)
        seeds = rng.integers(0, 2**31 - 1, size=len(library))
        folds = np.empty(n, dtype=np.int64)
        folds[rng.permutation(n)] = np.arange(n) % self.v

        Z = np.full((n, len(library)), np.nan)
        ok = np.ones(len(library), dtype=bool)
        for l, spec in enumerate(library):
            for v in range(self.v):
                tr, te = folds != v, folds == v
                try:
                    model = make_learner(spec, int(seeds[l])).fit(
                        X[tr], y[tr], None if offset is None else offset[tr])
                    Z[te, l] = model.predict(X[te], None if offset is None else offset[te])
                except Exception as exc:  # noqa: BLE001 - any learner failure drops it
                    warnings.warn(f"learner {spec.label} failed on an inner fold: {exc}",
                                  LearnerFailureWarning, stacklevel=2)
                    ok[l] = False
                    break
            if ok[l] and not np.all(np.isfinite(Z[:, l])):
                ok[l] = False
        if not ok.any():
            raise RuntimeError("every learner in the library failed")
        risks = np.full(len(library), np.inf)
        risks[ok] = np.mean((y[:, None] - Z[:, ok]) ** 2, axis=0)
        weights = np.zeros(len(library))
        if self.mode == "discrete":
            weights[int(np.argmin(risks))] = 1.0
        else:
            weights[ok] = convex_weights(Z[:, ok], y)
        self.cv_risks_ = risks
        self.cv_predictions_ = Z
        self.weights_ = weights
        self.selected_ = int(np.argmin(risks))
        self.labels_ = [spec.label for spec in library]
        self.members_ = {}
        for l in np.flatnonzero(weights > 0):
            self.members_[int(l)] = make_learner(library[l], int(seeds[l])).fit(X, y, offset)
        self.n_features_in_ = X.shape[1]
        return self

    @property
    def selected_model_(self):
        return self.members_.get(self.selected_)

    def predict(self, X, offset=None):
        check_is_fitted(self, "members_")
        X = check_x(X, self.n_features_in_)
        offset = check_offset(offset, X.shape[0])
        out = np.zeros(X.shape[0])
        for l, model in self.members_.items():
            out += self.weights_[l] * model.predict(X, offset)
        return out


def super_learn(library: list[LearnerSpec], x, y, offset=None, v=5, mode="convex",
                random_state=0) -> SuperLearner:
    return SuperLearner(library, mode=mode, v=v, random_state=random_state).fit(x, y, offset)
