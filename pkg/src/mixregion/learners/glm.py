"""Generalized linear models with offsets: least squares and IRLS logistic regression."""

from __future__ import annotations

import warnings

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_offset, check_x, check_xy

STABILIZING_RIDGE = 1e-6
SEPARATION_RIDGE = 1e-3
MAX_ITER = 100


class IRLSConvergenceError(RuntimeError):
    def __init__(self, message, beta):
        super().__init__(message)
        self.beta = beta


class SeparationWarning(UserWarning):
    pass


def _logistic_loglik(eta, y, w):
    # log(1 + e^eta) computed stably
    return float(np.sum(w * (y * eta - np.logaddexp(0.0, eta))))


def irls_logistic(X, y, offset=None, weights=None, ridge=0.0, penalized=None,
                  max_iter=MAX_ITER, tol=1e-10):
    """Newton-Raphson (IRLS) fit of a logistic regression with a fixed offset.

    ``y`` may be fractional in ``[0, 1]``. Returns ``(beta, n_iter, separated)``
    where ``separated`` flags coefficients diverging on separable data.
    Raises :class:`IRLSConvergenceError` if no convergence within ``max_iter``.
    """
    n, p = X.shape
    off = np.zeros(n) if offset is None else offset
    w = np.ones(n) if weights is None else weights
    pen = np.ones(p) if penalized is None else np.asarray(penalized, dtype=float)
    beta = np.zeros(p)
    eta = X @ beta + off
    obj = _logistic_loglik(eta, y, w) - 0.5 * ridge * np.sum(pen * beta**2)
    for it in range(1, max_iter + 1):
        mu = expit(eta)
        grad = X.T @ (w * (y - mu)) - ridge * pen * beta
        hess = (X * (w * mu * (1 - mu))[:, None]).T @ X + np.diag(ridge * pen)
        hess[np.diag_indices(p)] += 1e-12
        step = np.linalg.solve(hess, grad)
        t = 1.0
        while True:
            cand = beta + t * step
            eta_c = X @ cand + off
            obj_c = _logistic_loglik(eta_c, y, w) - 0.5 * ridge * np.sum(pen * cand**2)
            if obj_c >= obj - 1e-12 * abs(obj) or t < 1e-8:
                break
            t *= 0.5
        beta, eta, obj = cand, eta_c, obj_c
        if ridge == 0 and np.max(np.abs(beta), initial=0.0) > 30:
            return beta, it, True
        if np.max(np.abs(t * step)) < tol:
            return beta, it, False
    raise IRLSConvergenceError(f"IRLS did not converge in {max_iter} iterations", beta)


def weighted_least_squares(X, y, offset=None, weights=None):
    n, p = X.shape
    target = y if offset is None else y - offset
    w = np.ones(n) if weights is None else weights
    xtw = X.T * w
    gram = xtw @ X
    rhs = xtw @ target
    scale = max(float(np.mean(np.diag(gram))), 1e-300)
    if np.linalg.cond(gram) > 1e12:
        gram = gram + STABILIZING_RIDGE * scale * np.eye(p)
    return np.linalg.solve(gram, rhs)


class GLM(BaseEstimator, RegressorMixin):
    """Linear (``family="identity"``) or logistic regression with an optional offset.

    ``predict`` returns the mean, i.e. the inverse link applied to
    ``X @ coef_ + intercept_ + offset``.
    """

    def __init__(self, family="identity", fit_intercept=True):
        self.family = family
        self.fit_intercept = fit_intercept

    def _design(self, X):
        return np.column_stack([np.ones(X.shape[0]), X]) if self.fit_intercept else X

    def fit(self, X, y, offset=None, sample_weight=None):
        X, y = check_xy(X, y)
        offset = check_offset(offset, y.shape[0])
        w = None if sample_weight is None else np.asarray(sample_weight, dtype=float)
        D = self._design(X)
        self.separated_ = False
        if self.family == "identity":
            beta = weighted_least_squares(D, y, offset, w)
            self.n_iter_ = 1
        elif self.family == "logistic":
            if np.any((y < 0) | (y > 1)):
                raise ValueError("logistic family needs y in [0, 1]")
            pen = np.ones(D.shape[1])
            if self.fit_intercept:
                pen[0] = 0.0
            beta, self.n_iter_, sep = irls_logistic(D, y, offset, w, penalized=pen)
            if sep:
                warnings.warn("quasi-separation detected; refitting with a ridge penalty",
                              SeparationWarning, stacklevel=2)
                beta, self.n_iter_, _ = irls_logistic(D, y, offset, w, ridge=SEPARATION_RIDGE,
                                                      penalized=pen)
                self.separated_ = True
        else:
            raise ValueError(f"unknown family {self.family!r}")
        if self.fit_intercept:
            self.intercept_, self.coef_ = float(beta[0]), beta[1:]
        else:
            self.intercept_, self.coef_ = 0.0, beta
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X, offset=None):
        check_is_fitted(self, "coef_")
        X = check_x(X, self.n_features_in_)
        eta = X @ self.coef_ + self.intercept_
        offset = check_offset(offset, X.shape[0])
        return eta if offset is None else eta + offset

    def predict(self, X, offset=None):
        eta = self.decision_function(X, offset)
        return expit(eta) if self.family == "logistic" else eta


class InterceptOnly(BaseEstimator, RegressorMixin):
    """Constant (mean) predictor; on the link scale when an offset is given."""

    def __init__(self, family="identity"):
        self.family = family

    def fit(self, X, y, offset=None):
        X, y = check_xy(X, y)
        offset = check_offset(offset, y.shape[0])
        if self.family == "logistic" and offset is not None:
            ones = np.ones((y.shape[0], 1))
            beta, _, _ = irls_logistic(ones, y, offset, ridge=SEPARATION_RIDGE)
            self.intercept_ = float(beta[0])
        elif self.family == "logistic":
            m = float(np.clip(y.mean(), 1e-6, 1 - 1e-6))
            self.intercept_ = float(np.log(m / (1 - m)))
        else:
            self.intercept_ = float(np.mean(y if offset is None else y - offset))
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X, offset=None):
        check_is_fitted(self, "intercept_")
        X = check_x(X, self.n_features_in_)
        eta = np.full(X.shape[0], self.intercept_)
        offset = check_offset(offset, X.shape[0])
        if offset is not None:
            eta = eta + offset
        return expit(eta) if self.family == "logistic" else eta
