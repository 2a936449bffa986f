"""Targeted maximum likelihood estimation of the effect of a binary region indicator."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, logit
from scipy.stats import norm

from .core import Dataset, OutcomeClampWarning, OutcomeScale
from .learners import SuperLearner, default_library

G_MIN = 0.025
Q_TOL = 1e-4
Z95 = norm.ppf(0.975)


class PositivityError(ValueError):
    """The region indicator has a single class in the training sample."""


class FluctuationWarning(UserWarning):
    pass


@dataclass
class NuisanceFits:
    q_model: object
    g_model: object
    scale: OutcomeScale
    g_min: float = G_MIN

    def predict_q(self, indicator, w):
        """Scaled ``Q(indicator, W)``, kept inside ``(0, 1)``."""
        x = np.column_stack([np.asarray(indicator, dtype=float), w])
        return np.clip(self.q_model.predict(x), Q_TOL, 1 - Q_TOL)

    def predict_counterfactuals(self, w):
        n = w.shape[0]
        return self.predict_q(np.ones(n), w), self.predict_q(np.zeros(n), w)

    def predict_g(self, w):
        return np.clip(self.g_model.predict(w), self.g_min, 1 - self.g_min)


@dataclass
class TmleResult:
    psi: float
    se: float
    epsilon: float
    psi_initial: float
    n: int
    ic: np.ndarray = field(repr=False)
    q1_star: np.ndarray = field(repr=False)
    q0_star: np.ndarray = field(repr=False)
    truncated_fraction: float = 0.0

    @property
    def ci95(self) -> tuple[float, float]:
        return (self.psi - Z95 * self.se, self.psi + Z95 * self.se)

    @property
    def p_value(self) -> float:
        return two_sided_p(self.psi, self.se)

    def to_dict(self) -> dict:
        lo, hi = self.ci95
        return {"psi": self.psi, "se": self.se, "ci_lower": lo, "ci_upper": hi,
                "p_value": self.p_value, "epsilon": self.epsilon,
                "psi_initial": self.psi_initial, "n": self.n,
                "truncated_fraction": self.truncated_fraction}


def two_sided_p(est, se) -> float:
    if se <= 0:
        return 0.0 if est != 0 else 1.0
    return float(2 * norm.sf(abs(est) / se))


def fit_nuisance(train: Dataset, indicator, q_library=None, g_library=None, g_min=G_MIN,
                 seed=0, inner_folds=5) -> NuisanceFits:
    """Super Learner fits of ``Q(indicator, W)`` on the scaled outcome and ``g(W)``."""
    indicator = np.asarray(indicator, dtype=float)
    if indicator.min() == indicator.max():
        raise PositivityError("region indicator has a single class in the training sample")
    q_library = list(q_library) if q_library is not None else default_library("identity")
    g_library = list(g_library) if g_library is not None else default_library("logistic")
    scale = OutcomeScale.fit(train.y)
    ys = scale.scale(train.y)
    q = SuperLearner(q_library, v=inner_folds, random_state=seed).fit(
        np.column_stack([indicator, train.w]), ys)
    g = SuperLearner([s.with_family("logistic") for s in g_library], v=inner_folds,
                     random_state=seed + 7919).fit(train.w, indicator)
    return NuisanceFits(q, g, scale, g_min)


def clever_covariate(indicator, g1):
    """``H = 1{ind=1}/g - 1{ind=0}/(1-g)``."""
    indicator = np.asarray(indicator, dtype=float)
    g1 = np.asarray(g1, dtype=float)
    if np.any((g1 <= 0) | (g1 >= 1)):
        raise ValueError("propensity scores must lie strictly inside (0, 1)")
    return indicator / g1 - (1 - indicator) / (1 - g1)


def fluctuate(q, h, y, max_iter=100, tol=1e-13) -> float:
    """MLE of ``eps`` in ``logit Q* = logit Q + eps * h`` (no intercept).

    Returns 0 when ``h`` is identically zero, and falls back to 0 with a
    warning if Newton's method fails.
    """
    q, h, y = (np.asarray(v, dtype=float) for v in (q, h, y))
    if not np.any(h):
        return 0.0
    off = logit(q)
    eps = 0.0
    for _ in range(max_iter):
        mu = expit(off + eps * h)
        score = np.dot(h, y - mu)
        info = np.dot(h * h, mu * (1 - mu))
        if not np.isfinite(score) or info <= 0:
            break
        step = score / info
        # damp large steps; the log-likelihood is concave so this cannot stall
        step = float(np.clip(step, -10.0, 10.0))
        eps += step
        if abs(step) <= tol * max(1.0, abs(eps)):
            return float(eps)
    warnings.warn("fluctuation did not converge; using eps = 0", FluctuationWarning, stacklevel=2)
    return 0.0


def tmle_from_predictions(y, indicator, q1, q0, g1, scale: OutcomeScale, g_min=G_MIN,
                          epsilon=None) -> TmleResult:
    """Targeting step given initial predictions.

    ``q1``/``q0`` are on the scaled outcome; ``g1`` is the raw propensity,
    truncated to ``[g_min, 1 - g_min]`` here. Pass ``epsilon`` to skip the
    fluctuation fit.
    """
    indicator = np.asarray(indicator, dtype=float)
    q1 = np.clip(np.asarray(q1, dtype=float), Q_TOL, 1 - Q_TOL)
    q0 = np.clip(np.asarray(q0, dtype=float), Q_TOL, 1 - Q_TOL)
    g_raw = np.asarray(g1, dtype=float)
    g1 = np.clip(g_raw, g_min, 1 - g_min)
    truncated = float(np.mean((g_raw < g_min) | (g_raw > 1 - g_min)))
    ys = scale.scale(y)
    qa = np.where(indicator == 1, q1, q0)
    h = clever_covariate(indicator, g1)
    eps = fluctuate(qa, h, ys) if epsilon is None else float(epsilon)
    q1s = expit(logit(q1) + eps / g1)
    q0s = expit(logit(q0) - eps / (1 - g1))
    qas = np.where(indicator == 1, q1s, q0s)
    psi_s = float(np.mean(q1s - q0s))
    ic = scale.span * (h * (ys - qas) + q1s - q0s - psi_s)
    n = ic.shape[0]
    se = float(np.sqrt(np.sum(ic**2)) / n)
    return TmleResult(psi=psi_s * scale.span, se=se, epsilon=eps,
                      psi_initial=float(np.mean(q1 - q0)) * scale.span, n=n, ic=ic,
                      q1_star=scale.unscale(q1s), q0_star=scale.unscale(q0s),
                      truncated_fraction=truncated)


def tmle_estimate(est: Dataset, indicator, nuisance: NuisanceFits) -> TmleResult:
    """TMLE of the region effect on ``est`` using nuisances fit elsewhere."""
    q1, q0 = nuisance.predict_counterfactuals(est.w)
    g1 = nuisance.g_model.predict(est.w)
    with warnings.catch_warnings():
        # estimation-sample outcomes outside the training range are expected
        warnings.simplefilter("ignore", category=OutcomeClampWarning)
        return tmle_from_predictions(est.y, indicator, q1, q0, g1, nuisance.scale, nuisance.g_min)

