"""Backfitting of the additive model ``E[Y | A, W] = f(A) + h(W)``."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .learners import LearnerSpec, SuperLearner, default_library, default_tree_library
from .rules import RuleEnsemble


class BackfitDivergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class BackfitConfig:
    delta: float = 0.001
    max_iter: int = 10
    metric: str = "combined"
    h_library: tuple[LearnerSpec, ...] = field(default_factory=lambda: tuple(default_library()))
    tree_library: tuple[LearnerSpec, ...] = field(default_factory=lambda: tuple(default_tree_library()))
    n_trees: int = 50
    max_depth: int = 3
    min_leaf: int = 10
    alpha: float | None = 0.05
    inner_folds: int = 5
    scheme: str = "sequential"

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.metric not in ("combined", "per_side"):
            raise ValueError("metric must be 'combined' or 'per_side'")
        if self.scheme not in ("sequential", "simultaneous"):
            raise ValueError("scheme must be 'sequential' or 'simultaneous'")


@dataclass
class BackfitResult:
    f_model: object
    h_model: object
    iterations: int
    converged: bool
    delta: float
    history: list = field(default_factory=list)

    def diagnostics(self) -> dict:
        return {"iterations": self.iterations, "converged": self.converged,
                "delta": self.delta, "history": self.history}


class CenteredModel:
    """Wraps a fitted model so its training-sample predictions have mean zero.

    Both additive blocks would otherwise carry an intercept, and the
    simultaneous update makes that shared constant oscillate between them.
    """

    def __init__(self, model, shift):
        self.model = model
        self.shift = float(shift)

    def predict(self, X, offset=None):
        out = self.model.predict(X) - self.shift
        return out if offset is None else out + offset


def _fit_h(config, seed, w, y, offset):
    model = SuperLearner(list(config.h_library), v=config.inner_folds,
                         random_state=seed).fit(w, y, offset)
    raw = model.predict(w)
    return CenteredModel(model, raw.mean())


def _iterate(fit_f, refit_f, fit_h, a, w, y, config):
    """Alternating loop; ``fit_f(offset)`` grows a new f, ``refit_f(prev, offset)`` keeps its basis."""
    f, h = fit_f(None), fit_h(None)
    f_pred, h_pred = f.predict(a), h.predict(w)
    history = []
    best = None
    rising = 0
    for t in range(1, config.max_iter + 1):
        f_new = fit_f(h_pred) if t == 1 else refit_f(f, h_pred)
        f_next = f_new.predict(a)
        h_new = fit_h(f_next if config.scheme == "sequential" else f_pred)
        h_next = h_new.predict(w)
        d_f = float(np.mean(np.abs(f_next - f_pred)))
        d_h = float(np.mean(np.abs(h_next - h_pred)))
        combined = float(np.mean(np.abs(f_next + h_next - f_pred - h_pred)))
        delta = combined if config.metric == "combined" else max(d_f, d_h)
        history.append({"iteration": t, "delta": delta, "delta_f": d_f, "delta_h": d_h,
                        "mse": float(np.mean((y - f_next - h_next) ** 2))})
        f, h, f_pred, h_pred = f_new, h_new, f_next, h_next
        if best is None or delta < best[3]:
            best = (f, h, t, delta)
        if delta < config.delta:
            return BackfitResult(f, h, t, True, delta, history)
        rising = rising + 1 if t > 1 and delta > history[-2]["delta"] else 0
        if rising >= 3:
            warnings.warn(f"backfitting diverged after {t} iterations; returning best iterate",
                          BackfitDivergenceWarning, stacklevel=3)
            return BackfitResult(best[0], best[1], best[2], False, best[3], history)
    return BackfitResult(f, h, config.max_iter, False, delta, history)


def backfit_joint(a, w, y, config: BackfitConfig = BackfitConfig(), a_names=None, seed=0):
    """Alternate a rule ensemble on ``A`` and a Super Learner on ``W``.

    Iteration 0 fits both sides on ``y`` independently. Iteration 1 regrows the
    rule basis on ``y - h(W)``; later iterations only refit its coefficients.
    """
    a, w, y = (np.asarray(v, dtype=float) for v in (a, w, y))
    names = list(a_names) if a_names is not None else [f"A{j + 1}" for j in range(a.shape[1])]

    def fit_f(offset):
        return RuleEnsemble(names, n_trees=config.n_trees, max_depth=config.max_depth,
                            min_leaf=config.min_leaf, alpha=config.alpha,
                            random_state=seed).fit(a, y, offset)

    def refit_f(prev, offset):
        model = RuleEnsemble(**prev.get_params())
        for attr in ("names_", "candidates_", "origins_", "n_features_in_", "lambda_"):
            setattr(model, attr, getattr(prev, attr))
        return model.refit(a, y, offset)

    def fit_h(offset):
        return _fit_h(config, seed + 1, w, y, offset)

    return _iterate(fit_f, refit_f, fit_h, a, w, y, config)


def backfit_marginal(a_j, w, y, config: BackfitConfig = BackfitConfig(), name="A1", seed=0):
    """Backfit a discrete Super Learner of gated trees on one exposure.

    Returns ``(regions, result)`` where ``regions`` is a list of
    ``(RectRegion, is_reference)`` for the selected tree's leaves ordered by
    lower bound; the lowest leaf is the reference. A tree that never splits
    gives an empty list.
    """
    a_j = np.asarray(a_j, dtype=float).reshape(-1, 1)
    w, y = np.asarray(w, dtype=float), np.asarray(y, dtype=float)
    if a_j.shape[0] < 2 * config.min_leaf:
        raise ValueError(f"need at least {2 * config.min_leaf} rows for a marginal fit")

    def fit_f(offset):
        return SuperLearner(list(config.tree_library), mode="discrete", v=config.inner_folds,
                            random_state=seed).fit(a_j, y, offset)

    def fit_h(offset):
        return _fit_h(config, seed + 1, w, y, offset)

    result = _iterate(fit_f, lambda _prev, off: fit_f(off), fit_h, a_j, w, y, config)
    tree = result.f_model.selected_model_
    leaves = tree.leaf_regions([name]) if tree is not None else []
    leaves = sorted(leaves, key=lambda r: r.clause(name).lo)
    return [(r, i == 0) for i, r in enumerate(leaves)], result
