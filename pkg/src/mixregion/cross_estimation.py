"""K-fold cross-estimation of region effects.

Each fold discovers regions and fits nuisances on its training complement,
then targets the effect on its held-out rows. Folds are combined three ways:
a pooled TMLE over the stacked held-out predictions, inverse-variance
weighting, and the plain average of fold estimates.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, asdict

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from sklearn.base import BaseEstimator

from .backfit import BackfitConfig, backfit_joint, backfit_marginal
from .core import Dataset, OutcomeScale, RectRegion, dumps, evaluate_region, kfold_split, union_region
from .learners import LearnerSpec, default_library, default_tree_library
from .tmle import (G_MIN, Z95, PositivityError, TmleResult, fit_nuisance, tmle_estimate,
                   tmle_from_predictions, two_sided_p)

SCHEMA_VERSION = "1.0"


@dataclass(frozen=True)
class AnalysisSettings:
    k: int = 10
    direction: str = "max"
    seed: int = 0
    delta: float = 0.001
    max_iter: int = 10
    g_min: float = G_MIN
    joint: bool = True
    marginal: bool = True
    n_jobs: int = 1
    stability_threshold: float = 0.75
    inner_folds: int = 5
    n_trees: int = 50
    max_depth: int = 3
    min_leaf: int = 10
    alpha: float | None = 0.05
    q_library: tuple[LearnerSpec, ...] = field(default_factory=lambda: tuple(default_library()))
    g_library: tuple[LearnerSpec, ...] = field(
        default_factory=lambda: tuple(default_library("logistic")))
    h_library: tuple[LearnerSpec, ...] = field(default_factory=lambda: tuple(default_library()))
    tree_library: tuple[LearnerSpec, ...] = field(
        default_factory=lambda: tuple(default_tree_library()))

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("k must be at least 2")
        if self.direction not in ("max", "min"):
            raise ValueError("direction must be 'max' or 'min'")
        if not 0 < self.g_min < 0.5:
            raise ValueError("g_min must lie in (0, 0.5)")
        if not (self.joint or self.marginal):
            raise ValueError("enable at least one of the joint and marginal analyses")

    def backfit_config(self) -> BackfitConfig:
        return BackfitConfig(delta=self.delta, max_iter=self.max_iter, h_library=self.h_library,
                             tree_library=self.tree_library, n_trees=self.n_trees,
                             max_depth=self.max_depth, min_leaf=self.min_leaf, alpha=self.alpha,
                             inner_folds=self.inner_folds)

    def to_dict(self) -> dict:
        out = {}
        for key, value in asdict(self).items():
            if key.endswith("_library"):
                value = [spec.to_dict() for spec in getattr(self, key)]
            out[key] = value
        return out


@dataclass
class RegionEstimate:
    """One region's held-out TMLE in one fold, with the predictions needed for pooling."""

    key: tuple
    fold: int
    region: RectRegion
    reference: RectRegion | None
    coefficient: float | None
    result: TmleResult
    est_index: np.ndarray = field(repr=False)
    indicator: np.ndarray = field(repr=False)
    q1: np.ndarray = field(repr=False)
    q0: np.ndarray = field(repr=False)
    g1: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        return {"group": group_label(self.key), "fold": self.fold, "region": str(self.region),
                "reference": None if self.reference is None else str(self.reference),
                "coefficient": self.coefficient, "n_in_region": int(self.indicator.sum()),
                **self.result.to_dict()}


@dataclass
class FoldResult:
    fold: int
    train_index: np.ndarray = field(repr=False)
    est_index: np.ndarray = field(repr=False)
    estimates: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"fold": self.fold, "n_train": int(self.train_index.size),
                "n_est": int(self.est_index.size),
                "estimates": [e.to_dict() for e in self.estimates],
                "diagnostics": self.diagnostics}


@dataclass(frozen=True)
class IvmResult:
    theta: float
    se: float

    @property
    def ci95(self):
        return (self.theta - Z95 * self.se, self.theta + Z95 * self.se)

    @property
    def p_value(self):
        return two_sided_p(self.theta, self.se)

    def to_dict(self) -> dict:
        lo, hi = self.ci95
        return {"psi": self.theta, "se": self.se, "ci_lower": lo, "ci_upper": hi,
                "p_value": self.p_value}


@dataclass
class GroupReport:
    key: tuple
    union: RectRegion
    reference: RectRegion | None
    stability: float
    estimates: list = field(repr=False)
    pooled: TmleResult | None = None
    ivm: IvmResult | None = None
    p_adjusted: float | None = None
    p_adjusted_ivm: float | None = None

    @property
    def label(self) -> str:
        return group_label(self.key)

    @property
    def varset(self) -> tuple[str, ...]:
        return self.union.varset

    def mean_kfold(self) -> dict:
        """Average of fold estimates; the interval averages fold bounds."""
        psis = np.array([e.result.psi for e in self.estimates])
        ses = np.array([e.result.se for e in self.estimates])
        lo = np.array([e.result.ci95[0] for e in self.estimates])
        hi = np.array([e.result.ci95[1] for e in self.estimates])
        return {"psi": float(psis.mean()), "se": float(ses.mean()),
                "ci_lower": float(lo.mean()), "ci_upper": float(hi.mean())}

    def to_dict(self) -> dict:
        return {
            "group": self.label, "kind": self.key[0], "varset": list(self.varset),
            "union_region": self.union.to_dict(), "union_rule": str(self.union),
            "reference": None if self.reference is None else str(self.reference),
            "stability": self.stability, "n_folds": len(self.estimates),
            "pooled": None if self.pooled is None else
            {**self.pooled.to_dict(), "p_adjusted": self.p_adjusted},
            "ivm": None if self.ivm is None else
            {**self.ivm.to_dict(), "p_adjusted": self.p_adjusted_ivm},
            "mean_kfold": self.mean_kfold(),
            "folds": [e.to_dict() for e in self.estimates],
        }


@dataclass
class CvReport:
    groups: list
    folds: list
    settings: AnalysisSettings
    n: int
    scale: OutcomeScale
    exposures: tuple
    covariates: tuple

    def group(self, label_or_key):
        for g in self.groups:
            if g.key == label_or_key or g.label == label_or_key:
                return g
        raise KeyError(label_or_key)

    def joint_groups(self):
        return [g for g in self.groups if g.key[0] == "joint"]

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "n": self.n,
            "k": self.settings.k,
            "seed": self.settings.seed,
            "exposures": list(self.exposures),
            "covariates": list(self.covariates),
            "outcome_scale": self.scale.to_dict(),
            # parallelism does not change results, so it is left out of the report
            "settings": {k: v for k, v in self.settings.to_dict().items() if k != "n_jobs"},
            "groups": [g.to_dict() for g in self.groups],
            "folds": [f.to_dict() for f in self.folds],
        }

    def to_json(self) -> str:
        return dumps(_jsonable(self.to_dict()))

    def pooled_table(self) -> pd.DataFrame:
        """One row per group: ARE, SE, CI, p, adjusted p, variables, union rule, stability."""
        rows = []
        for g in self.groups:
            if g.pooled is None:
                continue
            lo, hi = g.pooled.ci95
            rows.append({"are": g.pooled.psi, "se": g.pooled.se, "lower_ci": lo, "upper_ci": hi,
                         "p_value": g.pooled.p_value, "p_value_adj": g.p_adjusted,
                         "vars": "-".join(g.varset), "union_rule": str(g.union),
                         "reference": "" if g.reference is None else str(g.reference),
                         "stability": g.stability, "group": g.label,
                         "highlight": bool(g.stability >= self.settings.stability_threshold)})
        return pd.DataFrame(rows, columns=POOLED_COLUMNS)

    def kfold_table(self) -> pd.DataFrame:
        """Fold rows per group followed by the inverse-variance pooled row."""
        rows = []
        k = self.settings.k
        for g in self.groups:
            for e in g.estimates:
                lo, hi = e.result.ci95
                rows.append({"are": e.result.psi, "se": e.result.se, "lower_ci": lo,
                             "upper_ci": hi, "p_value": e.result.p_value,
                             "p_value_adj": min(1.0, e.result.p_value * k), "rule": str(e.region),
                             "fold": str(e.fold), "vars": "-".join(g.varset), "group": g.label})
            lo, hi = g.ivm.ci95
            rows.append({"are": g.ivm.theta, "se": g.ivm.se, "lower_ci": lo, "upper_ci": hi,
                         "p_value": g.ivm.p_value, "p_value_adj": g.p_adjusted_ivm,
                         "rule": str(g.union), "fold": "pooled", "vars": "-".join(g.varset),
                         "group": g.label})
        return pd.DataFrame(rows, columns=KFOLD_COLUMNS)


POOLED_COLUMNS = ["are", "se", "lower_ci", "upper_ci", "p_value", "p_value_adj", "vars",
                  "union_rule", "reference", "stability", "group", "highlight"]
KFOLD_COLUMNS = ["are", "se", "lower_ci", "upper_ci", "p_value", "p_value_adj", "rule", "fold",
                 "vars", "group"]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if np.isnan(v):
            return None
        if np.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def group_label(key: tuple) -> str:
    if key[0] == "joint":
        return "joint:" + "-".join(key[1])
    return f"marginal:{key[1]}:{key[2]}"


def fold_seed(seed: int, fold: int) -> int:
    return int(np.random.SeedSequence([seed, fold]).generate_state(1)[0] % (2**31 - 1))


# ---------------------------------------------------------------------------
# per-fold work


def _estimate_region(data, fold, train_idx, est_idx, key, region, reference, coefficient, settings,
                     seed, skipped):
    """Fit nuisances for one region on the training rows and target it on held-out rows."""
    names = data.a_names
    tr, te = train_idx, est_idx
    if reference is not None:
        in_tr = evaluate_region(region, data.a[tr], names) | evaluate_region(reference, data.a[tr], names)
        in_te = evaluate_region(region, data.a[te], names) | evaluate_region(reference, data.a[te], names)
        tr, te = tr[in_tr == 1], te[in_te == 1]
        if te.size == 0:
            skipped.append({"group": group_label(key), "reason": "no held-out rows in contrast"})
            return None
    train, est = data.subset(tr), data.subset(te)
    ind_tr = evaluate_region(region, train.a, names)
    ind_te = evaluate_region(region, est.a, names).astype(float)
    try:
        nuisance = fit_nuisance(train, ind_tr, settings.q_library, settings.g_library,
                                settings.g_min, seed=seed, inner_folds=settings.inner_folds)
    except PositivityError:
        skipped.append({"group": group_label(key), "reason": "single-class region indicator"})
        return None
    result = tmle_estimate(est, ind_te, nuisance)
    q1, q0 = nuisance.predict_counterfactuals(est.w)
    return RegionEstimate(key, fold, region, reference, coefficient, result, te, ind_te,
                          nuisance.scale.unscale(q1), nuisance.scale.unscale(q0),
                          nuisance.g_model.predict(est.w))


def run_fold(data: Dataset, fold: int, train_idx, est_idx, settings: AnalysisSettings) -> FoldResult:
    seed = fold_seed(settings.seed, fold)
    train = data.subset(train_idx)
    bf_config = settings.backfit_config()
    out = FoldResult(fold, np.asarray(train_idx), np.asarray(est_idx))
    skipped: list = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        if settings.joint:
            bf = backfit_joint(train.a, train.w, train.y, bf_config, data.a_names, seed=seed)
            out.diagnostics["joint_backfit"] = bf.diagnostics()
            for varset, cand in bf.f_model.best_rules(settings.direction).items():
                est = _estimate_region(data, fold, out.train_index, out.est_index, ("joint", varset),
                                       cand.region, None, cand.coefficient, settings, seed + 1,
                                       skipped)
                if est is not None:
                    out.estimates.append(est)
        if settings.marginal:
            out.diagnostics["marginal_backfit"] = {}
            for j, name in enumerate(data.a_names):
                regions, bf = backfit_marginal(train.a[:, j], train.w, train.y, bf_config,
                                               name=name, seed=seed + 2 + j)
                out.diagnostics["marginal_backfit"][name] = {
                    **bf.diagnostics(), "regions": [str(r) for r, _ in regions]}
                if len(regions) < 2:
                    continue
                reference = regions[0][0]
                for level, (region, _) in enumerate(regions[1:], start=1):
                    est = _estimate_region(data, fold, out.train_index, out.est_index,
                                           ("marginal", name, level), region, reference, None,
                                           settings, seed + 101 + j, skipped)
                    if est is not None:
                        out.estimates.append(est)
    out.diagnostics["skipped"] = skipped
    out.diagnostics["warnings"] = sorted({f"{w.category.__name__}: {w.message}" for w in caught})
    return out


# ---------------------------------------------------------------------------
# pooling


def pool_ivm(estimates) -> IvmResult:
    """Inverse-variance weighted mean of ``(psi, se)`` pairs."""
    estimates = [(float(p), float(s)) for p, s in estimates]
    if not estimates:
        raise ValueError("no estimates to pool")
    if any(not s > 0 for _, s in estimates):
        raise ValueError("standard errors must be positive")
    if len(estimates) == 1:
        return IvmResult(*estimates[0])
    psi = np.array([p for p, _ in estimates])
    w = 1.0 / np.array([s for _, s in estimates]) ** 2
    return IvmResult(float(np.sum(w * psi) / np.sum(w)), float(1.0 / np.sqrt(np.sum(w))))


def pool_tmle(estimates, y, scale: OutcomeScale, g_min=G_MIN) -> TmleResult:
    """One fluctuation over the stacked held-out predictions of every contributing fold.

    ``y`` is the full outcome vector; fold predictions are mapped onto the
    shared ``scale`` before targeting. The IC runs over all stacked rows.
    """
    if not estimates:
        raise ValueError("no fold contributed to this group")
    idx = np.concatenate([e.est_index for e in estimates])
    ind = np.concatenate([e.indicator for e in estimates])
    q1 = np.concatenate([e.q1 for e in estimates])
    q0 = np.concatenate([e.q0 for e in estimates])
    g1 = np.concatenate([e.g1 for e in estimates])
    to_scaled = lambda q: (q - scale.y_min) / scale.span  # noqa: E731
    return tmle_from_predictions(np.asarray(y)[idx], ind, to_scaled(q1), to_scaled(q0), g1,
                                 scale, g_min)


def stability_metric(key, folds, k) -> float:
    """Share of the ``k`` folds that produced an estimate for ``key``."""
    found = {f.fold for f in folds for e in f.estimates if e.key == key}
    return len(found) / k


def _group_key_order(key):
    return (0 if key[0] == "joint" else 1, len(key[1]) if key[0] == "joint" else 0, key[1:])


def assemble_report(data: Dataset, folds, settings: AnalysisSettings) -> CvReport:
    scale = OutcomeScale.fit(data.y)
    by_key: dict = {}
    for f in folds:
        for e in f.estimates:
            by_key.setdefault(e.key, []).append(e)
    groups = []
    for key in sorted(by_key, key=_group_key_order):
        ests = by_key[key]
        refs = [e.reference for e in ests if e.reference is not None]
        g = GroupReport(key, union_region([e.region for e in ests]),
                        union_region(refs) if refs else None,
                        stability_metric(key, folds, settings.k), ests)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            g.pooled = pool_tmle(ests, data.y, scale, settings.g_min)
        g.ivm = pool_ivm([(e.result.psi, e.result.se) for e in ests])
        groups.append(g)
    m = len(groups)
    for g in groups:
        g.p_adjusted = min(1.0, g.pooled.p_value * m)
        g.p_adjusted_ivm = min(1.0, g.ivm.p_value * m)
    return CvReport(groups, list(folds), settings, data.n, scale, data.a_names, data.w_names)


def run_analysis(data: Dataset, settings: AnalysisSettings = AnalysisSettings()) -> CvReport:
    """Cross-estimated region discovery and effect estimation over ``settings.k`` folds."""
    spec = kfold_split(data.n, settings.k, settings.seed)
    jobs = [delayed(run_fold)(data, fold, tr, te, settings) for fold, tr, te in spec.folds()]
    if settings.n_jobs == 1:
        folds = [job[0](*job[1], **job[2]) for job in jobs]
    else:
        folds = Parallel(n_jobs=settings.n_jobs)(jobs)
    return assemble_report(data, sorted(folds, key=lambda f: f.fold), settings)


class RegionEffectEstimator(BaseEstimator):
    """Estimator wrapper around :func:`run_analysis`.

    ``fit(A, y, W)`` stores the :class:`CvReport` as ``report_``.
    """

    def __init__(self, k=10, direction="max", delta=0.001, max_iter=10, g_min=G_MIN, joint=True,
                 marginal=True, n_jobs=1, random_state=0):
        self.k = k
        self.direction = direction
        self.delta = delta
        self.max_iter = max_iter
        self.g_min = g_min
        self.joint = joint
        self.marginal = marginal
        self.n_jobs = n_jobs
        self.random_state = random_state

    def fit(self, A, y, W, exposure_names=None, covariate_names=None):
        A = np.asarray(A, dtype=float)
        W = np.asarray(W, dtype=float)
        if A.ndim == 1:
            A = A[:, None]
        if W.ndim == 1:
            W = W[:, None]
        a_names = exposure_names or [f"A{j + 1}" for j in range(A.shape[1])]
        w_names = covariate_names or [f"W{j + 1}" for j in range(W.shape[1])]
        data = Dataset(W, A, np.asarray(y, dtype=float), tuple(w_names), tuple(a_names))
        settings = AnalysisSettings(k=self.k, direction=self.direction, seed=self.random_state,
                                    delta=self.delta, max_iter=self.max_iter, g_min=self.g_min,
                                    joint=self.joint, marginal=self.marginal, n_jobs=self.n_jobs)
        self.report_ = run_analysis(data, settings)
        return self

    def summary(self) -> pd.DataFrame:
        return self.report_.pooled_table()
