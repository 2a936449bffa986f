"""Data-adaptive discovery and cross-estimated effects of exposure-mixture regions."""

__version__ = "0.1.0"

from .core import (Clause, Dataset, FoldSpec, OutcomeScale, RectRegion, SchemaError,
                   evaluate_region, kfold_split, read_csv, union_region)
from .cross_estimation import (AnalysisSettings, CvReport, RegionEffectEstimator, pool_ivm,
                               pool_tmle, run_analysis, stability_metric)
from .tmle import clever_covariate, fit_nuisance, fluctuate, tmle_estimate

__all__ = [
    "AnalysisSettings",
    "Clause",
    "CvReport",
    "Dataset",
    "FoldSpec",
    "OutcomeScale",
    "RectRegion",
    "RegionEffectEstimator",
    "SchemaError",
    "clever_covariate",
    "evaluate_region",
    "fit_nuisance",
    "fluctuate",
    "kfold_split",
    "pool_ivm",
    "pool_tmle",
    "read_csv",
    "run_analysis",
    "stability_metric",
    "tmle_estimate",
    "union_region",
]
