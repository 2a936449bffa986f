"""Two discrete exposures on a 5x5 grid with covariate-driven cell probabilities."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.special import softmax

from ..core import Clause, Dataset, RectRegion, evaluate_region

LEVELS = np.arange(1, 6)
A_NAMES = ("A1", "A2")
W_NAMES = ("age", "bmi", "sex")
BETA_MEANS = (0.3, 0.4, 0.5, 0.5)
BETA_SD = 2.0


@dataclass(frozen=True)
class Dgp2dConfig:
    """Cell-probability coefficients ``beta`` (25 cells x 4) and outcome noise.

    Cell ``c`` holds ``(A1, A2) = (c // 5 + 1, c % 5 + 1)``. Probabilities are a
    softmax of ``x(w) @ beta[c]`` with ``x(w) = (1, (age-37)/3, bmi-20, sex)``.
    """

    beta: np.ndarray
    noise_sd: float = 0.1
    study_seed: int | None = None
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    @classmethod
    def draw(cls, study_seed: int = 0) -> "Dgp2dConfig":
        rng = np.random.default_rng(study_seed)
        beta = rng.normal(BETA_MEANS, BETA_SD, size=(25, 4))
        return cls(beta=beta, study_seed=study_seed)

    @cached_property
    def cells(self) -> np.ndarray:
        return np.array(list(itertools.product(LEVELS, LEVELS)), dtype=float)

    def to_dict(self) -> dict:
        return {"dgp": "2d", "study_seed": self.study_seed, "noise_sd": self.noise_sd,
                "beta": self.beta.round(12).tolist()}


def draw_covariates(rng, n):
    age = rng.normal(37, 3, n)
    bmi = rng.normal(20, 1, n)
    sex = rng.binomial(1, 0.5, n).astype(float)
    return np.column_stack([age, bmi, sex])


def cell_probabilities(w, config: Dgp2dConfig) -> np.ndarray:
    x = np.column_stack([np.ones(len(w)), (w[:, 0] - 37) / 3, w[:, 1] - 20, w[:, 2]])
    return softmax(x @ config.beta.T, axis=1)


def exposure_mean(a1, a2):
    return 0.2 * a1**2 + 0.5 * a1 * a2 + 0.5 * a2**2


def outcome_mean(a, w):
    """Conditional mean of Y given exposures and covariates."""
    return exposure_mean(a[:, 0], a[:, 1]) + 0.2 * w[:, 0] + 0.4 * w[:, 2]


def _region_masks(regions, config):
    return np.stack([evaluate_region(r, config.cells, A_NAMES) for r in regions]).astype(float)


def region_effects(regions, config: Dgp2dConfig, w) -> np.ndarray:
    """ARE of each region averaged over covariate draws ``w``; shape ``(len(w), R)``."""
    masks = _region_masks(regions, config)
    if np.any(masks.sum(axis=1) == 0) or np.any(masks.sum(axis=1) == 25):
        raise ValueError("region must contain some but not all grid cells")
    p = cell_probabilities(w, config)
    mu = exposure_mean(config.cells[:, 0], config.cells[:, 1])
    # covariate terms of the outcome cancel in the contrast
    inside = (p * mu) @ masks.T / (p @ masks.T)
    outside = (p * mu) @ (1 - masks).T / (p @ (1 - masks).T)
    return inside - outside


def truth_2d(region: RectRegion, config: Dgp2dConfig, b: int = 100_000, seed: int = 12345):
    """Monte Carlo ARE over ``b`` covariate draws; returns ``(psi, mc_se)``."""
    w = draw_covariates(np.random.default_rng(seed), b)
    d = region_effects([region], config, w)[:, 0]
    return float(d.mean()), float(d.std(ddof=1) / np.sqrt(b))


def grid_rectangles():
    out = []
    for lo1, hi1, lo2, hi2 in itertools.product(LEVELS, LEVELS, LEVELS, LEVELS):
        if lo1 > hi1 or lo2 > hi2:
            continue
        clauses = []
        for name, lo, hi in (("A1", lo1, hi1), ("A2", lo2, hi2)):
            if lo == 1 and hi == 5:
                continue
            clauses.append(Clause(name, lo - 0.5 if lo > 1 else -np.inf,
                                  hi + 0.5 if hi < 5 else np.inf))
        if clauses:
            out.append(RectRegion(tuple(clauses)))
    return out


def true_region_2d(config: Dgp2dConfig, b: int = 100_000, seed: int = 12345) -> RectRegion:
    """Rectangle on the grid with the largest ARE."""
    if "true_region" not in config._cache:
        rects = grid_rectangles()
        w = draw_covariates(np.random.default_rng(seed), b)
        psi = region_effects(rects, config, w).mean(axis=0)
        config._cache["true_region"] = rects[int(np.argmax(psi))]
    return config._cache["true_region"]


def sample_2d(n, config: Dgp2dConfig, rng) -> Dataset:
    w = draw_covariates(rng, n)
    p = cell_probabilities(w, config)
    u = rng.random(n)[:, None]
    cell = np.minimum((u > np.cumsum(p, axis=1)).sum(axis=1), 24)
    a = config.cells[cell]
    y = outcome_mean(a, w) + rng.normal(0, config.noise_sd, n)
    return Dataset(w, a, y, W_NAMES, A_NAMES)


def gen_2d(n: int, seed: int, config: Dgp2dConfig | None = None, max_redraws: int = 1000):
    """Draw ``n`` rows; redraws until the true region holds at least one row."""
    if n < 25:
        raise ValueError("n must be at least 25 to populate the grid")
    config = config if config is not None else Dgp2dConfig.draw(0)
    region = true_region_2d(config)
    rng = np.random.default_rng(seed)
    for _ in range(max_redraws):
        data = sample_2d(n, config, rng)
        if evaluate_region(region, data.a, A_NAMES).any():
            return data, region, config
    raise RuntimeError("true region never populated; check the configuration")
