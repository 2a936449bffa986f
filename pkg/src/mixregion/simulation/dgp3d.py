"""Three correlated continuous exposures split into a 2x2x2 cube of cells."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.special import softmax
from scipy.stats import norm

from ..core import Clause, Dataset, RectRegion, evaluate_region
from .dgp2d import BETA_MEANS, W_NAMES, draw_covariates

A_NAMES = ("A1", "A2", "A3")
CORRELATION = np.array([[1.0, 0.5, 0.8], [0.5, 1.0, 0.7], [0.8, 0.7, 1.0]])
CUTS = (0.99, 2.0, 2.5)
# cell bits give (A1 high, A2 high, A3 high)
CELLS = tuple(itertools.product((0, 1), repeat=3))
MAX_CELL = (1, 1, 0)


@dataclass(frozen=True)
class Dgp3dConfig:
    """Cell outcome effects ``betas`` (one per cell in ``CELLS`` order) plus nuisance terms.

    Covariates enter the outcome z-scored, so the region effect depends only
    on ``betas``.
    """

    betas: tuple = tuple(3.0 if c == MAX_CELL else 0.0 for c in CELLS)
    beta0: float = 0.0
    beta_w: tuple = (0.5, 0.5)
    sigma: float = 0.5
    cuts: tuple = CUTS
    cell_beta: np.ndarray = field(default=None, repr=False)
    study_seed: int = 0
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        b = np.asarray(self.betas, dtype=float)
        if b.shape != (8,):
            raise ValueError("need one beta per cell (8)")
        if np.sum(b == b.max()) != 1:
            raise ValueError("degenerate betas: the maximal cell must be unique")
        if self.cell_beta is None:
            rng = np.random.default_rng(self.study_seed)
            object.__setattr__(self, "cell_beta", rng.normal(BETA_MEANS, 1.0, size=(8, 4)))

    @property
    def max_cell(self) -> tuple:
        return CELLS[int(np.argmax(self.betas))]

    def to_dict(self) -> dict:
        return {"dgp": "3d", "betas": list(self.betas), "beta0": self.beta0,
                "beta_w": list(self.beta_w), "sigma": self.sigma, "cuts": list(self.cuts),
                "study_seed": self.study_seed, "cell_beta": self.cell_beta.round(12).tolist()}


def cell_region(cell, cuts=CUTS) -> RectRegion:
    clauses = [Clause(name, c, np.inf) if bit else Clause(name, -np.inf, c)
               for name, bit, c in zip(A_NAMES, cell, cuts)]
    return RectRegion(tuple(clauses))


def true_region_3d(config: Dgp3dConfig) -> RectRegion:
    return cell_region(config.max_cell, config.cuts)


def truth_3d(betas) -> float:
    """Largest cell effect minus the mean of the others."""
    b = np.asarray(betas, dtype=float)
    j = int(np.argmax(b))
    return float(b[j] - np.delete(b, j).mean())


def cell_probabilities(w, config: Dgp3dConfig) -> np.ndarray:
    x = np.column_stack([np.ones(len(w)), (w[:, 0] - 37) / 3, w[:, 1] - 20, w[:, 2]])
    return softmax(x @ config.cell_beta.T, axis=1)


def draw_within_cell(cell_idx, config: Dgp3dConfig, rng) -> np.ndarray:
    """Correlated normal draws pushed through the CDF into each row's cell box."""
    n = cell_idx.shape[0]
    z = rng.multivariate_normal(np.zeros(3), CORRELATION, size=n)
    u = norm.cdf(z)
    bits = np.asarray(CELLS)[cell_idx]
    cut_p = norm.cdf(np.asarray(config.cuts))
    lo = np.where(bits == 1, cut_p, 0.0)
    hi = np.where(bits == 1, 1.0, cut_p)
    a = norm.ppf(lo + u * (hi - lo))
    # guard the open upper edge of low cells against rounding onto the cut
    cuts = np.asarray(config.cuts)
    return np.where((bits == 0) & (a >= cuts), np.nextafter(cuts, -np.inf), a)


def sample_3d(n, config: Dgp3dConfig, rng) -> tuple[Dataset, np.ndarray]:
    w = draw_covariates(rng, n)
    p = cell_probabilities(w, config)
    u = rng.random(n)[:, None]
    cell = np.minimum((u > np.cumsum(p, axis=1)).sum(axis=1), 7)
    a = draw_within_cell(cell, config, rng)
    zw = np.column_stack([(w[:, 0] - 37) / 3, w[:, 1] - 20])
    y = (config.beta0 + np.asarray(config.betas)[cell] + zw @ np.asarray(config.beta_w)
         + rng.normal(0, config.sigma, n))
    return Dataset(w, a, y, W_NAMES, A_NAMES), cell


def cell_membership(region: RectRegion, config: Dgp3dConfig, m: int = 50_000,
                    seed: int = 2024) -> np.ndarray:
    """``P(A in region | cell)`` for each of the 8 cells, from ``m`` draws per cell."""
    rng = np.random.default_rng(seed)
    out = np.empty(8)
    for c in range(8):
        a = draw_within_cell(np.full(m, c), config, rng)
        out[c] = evaluate_region(region, a, A_NAMES).mean()
    return out


def region_effect_3d(region: RectRegion, config: Dgp3dConfig, b: int = 100_000,
                     seed: int = 12345) -> tuple[float, float]:
    """ARE of an arbitrary region under the generating law; ``(psi, mc_se)``."""
    key = ("effect", str(region), b, seed)
    if key not in config._cache:
        member = cell_membership(region, config)
        w = draw_covariates(np.random.default_rng(seed), b)
        p = cell_probabilities(w, config)
        beta = np.asarray(config.betas)
        p_in, p_out = p * member, p * (1 - member)
        if np.any(p_in.sum(axis=1) <= 0) or np.any(p_out.sum(axis=1) <= 0):
            raise ValueError("region has zero probability inside or outside for some covariates")
        d = p_in @ beta / p_in.sum(axis=1) - p_out @ beta / p_out.sum(axis=1)
        config._cache[key] = (float(d.mean()), float(d.std(ddof=1) / np.sqrt(b)))
    return config._cache[key]


def gen_3d(n: int, seed: int, config: Dgp3dConfig | None = None, max_redraws: int = 1000):
    """Draw ``n`` rows; redraws until the maximal cell holds at least one row."""
    config = config if config is not None else Dgp3dConfig()
    target = CELLS.index(config.max_cell)
    rng = np.random.default_rng(seed)
    for _ in range(max_redraws):
        data, cell = sample_3d(n, config, rng)
        if np.any(cell == target):
            return data, true_region_3d(config), config
    raise RuntimeError("maximal cell never populated; check the configuration")
