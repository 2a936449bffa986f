"""Scoring a cross-estimated report against a known data-generating process."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..core import RectRegion, evaluate_region
from . import dgp2d, dgp3d

ESTIMATORS = ("pooled_tmle", "mean_kfold", "ivm")
TARGETS = ("oracle", "data_adaptive")


class Dgp:
    """Uniform access to a generator, its true region and its region-effect oracle."""

    def __init__(self, kind: str, config=None, truth_draws: int = 100_000):
        if kind == "2d":
            self.config = config if config is not None else dgp2d.Dgp2dConfig.draw(0)
            self.names = dgp2d.A_NAMES
        elif kind == "3d":
            self.config = config if config is not None else dgp3d.Dgp3dConfig()
            self.names = dgp3d.A_NAMES
        else:
            raise ValueError(f"unknown dgp {kind!r}")
        self.kind = kind
        self.truth_draws = truth_draws
        self._large = {}
        self._truth = {}

    def generate(self, n, seed):
        gen = dgp2d.gen_2d if self.kind == "2d" else dgp3d.gen_3d
        data, _, _ = gen(n, seed, self.config)
        return data

    @property
    def true_region(self) -> RectRegion:
        if self.kind == "2d":
            return dgp2d.true_region_2d(self.config)
        return dgp3d.true_region_3d(self.config)

    @property
    def oracle_truth(self) -> float:
        if self.kind == "2d":
            return self.truth(self.true_region)
        return dgp3d.truth_3d(self.config.betas)

    def truth(self, region: RectRegion) -> float:
        """ARE of ``region``; NaN when the region or its complement has no mass."""
        key = str(region)
        if key not in self._truth:
            try:
                if self.kind == "2d":
                    psi, _ = dgp2d.truth_2d(region, self.config, b=self.truth_draws)
                else:
                    psi, _ = dgp3d.region_effect_3d(region, self.config, b=self.truth_draws)
            except ValueError:
                psi = float("nan")
            self._truth[key] = psi
        return self._truth[key]

    def large_sample(self, size: int = 500_000, seed: int = 99) -> np.ndarray:
        """Exposure matrix of a large draw, cached per size."""
        if size not in self._large:
            rng = np.random.default_rng(seed)
            if self.kind == "2d":
                data = dgp2d.sample_2d(size, self.config, rng)
            else:
                data, _ = dgp3d.sample_3d(size, self.config, rng)
            self._large[size] = data.a
        return self._large[size]

    def to_dict(self) -> dict:
        return self.config.to_dict()


@dataclass(frozen=True)
class EvalRecord:
    estimator: str
    target: str
    n: int
    estimate: float
    truth: float
    se: float
    ci_lower: float
    ci_upper: float
    covered: bool
    tp: int
    tn: int
    fp: int
    fn: int
    no_discovery: bool = False

    @property
    def bias(self) -> float:
        return self.estimate - self.truth

    @property
    def sqrt_n_bias(self) -> float:
        return float(np.sqrt(self.n) * self.bias)

    @property
    def tpr(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else float("nan")

    @property
    def tnr(self) -> float:
        return self.tn / (self.tn + self.fp) if self.tn + self.fp else float("nan")

    def to_dict(self) -> dict:
        return {**asdict(self), "bias": self.bias, "sqrt_n_bias": self.sqrt_n_bias,
                "tpr": self.tpr, "tnr": self.tnr}


def confusion(estimated: RectRegion, true: RectRegion, a, names):
    e = evaluate_region(estimated, a, names).astype(bool)
    t = evaluate_region(true, a, names).astype(bool)
    return int(np.sum(e & t)), int(np.sum(~e & ~t)), int(np.sum(e & ~t)), int(np.sum(~e & t))


def select_group(report, true_region: RectRegion):
    """The joint group whose variable set matches the true region, if any."""
    for g in report.joint_groups():
        if g.varset == true_region.varset:
            return g
    return None


def evaluate_run(report, dgp: Dgp, large_sample_size: int = 500_000) -> list[EvalRecord]:
    """Records for every estimator x target pair of one analysis."""
    n = report.n
    true_region = dgp.true_region
    psi0 = dgp.oracle_truth
    group = select_group(report, true_region)
    if group is None:
        nan = float("nan")
        return [EvalRecord(est, tgt, n, nan, nan, nan, nan, nan, False, 0, 0, 0, 0, True)
                for est in ESTIMATORS for tgt in TARGETS]
    a = dgp.large_sample(large_sample_size)
    cm = confusion(group.union, true_region, a, dgp.names)
    fold_truths = np.array([dgp.truth(e.region) for e in group.estimates])
    fold_w = 1.0 / np.array([e.result.se for e in group.estimates]) ** 2
    mk = group.mean_kfold()
    fits = {
        "pooled_tmle": (group.pooled.psi, group.pooled.se, *group.pooled.ci95,
                        dgp.truth(group.union)),
        "mean_kfold": (mk["psi"], mk["se"], mk["ci_lower"], mk["ci_upper"],
                       float(fold_truths.mean())),
        "ivm": (group.ivm.theta, group.ivm.se, *group.ivm.ci95,
                float(np.sum(fold_w * fold_truths) / np.sum(fold_w))),
    }
    out = []
    for est, (psi, se, lo, hi, da_truth) in fits.items():
        for tgt, truth in (("oracle", psi0), ("data_adaptive", da_truth)):
            out.append(EvalRecord(est, tgt, n, float(psi), float(truth), float(se), float(lo),
                                  float(hi), bool(lo <= truth <= hi), *cm))
    return out


def summarize(records: list[EvalRecord]) -> dict:
    """Table-style aggregates over replicates of one ``(n, estimator, target)`` cell.

    ``mse = bias**2 + variance`` with the population variance of the errors.
    Replicates without a discovered group or with an undefined truth (a region
    covering all or none of the exposure support) are counted, not scored.
    """
    discovered = [r for r in records if not r.no_discovery]
    found = [r for r in discovered if np.isfinite(r.truth)]
    out = {"replicates": len(records), "no_discovery": len(records) - len(discovered),
           "undefined_truth": len(discovered) - len(found)}
    if not found:
        return out
    n = found[0].n
    err = np.array([r.bias for r in found])
    bias = float(err.mean())
    var = float(np.mean((err - bias) ** 2))
    out.update({
        "bias": bias, "abs_bias": abs(bias), "sd": float(np.sqrt(var)), "variance": var,
        "mse": bias**2 + var, "sqrt_n_abs_bias": float(np.sqrt(n) * abs(bias)),
        "n_mse": n * (bias**2 + var),
        "coverage": float(np.mean([r.covered for r in found])),
        "median_tpr": float(np.median([r.tpr for r in found])),
        "median_tnr": float(np.median([r.tnr for r in found])),
    })
    return out
