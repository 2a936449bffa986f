"""Replicated simulation runs with per-replicate checkpoints."""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from ..core import dumps
from ..cross_estimation import SCHEMA_VERSION, AnalysisSettings, run_analysis
from .evaluate import ESTIMATORS, TARGETS, Dgp, EvalRecord, evaluate_run, summarize

METRICS = ("estimate", "truth", "bias", "sqrt_n_bias", "se", "ci_lower", "ci_upper", "covered",
           "tp", "tn", "fp", "fn", "tpr", "tnr", "no_discovery")


@dataclass(frozen=True)
class SimulationSpec:
    dgp: str = "2d"
    sample_sizes: tuple = (200, 1000)
    iterations: int = 2
    k: int = 5
    seed: int = 0
    study_seed: int = 0
    n_jobs: int = 1
    large_sample_size: int = 500_000
    settings: AnalysisSettings = field(default_factory=lambda: AnalysisSettings(k=5, marginal=False))

    def __post_init__(self):
        if self.dgp not in ("2d", "3d"):
            raise ValueError("dgp must be '2d' or '3d'")
        if self.iterations < 1 or not self.sample_sizes:
            raise ValueError("need at least one sample size and one iteration")
        if min(self.sample_sizes) < 25:
            raise ValueError("sample sizes must be at least 25")

    def make_dgp(self) -> Dgp:
        if self.dgp == "2d":
            from .dgp2d import Dgp2dConfig

            return Dgp("2d", Dgp2dConfig.draw(self.study_seed))
        from .dgp3d import Dgp3dConfig

        return Dgp("3d", Dgp3dConfig(study_seed=self.study_seed))

    def to_dict(self) -> dict:
        return {"dgp": self.dgp, "sample_sizes": list(self.sample_sizes),
                "iterations": self.iterations, "k": self.k, "seed": self.seed,
                "study_seed": self.study_seed, "large_sample_size": self.large_sample_size,
                "settings": self.settings.to_dict()}


def replicate_seed(seed: int, n: int, iteration: int) -> int:
    return int(np.random.SeedSequence([seed, n, iteration]).generate_state(1)[0] % (2**31 - 1))


def run_replicate(spec: SimulationSpec, dgp: Dgp, n: int, iteration: int):
    """Generate, analyse and score one replicate; returns ``(records, report)``."""
    seed = replicate_seed(spec.seed, n, iteration)
    data = dgp.generate(n, seed)
    settings = replace(spec.settings, k=spec.k, seed=seed, n_jobs=1)
    report = run_analysis(data, settings)
    return evaluate_run(report, dgp, spec.large_sample_size), report


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _checkpoint_path(out_dir: Path, n: int, iteration: int) -> Path:
    return out_dir / "checkpoints" / f"n{n}_it{iteration}.json"


def _load_checkpoint(path: Path) -> list[EvalRecord]:
    rows = json.loads(path.read_text())["records"]
    fields = EvalRecord.__dataclass_fields__
    return [EvalRecord(**{k: (float("nan") if v is None else v) for k, v in r.items() if k in fields})
            for r in rows]


def _replicate_job(spec, dgp, n, iteration, out_dir):
    records, _ = run_replicate(spec, dgp, n, iteration)
    if out_dir is not None:
        payload = {"schema_version": SCHEMA_VERSION, "n": n, "iteration": iteration,
                   "records": [_clean(r.to_dict()) for r in records]}
        atomic_write(_checkpoint_path(out_dir, n, iteration), dumps(payload))
    return records


def _clean(d: dict) -> dict:
    return {k: (None if isinstance(v, float) and not np.isfinite(v) else v) for k, v in d.items()}


def run_simulation(spec: SimulationSpec, out_dir=None) -> tuple[pd.DataFrame, dict]:
    """Run every ``(n, iteration)`` pair, resuming from checkpoints in ``out_dir``.

    Writes ``metrics.csv`` (long format) and ``summary.json`` when ``out_dir``
    is given; returns both as objects.
    """
    out_dir = Path(out_dir) if out_dir is not None else None
    dgp = spec.make_dgp()
    done: dict = {}
    todo = []
    for n in spec.sample_sizes:
        for it in range(spec.iterations):
            ck = _checkpoint_path(out_dir, n, it) if out_dir is not None else None
            if ck is not None and ck.exists():
                done[(n, it)] = _load_checkpoint(ck)
            else:
                todo.append((n, it))
    if todo:
        jobs = [delayed(_replicate_job)(spec, dgp, n, it, out_dir) for n, it in todo]
        if spec.n_jobs == 1:
            results = [fn(*args, **kw) for fn, args, kw in jobs]
        else:
            results = Parallel(n_jobs=spec.n_jobs)(jobs)
        done.update(dict(zip(todo, results)))

    rows = []
    for (n, it) in sorted(done):
        for r in done[(n, it)]:
            d = r.to_dict()
            for metric in METRICS:
                value = d[metric]
                rows.append({"n": n, "iteration": it, "estimator": r.estimator,
                             "target": r.target, "metric": metric,
                             "value": float(value) if value is not None else float("nan")})
    metrics = pd.DataFrame(rows, columns=["n", "iteration", "estimator", "target", "metric",
                                          "value"])
    summary = {"schema_version": SCHEMA_VERSION, "spec": spec.to_dict(), "dgp": dgp.to_dict(),
               "true_region": str(dgp.true_region), "oracle_truth": dgp.oracle_truth,
               "results": []}
    for n in spec.sample_sizes:
        for est in ESTIMATORS:
            for tgt in TARGETS:
                recs = [r for it in range(spec.iterations) for r in done[(n, it)]
                        if r.estimator == est and r.target == tgt]
                summary["results"].append({"n": n, "estimator": est, "target": tgt,
                                           **summarize(recs)})
    if out_dir is not None:
        atomic_write(out_dir / "metrics.csv", metrics.to_csv(index=False, float_format="%.10g"))
        atomic_write(out_dir / "summary.json", dumps(_clean_tree(summary)))
    return metrics, summary


def _clean_tree(obj):
    if isinstance(obj, dict):
        return {k: _clean_tree(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_clean_tree(v) for v in obj]
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj
