"""Command-line entry point: ``mixregion analyze`` and ``mixregion simulate``.

Settings come from an INI file (section ``[analysis]`` or ``[simulate]``),
are overridden by flags, and are echoed into a manifest next to the outputs.
The ``MIXREGION_OUTPUT_DIR`` environment variable overrides the output
directory from the file but not the ``--output-dir`` flag.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import logging
import os
import platform
import sys
import traceback
from dataclasses import dataclass, field
from pathlib import Path

from .core import SchemaError, dumps, read_csv
from .cross_estimation import SCHEMA_VERSION, AnalysisSettings, run_analysis
from .learners import default_library, parse_library

EXIT_OK, EXIT_SCHEMA, EXIT_FAILURE = 0, 2, 3
OUTPUT_ENV = "MIXREGION_OUTPUT_DIR"

log = logging.getLogger("mixregion")


class ConfigError(ValueError):
    pass


def _as_list(text) -> list[str]:
    if text is None:
        return []
    if isinstance(text, (list, tuple)):
        return [str(t) for t in text]
    return [t.strip() for t in str(text).split(",") if t.strip()]


def _as_bool(text) -> bool:
    if isinstance(text, bool):
        return text
    value = str(text).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


@dataclass
class AnalysisConfig:
    input: str
    output_dir: str
    outcome: str
    exposures: list
    covariates: list
    k: int = 10
    direction: str = "max"
    seed: int = 0
    delta: float = 0.001
    max_iter: int = 10
    g_min: float = 0.025
    q_library: str | None = None
    g_library: str | None = None
    h_library: str | None = None
    n_jobs: int = 1
    stability_threshold: float = 0.75
    joint: bool = True
    marginal: bool = True

    def __post_init__(self):
        roles = [self.outcome, *self.exposures, *self.covariates]
        if not self.exposures:
            raise ConfigError("at least one exposure column is required")
        if not self.covariates:
            raise ConfigError("at least one covariate column is required")
        if len(set(roles)) != len(roles):
            raise ConfigError("outcome, exposure and covariate columns must be disjoint")
        if self.k < 2:
            raise ConfigError("k must be at least 2")

    def settings(self) -> AnalysisSettings:
        def lib(text, family):
            return tuple(parse_library(text, family) if text else default_library(family))

        try:
            return AnalysisSettings(
                k=self.k, direction=self.direction, seed=self.seed, delta=self.delta,
                max_iter=self.max_iter, g_min=self.g_min, joint=self.joint,
                marginal=self.marginal, n_jobs=self.n_jobs,
                stability_threshold=self.stability_threshold,
                q_library=lib(self.q_library, "identity"),
                g_library=lib(self.g_library, "logistic"),
                h_library=lib(self.h_library, "identity"))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class SimulateConfig:
    output_dir: str
    dgp: str = "2d"
    sample_sizes: list = field(default_factory=lambda: [200, 1000])
    iterations: int = 2
    k: int = 5
    seed: int = 0
    study_seed: int = 0
    n_jobs: int = 1
    marginal: bool = False
    large_sample_size: int = 500_000

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


_ANALYSIS_TYPES = {"k": int, "seed": int, "max_iter": int, "n_jobs": int, "delta": float,
                   "g_min": float, "stability_threshold": float, "joint": _as_bool,
                   "marginal": _as_bool, "exposures": _as_list, "covariates": _as_list}
_SIMULATE_TYPES = {"iterations": int, "k": int, "seed": int, "study_seed": int, "n_jobs": int,
                   "large_sample_size": int, "marginal": _as_bool,
                   "sample_sizes": lambda t: [int(x) for x in _as_list(t)]}


def load_config_file(path, section: str) -> dict:
    """Key/values of ``section`` from an INI file, or the ``config`` echo of a manifest."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    if path.suffix == ".json":
        manifest = json.loads(path.read_text())
        if manifest.get("command") != section:
            raise ConfigError(f"manifest {path} is not from a {section!r} run")
        return dict(manifest["config"])
    parser = configparser.ConfigParser(interpolation=None)
    parser.read(path)
    if not parser.has_section(section):
        raise ConfigError(f"config file {path} has no [{section}] section")
    return dict(parser[section])


def _coerce(values: dict, types: dict, known) -> dict:
    out = {}
    for key, value in values.items():
        key = key.replace("-", "_")
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
        if value is None:
            continue
        try:
            out[key] = types[key](value) if key in types and not isinstance(value, (list, bool)) \
                else value
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {key}: {value!r}") from exc
    return out


def _merge(args, section, types, known) -> dict:
    values = load_config_file(args.config, section) if args.config else {}
    values = _coerce(values, types, known)
    env_dir = os.environ.get(OUTPUT_ENV)
    if env_dir:
        values["output_dir"] = env_dir
    overrides = {k: v for k, v in vars(args).items()
                 if k in known and v is not None and k != "config"}
    values.update(_coerce(overrides, types, known))
    return values


def build_analysis_config(args) -> AnalysisConfig:
    values = _merge(args, "analysis", _ANALYSIS_TYPES, AnalysisConfig.__dataclass_fields__)
    missing = [k for k in ("input", "output_dir", "outcome", "exposures", "covariates")
               if k not in values]
    if missing:
        raise ConfigError(f"missing required setting(s): {', '.join(missing)}")
    try:
        return AnalysisConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def build_simulate_config(args) -> SimulateConfig:
    values = _merge(args, "simulate", _SIMULATE_TYPES, SimulateConfig.__dataclass_fields__)
    if "output_dir" not in values:
        raise ConfigError("missing required setting: output_dir")
    return SimulateConfig(**values)


def _versions() -> dict:
    import numba
    import numpy
    import pandas
    import scipy
    import sklearn

    from . import __version__

    return {"mixregion": __version__, "python": platform.python_version(),
            "numpy": numpy.__version__, "scipy": scipy.__version__,
            "scikit-learn": sklearn.__version__, "pandas": pandas.__version__,
            "numba": numba.__version__}


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def cmd_analyze(config: AnalysisConfig) -> int:
    from .simulation.harness import atomic_write

    settings = config.settings()
    data = read_csv(config.input, config.outcome, config.exposures, config.covariates)
    log.info("analysing %d rows, %d exposures, k=%d", data.n, len(data.a_names), settings.k)
    report = run_analysis(data, settings)
    out = Path(config.output_dir)
    atomic_write(out / "report.json", report.to_json())
    atomic_write(out / "pooled.csv", report.pooled_table().to_csv(index=False, float_format="%.6g"))
    atomic_write(out / "kfold.csv", report.kfold_table().to_csv(index=False, float_format="%.6g"))
    manifest = {"schema_version": SCHEMA_VERSION, "command": "analysis",
                "config": config.to_dict(), "seed": config.seed,
                "input_sha256": _sha256(config.input), "versions": _versions()}
    atomic_write(out / "manifest.json", dumps(manifest))
    return EXIT_OK


def cmd_simulate(config: SimulateConfig) -> int:
    from .simulation.harness import SimulationSpec, atomic_write, run_simulation

    try:
        spec = SimulationSpec(dgp=config.dgp, sample_sizes=tuple(config.sample_sizes),
                              iterations=config.iterations, k=config.k, seed=config.seed,
                              study_seed=config.study_seed, n_jobs=config.n_jobs,
                              large_sample_size=config.large_sample_size,
                              settings=AnalysisSettings(k=config.k, marginal=config.marginal))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    out = Path(config.output_dir)
    run_simulation(spec, out)
    manifest = {"schema_version": SCHEMA_VERSION, "command": "simulate",
                "config": config.to_dict(), "seed": config.seed, "versions": _versions()}
    atomic_write(out / "manifest.json", dumps(manifest))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mixregion",
                                     description="Cross-estimated exposure-region effects.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="run the full analysis on a CSV file")
    a.add_argument("--config", help="INI file with an [analysis] section, or a manifest.json")
    a.add_argument("--input")
    a.add_argument("--output-dir", dest="output_dir")
    a.add_argument("--outcome")
    a.add_argument("--exposures", help="comma-separated column names")
    a.add_argument("--covariates", help="comma-separated column names")
    a.add_argument("--k", type=int)
    a.add_argument("--direction", choices=("max", "min"))
    a.add_argument("--seed", type=int)
    a.add_argument("--delta", type=float)
    a.add_argument("--max-iter", dest="max_iter", type=int)
    a.add_argument("--g-min", dest="g_min", type=float)
    a.add_argument("--q-library", dest="q_library")
    a.add_argument("--g-library", dest="g_library")
    a.add_argument("--h-library", dest="h_library")
    a.add_argument("--n-jobs", dest="n_jobs", type=int)
    a.add_argument("--stability-threshold", dest="stability_threshold", type=float)
    a.add_argument("--no-joint", dest="joint", action="store_const", const=False)
    a.add_argument("--no-marginal", dest="marginal", action="store_const", const=False)

    s = sub.add_parser("simulate", help="run the simulation benchmark")
    s.add_argument("--config", help="INI file with a [simulate] section, or a manifest.json")
    s.add_argument("--output-dir", dest="output_dir")
    s.add_argument("--dgp", choices=("2d", "3d"))
    s.add_argument("--sample-sizes", dest="sample_sizes", help="comma-separated, e.g. 200,1000")
    s.add_argument("--iterations", type=int)
    s.add_argument("--k", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--study-seed", dest="study_seed", type=int)
    s.add_argument("--n-jobs", dest="n_jobs", type=int)
    s.add_argument("--marginal", dest="marginal", action="store_const", const=True)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "analyze":
            config = build_analysis_config(args)
            runner = lambda: cmd_analyze(config)  # noqa: E731
        else:
            config = build_simulate_config(args)
            runner = lambda: cmd_simulate(config)  # noqa: E731
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    try:
        return runner()
    except (ConfigError, SchemaError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except Exception as exc:  # noqa: BLE001 - any analysis failure maps to one exit code
        log.debug(traceback.format_exc())
        print(f"analysis failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
