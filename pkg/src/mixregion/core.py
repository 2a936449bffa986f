"""Shared data model: datasets, rectangular exposure regions, folds and outcome scaling."""

from __future__ import annotations

import json
import math
import re
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import pandas as pd


class SchemaError(ValueError):
    """Input data does not match the declared column roles."""


class DegenerateOutcomeError(ValueError):
    pass


class OutcomeClampWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Dataset:
    """Observed data ``(W, A, Y)`` with column names and optional weights."""

    w: np.ndarray
    a: np.ndarray
    y: np.ndarray
    w_names: tuple[str, ...]
    a_names: tuple[str, ...]
    weights: np.ndarray | None = None

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        a = np.asarray(self.a, dtype=float)
        y = np.asarray(self.y, dtype=float).ravel()
        if w.ndim == 1:
            w = w[:, None]
        if a.ndim == 1:
            a = a[:, None]
        n = y.shape[0]
        if w.shape[0] != n or a.shape[0] != n:
            raise SchemaError(f"row counts differ: W={w.shape[0]}, A={a.shape[0]}, Y={n}")
        if len(self.w_names) != w.shape[1] or len(self.a_names) != a.shape[1]:
            raise SchemaError("column name count does not match matrix width")
        names = list(self.w_names) + list(self.a_names)
        if len(set(names)) != len(names):
            raise SchemaError("column names must be unique")
        for label, arr in (("W", w), ("A", a), ("Y", y)):
            if not np.all(np.isfinite(arr)):
                raise SchemaError(f"missing or non-finite values in {label}")
        weights = self.weights
        if weights is not None:
            weights = np.asarray(weights, dtype=float).ravel()
            if weights.shape[0] != n:
                raise SchemaError("weights length does not match rows")
        for attr, val in (("w", w), ("a", a), ("y", y), ("weights", weights)):
            if val is not None:
                val.setflags(write=False)
            object.__setattr__(self, attr, val)
        object.__setattr__(self, "w_names", tuple(self.w_names))
        object.__setattr__(self, "a_names", tuple(self.a_names))

    @property
    def n(self) -> int:
        return self.y.shape[0]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(
            self.w[idx], self.a[idx], self.y[idx], self.w_names, self.a_names,
            None if self.weights is None else self.weights[idx],
        )

    @classmethod
    def from_frame(cls, df: pd.DataFrame, outcome: str, exposures: Sequence[str],
                   covariates: Sequence[str]) -> "Dataset":
        roles = [outcome, *exposures, *covariates]
        if len(set(roles)) != len(roles):
            raise SchemaError("column roles must be disjoint")
        missing = [c for c in roles if c not in df.columns]
        if missing:
            raise SchemaError(f"missing column(s): {', '.join(missing)}")
        for col in roles:
            values = pd.to_numeric(df[col], errors="coerce")
            bad = values.isna() & df[col].notna()
            if bad.any():
                row = int(np.flatnonzero(bad.to_numpy())[0])
                raise SchemaError(f"non-numeric value {df[col].iloc[row]!r} at row {row + 1}, column {col!r}")
            if values.isna().any():
                row = int(np.flatnonzero(values.isna().to_numpy())[0])
                raise SchemaError(f"missing value at row {row + 1}, column {col!r}")
        frame = df[roles].apply(pd.to_numeric)
        return cls(
            w=frame[list(covariates)].to_numpy(float),
            a=frame[list(exposures)].to_numpy(float),
            y=frame[outcome].to_numpy(float),
            w_names=tuple(covariates),
            a_names=tuple(exposures),
        )


def read_csv(path, outcome: str, exposures: Sequence[str], covariates: Sequence[str]) -> Dataset:
    df = pd.read_csv(path)
    return Dataset.from_frame(df, outcome, exposures, covariates)


# ---------------------------------------------------------------------------
# regions


def _fmt(x: float) -> str:
    return format(float(x), ".6g")


@dataclass(frozen=True, order=True)
class Clause:
    """Interval constraint ``lo (<|<=) var (<|<=) hi`` on one exposure."""

    var: str
    lo: float = -math.inf
    hi: float = math.inf
    lo_closed: bool = True
    hi_closed: bool = False

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"clause on {self.var!r} needs lo < hi, got {self.lo} >= {self.hi}")

    def mask(self, x: np.ndarray) -> np.ndarray:
        lower = x >= self.lo if self.lo_closed else x > self.lo
        upper = x <= self.hi if self.hi_closed else x < self.hi
        return lower & upper

    def terms(self) -> list[str]:
        out = []
        if math.isfinite(self.lo):
            out.append(f"{self.var} {'>=' if self.lo_closed else '>'} {_fmt(self.lo)}")
        if math.isfinite(self.hi):
            out.append(f"{self.var} {'<=' if self.hi_closed else '<'} {_fmt(self.hi)}")
        if not out:
            out.append(f"{self.var} > -inf")
        return out

    def to_dict(self) -> dict:
        return {
            "var": self.var,
            "lo": None if math.isinf(self.lo) else float(self.lo),
            "hi": None if math.isinf(self.hi) else float(self.hi),
            "lo_closed": self.lo_closed,
            "hi_closed": self.hi_closed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Clause":
        return cls(
            d["var"],
            -math.inf if d.get("lo") is None else float(d["lo"]),
            math.inf if d.get("hi") is None else float(d["hi"]),
            bool(d.get("lo_closed", True)),
            bool(d.get("hi_closed", False)),
        )


@dataclass(frozen=True)
class RectRegion:
    """Conjunction of per-exposure interval clauses (at most one per exposure)."""

    clauses: tuple[Clause, ...]

    def __post_init__(self):
        clauses = tuple(sorted(self.clauses, key=lambda c: c.var))
        names = [c.var for c in clauses]
        if not names:
            raise ValueError("a region needs at least one clause")
        if len(set(names)) != len(names):
            raise ValueError(f"more than one clause per exposure: {names}")
        object.__setattr__(self, "clauses", clauses)

    @property
    def varset(self) -> tuple[str, ...]:
        return tuple(c.var for c in self.clauses)

    def clause(self, var: str) -> Clause:
        for c in self.clauses:
            if c.var == var:
                return c
        raise KeyError(var)

    def evaluate(self, a: np.ndarray, names: Sequence[str]) -> np.ndarray:
        return evaluate_region(self, a, names)

    def __str__(self) -> str:
        return " & ".join(t for c in self.clauses for t in c.terms())

    def to_dict(self) -> dict:
        return {"rule": str(self), "varset": list(self.varset),
                "clauses": [c.to_dict() for c in self.clauses]}

    @classmethod
    def from_dict(cls, d: dict) -> "RectRegion":
        return cls(tuple(Clause.from_dict(c) for c in d["clauses"]))

    @classmethod
    def from_string(cls, rule: str) -> "RectRegion":
        """Parse the canonical ``"var >= lo & var < hi & ..."`` form."""
        bounds: dict[str, dict] = {}
        for term in rule.split("&"):
            m = re.fullmatch(r"\s*(\S+)\s*(>=|<=|>|<)\s*(\S+)\s*", term)
            if m is None:
                raise ValueError(f"cannot parse rule term {term!r}")
            var, op, value = m.group(1), m.group(2), float(m.group(3))
            b = bounds.setdefault(var, {})
            if op.startswith(">"):
                if not math.isinf(value):
                    b["lo"], b["lo_closed"] = value, op == ">="
            else:
                b["hi"], b["hi_closed"] = value, op == "<="
        return cls(tuple(Clause(v, **b) for v, b in bounds.items()))


def evaluate_region(region: RectRegion, a: np.ndarray, names: Sequence[str]) -> np.ndarray:
    """Binary indicator of rows of ``a`` that satisfy every clause of ``region``."""
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    index = {name: j for j, name in enumerate(names)}
    out = np.ones(a.shape[0], dtype=bool)
    for c in region.clauses:
        if c.var not in index:
            raise SchemaError(f"region variable {c.var!r} is not an exposure column")
        out &= c.mask(a[:, index[c.var]])
    return out.astype(np.int8)


def union_region(regions: Iterable[RectRegion]) -> RectRegion:
    """Per-variable interval hull of regions that share a varset.

    The hull covers every input region; it can also cover points that no input
    region covers (e.g. the gap between ``[1, 2]`` and ``[3, 4]``).
    """
    regions = list(regions)
    if not regions:
        raise ValueError("union of zero regions")
    varset = regions[0].varset
    if any(r.varset != varset for r in regions):
        raise ValueError("union_region needs identical varsets; group regions by varset first")
    clauses = []
    for j, var in enumerate(varset):
        cs = [r.clauses[j] for r in regions]
        lo = min(c.lo for c in cs)
        hi = max(c.hi for c in cs)
        lo_closed = any(c.lo_closed for c in cs if c.lo == lo)
        hi_closed = any(c.hi_closed for c in cs if c.hi == hi)
        clauses.append(Clause(var, lo, hi, lo_closed, hi_closed))
    return RectRegion(tuple(clauses))


# ---------------------------------------------------------------------------
# folds


@dataclass(frozen=True)
class FoldSpec:
    k: int
    assignment: np.ndarray
    seed: int

    def __post_init__(self):
        self.assignment.setflags(write=False)

    def estimation_index(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == fold)

    def training_index(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignment != fold)

    def folds(self):
        for fold in range(1, self.k + 1):
            yield fold, self.training_index(fold), self.estimation_index(fold)


def kfold_split(n: int, k: int, seed: int) -> FoldSpec:
    """Balanced random partition of ``range(n)`` into folds labelled ``1..k``."""
    if k < 2:
        raise ValueError("k must be at least 2")
    if k > n:
        raise ValueError(f"cannot split {n} rows into {k} folds")
    rng = np.random.default_rng(seed)
    labels = np.empty(n, dtype=np.int64)
    labels[rng.permutation(n)] = np.arange(n) % k + 1
    return FoldSpec(k, labels, seed)


# ---------------------------------------------------------------------------
# outcome scaling

SCALE_TOL = 1e-4


@dataclass(frozen=True)
class OutcomeScale:
    y_min: float
    y_max: float
    tol: float = SCALE_TOL

    def __post_init__(self):
        if not self.y_max > self.y_min:
            raise DegenerateOutcomeError(f"outcome is constant (min = max = {self.y_min})")

    @classmethod
    def fit(cls, y) -> "OutcomeScale":
        y = np.asarray(y, dtype=float)
        return cls(float(y.min()), float(y.max()))

    @property
    def span(self) -> float:
        return self.y_max - self.y_min

    def scale(self, y) -> np.ndarray:
        return scale_outcome(y, self)

    def unscale(self, ys) -> np.ndarray:
        return self.y_min + np.asarray(ys, dtype=float) * self.span

    def to_dict(self) -> dict:
        return {"y_min": self.y_min, "y_max": self.y_max}


def scale_outcome(y, scale: OutcomeScale) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    ys = (y - scale.y_min) / scale.span
    outside = int(np.sum((ys < 0) | (ys > 1)))
    if outside:
        warnings.warn(f"{outside} outcome value(s) outside the fitted range were clamped",
                      OutcomeClampWarning, stacklevel=2)
    return np.clip(ys, scale.tol, 1 - scale.tol)


def dumps(obj) -> str:
    """Canonical JSON used for every report artifact."""
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False)
