"""Learner specifications and the default libraries."""

from __future__ import annotations

from dataclasses import dataclass

from .forest import RandomForest
from .glm import GLM, InterceptOnly
from .penalized import PenalizedGLM
from .tree import RegressionTree

KINDS = ("regression_tree", "glm", "penalized_glm", "random_forest", "intercept_only")


@dataclass(frozen=True)
class LearnerSpec:
    kind: str
    params: tuple = ()
    family: str = "identity"
    name: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown learner kind {self.kind!r}; expected one of {KINDS}")
        if self.family not in ("identity", "logistic"):
            raise ValueError(f"unknown family {self.family!r}")
        params = dict(self.params)
        if "max_depth" in params and params["max_depth"] is not None and params["max_depth"] < 1:
            raise ValueError("max_depth must be >= 1")
        if "min_leaf" in params and params["min_leaf"] < 2:
            raise ValueError("min_leaf must be >= 2")
        lams = params.get("lambdas")
        if lams is not None:
            if any(l <= 0 for l in lams) or any(b > a for a, b in zip(lams, lams[1:])):
                raise ValueError("lambda grid must be positive and descending")
        object.__setattr__(self, "params", tuple(sorted(params.items())))

    @property
    def label(self) -> str:
        if self.name:
            return self.name
        extra = ",".join(f"{k}={v}" for k, v in self.params if k != "random_state")
        return f"{self.kind}({extra})" if extra else self.kind

    def with_family(self, family: str) -> "LearnerSpec":
        return LearnerSpec(self.kind, self.params, family, self.name)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "family": self.family, "params": dict(self.params),
                "name": self.label}


def make_learner(spec: LearnerSpec, random_state=None):
    params = dict(spec.params)
    if spec.kind == "glm":
        return GLM(family=spec.family, **params)
    if spec.kind == "intercept_only":
        return InterceptOnly(family=spec.family)
    if spec.kind == "penalized_glm":
        params.setdefault("random_state", random_state if random_state is not None else 0)
        return PenalizedGLM(family=spec.family, **params)
    if spec.kind == "regression_tree":
        return RegressionTree(**params)
    if spec.kind == "random_forest":
        params.setdefault("random_state", random_state)
        return RandomForest(**params)
    raise ValueError(spec.kind)


def default_library(family: str = "identity") -> list[LearnerSpec]:
    """GLM, depth-3 tree, 50-tree random forest and a lasso."""
    return [
        LearnerSpec("glm", family=family),
        LearnerSpec("regression_tree", (("max_depth", 3), ("min_leaf", 10)), family),
        LearnerSpec("random_forest", (("n_trees", 50), ("min_leaf", 10), ("max_depth", 6)), family),
        LearnerSpec("penalized_glm", (("n_lambdas", 30),), family),
    ]


def default_tree_library() -> list[LearnerSpec]:
    """Gated single-exposure trees of varying depth, leaf size and alpha."""
    out = []
    for depth, leaf, alpha in ((1, 10, 0.05), (2, 10, 0.05), (2, 20, 0.01), (3, 10, 0.05),
                               (3, 20, 0.01), (2, 30, 0.05), (3, 30, 0.001)):
        out.append(LearnerSpec("regression_tree",
                               (("max_depth", depth), ("min_leaf", leaf), ("alpha", alpha))))
    return out


def parse_library(text: str, family: str = "identity") -> list[LearnerSpec]:
    """Parse ``"glm; regression_tree max_depth=2 min_leaf=10; random_forest n_trees=20"``."""
    specs = []
    for chunk in text.split(";"):
        parts = chunk.split()
        if not parts:
            continue
        params = {}
        for item in parts[1:]:
            key, _, raw = item.partition("=")
            params[key] = _parse_value(raw)
        specs.append(LearnerSpec(parts[0], tuple(params.items()), family))
    if not specs:
        raise ValueError("empty learner library")
    return specs


def _parse_value(raw: str):
    if raw.lower() in ("none", "null"):
        return None
    if raw.lower() in ("true", "false"):
        return raw.lower() == "true"
    try:
        return int(raw)
    except ValueError:
        return float(raw)
