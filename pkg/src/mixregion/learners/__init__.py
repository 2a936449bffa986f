from .forest import RandomForest
from .glm import GLM, InterceptOnly, IRLSConvergenceError, SeparationWarning, irls_logistic
from .library import LearnerSpec, default_library, default_tree_library, make_learner, parse_library
from .penalized import PenalizedGLM, soft_threshold
from .super_learner import LearnerFailureWarning, SuperLearner, super_learn
from .tree import RegressionTree

__all__ = [
    "GLM",
    "InterceptOnly",
    "IRLSConvergenceError",
    "LearnerFailureWarning",
    "LearnerSpec",
    "PenalizedGLM",
    "RandomForest",
    "RegressionTree",
    "SeparationWarning",
    "SuperLearner",
    "default_library",
    "default_tree_library",
    "irls_logistic",
    "make_learner",
    "parse_library",
    "soft_threshold",
    "super_learn",
]


def fit_regression_tree(x, y, offset=None, spec=None):
    spec = spec or LearnerSpec("regression_tree")
    return make_learner(spec).fit(x, y, offset)


def fit_glm(x, y, offset=None, family="identity", weights=None):
    return GLM(family=family).fit(x, y, offset, sample_weight=weights)


def fit_penalized_glm(x, y, spec=None):
    spec = spec or LearnerSpec("penalized_glm")
    return make_learner(spec).fit(x, y)
