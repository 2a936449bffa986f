import numpy as np
import pytest

from mixregion.core import Clause, RectRegion, evaluate_region
from mixregion.rules import (RuleCandidate, RuleConfig, RuleEnsemble, best_rule_per_varset,
                             generate_candidate_rules, rule_matrix, select_rules)
from mixregion.simulation.dgp2d import A_NAMES, Dgp2dConfig, gen_2d

NAMES = ["A1", "A2", "A3"]


def _cand(rule, coef, support=10):
    return RuleCandidate(RectRegion.from_string(rule), coef, 0, support)


def test_noise_gives_no_candidates():
    rng = np.random.default_rng(0)
    counts = []
    for seed in range(100):
        a = rng.uniform(size=(300, 3))
        counts.append(len(generate_candidate_rules(a, rng.normal(size=300), NAMES, seed=seed)))
    assert np.median(counts) == 0


def test_single_shallow_tree_bound():
    rng = np.random.default_rng(1)
    a = rng.uniform(size=(200, 2))
    y = 2.0 * (a[:, 0] > 0.5) + rng.normal(size=200)
    rules = generate_candidate_rules(a, y, NAMES[:2], RuleConfig(n_trees=1, max_depth=1), seed=0)
    assert 1 <= len(rules) <= 2


def test_candidates_unique_and_shallow():
    rng = np.random.default_rng(2)
    a = rng.uniform(size=(400, 3))
    y = 2.0 * (a[:, 0] > 0.5) * (a[:, 1] > 0.5) + rng.normal(size=400)
    rules = generate_candidate_rules(a, y, NAMES, seed=0)
    strings = [str(r) for r in rules]
    assert len(set(strings)) == len(strings)
    assert all(len(r.varset) <= 3 for r in rules)


def test_2d_candidates_near_true_region():
    config = Dgp2dConfig.draw(0)
    data, true, _ = gen_2d(1000, 0, config)
    target = data.y - 0.2 * data.w[:, 0] - 0.4 * data.w[:, 2]
    rules = generate_candidate_rules(data.a, target, A_NAMES, seed=0)
    grid = config.cells
    t = evaluate_region(true, grid, A_NAMES).astype(bool)

    def cells_apart(r):
        e = evaluate_region(r, grid, A_NAMES).astype(bool)
        return np.sum(e != t)

    assert min(cells_apart(r) for r in rules if r.varset == ("A1", "A2")) <= 1


def test_perfect_rule_selected():
    rng = np.random.default_rng(3)
    a = rng.uniform(size=(300, 2))
    true = RectRegion((Clause("A1", 0.6, np.inf), Clause("A2", 0.5, np.inf)))
    target = 4.0 * evaluate_region(true, a, NAMES[:2])
    noise = [RectRegion((Clause("A1", c, np.inf),)) for c in (0.2, 0.4)] + \
        [RectRegion((Clause("A2", -np.inf, c),)) for c in (0.3, 0.8)]
    selected, _ = select_rules([*noise, true], a, target, NAMES[:2])
    best = best_rule_per_varset(selected)
    assert best[("A1", "A2")].region == true
    assert best[("A1", "A2")].coefficient == pytest.approx(4.0, rel=0.05)


def test_infinite_lambda_selects_nothing():
    rng = np.random.default_rng(4)
    a = rng.uniform(size=(100, 1))
    regions = [RectRegion((Clause("A1", 0.5, np.inf),))]
    selected, _ = select_rules(regions, a, a[:, 0], ["A1"], lambdas=[1e9])
    assert selected == []


def test_empty_candidates_rejected():
    with pytest.raises(ValueError):
        select_rules([], np.zeros((5, 1)), np.zeros(5), ["A1"])


def test_duplicate_candidates_are_prediction_equivalent():
    rng = np.random.default_rng(5)
    a = rng.uniform(size=(200, 2))
    regions = [RectRegion((Clause("A1", 0.5, np.inf),)), RectRegion((Clause("A2", 0.3, np.inf),))]
    y = 2 * rule_matrix(regions, a, NAMES[:2]) @ [1.0, 0.5] + rng.normal(scale=0.1, size=200)
    _, m1 = select_rules(regions, a, y, NAMES[:2], lambdas=[0.01])
    _, m2 = select_rules(regions + regions[:1], a, y, NAMES[:2], lambdas=[0.01])
    p1 = m1.predict(rule_matrix(regions, a, NAMES[:2]))
    p2 = m2.predict(rule_matrix(regions + regions[:1], a, NAMES[:2]))
    assert np.max(np.abs(p1 - p2)) < 1e-3


class TestBestRule:
    def test_max(self):
        best = best_rule_per_varset([_cand("X1 < 2 & X2 >= 5", 1.2), _cand("X1 < 3 & X2 >= 1", 0.4)])
        assert best[("X1", "X2")].coefficient == 1.2

    def test_min(self):
        best = best_rule_per_varset([_cand("X1 < 2", -2.0), _cand("X1 < 3", 3.0)], "min")
        assert best[("X1",)].coefficient == -2.0

    def test_disjoint_varsets(self):
        best = best_rule_per_varset([_cand("X1 < 2", 1.0), _cand("X2 < 3", 1.0)])
        assert set(best) == {("X1",), ("X2",)}

    def test_ties(self):
        best = best_rule_per_varset([_cand("X1 < 2", 1.0, 5), _cand("X1 < 3", 1.0, 9)])
        assert str(best[("X1",)].region) == "X1 < 3"
        best = best_rule_per_varset([_cand("X1 < 3", 1.0, 5), _cand("X1 < 2", 1.0, 5)])
        assert str(best[("X1",)].region) == "X1 < 2"

    def test_bad_direction(self):
        with pytest.raises(ValueError):
            best_rule_per_varset([], "up")


def test_ensemble_estimator():
    rng = np.random.default_rng(6)
    a = rng.uniform(size=(500, 2))
    y = 3.0 * (a[:, 0] > 0.5) * (a[:, 1] > 0.5) + rng.normal(scale=0.5, size=500)
    model = RuleEnsemble(["A1", "A2"], random_state=0).fit(a, y)
    assert np.mean((model.predict(a) - y) ** 2) < 0.4
    best = model.best_rules()
    assert ("A1", "A2") in best
    refit = RuleEnsemble(**model.get_params())
    refit.names_, refit.candidates_, refit.origins_ = model.names_, model.candidates_, model.origins_
    refit.n_features_in_ = 2
    refit.refit(a, y)
    assert {str(r.region) for r in refit.rules_} <= {str(c) for c in model.candidates_}
