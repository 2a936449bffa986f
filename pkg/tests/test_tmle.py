import numpy as np
import pytest
from scipy.special import expit, logit

from mixregion.core import Dataset, OutcomeScale
from mixregion.learners import GLM, LearnerSpec
from mixregion.tmle import (NuisanceFits, PositivityError, clever_covariate, fit_nuisance,
                            fluctuate, tmle_estimate, tmle_from_predictions)


class Constant:
    def __init__(self, value):
        self.value = value

    def predict(self, x):
        return np.full(np.asarray(x).shape[0], self.value)


def rct(n, rng, effect=2.0):
    w = rng.normal(size=(n, 2))
    a = rng.binomial(1, 0.5, n).astype(float)
    y = 1 + effect * a + w[:, 0] - 0.5 * w[:, 1] + rng.normal(size=n)
    return Dataset(w, a[:, None], y, ("W1", "W2"), ("A",)), a


def glm_nuisance(data, a):
    scale = OutcomeScale.fit(data.y)
    q = GLM().fit(np.column_stack([a, data.w]), scale.scale(data.y))
    return NuisanceFits(q, Constant(0.5), scale)


class TestCleverCovariate:
    def test_examples(self):
        assert clever_covariate([1], [0.5]).tolist() == [2.0]
        assert clever_covariate([0], [0.8]) == pytest.approx([-5.0])

    def test_rejects_boundary(self):
        with pytest.raises(ValueError):
            clever_covariate([1], [0.0])

    def test_mean_vanishes_at_matching_rate(self):
        rng = np.random.default_rng(0)
        ind = rng.binomial(1, 0.3, 200_000)
        assert abs(clever_covariate(ind, np.full(ind.size, 0.3)).mean()) < 0.02


class TestFluctuate:
    def test_zero_covariate(self):
        assert fluctuate(np.full(5, 0.4), np.zeros(5), np.full(5, 0.6)) == 0.0

    def test_score_equation(self):
        rng = np.random.default_rng(1)
        q = rng.uniform(0.2, 0.8, 500)
        h = rng.normal(size=500)
        y = rng.uniform(size=500)
        eps = fluctuate(q, h, y)
        q_star = expit(logit(q) + eps * h)
        assert abs(np.sum(h * (y - q_star))) <= 1e-6

    def test_truth_gives_small_epsilon(self):
        rng = np.random.default_rng(2)
        n = 5000
        w = rng.uniform(size=n)
        a = rng.binomial(1, 0.5, n)
        q = 0.2 + 0.3 * a + 0.2 * w
        y = rng.binomial(1, q).astype(float)
        assert abs(fluctuate(q, clever_covariate(a, np.full(n, 0.5)), y)) < 0.01


class TestEstimate:
    def test_ic_mean_zero_and_ci(self):
        rng = np.random.default_rng(3)
        data, a = rct(2000, rng)
        res = tmle_estimate(data, a, glm_nuisance(data, a))
        assert abs(res.ic.mean()) <= 1e-8 * res.ic.std()
        lo, hi = res.ci95
        assert lo == pytest.approx(res.psi - 1.959964 * res.se, rel=1e-6)
        assert hi - res.psi == pytest.approx(res.psi - lo)
        assert res.se > 0
        assert lo < 2.0 < hi

    def test_zero_epsilon_is_plug_in(self):
        rng = np.random.default_rng(4)
        data, a = rct(500, rng)
        nuis = glm_nuisance(data, a)
        q1, q0 = nuis.predict_counterfactuals(data.w)
        res = tmle_from_predictions(data.y, a, q1, q0, np.full(500, 0.5), nuis.scale, epsilon=0.0)
        assert res.psi == res.psi_initial

    def test_overfit_oracle_ic(self):
        y = np.array([0.0, 1.0, 3.0, 4.0])
        a = np.array([1.0, 0.0, 1.0, 0.0])
        scale = OutcomeScale.fit(y)
        ys = scale.scale(y)
        res = tmle_from_predictions(y, a, ys, ys, np.full(4, 0.5), scale, epsilon=0.0)
        diff = scale.span * (ys - ys)
        assert res.ic == pytest.approx(diff - res.psi + 0.0, abs=1e-12)
        assert abs(res.ic.mean()) < 1e-12

    def test_truncation(self):
        y = np.linspace(0, 1, 6)
        a = np.array([0, 1, 0, 1, 0, 1.0])
        scale = OutcomeScale.fit(y)
        res = tmle_from_predictions(y, a, np.full(6, 0.5), np.full(6, 0.5),
                                    np.array([0.001, 0.5, 0.5, 0.5, 0.5, 0.999]), scale)
        assert res.truncated_fraction == pytest.approx(2 / 6)

    def test_zero_effect_coverage(self):
        rng = np.random.default_rng(5)
        covered = 0
        for _ in range(100):
            data, a = rct(400, rng, effect=0.0)
            res = tmle_estimate(data, a, glm_nuisance(data, a))
            covered += abs(res.psi) <= 2 * res.se
        assert covered >= 93


class TestNuisance:
    def test_randomized_g_near_rate(self):
        rng = np.random.default_rng(6)
        data, a = rct(1000, rng)
        nuis = fit_nuisance(data, a, q_library=[LearnerSpec("glm")],
                            g_library=[LearnerSpec("glm"), LearnerSpec("intercept_only")])
        assert np.max(np.abs(nuis.predict_g(data.w) - a.mean())) < 0.05

    def test_truncation_bounds(self):
        nuis = NuisanceFits(Constant(0.5), Constant(0.001), OutcomeScale(0, 1))
        assert nuis.predict_g(np.zeros((3, 1))).tolist() == [0.025] * 3

    def test_noiseless_linear_q(self):
        rng = np.random.default_rng(7)
        n = 2000
        w = rng.normal(size=(n, 2))
        a = rng.binomial(1, 0.5, n).astype(float)
        y = 1 + 2 * a + w @ [1.0, -0.5]
        data = Dataset(w, a[:, None], y, ("W1", "W2"), ("A",))
        nuis = fit_nuisance(data, a, q_library=[LearnerSpec("glm")], g_library=[LearnerSpec("glm")])
        fitted = nuis.scale.unscale(nuis.predict_q(a, w))
        assert np.sqrt(np.mean((fitted - y) ** 2)) < 1e-2

    def test_positivity(self):
        rng = np.random.default_rng(8)
        data, _ = rct(50, rng)
        with pytest.raises(PositivityError):
            fit_nuisance(data, np.ones(50))
