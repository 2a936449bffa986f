"""End-to-end acceptance checks at their stated tolerances.

Each test records a one-line verdict that is printed in the terminal summary.
The simulation-based checks (6, 7, 8) take several minutes in total.
"""

import time

import numpy as np
import pytest
from scipy import stats

from mixregion.core import Dataset, OutcomeScale, RectRegion, union_region
from mixregion.cross_estimation import AnalysisSettings, pool_ivm, run_analysis
from mixregion.learners import GLM, InterceptOnly, PenalizedGLM, RegressionTree, irls_logistic
from mixregion.learners.penalized import soft_threshold
from mixregion.simulation import harness
from mixregion.tmle import NuisanceFits, tmle_estimate

ATE = 2.0
W_COEF = np.array([1.0, -0.5])


class Constant:
    def __init__(self, value):
        self.value = value

    def predict(self, x):
        return np.full(np.asarray(x).shape[0], self.value)


class OracleQ:
    """True conditional mean of the RCT outcome, on the scaled axis."""

    def __init__(self, scale):
        self.scale = scale

    def predict(self, x):
        a, w = x[:, 0], x[:, 1:]
        return (1 + ATE * a + w @ W_COEF - self.scale.y_min) / self.scale.span


def rct(n, rng):
    w = rng.normal(size=(n, 2))
    a = rng.binomial(1, 0.5, n).astype(float)
    y = 1 + ATE * a + w @ W_COEF + rng.normal(size=n)
    return Dataset(w, a[:, None], y, ("W1", "W2"), ("A",)), a


def fit_tmle(data, a, q_model_cls):
    scale = OutcomeScale.fit(data.y)
    q = q_model_cls().fit(np.column_stack([a, data.w]), scale.scale(data.y))
    return tmle_estimate(data, a, NuisanceFits(q, Constant(0.5), scale))


def test_criterion_01_tmle_coverage(record_criterion):
    rng = np.random.default_rng(101)
    start = time.time()
    covered, worst_ic = 0, 0.0
    for _ in range(200):
        data, a = rct(2000, rng)
        res = fit_tmle(data, a, GLM)
        lo, hi = res.ci95
        covered += lo <= ATE <= hi
        worst_ic = max(worst_ic, abs(res.ic.mean()) / res.ic.std())
    elapsed = time.time() - start
    ok = 0.93 <= covered / 200 <= 0.97 and worst_ic <= 1e-8 and elapsed <= 300
    record_criterion(1, ok, f"coverage {covered / 200:.3f}, max |mean IC|/sd {worst_ic:.1e}, "
                            f"{elapsed:.0f}s")
    assert ok


def test_criterion_02_double_robustness(record_criterion):
    rng = np.random.default_rng(202)
    sizes = np.array([500, 2000, 8000])
    scaled = []
    for n in sizes:
        est = [fit_tmle(*rct(n, rng), InterceptOnly).psi for _ in range(20)]
        scaled.append(np.sqrt(n) * abs(np.mean(est) - ATE))
    slope = np.polyfit(np.log(sizes), scaled, 1)[0]
    record_criterion(2, slope <= 0, "sqrt(n)|bias| = " + ", ".join(f"{s:.3f}" for s in scaled)
                     + f"; slope {slope:.3f}")
    assert slope <= 0


def test_criterion_03_fluctuation_at_truth(record_criterion):
    data, a = rct(5000, np.random.default_rng(303))
    scale = OutcomeScale.fit(data.y)
    res = tmle_estimate(data, a, NuisanceFits(OracleQ(scale), Constant(0.5), scale))
    ok = abs(res.epsilon) < 0.01
    record_criterion(3, ok, f"epsilon {res.epsilon:.2e}")
    assert ok


def test_criterion_04_ivm(record_criterion):
    res = pool_ivm([(1.0, 0.1), (3.0, 10.0)])
    w = np.array([100.0, 0.01])
    theta, se = (w @ [1.0, 3.0]) / w.sum(), 1 / np.sqrt(w.sum())
    ok = abs(res.theta - theta) <= 1e-6 and abs(res.se - se) <= 1e-6
    record_criterion(4, ok, f"theta {res.theta:.6f}, se {res.se:.6f}")
    assert ok


def test_criterion_05_union(record_criterion):
    regions = [RectRegion.from_string(s) for s in
               ("X1 < 2 & X2 >= 5", "X1 < 2.3 & X2 >= 5.2", "X1 < 1.9 & X2 >= 5.3")]
    got = union_region(regions)
    ok = got == RectRegion.from_string("X1 < 2.3 & X2 >= 5")
    record_criterion(5, ok, f"union {got}")
    assert ok


@pytest.fixture(scope="module")
def table1_runs(tmp_path_factory):
    """2D replicates at n=200 (15) and n=1000 (30) with K=5, joint analysis only."""
    out = tmp_path_factory.mktemp("table1")
    small, _ = harness.run_simulation(
        harness.SimulationSpec(sample_sizes=(200,), iterations=15, k=5, seed=7), out / "n200")
    large, _ = harness.run_simulation(
        harness.SimulationSpec(sample_sizes=(1000,), iterations=30, k=5, seed=7), out / "n1000")
    return small, large


def _cell(metrics, estimator, target, metric, iterations=None):
    rows = metrics[(metrics.estimator == estimator) & (metrics.target == target)
                   & (metrics.metric == metric)]
    if iterations is not None:
        rows = rows[rows.iteration < iterations]
    return rows.sort_values("iteration")["value"].to_numpy()


@pytest.mark.slow
def test_criterion_06_region_recovery(record_criterion):
    start = time.time()
    metrics, _ = harness.run_simulation(
        harness.SimulationSpec(sample_sizes=(2000,), iterations=10, k=5, seed=6))
    elapsed = time.time() - start
    tpr = np.median(_cell(metrics, "pooled_tmle", "oracle", "tpr"))
    tnr = np.median(_cell(metrics, "pooled_tmle", "oracle", "tnr"))
    ok = tpr >= 0.95 and tnr >= 0.95 and elapsed <= 1800
    record_criterion(6, ok, f"median TPR {tpr:.3f}, median TNR {tnr:.3f}, {elapsed:.0f}s")
    assert ok


@pytest.mark.slow
def test_criterion_07_mean_kfold_table(table1_runs, record_criterion):
    small, large = table1_runs
    summary = {}
    for n, m in ((200, small), (1000, large)):
        bias = _cell(m, "mean_kfold", "data_adaptive", "bias", 15)
        covered = _cell(m, "mean_kfold", "data_adaptive", "covered", 15)
        keep = np.isfinite(bias)
        summary[n] = (abs(bias[keep].mean()), covered[keep].mean(), int(keep.sum()))
    ok = summary[1000][0] < summary[200][0] and all(0.85 <= c <= 1.0 for _, c, _ in summary.values())
    record_criterion(7, ok, "; ".join(f"n={n}: |bias| {b:.3f}, coverage {c:.2f} ({k} reps)"
                                      for n, (b, c, k) in summary.items()))
    assert ok


@pytest.mark.slow
def test_criterion_08_sampling_distribution(table1_runs, record_criterion):
    _, large = table1_runs
    bias = _cell(large, "mean_kfold", "data_adaptive", "bias")
    se = _cell(large, "mean_kfold", "data_adaptive", "se")
    z = (bias / se)[np.isfinite(bias / se)]
    skew, kurt, mean = stats.skew(z), stats.kurtosis(z), z.mean()
    ok = abs(skew) <= 1 and abs(kurt) <= 2 and abs(mean) <= 0.5
    record_criterion(8, ok, f"{z.size} reps: mean {mean:.3f}, skew {skew:.3f}, "
                            f"excess kurtosis {kurt:.3f}")
    assert ok


def test_criterion_09_determinism(record_criterion):
    rng = np.random.default_rng(909)
    n = 240
    a = rng.uniform(size=(n, 3))
    w = rng.normal(size=(n, 2))
    y = 2.0 * (a[:, 0] > 0.5) * (a[:, 2] > 0.4) + w[:, 0] + rng.normal(scale=0.5, size=n)
    data = Dataset(w, a, y, ("W1", "W2"), ("X1", "X2", "X3"))
    runs = [run_analysis(data, AnalysisSettings(k=3, seed=11, n_jobs=j)).to_json()
            for j in (1, 1, 2, 2)]
    ok = len(set(runs)) == 1
    record_criterion(9, ok, f"{len(set(runs))} distinct report(s) over 2 serial + 2 parallel runs")
    assert ok


def _brute_force_sse(x, y, min_leaf):
    order = np.argsort(x, kind="stable")
    xs, ys = x[order], y[order]
    best = np.sum((y - y.mean()) ** 2)
    for i in range(min_leaf, len(x) - min_leaf + 1):
        if xs[i - 1] != xs[i]:
            left, right = ys[:i], ys[i:]
            best = min(best, np.sum((left - left.mean()) ** 2) + np.sum((right - right.mean()) ** 2))
    return best


def test_criterion_10_learner_oracles(record_criterion):
    rng = np.random.default_rng(1010)
    n, p = 200, 6
    raw = rng.normal(size=(n, p))
    q, _ = np.linalg.qr(raw - raw.mean(axis=0))
    x = q * np.sqrt(n)  # centred columns with unit variance, mutually orthogonal
    y = x @ np.array([2.0, -1.0, 0.4, 0.0, 0.1, 0.0]) + rng.normal(size=n)
    lasso_err = 0.0
    for lam in (0.05, 0.3, 0.9):
        model = PenalizedGLM(lambdas=[lam], cv=None).fit(x, y)
        lasso_err = max(lasso_err, np.max(np.abs(model.coef_ - soft_threshold(x.T @ (y - y.mean()) / n, lam))))

    xl = rng.normal(size=(500, 3))
    yl = (rng.random(500) < 1 / (1 + np.exp(-(xl @ [1.0, -0.7, 0.3] + 0.2)))).astype(float)
    design = np.column_stack([np.ones(500), xl])
    beta, _, _ = irls_logistic(design, yl)
    score_err = np.max(np.abs(design.T @ (yl - 1 / (1 + np.exp(-(design @ beta))))))

    tree_err = 0.0
    for seed in range(25):
        r = np.random.default_rng(seed)
        m = int(r.integers(20, 201))
        xt = np.round(r.normal(size=m), 1)
        yt = (xt > 0.2) + r.normal(size=m)
        for alpha in (None, 1.0):
            tree = RegressionTree(max_depth=1, min_leaf=3, alpha=alpha, bonferroni=False)
            sse = np.sum((yt - tree.fit(xt[:, None], yt).predict(xt[:, None])) ** 2)
            tree_err = max(tree_err, abs(sse - _brute_force_sse(xt, yt, 3)))
    ok = lasso_err <= 1e-6 and score_err <= 1e-6 and tree_err <= 1e-9
    record_criterion(10, ok, f"lasso {lasso_err:.1e}, IRLS score {score_err:.1e}, "
                             f"tree SSE gap {tree_err:.1e}")
    assert ok
