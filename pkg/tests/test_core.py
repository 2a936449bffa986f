import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mixregion.core import (Clause, Dataset, DegenerateOutcomeError, OutcomeClampWarning,
                            OutcomeScale, RectRegion, SchemaError, evaluate_region, kfold_split,
                            union_region)


def _frame(n=10):
    rng = np.random.default_rng(0)
    return pd.DataFrame({"y": rng.normal(size=n), "a1": rng.normal(size=n),
                         "a2": rng.normal(size=n), "w1": rng.normal(size=n)})


class TestDataset:
    def test_from_frame_roles(self):
        d = Dataset.from_frame(_frame(), "y", ["a1", "a2"], ["w1"])
        assert d.n == 10
        assert d.a.shape == (10, 2)
        assert d.a_names == ("a1", "a2")
        assert not d.a.flags.writeable

    def test_missing_column_is_named(self):
        with pytest.raises(SchemaError, match="outcome"):
            Dataset.from_frame(_frame(), "outcome", ["a1"], ["w1"])

    def test_non_numeric_cell_located(self):
        df = _frame().astype(object)
        df.loc[3, "a2"] = "abc"
        with pytest.raises(SchemaError, match=r"row 4, column 'a2'"):
            Dataset.from_frame(df, "y", ["a1", "a2"], ["w1"])

    def test_overlapping_roles_rejected(self):
        with pytest.raises(SchemaError):
            Dataset.from_frame(_frame(), "y", ["a1"], ["a1"])

    def test_non_finite_rejected(self):
        with pytest.raises(SchemaError):
            Dataset(np.ones((3, 1)), np.array([[1.0], [np.inf], [2.0]]), np.ones(3), ("w",), ("a",))

    def test_subset(self):
        d = Dataset.from_frame(_frame(), "y", ["a1", "a2"], ["w1"])
        s = d.subset([0, 2])
        assert s.n == 2
        assert np.array_equal(s.y, d.y[[0, 2]])


class TestRegions:
    def test_string_and_evaluation(self):
        r = RectRegion((Clause("X2", 5.0, np.inf), Clause("X1", -np.inf, 2.0)))
        assert str(r) == "X1 < 2 & X2 >= 5"
        a = np.array([[1.0, 5.0], [2.0, 6.0], [1.9, 4.99]])
        assert evaluate_region(r, a, ["X1", "X2"]).tolist() == [1, 0, 0]

    def test_unknown_variable(self):
        r = RectRegion((Clause("Z", 0, 1),))
        with pytest.raises(SchemaError):
            evaluate_region(r, np.zeros((2, 1)), ["X1"])

    def test_clause_validation(self):
        with pytest.raises(ValueError):
            Clause("x", 2.0, 1.0)
        with pytest.raises(ValueError):
            RectRegion((Clause("x", 0, 1), Clause("x", 2, 3)))

    def test_union_worked_example(self):
        regions = [RectRegion.from_string(s) for s in
                   ("X1 < 2 & X2 >= 5", "X1 < 2.3 & X2 >= 5.2", "X1 < 1.9 & X2 >= 5.3")]
        assert str(union_region(regions)) == "X1 < 2.3 & X2 >= 5"

    def test_union_rejects_mixed_varsets(self):
        with pytest.raises(ValueError):
            union_region([RectRegion.from_string("X1 < 2"), RectRegion.from_string("X2 < 2")])

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.tuples(st.floats(-5, 5), st.floats(0.1, 5), st.floats(-5, 5),
                              st.floats(0.1, 5)), min_size=1, max_size=5),
           st.integers(0, 2**16))
    def test_union_covers_inputs(self, boxes, seed):
        regions = [RectRegion((Clause("A1", l1, l1 + w1), Clause("A2", l2, l2 + w2)))
                   for l1, w1, l2, w2 in boxes]
        u = union_region(regions)
        a = np.random.default_rng(seed).uniform(-6, 11, size=(400, 2))
        inside_any = np.max([evaluate_region(r, a, ["A1", "A2"]) for r in regions], axis=0)
        assert np.all(evaluate_region(u, a, ["A1", "A2"]) >= inside_any)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(-1e3, 1e3), st.floats(1e-3, 1e3), st.booleans())
    def test_string_round_trip(self, lo, width, upper_open):
        r = RectRegion((Clause("A1", lo, np.inf), Clause("A2", -np.inf, lo + width)))
        again = RectRegion.from_string(str(r))
        assert str(again) == str(r)
        assert RectRegion.from_dict(r.to_dict()) == r


class TestFolds:
    @settings(max_examples=30, deadline=None)
    @given(st.integers(2, 200), st.integers(2, 12), st.integers(0, 1000))
    def test_partition(self, n, k, seed):
        if k > n:
            with pytest.raises(ValueError):
                kfold_split(n, k, seed)
            return
        spec = kfold_split(n, k, seed)
        sizes = np.bincount(spec.assignment)[1:]
        assert sizes.max() - sizes.min() <= 1
        seen = np.concatenate([te for _, _, te in spec.folds()])
        assert np.array_equal(np.sort(seen), np.arange(n))
        for _, tr, te in spec.folds():
            assert np.intersect1d(tr, te).size == 0

    def test_deterministic(self):
        assert np.array_equal(kfold_split(50, 5, 3).assignment, kfold_split(50, 5, 3).assignment)

    def test_k_too_small(self):
        with pytest.raises(ValueError):
            kfold_split(10, 1, 0)


class TestOutcomeScale:
    def test_round_trip(self):
        y = np.array([2.0, 4.0, 6.0])
        s = OutcomeScale.fit(y)
        assert s.scale(y).tolist() == pytest.approx([1e-4, 0.5, 1 - 1e-4])
        assert s.unscale([0.5]).tolist() == [4.0]

    def test_constant_outcome(self):
        with pytest.raises(DegenerateOutcomeError):
            OutcomeScale.fit(np.ones(4))

    def test_clamp_warns(self):
        s = OutcomeScale(0.0, 1.0)
        with pytest.warns(OutcomeClampWarning):
            assert s.scale([2.0]).tolist() == [1 - 1e-4]
