"""MOS, rank correlation, RMSE, and first-order mapping tests."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import brute_force_srcc, make_dataset
from qvotes import (
    ConfigError,
    DataError,
    DegenerateDataError,
    LinearMap,
    MosVector,
    ReferenceMos,
    average_ranks,
    compare_to_reference,
    dataset_mos,
    fit_first_order_map,
    fit_line,
    mos_plain,
    mos_user_balanced,
    rmse,
    srcc,
)

finite_floats = st.floats(min_value=-100, max_value=100, allow_nan=False)


class TestMos:
    def test_plain_examples(self):
        assert mos_plain([1, 5]) == 3.0
        assert mos_plain([4, 4, 4]) == 4.0
        assert mos_plain([1, 1, 1, 5]) == 2.0

    def test_plain_empty(self):
        with pytest.raises(DataError):
            mos_plain([])

    def test_user_balanced_vs_plain(self):
        # u1 casts {5,5}, u2 casts {1}: equal user weight gives 3.0 while
        # the plain mean over votes is 11/3
        ds = make_dataset([("x", "u1", 5), ("x", "u1", 5), ("x", "u2", 1)])
        assert mos_user_balanced(ds, "x") == pytest.approx(3.0)
        assert mos_plain(ds.condition_scores("x")) == pytest.approx(11 / 3)

    def test_user_balanced_constant(self):
        ds = make_dataset([("x", "u1", 4), ("x", "u2", 4), ("x", "u2", 4)])
        assert mos_user_balanced(ds, "x") == 4.0

    def test_user_balanced_single_user(self):
        ds = make_dataset([("x", "u1", 1), ("x", "u1", 2), ("x", "u1", 3)])
        assert mos_user_balanced(ds, "x") == pytest.approx(2.0)

    def test_unknown_condition(self):
        ds = make_dataset([("x", "u1", 3)])
        with pytest.raises(DataError):
            mos_user_balanced(ds, "zzz")

    @given(
        scores=st.lists(st.integers(1, 5), min_size=2, max_size=8),
        votes_each=st.integers(1, 4),
    )
    @settings(max_examples=60, deadline=None)
    def test_balanced_equals_plain_under_equal_contribution(self, scores, votes_each):
        rows = [
            ("x", f"u{i}", s) for i, s in enumerate(scores) for _ in range(votes_each)
        ]
        ds = make_dataset(rows)
        assert mos_user_balanced(ds, "x") == pytest.approx(
            mos_plain(ds.condition_scores("x")), abs=1e-12
        )

    def test_dataset_mos_methods(self):
        ds = make_dataset(
            [("a", "u1", 5), ("a", "u1", 5), ("a", "u2", 1), ("b", "u1", 2)]
        )
        balanced = dataset_mos(ds, "user_balanced")
        plain = dataset_mos(ds, "plain")
        assert balanced.conditions == ("a", "b")
        assert balanced.values[0] == pytest.approx(3.0)
        assert plain.values[0] == pytest.approx(11 / 3)
        assert balanced.vote_counts.tolist() == [3, 1]
        with pytest.raises(ConfigError):
            dataset_mos(ds, "median")

    def test_mos_vector_validation(self):
        with pytest.raises(DataError):
            MosVector(("a",), np.array([6.0]), np.array([1]))
        with pytest.raises(DataError):
            MosVector(("a", "b"), np.array([3.0]), np.array([1]))


class TestSrcc:
    def test_identity(self):
        v = [1.2, 3.4, 2.2, 5.0]
        assert srcc(v, v) == pytest.approx(1.0)

    def test_reversal(self):
        assert srcc([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)

    def test_tie_case_matches_brute_force(self):
        a = [1, 2, 2, 4]
        b = [1, 3, 2, 4]
        assert srcc(a, b) == pytest.approx(brute_force_srcc(a, b), abs=1e-12)

    def test_average_ranks(self):
        assert average_ranks([10, 20, 20, 30]).tolist() == [1.0, 2.5, 2.5, 4.0]
        assert average_ranks([5, 5, 5]).tolist() == [2.0, 2.0, 2.0]

    def test_length_mismatch(self):
        with pytest.raises(DataError, match="length mismatch"):
            srcc([1, 2, 3], [1, 2])

    def test_too_short(self):
        with pytest.raises(DataError, match="at least 3"):
            srcc([1, 2], [2, 1])

    def test_constant_vector_is_explicit_error(self):
        with pytest.raises(DegenerateDataError):
            srcc([2, 2, 2], [1, 2, 3])
        with pytest.raises(DegenerateDataError):
            srcc([1, 2, 3], [7, 7, 7])

    @given(
        values=st.lists(st.integers(0, 6), min_size=3, max_size=15),
        slope=st.floats(min_value=0.01, max_value=50, allow_nan=False),
        shift=finite_floats,
    )
    @settings(max_examples=120, deadline=None)
    def test_invariant_under_increasing_affine_maps(self, values, slope, shift):
        a = np.array(values, dtype=float)
        b = np.linspace(0, 1, a.size) ** 2
        if np.all(a == a[0]):
            return
        base = srcc(a, b)
        assert srcc(slope * a + shift, b) == pytest.approx(base, abs=1e-9)

    @given(seed=st.integers(0, 100_000))
    @settings(max_examples=100, deadline=None)
    def test_matches_brute_force_oracle(self, seed):
        rng = np.random.default_rng(seed)
        size = int(rng.integers(3, 21))
        a = rng.integers(0, 5, size).astype(float)
        b = rng.normal(size=size).round(1)
        if np.all(a == a[0]) or np.all(b == b[0]):
            return
        assert srcc(a, b) == pytest.approx(brute_force_srcc(a, b), abs=1e-12)

    def test_agrees_with_scipy(self):
        from scipy.stats import spearmanr

        rng = np.random.default_rng(9)
        a = rng.integers(1, 6, 30).astype(float)
        b = a + rng.normal(0, 1, 30)
        assert srcc(a, b) == pytest.approx(spearmanr(a, b).statistic, abs=1e-12)


class TestRmse:
    def test_examples(self):
        assert rmse([1.0, 2.0], [1.0, 2.0]) == 0.0
        assert rmse([1, 2], [2, 3]) == pytest.approx(1.0)
        assert rmse([0, 0], [3, 4]) == pytest.approx(np.sqrt(12.5))

    def test_length_mismatch(self):
        with pytest.raises(DataError):
            rmse([1], [1, 2])

    @given(st.lists(finite_floats, min_size=1, max_size=20), st.data())
    @settings(max_examples=80, deadline=None)
    def test_symmetry_and_identity(self, a, data):
        b = data.draw(
            st.lists(finite_floats, min_size=len(a), max_size=len(a))
        )
        assert rmse(a, b) == pytest.approx(rmse(b, a))
        assert rmse(a, a) == 0.0
        if a != b:
            assert rmse(a, b) >= 0.0


class TestFirstOrderMap:
    def _vector(self, values):
        values = np.asarray(values, dtype=float)
        return MosVector(
            tuple(f"c{i}" for i in range(values.size)),
            values,
            np.ones(values.size, dtype=int),
        )

    def test_identity_recovered(self):
        values = [1.5, 2.5, 3.5, 4.5]
        ref = ReferenceMos({f"c{i}": v for i, v in enumerate(values)})
        line = fit_first_order_map(self._vector(values), ref)
        assert line.slope == pytest.approx(1.0, abs=1e-9)
        assert line.intercept == pytest.approx(0.0, abs=1e-9)

    def test_inverse_of_synthetic_compression(self):
        # cs = 0.5 * ref + 1 so the map back is slope 2, intercept -2
        ref_values = np.array([1.0, 2.0, 3.0, 4.0, 5.0])
        cs = 0.5 * ref_values + 1.0
        ref = ReferenceMos({f"c{i}": v for i, v in enumerate(ref_values)})
        line = fit_first_order_map(self._vector(cs), ref)
        assert line.slope == pytest.approx(2.0, abs=1e-9)
        assert line.intercept == pytest.approx(-2.0, abs=1e-9)

    def test_degenerate(self):
        ref = ReferenceMos({"c0": 2.0, "c1": 3.0, "c2": 4.0})
        with pytest.raises(DegenerateDataError):
            fit_first_order_map(self._vector([3.0, 3.0, 3.0]), ref)

    def test_apply_clips_to_scale(self):
        line = LinearMap(slope=3.0, intercept=-2.0)
        assert line.apply([0.5, 3.0]).tolist() == [1.0, 5.0]

    @given(seed=st.integers(0, 10_000))
    @settings(max_examples=60, deadline=None)
    def test_mapping_never_increases_rmse(self, seed):
        rng = np.random.default_rng(seed)
        size = int(rng.integers(3, 12))
        cs_values = rng.uniform(1.0, 5.0, size)
        if np.ptp(cs_values) == 0:
            return
        ref_values = rng.uniform(1.0, 5.0, size)
        ref = ReferenceMos({f"c{i}": float(v) for i, v in enumerate(ref_values)})
        cs = self._vector(cs_values)
        line = fit_first_order_map(cs, ref)
        assert rmse(line.apply(cs_values), ref_values) <= rmse(cs_values, ref_values) + 1e-12

    def test_fit_line_constant_x(self):
        with pytest.raises(DegenerateDataError):
            fit_line([2.0, 2.0, 2.0], [1.0, 2.0, 3.0])


class TestCompareToReference:
    def _pair(self, cs_values, ref_values):
        conds = tuple(f"c{i}" for i in range(len(cs_values)))
        cs = MosVector(conds, np.asarray(cs_values, float), np.ones(len(cs_values), int))
        ref = ReferenceMos(dict(zip(conds, map(float, ref_values))))
        return cs, ref

    def test_self_comparison(self):
        cs, ref = self._pair([1.5, 2.5, 3.5, 4.5], [1.5, 2.5, 3.5, 4.5])
        result = compare_to_reference(cs, ref, with_mapping=True)
        assert result.srcc == pytest.approx(1.0)
        assert result.rmse == 0.0
        assert result.rmse_after_mapping == pytest.approx(0.0, abs=1e-12)
        assert result.n_shared == 4

    def test_too_few_shared(self):
        conds = ("a", "b", "c")
        cs = MosVector(conds, np.array([2.0, 3.0, 4.0]), np.ones(3, int))
        ref = ReferenceMos({"a": 2.0, "b": 3.0})
        with pytest.raises(DataError, match="3 shared"):
            compare_to_reference(cs, ref)

    def test_srcc_unchanged_by_scale_shift(self):
        rng = np.random.default_rng(4)
        base = rng.uniform(1.2, 4.8, 10)
        ref_values = np.clip(base + rng.normal(0, 0.3, 10), 1, 5)
        cs, ref = self._pair(np.clip(0.5 * base + 1.2, 1, 5), ref_values)
        cs_scaled, _ = self._pair(base, ref_values)
        r1 = compare_to_reference(cs, ref)
        r2 = compare_to_reference(cs_scaled, ref)
        assert r1.srcc == pytest.approx(r2.srcc, abs=1e-12)

    def test_mapping_reduces_bias(self):
        rng = np.random.default_rng(11)
        ref_values = np.linspace(1.2, 4.8, 12)
        cs_values = np.clip(0.6 * ref_values + 1.1 + rng.normal(0, 0.05, 12), 1, 5)
        cs, ref = self._pair(cs_values, ref_values)
        result = compare_to_reference(cs, ref, with_mapping=True)
        assert result.rmse_after_mapping < result.rmse
