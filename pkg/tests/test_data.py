import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from copulafactor.data import (
    MarginKind,
    MarginSpec,
    MixedDataMatrix,
    build_tie_groups,
    empirical_cdf,
    pseudo_inverse_cdf,
)
from copulafactor.errors import InputError


class TestMarginSpec:
    def test_binary_is_two_level(self):
        spec = MarginSpec.binary("x")
        assert spec.levels == 2 and spec.is_discrete

    def test_ordinal_needs_levels(self):
        with pytest.raises(InputError):
            MarginSpec(MarginKind.ORDINAL, 1)

    def test_continuous_has_no_levels(self):
        assert MarginSpec(MarginKind.CONTINUOUS, 4).levels is None

    def test_str(self):
        assert str(MarginSpec.ordinal(5)) == "ordinal:5"
        assert str(MarginSpec.binary()) == "binary"


class TestMixedDataMatrix:
    def test_nan_is_missing(self):
        d = MixedDataMatrix([[1.0, 2.0], [np.nan, 3.0], [2.0, 1.0]])
        assert d.missing[1, 0] and d.missing.sum() == 1
        np.testing.assert_array_equal(d.column(0), [1.0, 2.0])

    def test_extra_mask_is_merged(self):
        d = MixedDataMatrix([[1.0, 2.0], [3.0, 4.0], [2.0, 1.0]], missing=[[0, 1], [0, 0], [0, 0]])
        assert d.missing[0, 1] and np.isnan(d.values[0, 1])

    def test_rejects_constant_column(self):
        with pytest.raises(InputError, match="constant"):
            MixedDataMatrix([[1.0, 2.0], [1.0, 3.0]])

    def test_rejects_fully_missing_column(self):
        with pytest.raises(InputError, match="missing"):
            MixedDataMatrix([[np.nan, 2.0], [np.nan, 3.0]])

    def test_rejects_infinite(self):
        with pytest.raises(InputError):
            MixedDataMatrix([[np.inf, 2.0], [1.0, 3.0]])

    def test_rejects_bad_ordinal_codes(self):
        with pytest.raises(InputError, match="integer codes"):
            MixedDataMatrix([[1.0], [4.0]], [MarginSpec.ordinal(3)])
        with pytest.raises(InputError):
            MixedDataMatrix([[1.5], [2.0]], [MarginSpec.ordinal(3)])

    def test_margin_count_checked(self):
        with pytest.raises(InputError):
            MixedDataMatrix([[1.0, 2.0], [2.0, 1.0]], [MarginSpec.continuous()])

    def test_read_only(self, small_mixed):
        with pytest.raises(ValueError):
            small_mixed.values[0, 0] = 0.0

    def test_with_column_revalidates(self, small_mixed):
        other = small_mixed.with_column(0, np.arange(small_mixed.n, dtype=float))
        assert other.values[3, 0] == 3.0
        with pytest.raises(InputError):
            small_mixed.with_column(0, np.zeros(small_mixed.n))

    def test_row_labels_length(self):
        with pytest.raises(InputError):
            MixedDataMatrix([[1.0], [2.0]], row_labels=["a"])


class TestTieGroups:
    def test_groups_sorted_by_value(self):
        d = MixedDataMatrix([[3.0], [1.0], [3.0], [2.0]])
        tg = build_tie_groups(d)
        vals = [v for v, _ in tg.columns[0]]
        assert vals == [1.0, 2.0, 3.0]
        np.testing.assert_array_equal(np.sort(tg.columns[0][2][1]), [0, 2])

    def test_missing_rows_excluded(self):
        d = MixedDataMatrix([[3.0], [np.nan], [1.0]])
        rows = np.concatenate([r for _, r in build_tie_groups(d).columns[0]])
        assert 1 not in rows

    def test_bounds_of_extremes(self):
        d = MixedDataMatrix([[1.0], [2.0], [3.0]])
        tg = build_tie_groups(d)
        Z = np.array([[-1.0], [0.0], [1.0]])
        assert tg.bounds(Z, 0, 0) == (-np.inf, 0.0)
        assert tg.bounds(Z, 2, 0) == (0.0, np.inf)
        assert tg.bounds(Z, 1, 0) == (-1.0, 1.0)

    def test_satisfied_by(self):
        d = MixedDataMatrix([[1.0], [2.0], [2.0], [3.0]])
        tg = build_tie_groups(d)
        assert tg.satisfied_by(np.array([[-1.0], [0.3], [0.1], [2.0]]))
        assert not tg.satisfied_by(np.array([[0.5], [0.3], [0.1], [2.0]]))

    def test_flat_layout(self, small_mixed):
        tg = build_tie_groups(small_mixed)
        assert tg.order.size == small_mixed.n * small_mixed.p
        assert tg.sizes.sum() == tg.order.size
        assert not tg.has_prev[tg.group_rank == 0].any()


class TestEmpiricalCdf:
    def test_scaled_by_n_plus_one(self):
        d = MixedDataMatrix([[1.0], [2.0], [2.0], [5.0]])
        F = empirical_cdf(d, 0)
        np.testing.assert_allclose(F(np.array([0.0, 1.0, 2.0, 4.9, 5.0])), [0, 0.2, 0.6, 0.6, 0.8])
        assert F.left_limit(2.0) == pytest.approx(0.2)

    def test_inverse_at_support(self):
        d = MixedDataMatrix([[1.0], [2.0], [2.0], [5.0]])
        F = empirical_cdf(d, 0)
        assert pseudo_inverse_cdf(F, 0.2) == 1.0
        assert pseudo_inverse_cdf(F, 0.21) == 2.0
        assert pseudo_inverse_cdf(F, 0.95) == 5.0  # above max proportion maps to the maximum

    def test_inverse_domain(self):
        F = empirical_cdf(MixedDataMatrix([[1.0], [2.0]]), 0)
        for bad in (0.0, 1.0, -0.1, np.nan):
            with pytest.raises(InputError):
                pseudo_inverse_cdf(F, bad)

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.integers(-5, 5), min_size=2, max_size=30), st.floats(0.001, 0.999))
    def test_inverse_is_galois(self, xs, u):
        if len(set(xs)) < 2:
            return
        F = empirical_cdf(MixedDataMatrix(np.array(xs, dtype=float)[:, None]), 0)
        x = pseudo_inverse_cdf(F, u)
        # smallest support point with F(x) >= u, unless u is beyond the top proportion
        if u <= F.probs[-1]:
            assert F(x) >= u
            assert F.left_limit(x) < u
        else:
            assert x == F.values[-1]
