import numpy as np
import pytest
from scipy import stats

from copulafactor.data import MarginKind, MixedDataMatrix, build_tie_groups
from copulafactor.errors import InputError
from copulafactor.simulation import (
    EmpiricalMargin,
    GaussianMargin,
    LOSS_NAMES,
    OrdinalMargin,
    StudySettings,
    SyntheticSpec,
    conditional_dependence_demo,
    dependence_correlation,
    efficiency_study,
    generate_synthetic,
    loss_suite,
    median_ratios,
    reference_margins,
)


class TestMargins:
    def test_ordinal_codes(self, rng):
        m = OrdinalMargin(levels=5)
        y = m.transform(rng, rng.standard_normal(2000))
        assert set(np.unique(y)) <= {1.0, 2.0, 3.0, 4.0, 5.0}
        assert m.spec().kind is MarginKind.ORDINAL

    def test_fixed_probs_frequencies(self, rng):
        m = OrdinalMargin(levels=3, probs=(0.2, 0.5, 0.3))
        y = m.transform(rng, rng.standard_normal(100_000))
        freq = np.bincount(y.astype(int), minlength=4)[1:] / y.size
        np.testing.assert_allclose(freq, [0.2, 0.5, 0.3], atol=0.01)

    def test_bad_probs(self):
        with pytest.raises(InputError):
            OrdinalMargin(levels=3, probs=(0.5, 0.6, -0.1))

    def test_two_levels_is_binary(self):
        assert OrdinalMargin(levels=2).spec().kind is MarginKind.BINARY

    def test_empirical_quantiles(self, rng):
        ref = (3.0, 1.0, 2.0, 4.0)
        y = EmpiricalMargin(ref).transform(rng, rng.standard_normal(40_000))
        assert set(np.unique(y)) == set(ref)
        np.testing.assert_allclose(np.bincount(y.astype(int))[1:] / y.size, 0.25, atol=0.01)

    def test_empirical_discrete_codes(self, rng):
        m = EmpiricalMargin((0.0, 0.0, 5.0, 7.0), discrete=True)
        y = m.transform(rng, rng.standard_normal(1000))
        assert set(np.unique(y)) == {1.0, 2.0, 3.0}
        assert m.spec().levels == 3

    def test_reference_margins(self, small_mixed):
        margins = reference_margins(small_mixed)
        assert [m.spec().kind for m in margins] == [s.kind for s in small_mixed.margins]


class TestGenerator:
    def test_one_factor_truth(self, rng):
        spec = SyntheticSpec(n=50, p=4, k=1, margins=(GaussianMargin(),) * 4, loadings="one-factor")
        _, C, scaled = generate_synthetic(rng, spec)
        np.testing.assert_allclose(scaled, 0.7)
        np.testing.assert_allclose(C[np.triu_indices(4, 1)], 0.49)
        np.testing.assert_allclose(np.diag(C), 1.0)

    def test_latent_correlation_matches(self, rng):
        spec = SyntheticSpec(n=20_000, p=3, k=2, margins=(GaussianMargin(),) * 3)
        data, C, _ = generate_synthetic(rng, spec)
        assert np.max(np.abs(np.corrcoef(data.values.T) - C)) < 0.03

    def test_gdp_truth_is_correlation(self, rng):
        spec = SyntheticSpec(n=30, p=10, k=2, margins=(OrdinalMargin(),) * 10)
        data, C, scaled = generate_synthetic(rng, spec)
        np.testing.assert_allclose(np.diag(C), 1.0)
        assert np.all(np.sum(scaled**2, axis=1) < 1)
        assert np.all(np.linalg.eigvalsh(C) > 0)
        assert all(np.ptp(data.column(j)) > 0 for j in range(data.p))

    def test_generated_data_satisfy_invariants(self, rng):
        spec = SyntheticSpec(n=100, p=4, k=1, margins=(OrdinalMargin(), GaussianMargin(),
                                                       OrdinalMargin(levels=2), GaussianMargin()))
        data, _, _ = generate_synthetic(rng, spec)
        assert isinstance(data, MixedDataMatrix)
        groups = build_tie_groups(data)
        assert groups is not None

    def test_bad_designs(self):
        with pytest.raises(InputError):
            SyntheticSpec(n=10, p=3, k=1, margins=(GaussianMargin(),) * 2)
        with pytest.raises(InputError):
            SyntheticSpec(n=10, p=2, k=2, margins=(GaussianMargin(),) * 2, loadings="one-factor")
        with pytest.raises(InputError):
            SyntheticSpec(n=10, p=2, k=1, margins=(GaussianMargin(),) * 2, loadings="one-factor",
                          lambda_tilde=1.0)


class TestLossSuite:
    def test_two_by_two(self):
        C_true = np.array([[1.0, 0.5], [0.5, 1.0]])
        C_hat = np.array([[1.0, 0.3], [0.3, 1.0]])
        r = loss_suite(C_hat, C_true)
        assert r.avg_abs_bias == pytest.approx(0.2)
        assert r.max_abs_bias == pytest.approx(0.2)
        assert r.root_squared_error == pytest.approx(np.sqrt(0.08))
        A = C_hat @ np.linalg.inv(C_true)
        assert r.stein_loss == pytest.approx(np.trace(A) - np.log(np.linalg.det(A)) - 2)

    def test_zero_at_truth(self):
        C = dependence_correlation(0.6, 0.4)
        r = loss_suite(C, C)
        assert all(v == pytest.approx(0.0, abs=1e-12) for v in r.as_dict().values())

    def test_stein_nonnegative(self, rng):
        for _ in range(50):
            A = rng.standard_normal((4, 6))
            B = rng.standard_normal((4, 6))
            C1, C2 = np.corrcoef(A), np.corrcoef(B)
            assert loss_suite(C1, C2).stein_loss >= 0

    def test_permutation_invariant(self, rng):
        C1 = np.corrcoef(rng.standard_normal((5, 12)))
        C2 = np.corrcoef(rng.standard_normal((5, 12)))
        perm = rng.permutation(5)
        a = loss_suite(C1, C2).as_dict()
        b = loss_suite(C1[np.ix_(perm, perm)], C2[np.ix_(perm, perm)]).as_dict()
        for name in LOSS_NAMES:
            assert a[name] == pytest.approx(b[name])

    def test_singular_truth(self):
        with pytest.raises(InputError):
            loss_suite(np.eye(2), np.ones((2, 2)))

    def test_shape_mismatch(self):
        with pytest.raises(InputError):
            loss_suite(np.eye(2), np.eye(3))


class TestDependenceDemo:
    def test_precision_entry_vanishes(self):
        C = dependence_correlation(0.6, -0.5)
        assert abs(np.linalg.inv(C)[0, 1]) < 1e-12

    def test_positive_gap(self, rng):
        gap = conditional_dependence_demo(rng, 0.8, 0.8, draws=50_000)
        assert gap.estimate > 0 and gap.z_score > 10

    def test_opposite_signs_negative_gap(self, rng):
        gap = conditional_dependence_demo(rng, 0.8, -0.8, draws=50_000)
        assert gap.estimate < 0 and gap.z_score < -10

    def test_no_link_no_gap(self, rng):
        gap = conditional_dependence_demo(rng, 0.0, 0.8, draws=10_000)
        assert gap.estimate == pytest.approx(0.0, abs=1e-15)

    def test_not_positive_definite(self, rng):
        with pytest.raises(InputError):
            conditional_dependence_demo(rng, 1.0, 0.5, draws=10)
        with pytest.raises(InputError):
            conditional_dependence_demo(rng, 0.5, 0.5, probs3=(0.7, 0.7), draws=10)


class TestStudies:
    def test_efficiency_records_deterministic(self):
        settings = StudySettings(replicates=2, iterations=40, burnin=10, thin=2)
        a = efficiency_study(seed=5, grid=((4, 1, 30),), settings=settings)
        b = efficiency_study(seed=5, grid=((4, 1, 30),), settings=settings)
        assert a == b
        assert {r["estimator"] for r in a} == {"copula", "probit", "ratio"}
        meds = median_ratios(a)
        assert set(meds) == {(4, 1, 30, name) for name in LOSS_NAMES}

    def test_gaussian_truth(self):
        settings = StudySettings(replicates=1, iterations=30, burnin=5, thin=1)
        recs = efficiency_study(seed=1, grid=((3, 1, 40),), truth="gaussian", settings=settings)
        assert {r["estimator"] for r in recs} == {"copula", "gaussian", "ratio"}

    def test_bad_truth(self):
        with pytest.raises(InputError):
            efficiency_study(truth="t", settings=StudySettings(replicates=1))
