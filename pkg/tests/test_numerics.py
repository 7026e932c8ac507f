import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_pd_structure
from ratiocv.errors import DegenerateDenominator, InsufficientSamples, NotPositiveDefinite
from ratiocv.numerics import (
    CovarianceStructure,
    JointSample,
    MomentSet,
    RngStream,
    cholesky,
    correlation_matrix,
    estimate_moments,
    is_positive_definite,
    sample_gaussian,
)
from ratiocv.simulation import DEFAULT_MU


class TestCholesky:
    def test_identity(self):
        np.testing.assert_array_equal(cholesky(np.eye(4)), np.eye(4))

    def test_indefinite_2x2_block_names_minor(self):
        sigma = np.eye(4)
        sigma[0, 1] = sigma[1, 0] = 1.5
        with pytest.raises(NotPositiveDefinite) as info:
            cholesky(sigma)
        assert info.value.minor == 2
        assert info.value.pivot == pytest.approx(1 - 2.25)

    def test_best_case_optimal_matrix_is_pd(self, best_case_optimal):
        L = cholesky(best_case_optimal.sigma)
        np.testing.assert_allclose(L @ L.T, best_case_optimal.sigma, atol=1e-14)

    def test_singular_matrix_rejected(self):
        sigma = np.ones((4, 4))
        assert not is_positive_definite(sigma)

    def test_agrees_with_numpy(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            s = random_pd_structure(rng).sigma
            np.testing.assert_allclose(cholesky(s), np.linalg.cholesky(s), atol=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.floats(-0.95, 0.95), min_size=6, max_size=6))
    def test_pd_verdict_matches_eigenvalues(self, off):
        sigma = CovarianceStructure.from_lower(DEFAULT_MU, off).sigma
        smallest = np.linalg.eigvalsh(sigma).min()
        if abs(smallest) < 1e-9:
            return
        assert is_positive_definite(sigma) == (smallest > 0)


class TestStructure:
    def test_lower_triangle_round_trip(self, best_case_optimal):
        assert best_case_optimal.lower_triangle() == [0.27, -0.99, -0.29, 0.95, -0.02, -0.95]
        assert best_case_optimal.sigma[1, 0] == 0.27
        assert best_case_optimal.sigma[3, 2] == -0.95

    def test_zero_denominator_mean_rejected(self):
        with pytest.raises(DegenerateDenominator):
            CovarianceStructure((1, 1, 0, 1), np.eye(4))

    def test_dict_round_trip(self, worst_case_gordon):
        again = CovarianceStructure.from_dict(worst_case_gordon.to_dict())
        np.testing.assert_array_equal(again.sigma, worst_case_gordon.sigma)
        assert again.mu == worst_case_gordon.mu


class TestSampling:
    def test_same_stream_is_bit_identical(self, best_case_optimal):
        x = sample_gaussian(best_case_optimal, 50, 5, RngStream(9, 2))
        y = sample_gaussian(best_case_optimal, 50, 5, RngStream(9, 2))
        np.testing.assert_array_equal(x.paired, y.paired)
        np.testing.assert_array_equal(x.extra, y.extra)

    def test_streams_differ(self, best_case_optimal):
        x = sample_gaussian(best_case_optimal, 10, 0, RngStream(9, 0))
        y = sample_gaussian(best_case_optimal, 10, 0, RngStream(9, 1))
        assert not np.array_equal(x.paired, y.paired)

    def test_mean_converges(self, best_case_optimal):
        errors = []
        for n in (100, 10_000, 1_000_000):
            s = sample_gaussian(best_case_optimal, n, 0, RngStream(1))
            errors.append(np.abs(s.paired.mean(axis=0) - DEFAULT_MU).max())
        assert errors[-1] < errors[0]
        assert errors[-1] < 0.01

    def test_identity_covariance(self):
        structure = CovarianceStructure(DEFAULT_MU, np.eye(4))
        s = sample_gaussian(structure, 100_000, 0, RngStream(5))
        np.testing.assert_allclose(np.cov(s.paired.T), np.eye(4), atol=0.05)

    def test_extra_rows_follow_bd_marginal(self, best_case_optimal):
        s = sample_gaussian(best_case_optimal, 2, 200_000, RngStream(4))
        assert s.m == 200_000
        np.testing.assert_allclose(s.extra.mean(axis=0), [20, 100], atol=0.02)
        assert np.corrcoef(s.extra.T)[0, 1] == pytest.approx(-0.02, abs=0.01)


class TestMoments:
    def test_hand_arithmetic(self):
        paired = np.column_stack([[1.0, 2.0, 3.0], np.ones(3), np.ones(3), np.ones(3)])
        m = estimate_moments(JointSample(paired))
        assert m.mean_a == 2.0
        assert m.var_a == 1.0
        assert m.r == 2.0

    def test_duplicated_column(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(20, 4)) + 5
        x[:, 3] = x[:, 1]
        m = estimate_moments(JointSample(x))
        assert m.cov_bd == pytest.approx(m.var_b, rel=1e-14)
        assert m.var_d == pytest.approx(m.var_b, rel=1e-14)

    def test_large_sample_matches_structure(self, best_case_optimal):
        s = sample_gaussian(best_case_optimal, 1000, 0, RngStream(12))
        np.testing.assert_allclose(estimate_moments(s).covariance_matrix(), best_case_optimal.sigma, atol=0.15)

    def test_needs_two_rows(self):
        with pytest.raises(InsufficientSamples):
            estimate_moments(JointSample(np.ones((1, 4))))

    def test_matches_numpy_cov(self):
        x = np.random.default_rng(2).normal(3, 1, size=(30, 4))
        m = estimate_moments(JointSample(x))
        np.testing.assert_allclose(m.covariance_matrix(), np.cov(x.T), rtol=1e-12)


class TestCorrelation:
    def _moments(self, **kw):
        base = dict(var_a=1, var_b=1, var_c=1, var_d=1, cov_ab=0, cov_ac=0, cov_ad=0,
                    cov_bc=0, cov_bd=0, cov_cd=0, mean_a=1, mean_c=1, r=1)
        base.update(kw)
        return MomentSet(**base)

    def test_unit_variances_give_covariances(self, moments_41, best_case_optimal):
        np.testing.assert_allclose(correlation_matrix(moments_41), best_case_optimal.sigma, atol=1e-15)

    def test_hand_arithmetic(self):
        corr = correlation_matrix(self._moments(var_a=4, cov_ab=1))
        assert corr[0, 1] == pytest.approx(0.5)

    def test_uncorrelated_is_identity(self):
        np.testing.assert_array_equal(correlation_matrix(self._moments(var_c=9)), np.eye(4))
