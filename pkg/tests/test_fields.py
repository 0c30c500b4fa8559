"""Tests for flowcov.core.fields — Gaussian ensembles, kriging, bias correction."""

import math

import numpy as np
import pytest
from builders import chain, two_chains

from flowcov.core.covariance import cov_matrix_exponential
from flowcov.core.errors import NumericalError, ValidationError
from flowcov.core.fields import bias_correct, floored_factor, krige, realization_rng, sample_gaussian
from flowcov.core.markov import solve_chain


def _random_spd(rng: np.random.Generator, n: int) -> np.ndarray:
    A = rng.normal(size=(n, n))
    return A @ A.T + n * np.eye(n)


class TestSampleGaussian:
    def test_identity_variance(self):
        M = 4000
        ens = sample_gaussian(0.0, np.eye(3), M, seed=1)
        assert ens.values.shape == (M, 3)
        assert np.all(np.abs(ens.values.var(axis=0) - 1.0) < 6 / math.sqrt(M))

    def test_rank_one(self):
        ens = sample_gaussian(0.0, 2.0 * np.ones((4, 4)), 50, seed=2)
        spread = ens.values.max(axis=1) - ens.values.min(axis=1)
        assert np.all(spread < 1e-3)

    def test_network_covariance(self):
        net = chain(50, h=1.0)
        sigma = cov_matrix_exponential(net, solve_chain(net), 1.0, 3.0)
        M = 2000
        ens = sample_gaussian(0.0, sigma, M, seed=3)
        emp = np.cov(ens.values, rowvar=False)
        assert np.max(np.abs(emp - sigma)) < 6 * math.sqrt(2.0 / M)

    def test_mean_added(self):
        ens = sample_gaussian(np.array([1.0, -1.0]), 1e-6 * np.eye(2), 10, seed=4)
        assert ens.values.mean(axis=0) == pytest.approx([1.0, -1.0], abs=1e-2)
        assert ens.mean.tolist() == [1.0, -1.0]

    def test_deterministic(self):
        sigma = _random_spd(np.random.default_rng(0), 6)
        a = sample_gaussian(0.5, sigma, 30, seed=2**63 + 5)
        b = sample_gaussian(0.5, sigma, 30, seed=2**63 + 5)
        assert a.values.tobytes() == b.values.tobytes()
        assert a.seed == 2**63 + 5

    def test_threads_do_not_change_values(self):
        sigma = _random_spd(np.random.default_rng(1), 8)
        serial = sample_gaussian(0.0, sigma, 64, seed=9)
        threaded = sample_gaussian(0.0, sigma, 64, seed=9, threads=4)
        assert serial.values.tobytes() == threaded.values.tobytes()

    def test_prefix_stable(self):
        sigma = np.eye(3)
        small = sample_gaussian(0.0, sigma, 5, seed=12)
        large = sample_gaussian(0.0, sigma, 20, seed=12)
        assert np.array_equal(small.values, large.values[:5])

    def test_seeds_differ(self):
        a = sample_gaussian(0.0, np.eye(3), 5, seed=1).values
        b = sample_gaussian(0.0, np.eye(3), 5, seed=2).values
        assert not np.array_equal(a, b)

    def test_bad_inputs(self):
        with pytest.raises(ValidationError):
            sample_gaussian(0.0, np.eye(2), 0, seed=1)
        with pytest.raises(ValidationError):
            sample_gaussian(0.0, np.eye(2), 5, seed=-1)
        with pytest.raises(ValidationError):
            sample_gaussian(0.0, np.ones((2, 3)), 5, seed=1)


class TestFlooredFactor:
    def test_reconstructs_spd(self):
        sigma = _random_spd(np.random.default_rng(3), 5)
        L = floored_factor(sigma)
        assert np.allclose(L @ L.T, sigma)

    def test_singular_matrix(self):
        L = floored_factor(np.ones((3, 3)))
        assert np.allclose(L @ L.T, np.ones((3, 3)), atol=1e-8)

    def test_independent_streams(self):
        a = realization_rng(7, 0).standard_normal(4)
        b = realization_rng(7, 1).standard_normal(4)
        assert not np.array_equal(a, b)


class TestKrige:
    def test_exact_interpolation(self):
        sigma = _random_spd(np.random.default_rng(4), 5)
        res = krige([1, 3], np.array([2.0, -1.0]), sigma, 0.0, 'simple')
        assert res.predictions[[1, 3]] == pytest.approx([2.0, -1.0])
        assert res.variances[[1, 3]] == pytest.approx([0.0, 0.0], abs=1e-10)

    def test_chain_weight(self):
        net = chain(2, h=4.0)
        sigma = cov_matrix_exponential(net, solve_chain(net), 1.0, 4.0)
        res = krige([0], np.array([3.0]), sigma, 1.0, 'simple', targets=[1])
        assert res.weights[0, 0] == pytest.approx(0.367879, abs=1e-6)
        assert res.predictions[0] == pytest.approx(1.0 + math.exp(-1.0) * 2.0)
        assert res.variances[0] == pytest.approx(1.0 - math.exp(-2.0))

    def test_disconnected_target(self):
        net = two_chains()
        sigma = cov_matrix_exponential(net, solve_chain(net), 2.0, 1.0)
        res = krige([0, 1], np.array([5.0, 4.0]), sigma, 0.5, 'simple', targets=[2])
        assert res.predictions[0] == 0.5
        assert res.variances[0] == 2.0

    def test_matches_gaussian_conditioning(self):
        rng = np.random.default_rng(6)
        for n in range(2, 7):
            sigma = _random_spd(rng, n)
            mu = rng.normal(size=n)
            obs = np.sort(rng.choice(n, size=int(rng.integers(1, n)), replace=False))
            tgt = np.setdiff1d(np.arange(n), obs)
            z = rng.normal(size=obs.size)
            res = krige(obs, z, sigma, mu, 'simple', targets=tgt)
            s_oo_inv = np.linalg.inv(sigma[np.ix_(obs, obs)])
            s_to = sigma[np.ix_(tgt, obs)]
            cond_mean = mu[tgt] + s_to @ s_oo_inv @ (z - mu[obs])
            cond_cov = sigma[np.ix_(tgt, tgt)] - s_to @ s_oo_inv @ s_to.T
            assert np.allclose(res.predictions, cond_mean, atol=1e-10)
            assert np.allclose(res.variances, np.diag(cond_cov), atol=1e-10)

    def test_ordinary_weights_sum_to_one(self):
        sigma = _random_spd(np.random.default_rng(7), 6)
        res = krige([0, 2, 5], np.array([1.0, 2.0, 4.0]), sigma, 0.0, 'ordinary', targets=[1, 3, 4])
        assert np.all(np.abs(res.weights.sum(axis=0) - 1.0) < 1e-12)

    def test_ordinary_ignores_mean(self):
        sigma = _random_spd(np.random.default_rng(8), 4)
        a = krige([0, 1], np.array([1.0, 3.0]), sigma, 0.0, 'ordinary', targets=[2, 3])
        b = krige([0, 1], np.array([1.0, 3.0]), sigma, 10.0, 'ordinary', targets=[2, 3])
        assert np.array_equal(a.predictions, b.predictions)

    def test_ordinary_constant_field(self):
        sigma = _random_spd(np.random.default_rng(9), 5)
        res = krige([0, 1, 2], np.full(3, 7.5), sigma, 0.0, 'ordinary', targets=[3, 4])
        assert res.predictions == pytest.approx([7.5, 7.5])

    def test_singular_block(self):
        with pytest.raises(NumericalError):
            krige([0, 1], np.array([1.0, 2.0]), np.ones((3, 3)), 0.0, 'simple')

    def test_bad_inputs(self):
        with pytest.raises(ValidationError, match='mode'):
            krige([0], np.array([1.0]), np.eye(2), mode='universal')
        with pytest.raises(ValidationError):
            krige([], np.array([]), np.eye(2))
        with pytest.raises(ValidationError):
            krige([0, 1], np.array([1.0]), np.eye(2))


class TestBiasCorrect:
    def test_identical(self):
        obs = np.random.default_rng(0).normal(size=(3, 5))
        res = bias_correct(obs, obs)
        assert float(res.bias) == 0.0
        assert np.all(res.residuals == 0.0)

    def test_constant_offset(self):
        obs = np.random.default_rng(1).normal(size=(4, 6))
        res = bias_correct(obs + 0.5, obs)
        assert float(res.bias) == pytest.approx(0.5)
        assert np.allclose(res.residuals, 0.0)
        assert np.allclose(res.mean, obs)

    def test_noisy_years(self):
        rng = np.random.default_rng(2)
        obs = rng.normal(size=(17, 200))
        proj = obs + 1.3 + rng.normal(scale=0.2, size=obs.shape)
        res = bias_correct(proj, obs)
        assert float(res.bias) == pytest.approx(1.3, abs=0.01)
        assert abs(float(res.residuals.mean())) < 1e-12

    def test_missing_entries_skipped(self):
        proj = np.array([[1.0, 2.0, np.nan]])
        obs = np.array([[0.0, np.nan, 1.0]])
        assert float(bias_correct(proj, obs).bias) == 1.0

    def test_vertex_mode(self):
        obs = np.zeros((2, 3))
        proj = np.array([[1.0, 2.0, np.nan], [3.0, 2.0, np.nan]])
        res = bias_correct(proj, obs, mode='vertex')
        # vertex 2 never overlaps and falls back to the global bias
        assert res.bias.tolist() == [2.0, 2.0, 2.0]

    def test_no_overlap(self):
        with pytest.raises(ValidationError, match='share no'):
            bias_correct(np.array([[1.0, np.nan]]), np.array([[np.nan, 1.0]]))

    def test_shape_mismatch(self):
        with pytest.raises(ValidationError):
            bias_correct(np.zeros((2, 3)), np.zeros((3, 3)))

    def test_bad_mode(self):
        with pytest.raises(ValidationError):
            bias_correct(np.zeros(3), np.zeros(3), mode='regional')
