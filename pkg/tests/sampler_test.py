#!/usr/bin/env python
# -*- coding: utf-8 -*-

import math
import unittest

import numpy as np
from scipy import stats

from source.exceptions import ValidationError
from source.model import Hyperparams, LpmParams
from source.sampler import (GenConfig, generate, laplace_variance, sample_classifier, sample_params,
                            sample_sparse_classifier, sample_sparse_transform, sample_task,
                            sample_transform)


def small_params(w=(0.8, -0.5), b=0.2):
    f_m = np.array([[1.0, 0.5], [0.0, -1.0], [0.3, 0.2]])
    sigma = np.array([[1.0, 0.3], [0.3, 0.5]])
    return LpmParams(mu=np.array([0.5, -1.0]), sigma=sigma, b=b, w=np.array(w),
                     transforms=(f_m,), offsets=(np.array([1.0, 0.0, -2.0]),))


class prior_sampling_test(unittest.TestCase):
    def test_classifier_variance(self):
        hyper = Hyperparams.from_rates(gamma=1.0, lam=1.0, eta=0.1, f0=1000000)
        w, u = sample_classifier(hyper, np.random.default_rng(0))
        # Laplace with rate 1: variance 2, fourth moment 24
        se = math.sqrt((24.0 - laplace_variance(1.0) ** 2) / w.size)
        self.assertLess(abs(w.var() - 2.0), 4 * se)
        self.assertTrue(np.all(u >= 0))

    def test_transform_variance(self):
        hyper = Hyperparams.from_rates(gamma=4.0, lam=1.0, eta=0.1, f0=1000)
        f_m, tau = sample_transform(1000, hyper, np.random.default_rng(1))
        self.assertEqual(f_m.shape, (1000, 1000))
        se = math.sqrt((6.0 / 16.0 - 0.25) / f_m.size)
        self.assertLess(abs(f_m.var() - 0.5), 4 * se)
        self.assertEqual(tau.shape, f_m.shape)

    def test_marginal_matches_direct_laplace(self):
        hyper = Hyperparams.from_rates(gamma=1.0, lam=2.0, eta=0.1, f0=20000)
        w, _ = sample_classifier(hyper, np.random.default_rng(5))
        result = stats.kstest(w, stats.laplace(scale=1.0 / math.sqrt(2.0)).cdf)
        self.assertGreater(result.pvalue, 1e-3)

    def test_infinite_rate_limit(self):
        hyper = Hyperparams.from_rates(gamma=math.inf, lam=math.inf, eta=0.1, f0=4)
        w, u = sample_classifier(hyper, np.random.default_rng(0))
        f_m, _ = sample_transform(3, hyper, np.random.default_rng(0))
        np.testing.assert_array_equal(w, np.zeros(4))
        np.testing.assert_array_equal(u, np.zeros(4))
        np.testing.assert_array_equal(f_m, np.zeros((3, 4)))

    def test_fixed_seed_reproducible(self):
        hyper = Hyperparams.from_rates(1.0, 1.0, 0.1, 6)
        np.testing.assert_array_equal(sample_classifier(hyper, np.random.default_rng(9))[0],
                                      sample_classifier(hyper, np.random.default_rng(9))[0])
        np.testing.assert_array_equal(sample_transform(5, hyper, np.random.default_rng(9))[0],
                                      sample_transform(5, hyper, np.random.default_rng(9))[0])

    def test_flat_prior_cannot_be_sampled(self):
        hyper = Hyperparams.from_rates(gamma=0.0, lam=1.0, eta=0.1, f0=2)
        with self.assertRaises(ValidationError):
            sample_transform(3, hyper, np.random.default_rng(0))

    def test_sparse_draws(self):
        rng = np.random.default_rng(2)
        w = sample_sparse_classifier(10, 3, rng)
        self.assertEqual(np.count_nonzero(w), 3)
        self.assertTrue(np.all((np.abs(w[w != 0]) >= 0.5) & (np.abs(w[w != 0]) <= 1.5)))
        f_m = sample_sparse_transform(4, 6, 0.0, rng)
        self.assertTrue(np.all(np.any(f_m != 0, axis=0)))
        with self.assertRaises(ValidationError):
            sample_sparse_classifier(2, 3, rng)


class sample_task_test(unittest.TestCase):
    def test_noise_free_identity(self):
        f0 = 3
        params = LpmParams(mu=np.ones(f0), sigma=np.eye(f0), b=0.0, w=np.ones(f0),
                           transforms=(np.eye(f0),), offsets=(np.zeros(f0),))
        hyper = Hyperparams.from_rates(1.0, 1.0, eta=1e-30, f0=f0)
        task, hidden = sample_task(params, hyper, 0, 50, 1.0, np.random.default_rng(4))
        np.testing.assert_allclose(task.x, hidden.s, atol=1e-12)

    def test_balanced_labels_without_signal(self):
        params = small_params(w=(0.0, 0.0), b=0.0)
        hyper = Hyperparams.from_rates(1.0, 1.0, 0.1, 2)
        n = 100000
        _, hidden = sample_task(params, hyper, 0, n, 0.0, np.random.default_rng(6))
        positive = np.mean(hidden.y == 1)
        self.assertLess(abs(positive - 0.5), 4 * math.sqrt(0.25 / n))

    def test_marginal_moments(self):
        params = small_params()
        hyper = Hyperparams.from_rates(1.0, 1.0, 0.05, 2)
        n = 100000
        task, _ = sample_task(params, hyper, 0, n, 0.5, np.random.default_rng(8))
        f_m, d_m = params.for_task(0)
        mean = f_m @ params.mu + d_m
        cov = hyper.eta * np.eye(3) + f_m @ params.sigma @ f_m.T

        mean_se = np.sqrt(np.diag(cov) / n)
        self.assertTrue(np.all(np.abs(task.x.mean(axis=1) - mean) < 4 * mean_se))
        cov_se = np.sqrt((np.outer(np.diag(cov), np.diag(cov)) + cov ** 2) / n)
        self.assertTrue(np.all(np.abs(np.cov(task.x) - cov) < 4 * cov_se))

    def test_label_probability_is_probit(self):
        params = small_params()
        hyper = Hyperparams.from_rates(1.0, 1.0, 0.1, 2)
        _, hidden = sample_task(params, hyper, 0, 200000, 0.0, np.random.default_rng(10))
        score = params.w @ hidden.s + params.b
        edges = np.quantile(score, np.linspace(0, 1, 6))
        for low, high in zip(edges[:-1], edges[1:]):
            in_bin = (score >= low) & (score <= high)
            expected = stats.norm.cdf(score[in_bin]).mean()
            observed = np.mean(hidden.y[in_bin] == 1)
            se = math.sqrt(max(expected * (1 - expected), 1e-4) / in_bin.sum())
            self.assertLess(abs(observed - expected), 4 * se)

    def test_sign_rule_and_labeled_count(self):
        params = small_params()
        hyper = Hyperparams.from_rates(1.0, 1.0, 0.1, 2)
        task, hidden = sample_task(params, hyper, 0, 40, 0.25, np.random.default_rng(12))
        np.testing.assert_array_equal(hidden.y, np.where(hidden.z >= 0, 1, -1))
        self.assertEqual(task.num_labeled, 10)
        labeled = task.labeled_index
        np.testing.assert_array_equal(task.labels[labeled], hidden.y[labeled])


class generate_test(unittest.TestCase):
    def config(self, dims, seed=17):
        hyper = Hyperparams.from_rates(2.0, 1.0, 0.1, 3)
        return GenConfig(hyper=hyper, task_dims=list(dims), n_per_task=[30] * len(dims),
                         labeled_fraction=[0.5] * len(dims), seed=seed)

    def test_deterministic(self):
        first = generate(self.config([4, 5]))
        second = generate(self.config([4, 5]))
        self.assertTrue(first.params.equals(second.params))
        for a, b in zip(first.datasets, second.datasets):
            np.testing.assert_array_equal(a.x, b.x)
            np.testing.assert_array_equal(a.labels, b.labels)

    def test_adding_a_task_keeps_earlier_draws(self):
        two = generate(self.config([4, 5]))
        three = generate(self.config([4, 5, 6]))
        np.testing.assert_array_equal(two.params.w, three.params.w)
        for m in range(2):
            np.testing.assert_array_equal(two.params.transforms[m], three.params.transforms[m])
            np.testing.assert_array_equal(two.datasets[m].x, three.datasets[m].x)

    def test_seed_changes_draws(self):
        a = generate(self.config([4], seed=1))
        b = generate(self.config([4], seed=2))
        self.assertFalse(np.array_equal(a.datasets[0].x, b.datasets[0].x))

    def test_sparse_ground_truth(self):
        hyper = Hyperparams.from_rates(1.0, 1.0, 0.1, 5)
        config = GenConfig(hyper=hyper, task_dims=[8], n_per_task=[10], labeled_fraction=[1.0],
                           w_nonzeros=2, transform_density=0.3, seed=3)
        params, scales = sample_params(config)
        self.assertEqual(np.count_nonzero(params.w), 2)
        np.testing.assert_array_equal(scales.u, params.w ** 2)

    def test_config_lengths_must_match(self):
        hyper = Hyperparams.from_rates(1.0, 1.0, 0.1, 2)
        with self.assertRaises(ValidationError):
            GenConfig(hyper=hyper, task_dims=[3, 4], n_per_task=[10], labeled_fraction=[0.5, 0.5])


if __name__ == '__main__':
    unittest.main()
