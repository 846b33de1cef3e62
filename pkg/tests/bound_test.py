#!/usr/bin/env python
# -*- coding: utf-8 -*-

import itertools
import math
import unittest

import numpy as np

from source.bound import (BoundConfig, BoundSummary, cone_constant, error_bound_rhs, failure_probability,
                          lasso_kkt_violation, lasso_objective, lasso_solve, penalty_from_a, pool_psi,
                          row_norm_max, run_bound_trial, sparse_max_eig_bound, two_step_latent,
                          verify_error_bound)
from source.exceptions import NumericalError, ValidationError


def random_lasso_problem(rng, f0, n):
    psi = rng.standard_normal((f0, n))
    w_true = np.where(rng.random(f0) < 0.5, rng.standard_normal(f0), 0.0)
    z = psi.T @ w_true + 0.5 * rng.standard_normal(n)
    return psi, z


def enumeration_oracle(psi, z, r):
    """Minimum objective over the closed-form solutions of all 3^f0 sign patterns."""
    f0, n = psi.shape
    gram = psi @ psi.T
    target = psi @ z
    best = lasso_objective(psi, z, np.zeros(f0), r)
    for signs in itertools.product((-1.0, 0.0, 1.0), repeat=f0):
        signs = np.array(signs)
        support = np.flatnonzero(signs)
        if support.size == 0:
            continue
        w = np.zeros(f0)
        w[support] = np.linalg.solve(gram[np.ix_(support, support)],
                                     target[support] - 0.5 * n * r * signs[support])
        best = min(best, lasso_objective(psi, z, w, r))
    return best


class two_step_test(unittest.TestCase):
    def test_identity_transform(self):
        x = np.random.default_rng(0).standard_normal((4, 7))
        np.testing.assert_allclose(two_step_latent(np.eye(4), x), x, atol=1e-14)

    def test_exact_recovery_without_noise(self):
        rng = np.random.default_rng(1)
        f_m = rng.standard_normal((9, 4))
        s = rng.standard_normal((4, 20))
        np.testing.assert_allclose(two_step_latent(f_m, f_m @ s), s, atol=1e-10)

    def test_normal_equations(self):
        rng = np.random.default_rng(2)
        f_m = rng.standard_normal((10, 3))
        x = rng.standard_normal((10, 15))
        s_hat = two_step_latent(f_m, x)
        np.testing.assert_allclose(f_m.T @ (x - f_m @ s_hat), 0.0, atol=1e-10)

    def test_rank_deficient(self):
        f_m = np.array([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]])
        with self.assertRaises(NumericalError):
            two_step_latent(f_m, np.ones((3, 2)))

    def test_pool_order(self):
        first = np.arange(6.0).reshape(2, 3)
        second = -np.arange(4.0).reshape(2, 2)
        psi = pool_psi([first, second])
        self.assertEqual(psi.shape, (2, 5))
        np.testing.assert_array_equal(psi[:, :3], first)
        np.testing.assert_array_equal(psi[:, 3:], second)
        np.testing.assert_array_equal(pool_psi([first]), first)

    def test_pool_rejects_mismatch(self):
        with self.assertRaises(ValidationError):
            pool_psi([np.zeros((2, 3)), np.zeros((3, 3))])
        with self.assertRaises(ValidationError):
            pool_psi([])


class lasso_test(unittest.TestCase):
    def test_zero_penalty_is_least_squares(self):
        psi, z = random_lasso_problem(np.random.default_rng(3), 4, 50)
        expected = np.linalg.lstsq(psi.T, z, rcond=None)[0]
        np.testing.assert_allclose(lasso_solve(psi, z, 0.0), expected, atol=1e-7)

    def test_large_penalty_kills_everything(self):
        psi, z = random_lasso_problem(np.random.default_rng(4), 5, 40)
        r = 2.0 / 40 * float(np.max(np.abs(psi @ z)))
        np.testing.assert_array_equal(lasso_solve(psi, z, r), np.zeros(5))
        np.testing.assert_array_equal(lasso_solve(psi, z, 2.0 * r), np.zeros(5))

    def test_kkt_certificate(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            f0 = int(rng.integers(2, 11))
            n = int(rng.integers(20, 80))
            psi, z = random_lasso_problem(rng, f0, n)
            r_max = 2.0 / n * float(np.max(np.abs(psi @ z)))
            r = float(rng.uniform(0.01, 1.0)) * r_max
            w = lasso_solve(psi, z, r)
            self.assertLess(lasso_kkt_violation(psi, z, w, r), 1e-8)

    def test_matches_sign_pattern_enumeration(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            psi, z = random_lasso_problem(rng, 3, 30)
            r = float(rng.uniform(0.05, 0.8)) * 2.0 / 30 * float(np.max(np.abs(psi @ z)))
            w = lasso_solve(psi, z, r)
            self.assertLess(abs(lasso_objective(psi, z, w, r) - enumeration_oracle(psi, z, r)), 1e-8)

    def test_rejects_bad_inputs(self):
        psi, z = random_lasso_problem(np.random.default_rng(7), 3, 10)
        with self.assertRaises(ValidationError):
            lasso_solve(psi, z, -0.1)
        with self.assertRaises(ValidationError):
            lasso_solve(psi, np.append(z[:-1], np.inf), 0.1)
        with self.assertRaises(ValidationError):
            lasso_solve(psi, z[:-1], 0.1)


class eigen_bound_test(unittest.TestCase):
    def test_tight_on_identity(self):
        self.assertEqual(sparse_max_eig_bound(np.eye(6)), 1.0)

    def test_tight_on_single_entry(self):
        f_m = np.zeros((5, 3))
        f_m[2, 1] = -1.7
        self.assertAlmostEqual(sparse_max_eig_bound(f_m), 1.7 ** 2, places=14)
        self.assertAlmostEqual(np.linalg.eigvalsh(f_m.T @ f_m)[-1], 1.7 ** 2, places=14)

    def test_dominates_largest_eigenvalue(self):
        rng = np.random.default_rng(8)
        for _ in range(1000):
            rows = int(rng.integers(1, 31))
            cols = int(rng.integers(1, 11))
            density = float(rng.uniform(0.1, 1.0))
            f_m = np.where(rng.random((rows, cols)) < density, rng.standard_normal((rows, cols)), 0.0)
            largest = float(np.linalg.eigvalsh(f_m.T @ f_m)[-1])
            self.assertGreaterEqual(sparse_max_eig_bound(f_m), largest - 1e-10 * max(1.0, largest))

    def test_zeroing_entries_never_increases(self):
        rng = np.random.default_rng(9)
        for _ in range(50):
            f_m = rng.standard_normal((12, 6))
            sparser = np.where(rng.random(f_m.shape) < 0.3, 0.0, f_m)
            self.assertLessEqual(sparse_max_eig_bound(sparser), sparse_max_eig_bound(f_m))


class bound_quantities_test(unittest.TestCase):
    def setUp(self):
        rng = np.random.default_rng(10)
        self.transforms = [rng.standard_normal((6, 3)), rng.standard_normal((5, 3))]
        self.features = [f @ rng.standard_normal((3, 40)) + 0.1 * rng.standard_normal((f.shape[0], 40))
                         for f in self.transforms]

    def rhs(self, a=4.0, s=2, c0=0.5):
        return error_bound_rhs(a, 3.0, 80, s, c0, 3, self.features, self.transforms)

    def test_failure_probability(self):
        self.assertAlmostEqual(failure_probability(10, 4.0), 0.9, places=14)
        self.assertAlmostEqual(failure_probability(8, 4.0), 0.875, places=14)
        self.assertAlmostEqual(failure_probability(10, math.sqrt(8.0)), 0.0, places=12)
        with self.assertRaises(ValidationError):
            failure_probability(1, 4.0)
        with self.assertRaises(ValidationError):
            failure_probability(10, 2.0)

    def test_rhs_vanishes_without_support(self):
        self.assertEqual(self.rhs(s=0), 0.0)

    def test_rhs_linear_in_a(self):
        self.assertAlmostEqual(self.rhs(a=8.0) / self.rhs(a=4.0), 2.0, places=12)

    def test_rhs_grows_with_c0(self):
        self.assertGreater(self.rhs(c0=2.0), self.rhs(c0=0.5))

    def test_rhs_requires_valid_a(self):
        with self.assertRaises(ValidationError):
            self.rhs(a=1.0)

    def test_zero_transform_is_degenerate(self):
        with self.assertRaises(NumericalError):
            error_bound_rhs(4.0, 1.0, 80, 1, 0.0, 3, self.features[:1], [np.zeros((6, 3))])

    def test_cone_constant(self):
        delta = np.array([1.0, -2.0, 0.5, 0.0])
        self.assertAlmostEqual(cone_constant(delta, [0, 1]), 0.5 / 3.0)
        self.assertEqual(cone_constant(np.array([0.0, 0.0, 0.3]), [0, 1]), 0.0)

    def test_penalty_and_row_norm(self):
        psi = np.array([[3.0, 4.0], [1.0, 0.0]])
        self.assertEqual(row_norm_max(psi), 5.0)
        self.assertAlmostEqual(penalty_from_a(4.0, 5.0, 2, 8), 4.0 * 5.0 * math.sqrt(math.log(8)) / 2)


class verify_bound_test(unittest.TestCase):
    def small_config(self, **overrides):
        values = dict(f0=4, s=2, task_dims=[6, 5], labeled_per_task=[60, 40], a=4.0, eta=0.01, seed=3)
        values.update(overrides)
        return BoundConfig(**values)

    def test_report_invariants(self):
        config = self.small_config()
        report = run_bound_trial(config, 0)
        self.assertEqual(report.n_t, 100)
        self.assertAlmostEqual(report.a, report.n_t * report.r / (math.sqrt(math.log(4)) * report.eps_psi),
                               places=12)
        self.assertAlmostEqual(report.p_e, 1.0 - 4.0 ** (1.0 - 2.0), places=14)
        self.assertGreater(report.rhs, 0.0)
        self.assertGreaterEqual(report.c0, 0.0)
        self.assertEqual(report.held, report.delta_norm <= report.rhs)
        self.assertEqual(len(report.to_row()), len(report.CSV_FIELDS))

    def test_trials_are_reproducible_across_workers(self):
        config = self.small_config(transform_density=0.6)
        serial, _ = verify_error_bound(config, 6, workers=1)
        parallel, _ = verify_error_bound(config, 6, workers=3)
        self.assertEqual([r.to_row() for r in serial], [r.to_row() for r in parallel])
        self.assertEqual([r.trial for r in serial], list(range(6)))

    def test_default_setting_meets_guarantee(self):
        reports, summary = verify_error_bound(BoundConfig(), 200)
        self.assertAlmostEqual(summary.p_e, 0.875, places=14)
        self.assertAlmostEqual(summary.threshold, 0.875 - 3 * math.sqrt(0.875 * 0.125 / 200), places=12)
        self.assertGreaterEqual(summary.holds_fraction, summary.threshold)
        self.assertTrue(summary.passed)
        self.assertIn("PASS", summary.summary_line())
        self.assertEqual(len(reports), 200)

    def test_vacuous_guarantee_is_flagged(self):
        with self.assertLogs("latentprobit", level="WARNING"):
            _, summary = verify_error_bound(self.small_config(a=math.sqrt(8.0)), 2)
        self.assertTrue(summary.vacuous)
        self.assertIn("vacuous", summary.summary_line())

    def test_summary_threshold_arithmetic(self):
        summary = BoundSummary(trials=100, holds=85, events=90, p_e=0.9)
        self.assertAlmostEqual(summary.threshold, 0.9 - 3 * math.sqrt(0.09 / 100))
        self.assertTrue(summary.passed)
        self.assertFalse(BoundSummary(trials=100, holds=70, events=90, p_e=0.9).passed)

    def test_config_validation(self):
        with self.assertRaises(ValidationError):
            self.small_config(task_dims=[3, 5])
        with self.assertRaises(ValidationError):
            self.small_config(s=5)
        with self.assertRaises(ValidationError):
            self.small_config(a=2.0)
        with self.assertRaises(ValidationError):
            self.small_config(labeled_per_task=[60])


if __name__ == '__main__':
    unittest.main()
