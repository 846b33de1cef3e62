#!/usr/bin/env python
# -*- coding: utf-8 -*-

import json
import math
import unittest

import numpy as np

from source.exceptions import ParseError, UnsupportedVersionError, ValidationError
from source.model import (Hyperparams, LpmParams, SparsityScales, TaskDataset, load_params,
                          read_params, save_params, validate, write_params)


def identity_params(f0=3, dims=(4, 5)):
    return LpmParams(mu=np.zeros(f0), sigma=np.eye(f0), b=0.0, w=np.zeros(f0),
                     transforms=tuple(np.ones((d, f0)) for d in dims),
                     offsets=tuple(np.zeros(d) for d in dims))


def random_params(rng, f0=4, dims=(3, 6, 5)):
    a = rng.standard_normal((f0, f0))
    return LpmParams(mu=rng.standard_normal(f0), sigma=a @ a.T + f0 * np.eye(f0),
                     b=float(rng.standard_normal()), w=rng.standard_normal(f0),
                     transforms=tuple(rng.standard_normal((d, f0)) for d in dims),
                     offsets=tuple(rng.standard_normal(d) for d in dims))


class hyperparams_test(unittest.TestCase):
    def test_rates_round_trip(self):
        hyper = Hyperparams.from_rates(gamma=3.7, lam=0.42, eta=0.013, f0=5)
        self.assertAlmostEqual(hyper.alpha, 0.013 * math.sqrt(3.7), places=15)
        self.assertAlmostEqual(hyper.vartheta, math.sqrt(0.42), places=15)
        back = Hyperparams.from_regularizers(hyper.alpha, hyper.vartheta, hyper.eta, hyper.f0)
        self.assertTrue(math.isclose(back.gamma, 3.7, rel_tol=1e-14))
        self.assertTrue(math.isclose(back.lam, 0.42, rel_tol=1e-14))

    def test_regularizers_round_trip(self):
        hyper = Hyperparams.from_regularizers(alpha=0.25, vartheta=1.5, eta=0.1, f0=2)
        again = Hyperparams.from_rates(hyper.gamma, hyper.lam, hyper.eta, hyper.f0)
        self.assertTrue(math.isclose(again.alpha, 0.25, rel_tol=1e-14))
        self.assertTrue(math.isclose(again.vartheta, 1.5, rel_tol=1e-14))

    def test_rejects_bad_inputs(self):
        with self.assertRaises(ValidationError):
            Hyperparams.from_rates(1.0, 1.0, eta=0.0, f0=2)
        with self.assertRaises(ValidationError):
            Hyperparams.from_rates(1.0, 1.0, eta=0.1, f0=0)
        with self.assertRaises(ValidationError):
            Hyperparams.from_regularizers(-1.0, 1.0, eta=0.1, f0=2)

    def test_inconsistent_direct_construction(self):
        with self.assertRaises(ValidationError):
            Hyperparams(gamma=1.0, lam=1.0, eta=0.5, f0=2, alpha=0.1, vartheta=1.0)

    def test_with_regularizers_keeps_eta_and_f0(self):
        hyper = Hyperparams.from_rates(1.0, 1.0, 0.2, 3).with_regularizers(0.4, 2.0)
        self.assertEqual(hyper.eta, 0.2)
        self.assertEqual(hyper.f0, 3)
        self.assertAlmostEqual(hyper.gamma, 4.0)
        self.assertAlmostEqual(hyper.lam, 4.0)


class validate_test(unittest.TestCase):
    def test_identity_case_is_clean(self):
        params = identity_params()
        data = [TaskDataset(x=np.zeros((4, 2)), labels=[1, 0]), TaskDataset(x=np.zeros((5, 3)), labels=[0, 0, -1])]
        self.assertEqual(validate(params, data), [])

    def test_sigma_not_pd(self):
        sigma = np.diag([1.0, -0.5, 1.0])
        params = LpmParams(mu=np.zeros(3), sigma=sigma, b=0.0, w=np.zeros(3),
                           transforms=(np.ones((4, 3)),), offsets=(np.zeros(4),), strict=False)
        self.assertIn("sigma not PD", validate(params))

    def test_column_mismatch(self):
        params = LpmParams(mu=np.zeros(9), sigma=np.eye(9), b=0.0, w=np.zeros(9),
                           transforms=(np.ones((4, 9)), np.ones((4, 8))),
                           offsets=(np.zeros(4), np.zeros(4)), strict=False)
        problems = validate(params)
        self.assertTrue(any("column mismatch" in p for p in problems))

    def test_data_dimension_mismatch(self):
        params = identity_params(dims=(4,))
        problems = validate(params, [TaskDataset(x=np.zeros((6, 2)), labels=[0, 0])])
        self.assertTrue(any("6 features" in p for p in problems))

    def test_strict_construction_raises(self):
        with self.assertRaises(ValidationError):
            LpmParams(mu=np.zeros(2), sigma=-np.eye(2), b=0.0, w=np.zeros(2),
                      transforms=(np.ones((3, 2)),), offsets=(np.zeros(3),))

    def test_arrays_are_read_only(self):
        params = identity_params()
        with self.assertRaises(ValueError):
            params.w[0] = 1.0


class task_dataset_test(unittest.TestCase):
    def test_label_partition(self):
        task = TaskDataset.from_optional_labels(np.arange(10.0).reshape(2, 5), [1, None, -1, None, 1])
        self.assertEqual(task.num_labeled, 3)
        np.testing.assert_array_equal(task.labeled_index, [0, 2, 4])
        np.testing.assert_array_equal(task.unlabeled_index, [1, 3])
        self.assertEqual(task.optional_labels(), [1, None, -1, None, 1])

    def test_rejects_non_finite(self):
        with self.assertRaises(ValidationError):
            TaskDataset(x=np.array([[1.0, np.nan]]), labels=[1, -1])

    def test_rejects_bad_labels(self):
        with self.assertRaises(ValidationError):
            TaskDataset(x=np.zeros((1, 2)), labels=[2, 1])
        with self.assertRaises(ValidationError):
            TaskDataset.from_optional_labels(np.zeros((1, 2)), [0, 1])

    def test_hide_labels(self):
        task = TaskDataset(x=np.zeros((1, 3)), labels=[1, -1, 1]).hide_labels([1])
        np.testing.assert_array_equal(task.labels, [1, 0, 1])

    def test_sparsity_scales_nonnegative(self):
        with self.assertRaises(ValidationError):
            SparsityScales(tau=(np.ones((2, 2)),), u=np.array([-1.0, 0.0]))


class serialization_test(unittest.TestCase):
    def test_round_trip_is_bit_exact(self):
        rng = np.random.default_rng(11)
        params = random_params(rng)
        loaded = load_params(save_params(params))
        self.assertTrue(params.equals(loaded))

    def test_file_round_trip(self):
        import tempfile
        from pathlib import Path
        params = random_params(np.random.default_rng(3), f0=2, dims=(2,))
        with tempfile.TemporaryDirectory() as tmp:
            path = write_params(params, Path(tmp) / "nested" / "params.json")
            self.assertTrue(read_params(path).equals(params))

    def test_truncated_stream(self):
        stream = save_params(identity_params())
        with self.assertRaises(ParseError) as ctx:
            load_params(stream[:len(stream) // 2])
        self.assertEqual(ctx.exception.field, "document")

    def test_version_mismatch(self):
        document = json.loads(save_params(identity_params()))
        document["version"] = 99
        with self.assertRaises(UnsupportedVersionError) as ctx:
            load_params(json.dumps(document).encode())
        self.assertEqual(ctx.exception.version, 99)

    def test_error_names_field(self):
        document = json.loads(save_params(identity_params()))
        document["tasks"][1]["transform"]["data"] = document["tasks"][1]["transform"]["data"][:-1]
        with self.assertRaises(ParseError) as ctx:
            load_params(json.dumps(document).encode())
        self.assertEqual(ctx.exception.field, "tasks[1].transform")

    def test_wrong_format_tag(self):
        document = json.loads(save_params(identity_params()))
        document["format"] = "other"
        with self.assertRaises(ParseError) as ctx:
            load_params(json.dumps(document).encode())
        self.assertEqual(ctx.exception.field, "format")


if __name__ == '__main__':
    unittest.main()
