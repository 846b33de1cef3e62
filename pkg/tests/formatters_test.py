#!/usr/bin/env python
# -*- coding: utf-8 -*-

import json
import math
import tempfile
import unittest
from pathlib import Path

import numpy as np

from source.bound import BoundSummary
from source.em import FitTrace
from source.exceptions import ValidationError
from source.experiments import ResultRow, ResultTable
from source.formatters import (PLOT_FILE, RESULTS_FILE, CSVFormatter, emit_bound_outputs, emit_outputs,
                               format_cell, get_formatter, render_plot, write_csv)


def result_row(mode, count, auc, stl, direction="a+b"):
    return ResultRow(mode=mode, direction=direction, labeled_count=count, alpha=0.1, vartheta=1.0,
                     mean_auc=auc, std_auc=0.01, stl_mean_auc=stl, stl_std_auc=0.02,
                     auc_improvement_vs_stl=auc - stl, runs=5)


def two_method_table():
    rows = [result_row("mtl", count, 0.7 + 0.05 * k, 0.65 + 0.04 * k)
            for k, count in enumerate([50, 100, 150])]
    trace = FitTrace(log_posterior=[-10.0, -9.0], changes=[{"mu": 0.5, "w": 0.25}], converged=True)
    return ResultTable(rows=rows, traces={"mtl a+b n=50 run 0": trace},
                       scores={"mtl a+b n=50 run 0": [[0, 1, 0.75, 1], [0, 2, 0.25, -1]]})


class format_cell_test(unittest.TestCase):
    def test_cells(self):
        self.assertEqual(format_cell(0.1), "0.1")
        self.assertEqual(format_cell(1 / 3), repr(1 / 3))
        self.assertEqual(format_cell(True), "true")
        self.assertEqual(format_cell(np.float64(2.5)), "2.5")
        self.assertEqual(format_cell(np.int64(7)), "7")
        self.assertEqual(format_cell("t0+t1"), "t0+t1")
        self.assertEqual(format_cell(float("nan")), "nan")


class formatter_test(unittest.TestCase):
    def test_csv_layout(self):
        text = CSVFormatter().format(["a", "b"], [[1, 0.5], [2, True]])
        self.assertEqual(text, "a,b\n1,0.5\n2,true\n")

    def test_json_nan_is_null(self):
        text = get_formatter("json").format(["auc"], [[float("nan")], [0.5]], metadata={"seed": 3})
        data = json.loads(text)
        self.assertIsNone(data["rows"][0]["auc"])
        self.assertEqual(data["rows"][1]["auc"], 0.5)
        self.assertEqual(data["metadata"], {"seed": 3})

    def test_console_without_color(self):
        text = get_formatter("console", use_color=False).format(["name", "auc"], [["mtl", 0.123456]])
        self.assertNotIn("\033[", text)
        self.assertIn("0.1235", text)

    def test_unknown_format(self):
        with self.assertRaises(ValidationError):
            get_formatter("xml")


class emit_outputs_test(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_empty_table_gives_header_only(self):
        written = emit_outputs(ResultTable(), self.dir / "empty")
        self.assertEqual(written, [self.dir / "empty" / RESULTS_FILE])
        self.assertEqual((self.dir / "empty" / RESULTS_FILE).read_text(), ",".join(ResultTable.COLUMNS) + "\n")
        self.assertFalse((self.dir / "empty" / PLOT_FILE).exists())

    def test_series_per_method(self):
        series = two_method_table().series()
        self.assertEqual(sorted(series), ["MTL a+b", "STL a+b"])
        self.assertEqual([len(points) for points in series.values()], [3, 3])
        self.assertEqual([count for count, _ in series["MTL a+b"]], [50, 100, 150])

    def test_files_written(self):
        out = self.dir / "run"
        emit_outputs(two_method_table(), out, traces=True, scores=True, plot=True)
        lines = (out / RESULTS_FILE).read_text().splitlines()
        self.assertEqual(len(lines), 4)
        self.assertTrue(lines[1].startswith("mtl,a+b,50,0.1,1.0,0.7,"))
        traces = list((out / "traces").iterdir())
        self.assertEqual(len(traces), 1)
        self.assertEqual(traces[0].read_text().splitlines()[0], ",".join(FitTrace.header()))
        self.assertEqual(len(list((out / "scores").iterdir())), 1)
        self.assertTrue((out / PLOT_FILE).read_bytes().lstrip().startswith(b"<?xml"))

    def test_outputs_are_byte_identical(self):
        emit_outputs(two_method_table(), self.dir / "first")
        emit_outputs(two_method_table(), self.dir / "second")
        for name in (RESULTS_FILE, PLOT_FILE):
            self.assertEqual((self.dir / "first" / name).read_bytes(), (self.dir / "second" / name).read_bytes())

    def test_plot_skips_non_finite(self):
        self.assertIsNone(render_plot({"STL a+b": [(50, math.nan)]}))
        self.assertIsNotNone(render_plot({"STL a+b": [(50, math.nan), (100, 0.7)]}))

    def test_unwritable_target(self):
        blocker = self.dir / "file"
        blocker.write_text("x")
        with self.assertRaises(ValidationError):
            emit_outputs(ResultTable(), blocker / "sub")
        with self.assertRaises(ValidationError):
            write_csv(self.dir / "missing" / "t.csv", ["a"], [])


class bound_outputs_test(unittest.TestCase):
    def test_bound_files(self):
        summary = BoundSummary(trials=4, holds=4, events=4, p_e=0.5)
        with tempfile.TemporaryDirectory() as tmp:
            trials, summary_path = emit_bound_outputs([], summary, tmp)
            self.assertEqual(len(trials.read_text().splitlines()), 1)
            self.assertEqual(summary_path.read_text(), summary.summary_line() + "\n")

    def test_bound_files_under_a_regular_file(self):
        summary = BoundSummary(trials=4, holds=4, events=4, p_e=0.5)
        with tempfile.TemporaryDirectory() as tmp:
            blocker = Path(tmp) / "file"
            blocker.write_text("x")
            with self.assertRaises(ValidationError) as ctx:
                emit_bound_outputs([], summary, blocker / "sub")
            self.assertEqual(ctx.exception.field, "out")


if __name__ == '__main__':
    unittest.main()
