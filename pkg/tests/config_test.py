#!/usr/bin/env python
# -*- coding: utf-8 -*-

import os
import tempfile
import unittest
from pathlib import Path
from unittest.mock import patch

import yaml

from source.config import Config
from source.exceptions import ConfigError

CLEAN_ENV = {key: value for key, value in os.environ.items() if not key.startswith("LPM_")}


@patch.dict(os.environ, CLEAN_ENV, clear=True)
class config_test(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def write(self, text, name="config.yaml"):
        path = self.dir / name
        path.write_text(text)
        return str(path)

    def test_defaults(self):
        config = Config(search_defaults=False)
        self.assertEqual(config.get("experiment", "runs"), 50)
        self.assertEqual(config.get("model", "eta"), 1e-3)
        self.assertEqual(config.get("fit", "max_iters"), 500)
        self.assertIsNone(config.get("model", "missing"))
        self.assertEqual(config.get("nowhere", "key", 3), 3)

    def test_defaults_are_not_shared(self):
        first = Config(search_defaults=False)
        first.get_section("model")["alpha_grid"].append(5.0)
        self.assertEqual(Config(search_defaults=False).get("model", "alpha_grid"), [0.1])

    def test_file_merges_into_defaults(self):
        path = self.write("experiment:\n  runs: 3\nmodel:\n  alpha_grid: [0.0, 0.5]\n")
        config = Config(path)
        self.assertEqual(config.get("experiment", "runs"), 3)
        self.assertEqual(config.get("experiment", "seed"), 0)
        self.assertEqual(config.get("model", "alpha_grid"), [0.0, 0.5])

    def test_empty_file_keeps_defaults(self):
        self.assertEqual(Config(self.write("")).get("experiment", "runs"), 50)

    def test_bad_files(self):
        with self.assertRaises(ConfigError):
            Config(str(self.dir / "absent.yaml"))
        with self.assertRaises(ConfigError):
            Config(self.write("experiment: [unclosed\n", name="bad.yaml"))
        with self.assertRaises(ConfigError):
            Config(self.write("- a\n- b\n", name="list.yaml"))
        with self.assertRaises(ConfigError) as ctx:
            Config(self.write("experiment: 3\n", name="scalar.yaml"))
        self.assertEqual(ctx.exception.exit_code, 1)

    def test_environment_overrides_file(self):
        path = self.write("experiment:\n  seed: 4\n")
        with patch.dict(os.environ, {"LPM_SEED": "17", "LPM_RUNS": "2", "LPM_OUTPUT_DIR": "out"}):
            config = Config(path)
        self.assertEqual(config.get("experiment", "seed"), 17)
        self.assertEqual(config.get("experiment", "runs"), 2)
        self.assertEqual(config.get("experiment", "output_dir"), "out")

    def test_save_and_dump(self):
        config = Config(search_defaults=False)
        config.set("experiment", "runs", 9)
        target = self.dir / "nested" / "saved.yaml"
        config.save(str(target))
        self.assertEqual(Config(str(target)).to_dict(), config.to_dict())
        self.assertEqual(yaml.safe_load(config.dump())["experiment"]["runs"], 9)

    def test_create_default_config(self):
        target = self.dir / "default.yaml"
        Config.create_default_config(str(target))
        self.assertEqual(yaml.safe_load(target.read_text()), Config.DEFAULTS)

    def test_home_config_is_found(self):
        (self.dir / ".latentprobit.yaml").write_text("experiment:\n  runs: 11\n")
        with patch.object(Path, "home", return_value=self.dir):
            self.assertEqual(Config().get("experiment", "runs"), 11)


if __name__ == '__main__':
    unittest.main()
