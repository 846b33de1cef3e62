#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Configuration management for latentprobit.
Supports YAML config files, environment variables, and defaults.
"""

import copy
import os
import yaml
from pathlib import Path
from typing import Any, Dict, Optional

from .exceptions import ConfigError
from .logger import get_logger


class Config:
    """Configuration manager for latentprobit experiments."""

    # Default configuration
    DEFAULTS = {
        'experiment': {
            'mode': 'mtl',
            'datasets': [],
            'label_column': 'label',
            'labeled_counts': [50, 100, 150],
            'runs': 50,
            'test_fraction': 0.3,
            'normalize': True,
            'seed': 0,
            'output_dir': 'results',
            'workers': 1,
            'selection': 'sweep',   # sweep | cv
            'source_index': 0,
            'source_labeled': None,
            'pair_sweep': False,
        },
        'model': {
            'f0_policy': 'min-task-dim',   # min-task-dim | explicit
            'f0': None,
            'eta': 1e-3,
            'alpha_grid': [0.1],
            'vartheta_grid': [1.0],
        },
        'fit': {
            'tol': 1e-6,
            'max_iters': 500,
            'fix_latent': True,
            'exact_cross_moment': True,
        },
        'cv': {
            'folds': 5,
        },
        'synth': {
            'f0': 5,
            'task_dims': [10, 10, 10],
            'n_per_task': [500, 500, 500],
            'labeled_fraction': [0.5, 0.5, 0.5],
            'w_nonzeros': 2,
            'transform_density': 0.3,
            'gamma': 1.0,
            'lam': 1.0,
            'bias': 0.0,
            'test_fraction': 0.3,
        },
        'bound': {
            'f0': 8,
            's': 3,
            'task_dims': [12, 12, 12, 12],
            'labeled_per_task': [250, 250, 250, 250],
            'a': 4.0,
            'eta': 0.01,
            'gamma': 1.0,
            'transform_density': None,
            'trials': 200,
            'seed': 7,
        },
        'logging': {
            'level': 'WARNING',
            'file': None,
            'colored': True,
        },
        'output': {
            'plot': True,
            'traces': True,
            'scores': False,
        },
    }

    def __init__(self, config_file: Optional[str] = None, search_defaults: bool = True):
        """
        Initialize configuration.

        Args:
            config_file: Path to configuration file (optional)
            search_defaults: Look for a config file in the default locations
                when none is given
        """
        self.logger = get_logger()
        self.config = self._load_defaults()

        if config_file:
            self._load_from_file(config_file)
        elif search_defaults:
            self._try_default_locations()

        self._load_from_env()

    def _load_defaults(self) -> Dict[str, Any]:
        return copy.deepcopy(self.DEFAULTS)

    def _try_default_locations(self):
        default_paths = [
            Path.home() / '.latentprobit.yaml',
            Path.home() / '.config' / 'latentprobit' / 'config.yaml',
            Path.cwd() / '.latentprobit.yaml',
        ]

        for path in default_paths:
            if path.exists():
                self.logger.debug(f"Found config file at: {path}")
                self._load_from_file(str(path))
                break

    def _load_from_file(self, filepath: str):
        """
        Load configuration from YAML file.

        Raises:
            ConfigError: If the file is missing, unreadable or not a mapping
        """
        path = Path(filepath).expanduser()
        if not path.exists():
            raise ConfigError(f"Config file not found: {filepath}", config_file=filepath)
        try:
            with open(path, 'r') as f:
                file_config = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise ConfigError(f"Invalid YAML in config file: {str(e)}", config_file=filepath)
        except OSError as e:
            raise ConfigError(f"Error loading config file: {str(e)}", config_file=filepath)

        if file_config is None:
            return
        if not isinstance(file_config, dict):
            raise ConfigError("Config file must contain a mapping of sections", config_file=filepath)
        for section, values in file_config.items():
            if section in self.DEFAULTS and not isinstance(values, dict):
                raise ConfigError(f"Section '{section}' must be a mapping", config_file=filepath)
        self._merge_config(file_config)
        self.logger.info(f"Loaded configuration from: {filepath}")

    def _load_from_env(self):
        """Load configuration from environment variables."""
        env_mappings = {
            'LPM_SEED': ('experiment', 'seed'),
            'LPM_RUNS': ('experiment', 'runs'),
            'LPM_OUTPUT_DIR': ('experiment', 'output_dir'),
            'LPM_LOG_LEVEL': ('logging', 'level'),
            'LPM_LOG_FILE': ('logging', 'file'),
        }

        for env_var, (section, key) in env_mappings.items():
            value = os.environ.get(env_var)
            if value is None:
                continue
            if value.lower() in ('true', 'yes'):
                value = True
            elif value.lower() in ('false', 'no'):
                value = False
            elif value.lstrip('-').isdigit():
                value = int(value)
            self.config.setdefault(section, {})[key] = value
            self.logger.debug(f"Loaded from env: {env_var} = {value}")

    def _merge_config(self, new_config: Dict[str, Any]):
        for section, values in new_config.items():
            if section in self.config and isinstance(values, dict):
                self.config[section].update(values)
            else:
                self.config[section] = values

    def get(self, section: str, key: str, default: Any = None) -> Any:
        try:
            return self.config.get(section, {}).get(key, default)
        except (KeyError, AttributeError):
            return default

    def set(self, section: str, key: str, value: Any):
        self.config.setdefault(section, {})[key] = value

    def get_section(self, section: str) -> Dict[str, Any]:
        return self.config.get(section, {})

    def save(self, filepath: str):
        """
        Save configuration to file.

        Raises:
            ConfigError: If file cannot be saved
        """
        try:
            path = Path(filepath).expanduser()
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, 'w') as f:
                yaml.safe_dump(self.config, f, default_flow_style=False, sort_keys=False)
            self.logger.info(f"Configuration saved to: {filepath}")
        except OSError as e:
            raise ConfigError(f"Error saving config file: {str(e)}", config_file=filepath)

    def dump(self) -> str:
        """The configuration as YAML text."""
        return yaml.safe_dump(self.config, default_flow_style=False, sort_keys=False)

    def to_dict(self) -> Dict[str, Any]:
        return copy.deepcopy(self.config)

    @classmethod
    def create_default_config(cls, filepath: str):
        """Write the built-in defaults to a configuration file."""
        config = cls(search_defaults=False)
        config.config = config._load_defaults()
        config.save(filepath)

