#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Command-line interface for latentprobit using argparse.

Exit codes: 0 success, 1 usage, configuration or validation error,
2 data or parse error, 3 numerical failure.
"""

import argparse
import dataclasses
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from .bound import BoundConfig, verify_error_bound
from .config import Config
from .datasets import write_task_csv, zscore
from .em import FitTrace, fit
from .exceptions import ConfigError, LPMException, ValidationError
from .experiments import (ExperimentConfig, ResultTable, cross_validate, load_datasets, run_experiment,
                          run_synth, split_run, task_groups)
from .formatters import emit_bound_outputs, emit_outputs, get_formatter, write_csv
from .logger import setup_logger
from .model import Hyperparams, TaskDataset, write_params
from .utils import ensure_directory

EXIT_OK = 0
EXIT_USAGE = 1


class UsageArgumentParser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors exit with status 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _float_list(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _int_list(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


class LatentProbitCLI:
    """Command-line front end for fitting, experiments and the bound check."""

    EXPERIMENT_COMMANDS = ('mtl', 'transfer', 'stl', 'synth')

    def __init__(self):
        self.config: Optional[Config] = None
        self.logger: Optional[logging.Logger] = None

    def _setup_logging(self, args):
        """Setup logging based on arguments and config."""
        log_level = args.log_level or self.config.get('logging', 'level', 'WARNING')
        log_file = args.log_file or self.config.get('logging', 'file')
        colored = not args.no_color and self.config.get('logging', 'colored', True)
        level = getattr(logging, str(log_level).upper(), logging.WARNING)
        self.logger = setup_logger(level=level, log_file=log_file, colored=colored)

    def _overrides(self, args) -> Dict[str, Any]:
        """CLI flags mapped onto ExperimentConfig fields; unset flags are None."""
        f0 = getattr(args, 'f0', None)
        return {
            'datasets': getattr(args, 'datasets', None) or None,
            'seed': args.seed,
            'output_dir': args.out,
            'runs': getattr(args, 'runs', None),
            'labeled_counts': getattr(args, 'labeled', None),
            'alpha_grid': getattr(args, 'alpha', None),
            'vartheta_grid': getattr(args, 'vartheta', None),
            'f0': f0,
            'f0_policy': 'explicit' if f0 is not None else None,
            'eta': getattr(args, 'eta', None),
            'normalize': getattr(args, 'normalize', None),
            'label_column': getattr(args, 'label_column', None),
            'selection': getattr(args, 'selection', None),
            'folds': getattr(args, 'folds', None),
            'workers': getattr(args, 'workers', None),
            'pair_sweep': True if getattr(args, 'pair_sweep', False) else None,
            'source_index': getattr(args, 'source_index', None),
            'source_labeled': getattr(args, 'source_labeled', None),
        }

    def _experiment_config(self, args, mode: str) -> ExperimentConfig:
        overrides = self._overrides(args)
        overrides['mode'] = mode
        return ExperimentConfig.from_config(self.config, overrides)

    def _print_table(self, table: ResultTable, args):
        formatter = get_formatter('console', use_color=not args.no_color and sys.stdout.isatty())
        print(formatter.format(ResultTable.COLUMNS, table.to_rows()))

    def _emit(self, table: ResultTable, out_dir: str):
        return emit_outputs(table, out_dir,
                            traces=self.config.get('output', 'traces', True),
                            scores=self.config.get('output', 'scores', False),
                            plot=self.config.get('output', 'plot', True))

    def run_experiment(self, args) -> int:
        """mtl, transfer and stl subcommands."""
        experiment = self._experiment_config(args, args.command)
        ensure_directory(experiment.output_dir)
        table = run_experiment(experiment)
        self._emit(table, experiment.output_dir)
        self._print_table(table, args)
        return EXIT_OK

    def run_synth(self, args) -> int:
        """Synthetic recovery: writes the sampled tasks and parameters alongside the results."""
        experiment = self._experiment_config(args, 'synth')
        out = ensure_directory(experiment.output_dir)
        table, sample = run_synth(experiment)
        self._emit(table, out)
        write_params(sample.params, out / 'true_params.json')
        for m, task in enumerate(sample.datasets):
            write_task_csv(task, out / f"synthetic_task{m}.csv", experiment.label_column)
        self._print_table(table, args)
        return EXIT_OK

    def run_cv(self, args) -> int:
        """Cross-validate (alpha, vartheta) on the first run's split and print the choice."""
        experiment = self._experiment_config(args, args.mode)
        datasets = load_datasets(experiment)
        labeled_count = experiment.labeled_counts[0]
        rows = []
        for group in task_groups(experiment, datasets):
            train, _ = split_run(experiment, datasets, group, labeled_count, 0)
            alpha, vartheta = cross_validate(experiment, train, group.eval_tasks,
                                             joint=experiment.mode != 'stl', seed_key=(0, labeled_count))
            rows.append([experiment.mode, group.direction, labeled_count, alpha, vartheta])
        header = ['mode', 'direction', 'labeled_count', 'alpha', 'vartheta']
        out = ensure_directory(experiment.output_dir)
        write_csv(out / 'cv_selection.csv', header, rows)
        print(get_formatter('console', use_color=False).format(header, rows))
        return EXIT_OK

    def run_fit(self, args) -> int:
        """Fit one LPM on the given task CSVs and write parameters and trace."""
        experiment = self._experiment_config(args, 'mtl')
        datasets = load_datasets(experiment)
        out = ensure_directory(experiment.output_dir)
        if experiment.normalize:
            datasets = [TaskDataset(x=zscore(task.x)[0], labels=task.labels, name=task.name) for task in datasets]
        f0 = experiment.latent_dim(datasets)
        hyper = Hyperparams.from_regularizers(experiment.alpha_grid[0], experiment.vartheta_grid[0],
                                              experiment.eta, f0)
        params, trace = fit(datasets, hyper, options=experiment.fit_options(experiment.seed))
        write_params(params, out / 'params.json')
        write_csv(out / 'trace.csv', FitTrace.header(), trace.to_rows())
        summary = [[trace.iterations, trace.converged, trace.log_posterior[-1],
                    trace.sparsity.get('transforms_zero_fraction', 0.0), trace.sparsity.get('w_zero_fraction', 0.0)]]
        print(get_formatter('console', use_color=False).format(
            ['iterations', 'converged', 'log_posterior', 'transforms_zero_fraction', 'w_zero_fraction'], summary))
        return EXIT_OK

    def run_bound(self, args) -> int:
        """Monte-Carlo check of the lasso error bound."""
        section = dict(self.config.get_section('bound'))
        for key in ('f0', 'a', 'eta', 'trials'):
            value = getattr(args, key, None)
            if value is not None:
                section[key] = value
        if args.seed is not None:
            section['seed'] = args.seed
        trials = int(section.pop('trials', 200))
        unknown = set(section) - {f.name for f in dataclasses.fields(BoundConfig)}
        if unknown:
            raise ConfigError(f"unknown bound settings: {', '.join(sorted(unknown))}")
        bound_config = BoundConfig(**section)
        out_dir = ensure_directory(args.out or self.config.get('experiment', 'output_dir', 'results'))
        workers = args.workers or self.config.get('experiment', 'workers', 1)
        reports, summary = verify_error_bound(bound_config, trials, workers=workers)
        emit_bound_outputs(reports, summary, out_dir)
        print(summary.summary_line())
        return EXIT_OK

    def run_config(self, args) -> int:
        """Handle configuration commands."""
        if args.config_command == 'init':
            config_path = args.path or str(Path.home() / '.latentprobit.yaml')
            Config.create_default_config(config_path)
            print(f"Configuration file created at: {config_path}")
        elif args.config_command == 'show':
            print(self.config.dump(), end='')
        else:
            raise ConfigError("expected 'init' or 'show'")
        return EXIT_OK

    @staticmethod
    def _common_parser() -> argparse.ArgumentParser:
        common = argparse.ArgumentParser(add_help=False)
        common.add_argument('--config', help='Configuration file path')
        common.add_argument('--seed', type=int, help='Random seed')
        common.add_argument('--out', help='Output directory')
        common.add_argument('--log-level', choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'], help='Log level')
        common.add_argument('--log-file', help='Log file path')
        common.add_argument('--no-color', action='store_true', help='Disable colored output')
        common.add_argument('-v', '--verbose', action='store_true', help='Show tracebacks on failure')
        return common

    @staticmethod
    def _model_parser() -> argparse.ArgumentParser:
        model = argparse.ArgumentParser(add_help=False)
        model.add_argument('datasets', nargs='*', help='Task CSV files')
        model.add_argument('--label-column', help='Name of the label column')
        model.add_argument('--alpha', type=_float_list, help='Transform regularizer(s), comma-separated')
        model.add_argument('--vartheta', type=_float_list, help='Classifier regularizer(s), comma-separated')
        model.add_argument('--f0', type=int, help='Latent dimensionality (default: smallest task dimension)')
        model.add_argument('--eta', type=float, help='Observation noise variance')
        model.add_argument('--normalize', dest='normalize', action='store_true', default=None,
                           help='z-score features with training statistics')
        model.add_argument('--no-normalize', dest='normalize', action='store_false',
                           help='Use features as read')
        return model

    @staticmethod
    def _protocol_parser() -> argparse.ArgumentParser:
        protocol = argparse.ArgumentParser(add_help=False)
        protocol.add_argument('--runs', type=int, help='Independent splits per setting')
        protocol.add_argument('--labeled', type=_int_list, help='Labeled counts per task, comma-separated')
        protocol.add_argument('--selection', choices=['sweep', 'cv'], help='Report every grid point or select by CV')
        protocol.add_argument('--folds', type=int, help='Cross-validation folds')
        protocol.add_argument('--workers', type=int, help='Parallel runs')
        protocol.add_argument('--pair-sweep', action='store_true', help='Repeat over every task pair')
        protocol.add_argument('--source-index', type=int, help='Source task for transfer (0 or 1)')
        protocol.add_argument('--source-labeled', type=int, help='Cap on transferred source labels')
        return protocol

    @classmethod
    def create_parser(cls) -> argparse.ArgumentParser:
        """Create argument parser."""
        parser = UsageArgumentParser(
            prog='latentprobit',
            description='Latent probit model for multitask and transfer classification',
            formatter_class=argparse.RawDescriptionHelpFormatter,
            epilog="""
Examples:
  # Multitask experiment over two task files
  latentprobit mtl original.csv diagnostic.csv --labeled 50,100,150 --runs 25

  # Transfer from the second file to the first
  latentprobit transfer original.csv diagnostic.csv --source-index 1

  # Regularizer sweep
  latentprobit mtl a.csv b.csv --alpha 0,0.05,0.1,0.5,10 --vartheta 1 --labeled 50

  # Synthetic recovery and the error-bound check
  latentprobit synth --runs 20
  latentprobit verify-bound --trials 200

  # Configuration
  latentprobit config init
            """
        )
        common = cls._common_parser()
        model = cls._model_parser()
        protocol = cls._protocol_parser()

        subparsers = parser.add_subparsers(dest='command', help='Available commands', parser_class=UsageArgumentParser)

        subparsers.add_parser('fit', parents=[common, model], help='Fit one model and write its parameters')
        subparsers.add_parser('mtl', parents=[common, model, protocol], help='Multitask experiment')
        subparsers.add_parser('transfer', parents=[common, model, protocol], help='Transfer experiment')
        subparsers.add_parser('stl', parents=[common, model, protocol], help='Single-task baseline only')
        subparsers.add_parser('synth', parents=[common, model, protocol], help='Synthetic recovery experiment')

        cv_parser = subparsers.add_parser('cv', parents=[common, model, protocol],
                                          help='Select (alpha, vartheta) by cross-validation')
        cv_parser.add_argument('--mode', choices=['mtl', 'transfer', 'stl'], default='mtl',
                               help='Protocol the selection is made for')

        bound_parser = subparsers.add_parser('verify-bound', parents=[common], help='Monte-Carlo check of the error bound')
        bound_parser.add_argument('--trials', type=int, help='Number of trials')
        bound_parser.add_argument('--a', type=float, help='Confidence constant a (>= sqrt(8))')
        bound_parser.add_argument('--f0', type=int, help='Latent dimensionality')
        bound_parser.add_argument('--eta', type=float, help='Observation noise variance')
        bound_parser.add_argument('--workers', type=int, help='Parallel trials')

        config_parser = subparsers.add_parser('config', parents=[common], help='Manage configuration')
        config_subparsers = config_parser.add_subparsers(dest='config_command', help='Config commands',
                                                         parser_class=UsageArgumentParser)
        config_subparsers.add_parser('init', help='Create default config file').add_argument('-p', '--path',
                                                                                            help='Config file path')
        config_subparsers.add_parser('show', help='Show current configuration')

        return parser

    def run(self, args: Optional[List[str]] = None) -> int:
        """
        Run the CLI.

        Args:
            args: Command-line arguments (defaults to sys.argv)

        Returns:
            Exit code
        """
        parser = self.create_parser()
        parsed_args = parser.parse_args(args)

        if not parsed_args.command:
            parser.print_help()
            return EXIT_OK
        if parsed_args.command == 'config' and not parsed_args.config_command:
            parser.error("config needs a subcommand: init or show")

        try:
            self.config = Config(parsed_args.config)
            self._setup_logging(parsed_args)
            if parsed_args.command in self.EXPERIMENT_COMMANDS[:3]:
                return self.run_experiment(parsed_args)
            handlers = {
                'synth': self.run_synth,
                'cv': self.run_cv,
                'fit': self.run_fit,
                'verify-bound': self.run_bound,
                'config': self.run_config,
            }
            return handlers[parsed_args.command](parsed_args)
        except LPMException as e:
            self._log_error(f"{e}", parsed_args)
            return e.exit_code
        except OSError as e:
            error = ValidationError(f"cannot write output: {e}", field="out")
            self._log_error(f"{error}", parsed_args)
            return error.exit_code
        except KeyboardInterrupt:
            self._log_error("Aborted", parsed_args)
            return EXIT_USAGE

    def _log_error(self, message: str, args):
        logger = self.logger or setup_logger(level=logging.ERROR, colored=not args.no_color)
        logger.error(message)
        if args.verbose:
            import traceback
            traceback.print_exc()


def main():
    """Main entry point for CLI."""
    cli = LatentProbitCLI()
    sys.exit(cli.run())


if __name__ == '__main__':
    main()
