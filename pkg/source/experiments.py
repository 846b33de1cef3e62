#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Experiment orchestration: multitask (MTL), transfer and single-task (STL)
runs over repeated stratified splits, regularizer selection by sweep or
cross-validation, and the synthetic recovery experiment.

Within a run the LPM and the STL baseline consume identical splits; runs
draw their splits from substreams keyed by (run, labeled count, task) so a
table is fully determined by the configuration and its seed.
"""

import itertools
import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .config import Config
from .datasets import apply_split, ingest_csv, stratified_folds, stratified_split, zscore
from .em import FitOptions, FitTrace, fit
from .exceptions import DataError, ValidationError
from .logger import get_logger
from .model import Hyperparams, LpmParams, TaskDataset
from .predict import auc, fit_stl, predict_task, score_rows
from .sampler import GenConfig, SyntheticSample, generate
from .utils import substream, validate_fraction, validate_int_at_least, validate_nonnegative, validate_positive

MODES = ("mtl", "transfer", "stl", "synth")
SELECTIONS = ("sweep", "cv")
F0_POLICIES = ("min-task-dim", "explicit")

# substream keys
_SPLIT_STREAM = 1
_INIT_STREAM = 2
_FOLD_STREAM = 3
_SYNTH_STREAM = 4


@dataclass
class ExperimentConfig:
    """Typed description of one experiment, built from a Config plus CLI overrides."""
    mode: str = "mtl"
    datasets: List[str] = field(default_factory=list)
    label_column: str = "label"
    labeled_counts: List[int] = field(default_factory=lambda: [50, 100, 150])
    runs: int = 50
    test_fraction: float = 0.3
    normalize: bool = True
    seed: int = 0
    output_dir: str = "results"
    workers: int = 1
    selection: str = "sweep"
    source_index: int = 0
    source_labeled: Optional[int] = None
    pair_sweep: bool = False
    f0_policy: str = "min-task-dim"
    f0: Optional[int] = None
    eta: float = 1e-3
    alpha_grid: List[float] = field(default_factory=lambda: [0.1])
    vartheta_grid: List[float] = field(default_factory=lambda: [1.0])
    folds: int = 5
    tol: float = 1e-6
    max_iters: int = 500
    fix_latent: bool = True
    exact_cross_moment: bool = True
    synth: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValidationError(f"unknown mode {self.mode!r}; expected one of {', '.join(MODES)}", field="mode")
        if self.selection not in SELECTIONS:
            raise ValidationError(f"unknown selection {self.selection!r}", field="selection")
        if self.f0_policy not in F0_POLICIES:
            raise ValidationError(f"unknown f0 policy {self.f0_policy!r}", field="f0_policy")
        if self.f0_policy == "explicit":
            if self.f0 is None:
                raise ValidationError("f0_policy 'explicit' needs f0", field="f0")
            self.f0 = validate_int_at_least(self.f0, 1, "f0")
        self.runs = validate_int_at_least(self.runs, 1, "runs")
        self.workers = validate_int_at_least(self.workers, 1, "workers")
        self.folds = validate_int_at_least(self.folds, 2, "folds")
        self.test_fraction = validate_fraction(self.test_fraction, "test_fraction")
        self.eta = validate_positive(self.eta, "eta")
        if not self.alpha_grid or not self.vartheta_grid:
            raise ValidationError("regularizer grids must be non-empty", field="alpha_grid")
        self.alpha_grid = [validate_nonnegative(a, "alpha_grid", allow_inf=True) for a in self.alpha_grid]
        self.vartheta_grid = [validate_nonnegative(v, "vartheta_grid", allow_inf=True) for v in self.vartheta_grid]
        if self.mode != "synth" and not self.labeled_counts:
            raise ValidationError("labeled_counts must be non-empty", field="labeled_counts")
        self.labeled_counts = [validate_int_at_least(c, 0, "labeled_counts") for c in self.labeled_counts]
        if self.source_labeled is not None:
            self.source_labeled = validate_int_at_least(self.source_labeled, 0, "source_labeled")

    @classmethod
    def from_config(cls, config: Config, overrides: Optional[Dict[str, Any]] = None) -> "ExperimentConfig":
        """
        Collect the experiment, model, fit, cv and synth sections; overrides
        with a None value are ignored.
        """
        values: Dict[str, Any] = {}
        known = {f.name for f in fields(cls)}
        for section in ("experiment", "model", "fit"):
            for key, value in config.get_section(section).items():
                if key in known:
                    values[key] = value
        values["folds"] = config.get("cv", "folds", 5)
        values["synth"] = dict(config.get_section("synth"))
        for key, value in (overrides or {}).items():
            if value is not None:
                if key not in known:
                    raise ValidationError(f"unknown experiment setting {key!r}", field=key)
                values[key] = value
        return cls(**values)

    def fit_options(self, seed: int) -> FitOptions:
        return FitOptions(tol=self.tol, max_iters=self.max_iters, fix_latent=self.fix_latent,
                          seed=seed, exact_cross_moment=self.exact_cross_moment)

    def grid(self) -> List[Tuple[float, float]]:
        """Distinct (alpha, vartheta) pairs in ascending order."""
        return sorted(set(itertools.product(self.alpha_grid, self.vartheta_grid)))

    def latent_dim(self, tasks: Sequence[TaskDataset]) -> int:
        if self.f0_policy == "explicit":
            return self.f0
        return min(task.d for task in tasks)


@dataclass
class ResultRow:
    mode: str
    direction: str
    labeled_count: int
    alpha: float
    vartheta: float
    mean_auc: float
    std_auc: float
    stl_mean_auc: float
    stl_std_auc: float
    auc_improvement_vs_stl: float
    runs: int

    @property
    def improvement_points(self) -> float:
        return 100.0 * self.auc_improvement_vs_stl

    def to_row(self) -> List[Any]:
        return [getattr(self, name) for name in ResultTable.COLUMNS[:-1]] + [self.improvement_points]


@dataclass
class ResultTable:
    """Aggregated AUCs plus the per-fit traces and test scores kept for output."""
    rows: List[ResultRow] = field(default_factory=list)
    traces: Dict[str, FitTrace] = field(default_factory=dict)
    scores: Dict[str, List[List]] = field(default_factory=dict)

    COLUMNS = ("mode", "direction", "labeled_count", "alpha", "vartheta", "mean_auc", "std_auc",
               "stl_mean_auc", "stl_std_auc", "auc_improvement_vs_stl", "runs", "improvement_points")

    def extend(self, other: "ResultTable") -> None:
        self.rows.extend(other.rows)
        self.traces.update(other.traces)
        self.scores.update(other.scores)

    def to_rows(self) -> List[List[Any]]:
        return [row.to_row() for row in self.rows]

    def series(self) -> Dict[str, List[Tuple[int, float]]]:
        """
        Points (labeled_count, mean AUC) per method for plotting, using for each
        labeled count the row with the best mean AUC.
        """
        best: Dict[Tuple[str, str, int], ResultRow] = {}
        for row in self.rows:
            key = (row.mode, row.direction, row.labeled_count)
            if key not in best or _nan_greater(row.mean_auc, best[key].mean_auc):
                best[key] = row
        series: Dict[str, List[Tuple[int, float]]] = {}
        for (mode, direction, count), row in sorted(best.items()):
            series.setdefault(f"{mode.upper()} {direction}", []).append((count, row.mean_auc))
            if mode != "stl":
                series.setdefault(f"STL {direction}", []).append((count, row.stl_mean_auc))
        return series


def _nan_greater(a: float, b: float) -> bool:
    if math.isnan(b):
        return not math.isnan(a)
    return a > b


@dataclass
class RunOutcome:
    """Per-run AUCs for one grid point; NaN where a method could not run."""
    alpha: float
    vartheta: float
    lpm_auc: float
    stl_auc: float
    trace: Optional[FitTrace] = None
    scores: List[List] = field(default_factory=list)


def _mean_auc(values: Sequence[float]) -> float:
    values = [v for v in values if not math.isnan(v)]
    return float(np.mean(values)) if values else float("nan")


def _summary(values: Sequence[float]) -> Tuple[float, float]:
    finite = np.array([v for v in values if not math.isnan(v)])
    if finite.size == 0:
        return float("nan"), float("nan")
    std = float(np.std(finite, ddof=1)) if finite.size > 1 else 0.0
    return float(np.mean(finite)), std


def fit_lpm(train: Sequence[TaskDataset], hyper: Hyperparams, options: FitOptions) -> Tuple[LpmParams, FitTrace]:
    return fit(list(train), hyper, init=None, options=options)


def evaluate(params: LpmParams, hyper: Hyperparams, task_index: int, test: TaskDataset) -> Tuple[float, List[List]]:
    """Test AUC of one task and its (id, score, label) rows."""
    prob, _, _ = predict_task(params, hyper, task_index, test.x)
    return auc(prob, test.labels), score_rows(prob, test.labels)


def _stl_auc(train: TaskDataset, test: TaskDataset, hyper: Hyperparams, options: FitOptions) -> float:
    if train.num_labeled == 0:
        get_logger().warning(f"STL on {train.name or 'task'} has no labels; recording NaN")
        return float("nan")
    params, _ = fit_stl(train, hyper, options=options)
    return evaluate(params, hyper, 0, test)[0]


def score_grid_point(train: Sequence[TaskDataset], test: Sequence[TaskDataset], eval_tasks: Sequence[int],
                     hyper: Hyperparams, options: FitOptions, joint: bool, with_stl: bool) -> RunOutcome:
    """
    Fit and evaluate one grid point on materialized splits.

    joint fits all training tasks together and evaluates eval_tasks; otherwise
    only the per-task STL fits are made.
    """
    lpm_aucs, scores, trace = [], [], None
    if joint:
        params, trace = fit_lpm(train, hyper, options)
        for m in eval_tasks:
            value, rows = evaluate(params, hyper, m, test[m])
            lpm_aucs.append(value)
            scores.extend([[train[m].name or f"task{m}"] + row for row in rows])
    stl_aucs = [_stl_auc(train[m], test[m], hyper, options) for m in eval_tasks] if with_stl else []
    return RunOutcome(alpha=hyper.alpha, vartheta=hyper.vartheta,
                      lpm_auc=_mean_auc(lpm_aucs) if joint else float("nan"),
                      stl_auc=_mean_auc(stl_aucs) if with_stl else float("nan"),
                      trace=trace, scores=scores)


def _hyper(config: ExperimentConfig, alpha: float, vartheta: float, f0: int) -> Hyperparams:
    return Hyperparams.from_regularizers(alpha, vartheta, config.eta, f0)


def cross_validate(config: ExperimentConfig, train: Sequence[TaskDataset], eval_tasks: Sequence[int],
                   joint: bool = True, seed_key: Tuple[int, ...] = ()) -> Tuple[float, float]:
    """
    Choose (alpha, vartheta) by k-fold cross-validation over the labeled
    training examples of the evaluated tasks.

    Folds are stratified per task. A validation fold's examples leave the
    training set entirely; a task whose fold holds a single class is not
    scored in that fold, and a fold with no scorable task is skipped with a
    warning. Ties go to the larger (alpha, vartheta).

    Raises:
        DataError: If every fold was skipped
    """
    logger = get_logger()
    grid = config.grid()
    if len(grid) == 1:
        return grid[0]
    f0 = config.latent_dim(train)

    assignments = {}
    for m in eval_tasks:
        labeled = train[m].labeled_index
        rng = substream(config.seed, _FOLD_STREAM, *seed_key, m)
        assignments[m] = (labeled, stratified_folds(train[m].labels[labeled], config.folds, rng))

    fold_sets = []
    for k in range(config.folds):
        fold_train = list(train)
        validation = {}
        for m, (labeled, fold_of) in assignments.items():
            held_out = labeled[fold_of == k]
            if len(set(train[m].labels[held_out].tolist())) < 2:
                continue
            keep = np.setdiff1d(np.arange(train[m].n), held_out)
            fold_train[m] = train[m].subset(keep)
            validation[m] = train[m].subset(held_out)
        if not validation:
            logger.warning(f"cross-validation fold {k} has no task with both classes; skipped")
            continue
        fold_sets.append((fold_train, validation))
    if not fold_sets:
        raise DataError("every cross-validation fold was skipped (single-class folds)", column="label")

    best, best_score = None, -math.inf
    for alpha, vartheta in grid:
        hyper = _hyper(config, alpha, vartheta, f0)
        fold_scores = []
        for fold_train, validation in fold_sets:
            options = config.fit_options(config.seed)
            if joint:
                params, _ = fit_lpm(fold_train, hyper, options)
                values = [evaluate(params, hyper, m, val)[0] for m, val in validation.items()]
            else:
                values = []
                for m, val in validation.items():
                    if fold_train[m].num_labeled == 0:
                        continue
                    params, _ = fit_stl(fold_train[m], hyper, options=options)
                    values.append(evaluate(params, hyper, 0, val)[0])
            if values:
                fold_scores.append(float(np.mean(values)))
        if not fold_scores:
            continue
        score = float(np.mean(fold_scores))
        logger.debug(f"CV alpha={alpha:g} vartheta={vartheta:g}: mean AUC {score:.6f}")
        if score >= best_score:
            best, best_score = (alpha, vartheta), score
    if best is None:
        raise DataError("no grid point could be scored by cross-validation", column="label")
    logger.info(f"CV selected alpha={best[0]:g}, vartheta={best[1]:g} (mean AUC {best_score:.4f})")
    return best


@dataclass
class TaskGroup:
    """Tasks fitted together in one experiment and the ones evaluated."""
    indices: List[int]
    eval_tasks: List[int]
    direction: str
    source: Optional[int] = None


def task_groups(config: ExperimentConfig, datasets: Sequence[TaskDataset]) -> List[TaskGroup]:
    """
    Task groupings for the mode: all tasks at once, or every pair under
    pair_sweep (unordered for MTL, ordered source -> target for transfer).
    """
    names = [ds.name or f"task{m}" for m, ds in enumerate(datasets)]
    count = len(datasets)
    if config.mode == "transfer":
        if config.pair_sweep:
            pairs = list(itertools.permutations(range(count), 2))
        else:
            if count != 2:
                raise ValidationError(f"transfer needs exactly 2 tasks, got {count}", field="datasets")
            if config.source_index not in (0, 1):
                raise ValidationError("source_index must be 0 or 1", field="source_index")
            pairs = [(config.source_index, 1 - config.source_index)]
        return [TaskGroup(indices=[s, t], eval_tasks=[1], direction=f"{names[s]}->{names[t]}", source=0)
                for s, t in pairs]
    if config.mode == "mtl":
        if count < 2:
            raise ValidationError(f"multitask learning needs at least 2 tasks, got {count}", field="datasets")
        combos = itertools.combinations(range(count), 2) if config.pair_sweep else [tuple(range(count))]
        return [TaskGroup(indices=list(c), eval_tasks=list(range(len(c))),
                          direction="+".join(names[m] for m in c)) for c in combos]
    if count < 1:
        raise ValidationError("at least one task is required", field="datasets")
    return [TaskGroup(indices=list(range(count)), eval_tasks=list(range(count)), direction="+".join(names))]


def split_run(config: ExperimentConfig, tasks: Sequence[TaskDataset], group: TaskGroup,
               labeled_count: int, run: int) -> Tuple[List[TaskDataset], List[TaskDataset]]:
    train, test = [], []
    for position, m in enumerate(group.indices):
        rng = substream(config.seed, _SPLIT_STREAM, run, labeled_count, m)
        task = tasks[m]
        if position == group.source:
            available = task.num_labeled
            count = available if config.source_labeled is None else min(config.source_labeled, available)
            split = stratified_split(task, count, 0.0, rng)
        else:
            split = stratified_split(task, labeled_count, config.test_fraction, rng)
        task_train, task_test = apply_split(task, split, config.normalize)
        train.append(task_train)
        test.append(task_test)
    return train, test


def _init_seed(config: ExperimentConfig, run: int, labeled_count: int) -> int:
    return int(substream(config.seed, _INIT_STREAM, run, labeled_count).integers(2 ** 31))


def _run_once(config: ExperimentConfig, tasks: Sequence[TaskDataset], group: TaskGroup,
              labeled_count: int, run: int) -> List[RunOutcome]:
    """All grid points (sweep) or the CV-selected one for a single run."""
    train, test = split_run(config, tasks, group, labeled_count, run)
    f0 = config.latent_dim(train)
    options = config.fit_options(_init_seed(config, run, labeled_count))
    joint = config.mode != "stl"
    if config.selection == "cv":
        grid = [cross_validate(config, train, group.eval_tasks, joint=joint, seed_key=(run, labeled_count))]
    else:
        grid = config.grid()
    outcomes = [score_grid_point(train, test, group.eval_tasks, _hyper(config, alpha, vartheta, f0),
                                 options, joint=joint, with_stl=True)
                for alpha, vartheta in grid]
    get_logger().info(f"{config.mode} {group.direction} labeled={labeled_count} run {run + 1}/{config.runs} done")
    return outcomes


def _map_runs(config: ExperimentConfig, job) -> List[Any]:
    if config.workers == 1:
        return [job(run) for run in range(config.runs)]
    with ThreadPoolExecutor(max_workers=config.workers) as executor:
        return list(executor.map(job, range(config.runs)))


def _modal_choice(outcomes: Sequence[RunOutcome]) -> Tuple[float, float]:
    counts = Counter((o.alpha, o.vartheta) for o in outcomes)
    return max(counts, key=lambda pair: (counts[pair], pair))


def _aggregate(config: ExperimentConfig, group: TaskGroup, labeled_count: int,
               per_run: List[List[RunOutcome]], table: ResultTable) -> None:
    columns = list(zip(*per_run)) if config.selection == "sweep" else [[outs[0] for outs in per_run]]
    for outcomes in columns:
        alpha, vartheta = _modal_choice(outcomes)
        stl_mean, stl_std = _summary([o.stl_auc for o in outcomes])
        if config.mode == "stl":
            mean, std = stl_mean, stl_std
        else:
            mean, std = _summary([o.lpm_auc for o in outcomes])
        row = ResultRow(mode=config.mode, direction=group.direction, labeled_count=labeled_count,
                        alpha=alpha, vartheta=vartheta, mean_auc=mean, std_auc=std,
                        stl_mean_auc=stl_mean, stl_std_auc=stl_std,
                        auc_improvement_vs_stl=mean - stl_mean, runs=len(outcomes))
        table.rows.append(row)
        first = outcomes[0]
        label = f"{config.mode}_{group.direction}_L{labeled_count}_a{alpha:g}_v{vartheta:g}"
        if first.trace is not None:
            table.traces[label] = first.trace
        if first.scores:
            table.scores[label] = first.scores


def run_experiment(config: ExperimentConfig, datasets: Optional[Sequence[TaskDataset]] = None) -> ResultTable:
    """
    Run the MTL, transfer or STL protocol for every task group and labeled count.

    Args:
        config: Experiment description
        datasets: Already loaded tasks (read from config.datasets otherwise)
    """
    if config.mode == "synth":
        return run_synth(config)[0]
    if datasets is None:
        datasets = load_datasets(config)
    table = ResultTable()
    for group in task_groups(config, datasets):
        for labeled_count in config.labeled_counts:
            per_run = _map_runs(config, lambda run: _run_once(config, datasets, group, labeled_count, run))
            _aggregate(config, group, labeled_count, per_run, table)
    return table


def _with_mode(config: ExperimentConfig, mode: str) -> ExperimentConfig:
    if config.mode == mode:
        return config
    values = {f.name: getattr(config, f.name) for f in fields(config)}
    values["mode"] = mode
    return ExperimentConfig(**values)


def run_mtl(config: ExperimentConfig, datasets: Optional[Sequence[TaskDataset]] = None) -> ResultTable:
    """Joint LPM over all tasks (or every task pair) against per-task STL."""
    return run_experiment(_with_mode(config, "mtl"), datasets)


def run_transfer(config: ExperimentConfig, datasets: Optional[Sequence[TaskDataset]] = None) -> ResultTable:
    """
    Source task fully labeled (up to source_labeled), target with the swept
    labeled count; AUC on the target test split only, STL on target labels only.
    """
    return run_experiment(_with_mode(config, "transfer"), datasets)


def run_stl(config: ExperimentConfig, datasets: Optional[Sequence[TaskDataset]] = None) -> ResultTable:
    """Per-task single-task baseline alone."""
    return run_experiment(_with_mode(config, "stl"), datasets)


def load_datasets(config: ExperimentConfig) -> List[TaskDataset]:
    if not config.datasets:
        raise ValidationError("no dataset paths given", field="datasets")
    return [ingest_csv(path, config.label_column, normalize=False) for path in config.datasets]


def gen_config(config: ExperimentConfig, seed: int) -> GenConfig:
    """GenConfig from the synth settings; gamma and lam are the prior rates."""
    synth = {**Config.DEFAULTS["synth"], **config.synth}
    hyper = Hyperparams.from_rates(synth["gamma"], synth["lam"], config.eta, synth["f0"])
    return GenConfig(hyper=hyper, task_dims=list(synth["task_dims"]), n_per_task=list(synth["n_per_task"]),
                     labeled_fraction=list(synth["labeled_fraction"]), seed=seed,
                     w_nonzeros=synth["w_nonzeros"], transform_density=synth["transform_density"],
                     bias=synth["bias"])


def synthetic_split(sample: SyntheticSample, test_fraction: float, seed: int,
                    normalize: bool = False) -> Tuple[List[TaskDataset], List[TaskDataset]]:
    """
    Held-out split of synthetic tasks: a stratified test set carries the true
    labels, the remaining examples keep the sampled partial labeling.
    """
    train, test = [], []
    for m, (task, hidden) in enumerate(zip(sample.datasets, sample.hidden)):
        full = task.with_labels(hidden.y)
        split = stratified_split(full, 0, test_fraction, substream(seed, _SPLIT_STREAM, m))
        keep = split.train
        task_train = task.subset(keep)
        task_test = full.subset(split.test)
        if normalize:
            x_train, x_test = zscore(task_train.x, task_test.x)
            task_train = TaskDataset(x=x_train, labels=task_train.labels, name=task.name)
            task_test = TaskDataset(x=x_test, labels=task_test.labels, name=task.name)
        train.append(task_train)
        test.append(task_test)
    return train, test


def run_synth(config: ExperimentConfig) -> Tuple[ResultTable, SyntheticSample]:
    """
    Synthetic recovery: draw a known sparse model per run, fit MTL and STL on
    the training part and compare held-out AUC. The first run's sample is
    returned for writing.
    """
    test_fraction = {**Config.DEFAULTS["synth"], **config.synth}["test_fraction"]
    first_sample: List[SyntheticSample] = []

    def job(run: int) -> List[RunOutcome]:
        run_seed = int(substream(config.seed, _SYNTH_STREAM, run).integers(2 ** 31))
        generation = gen_config(config, run_seed)
        sample = generate(generation)
        if run == 0:
            first_sample.append(sample)
        train, test = synthetic_split(sample, test_fraction, run_seed, config.normalize)
        f0 = generation.hyper.f0
        eval_tasks = list(range(len(train)))
        options = config.fit_options(run_seed)
        if config.selection == "cv":
            grid = [cross_validate(config, train, eval_tasks, seed_key=(run,))]
        else:
            grid = config.grid()
        return [score_grid_point(train, test, eval_tasks, _hyper(config, alpha, vartheta, f0),
                                 options, joint=True, with_stl=True)
                for alpha, vartheta in grid]

    per_run = _map_runs(config, job)
    table = ResultTable()
    group = TaskGroup(indices=[], eval_tasks=[], direction="synthetic")
    labeled = sum(task.num_labeled for task in first_sample[0].datasets)
    _aggregate(config, group, labeled, per_run, table)
    return table, first_sample[0]
