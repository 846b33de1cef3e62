#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Dataset ingestion and split helpers.

A task CSV has a header row, one label column holding +1 / -1 (or 1 / -1)
with empty cells for unlabeled examples, and numeric feature columns.
Examples become columns of the d_m x n_m feature matrix.
"""

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .exceptions import DataError, ValidationError
from .logger import get_logger
from .model import TaskDataset
from .utils import validate_fraction, validate_int_at_least

LABEL_VALUES = {"+1": 1, "1": 1, "1.0": 1, "+1.0": 1, "-1": -1, "-1.0": -1, "": 0}


def _parse_label(cell: str, row: int, column: str) -> int:
    value = cell.strip()
    if value not in LABEL_VALUES:
        raise DataError(f"unknown label value {value!r}", row=row, column=column)
    return LABEL_VALUES[value]


def ingest_csv(path: Union[str, Path], label_column: str = "label", normalize: bool = False,
               name: Optional[str] = None) -> TaskDataset:
    """
    Read one task from a CSV file.

    Args:
        path: CSV file with a header row
        label_column: Name of the label column
        normalize: z-score every feature over all rows of the file
        name: Task name (defaults to the file stem)

    Raises:
        DataError: On a missing file, missing label column, ragged row,
            non-numeric feature cell or unknown label value
    """
    path = Path(path).expanduser()
    if not path.is_file():
        raise DataError(f"dataset not found: {path}")
    logger = get_logger()

    with open(path, "r", newline="") as f:
        reader = csv.reader(f)
        try:
            header = [cell.strip() for cell in next(reader)]
        except StopIteration:
            raise DataError(f"{path.name} is empty", row=1)
        if label_column not in header:
            raise DataError(f"label column {label_column!r} not in header", row=1, column=label_column)
        label_pos = header.index(label_column)
        feature_names = [h for i, h in enumerate(header) if i != label_pos]
        if not feature_names:
            raise DataError(f"{path.name} has no feature columns", row=1)

        columns, labels = [], []
        for row_number, cells in enumerate(reader, start=2):
            if not cells or all(not c.strip() for c in cells):
                continue
            if len(cells) != len(header):
                raise DataError(f"expected {len(header)} cells, got {len(cells)}", row=row_number)
            labels.append(_parse_label(cells[label_pos], row_number, label_column))
            values = []
            for i, cell in enumerate(cells):
                if i == label_pos:
                    continue
                try:
                    value = float(cell)
                except ValueError:
                    raise DataError(f"non-numeric feature value {cell!r}", row=row_number, column=header[i])
                if not np.isfinite(value):
                    raise DataError(f"non-finite feature value {cell!r}", row=row_number, column=header[i])
                values.append(value)
            columns.append(values)

    if not columns:
        raise DataError(f"{path.name} has no data rows", row=2)
    x = np.asarray(columns, dtype=np.float64).T
    if normalize:
        x = zscore(x)[0]
    dataset = TaskDataset(x=x, labels=np.asarray(labels, dtype=np.int8), name=name or path.stem)
    logger.info(f"Loaded {dataset.name}: d={dataset.d}, n={dataset.n}, labeled={dataset.num_labeled}")
    return dataset


def write_task_csv(task: TaskDataset, path: Union[str, Path], label_column: str = "label") -> Path:
    """Write a task in the layout ingest_csv reads; unlabeled rows get an empty label cell."""
    path = Path(path)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow([label_column] + [f"x{k}" for k in range(task.d)])
        for i in range(task.n):
            label = {1: "+1", -1: "-1", 0: ""}[int(task.labels[i])]
            writer.writerow([label] + [repr(float(v)) for v in task.x[:, i]])
    return path


def zscore(train: np.ndarray, *others: np.ndarray) -> Tuple[np.ndarray, ...]:
    """
    Standardize rows (features) with the mean and standard deviation of
    `train`, applying the same map to `others`. Constant features are only
    centred.
    """
    mean = train.mean(axis=1, keepdims=True)
    std = train.std(axis=1, keepdims=True)
    std = np.where(std > 0.0, std, 1.0)
    return tuple((block - mean) / std for block in (train,) + others)


def _stratified_take(index_by_class: Sequence[np.ndarray], count: int) -> List[int]:
    # split count across classes proportionally, largest remainders first
    sizes = np.array([len(idx) for idx in index_by_class], dtype=float)
    quota = count * sizes / sizes.sum()
    take = np.floor(quota).astype(int)
    for c in np.argsort(-(quota - take), kind="stable")[:count - int(take.sum())]:
        take[c] += 1
    # keep both classes represented when that is possible
    if count >= len(index_by_class):
        for c in range(len(index_by_class)):
            if take[c] == 0 and sizes[c] > 0:
                donor = int(np.argmax(take))
                take[donor] -= 1
                take[c] += 1
    return [int(i) for c, idx in enumerate(index_by_class) for i in idx[:take[c]]]


def _shuffled_classes(index: np.ndarray, labels: np.ndarray, rng: np.random.Generator) -> List[np.ndarray]:
    return [rng.permutation(index[labels[index] == cls]) for cls in (1, -1)]


@dataclass
class TaskSplit:
    """
    Index sets of one task for one run. Every index refers to a column of
    the ingested dataset; the three sets are disjoint.
    """
    labeled: np.ndarray
    unlabeled: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        sets = [set(self.labeled.tolist()), set(self.unlabeled.tolist()), set(self.test.tolist())]
        if sets[0] & sets[1] or sets[0] & sets[2] or sets[1] & sets[2]:
            raise ValidationError("split index sets overlap", field="split")

    @property
    def train(self) -> np.ndarray:
        return np.sort(np.concatenate([self.labeled, self.unlabeled]))


def stratified_split(task: TaskDataset, labeled_count: int, test_fraction: float,
                     rng: np.random.Generator) -> TaskSplit:
    """
    Split a task into labeled-train, unlabeled-train and test.

    Only examples carrying a label can be tested. The labeled ones are split
    train/test stratified by class; `labeled_count` stratified training
    examples keep their labels, the remaining training examples (and every
    example the file left unlabeled) join the unlabeled pool.

    Raises:
        DataError: If the task has too few labeled training examples
    """
    labeled_count = validate_int_at_least(labeled_count, 0, "labeled_count")
    test_fraction = validate_fraction(test_fraction, "test_fraction")
    labeled_index = task.labeled_index
    classes = _shuffled_classes(labeled_index, task.labels, rng)

    test, train_by_class = [], []
    for idx in classes:
        n_test = int(round(test_fraction * len(idx)))
        test.extend(int(i) for i in idx[:n_test])
        train_by_class.append(idx[n_test:])

    available = sum(len(idx) for idx in train_by_class)
    if labeled_count > available:
        raise DataError(f"task {task.name!r} has {available} labeled training examples, "
                        f"{labeled_count} requested", column="label")
    labeled = _stratified_take(train_by_class, labeled_count) if labeled_count else []
    chosen = set(labeled)
    unlabeled = [int(i) for idx in train_by_class for i in idx if int(i) not in chosen]
    unlabeled.extend(int(i) for i in task.unlabeled_index)

    return TaskSplit(labeled=np.sort(np.asarray(labeled, dtype=int)),
                     unlabeled=np.sort(np.asarray(unlabeled, dtype=int)),
                     test=np.sort(np.asarray(test, dtype=int)))


def apply_split(task: TaskDataset, split: TaskSplit, normalize: bool = True) -> Tuple[TaskDataset, TaskDataset]:
    """
    Materialize a split as (training task, test task).

    The training task holds labeled then unlabeled columns, with labels
    of the unlabeled columns removed; normalization statistics come from the
    training columns only.
    """
    order = np.concatenate([split.labeled, split.unlabeled]).astype(int)
    train_labels = np.zeros(order.size, dtype=np.int8)
    train_labels[:split.labeled.size] = task.labels[split.labeled]
    x_train = task.x[:, order]
    x_test = task.x[:, split.test]
    if normalize:
        x_train, x_test = zscore(x_train, x_test)
    train = TaskDataset(x=x_train, labels=train_labels, name=task.name)
    test = TaskDataset(x=x_test, labels=task.labels[split.test], name=task.name)
    return train, test


def stratified_folds(labels: np.ndarray, folds: int, rng: np.random.Generator) -> np.ndarray:
    """Fold number in [0, folds) for every entry of a +1/-1 label vector, balanced per class."""
    folds = validate_int_at_least(folds, 2, "folds")
    labels = np.asarray(labels)
    assignment = np.empty(labels.size, dtype=int)
    offset = 0
    for idx in _shuffled_classes(np.arange(labels.size), labels, rng):
        assignment[idx] = (offset + np.arange(idx.size)) % folds
        offset += idx.size
    return assignment
