#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Prediction with a fitted LPM, ROC AUC, and the single-task baseline.

A test example x of task m has the predictive law z | x ~ N(zeta, rho), so
P(y = +1 | x) = Phi(zeta / sqrt(rho)). No training label is consulted.
"""

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import special, stats

from .em import FitOptions, FitTrace, fit, predictive_law
from .exceptions import ValidationError
from .model import Hyperparams, LpmParams, TaskDataset
from .utils import validate_label_vector


@dataclass(frozen=True)
class Prediction:
    prob_positive: float
    zeta: float
    rho: float


def predict_task(params: LpmParams, hyper: Hyperparams, task_index: int, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray, float]:
    """
    Vectorized prediction for the columns of x (d_m x n).

    Returns:
        (prob_positive, zeta, rho)
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValidationError(f"expected a d_m x n matrix, got shape {x.shape}", field="x")
    if not np.all(np.isfinite(x)):
        raise ValidationError("features contain non-finite entries", field="x")
    _, _, _, _, rho, zeta = predictive_law(params, hyper, task_index, x)
    return special.ndtr(zeta / math.sqrt(rho)), zeta, rho


def predict(params: LpmParams, hyper: Hyperparams, task_index: int, x: Sequence[float]) -> Prediction:
    """
    Probability that a single feature vector of task `task_index` is positive.

    Raises:
        ValidationError: On dimension mismatch or non-finite features
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValidationError(f"expected a feature vector, got shape {x.shape}", field="x")
    prob, zeta, rho = predict_task(params, hyper, task_index, x[:, None])
    return Prediction(prob_positive=float(prob[0]), zeta=float(zeta[0]), rho=float(rho))


def auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """
    Area under the ROC curve as the Mann-Whitney statistic, ties counted 1/2.

    Raises:
        ValidationError: If only one class is present
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = validate_label_vector(labels)
    if scores.shape != labels.shape:
        raise ValidationError("scores and labels must be vectors of equal length", field="scores")
    positive = labels == 1
    n_pos = int(np.count_nonzero(positive))
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValidationError("AUC needs both classes", field="labels")
    ranks = stats.rankdata(scores, method="average")
    u_statistic = float(np.sum(ranks[positive])) - n_pos * (n_pos + 1) / 2.0
    return u_statistic / (n_pos * n_neg)


def score_rows(prob: np.ndarray, labels: Sequence[int], ids: Optional[Sequence] = None) -> List[List]:
    """Rows (example id, score, label) for the score CSV."""
    ids = range(len(prob)) if ids is None else ids
    return [[i, float(p), int(y)] for i, p, y in zip(ids, prob, labels)]


def fit_stl(task: TaskDataset, hyper: Hyperparams, init=None,
            options: Optional[FitOptions] = None) -> Tuple[LpmParams, FitTrace]:
    """
    Single-task baseline: the same EM fit with this task alone (M = 1).

    Raises:
        ValidationError: If the task has no labels
    """
    if task.num_labeled == 0:
        raise ValidationError("single-task baseline requires labels", field="labels")
    return fit([task], hyper, init=init, options=options)
