#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Estimation error bound for the two-step estimator of the classifier.

The estimator recovers each task's latent features by least squares,
pools them into Psi (f0 x n_t) and fits w by the lasso

    (1/n_t) ||z - Psi' w||^2 + r ||w||_1.

With r = a * eps_psi * sqrt(ln f0) / n_t the error delta = w_hat - w* obeys

    ||delta||_2 <= 2 a eps_psi sqrt(s (1 + c0^2 s) ln f0) / n_t
                   / sum_m [ omega_min(X_m X_m' / n_t) / B(F_m) ]

with probability at least 1 - f0^(1 - a^2/8), where B(F) is the sparse upper
bound on the largest eigenvalue of F'F. verify_error_bound() checks this
by Monte Carlo.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy import linalg

from .exceptions import NumericalError, ValidationError
from .logger import get_logger
from .model import Hyperparams, LpmParams
from .sampler import sample_sparse_classifier, sample_sparse_transform, sample_task, sample_transform
from .utils import substream, validate_int_at_least, validate_nonnegative, validate_positive

MIN_A = math.sqrt(8.0)

LASSO_TOL = 1e-10
LASSO_MAX_SWEEPS = 100000


def two_step_latent(transform: np.ndarray, x: np.ndarray) -> np.ndarray:
    """
    Least-squares latent features S_hat = (F'F)^{-1} F'X, one column per example.

    Raises:
        NumericalError: If F does not have full column rank
    """
    transform = np.asarray(transform, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if transform.ndim != 2 or x.ndim != 2 or x.shape[0] != transform.shape[0]:
        raise ValidationError(f"shapes {transform.shape} and {x.shape} do not match", field="x")
    if np.linalg.matrix_rank(transform) < transform.shape[1]:
        raise NumericalError("transform does not have full column rank", context="two-step estimator")
    solution, _, _, _ = linalg.lstsq(transform, x)
    return solution


def pool_psi(latents: Sequence[np.ndarray]) -> np.ndarray:
    """Concatenate per-task latent features column-wise in task order."""
    if not latents:
        raise ValidationError("at least one task is required", field="latents")
    f0 = latents[0].shape[0]
    for m, block in enumerate(latents):
        if block.ndim != 2 or block.shape[0] != f0:
            raise ValidationError(f"task {m} has {block.shape[0]} latent rows, expected {f0}",
                                  field=f"latents[{m}]")
    return np.hstack(latents)


def _check_lasso_inputs(psi: np.ndarray, z: np.ndarray):
    psi = np.asarray(psi, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if psi.ndim != 2 or z.shape != (psi.shape[1],):
        raise ValidationError(f"Psi {psi.shape} and z {z.shape} do not match", field="z")
    if not (np.all(np.isfinite(psi)) and np.all(np.isfinite(z))):
        raise ValidationError("lasso inputs contain non-finite entries", field="psi")
    return psi, z


def lasso_objective(psi: np.ndarray, z: np.ndarray, w: np.ndarray, r: float) -> float:
    residual = z - psi.T @ w
    return float(residual @ residual) / psi.shape[1] + r * float(np.sum(np.abs(w)))


def lasso_kkt_violation(psi: np.ndarray, z: np.ndarray, w: np.ndarray, r: float) -> float:
    """
    Largest violation of the lasso subgradient conditions:
    |g_j| <= r where w_j = 0 and g_j = r sign(w_j) elsewhere,
    with g = (2/n_t) Psi (z - Psi' w).
    """
    gradient = 2.0 / psi.shape[1] * (psi @ (z - psi.T @ w))
    active = w != 0.0
    inactive_gap = np.maximum(np.abs(gradient[~active]) - r, 0.0)
    active_gap = np.abs(gradient[active] - r * np.sign(w[active]))
    return float(max(np.max(inactive_gap, initial=0.0), np.max(active_gap, initial=0.0)))


def lasso_solve(psi: np.ndarray, z: np.ndarray, r: float, tol: float = LASSO_TOL,
                max_sweeps: int = LASSO_MAX_SWEEPS) -> np.ndarray:
    """
    Minimize (1/n_t)||z - Psi'w||^2 + r||w||_1 by cyclic coordinate descent.

    Works on the Gram matrix G = Psi Psi' and c = Psi z; a sweep stops the
    loop once no coordinate moved by more than tol.

    Raises:
        ValidationError: On negative r or non-finite inputs
    """
    psi, z = _check_lasso_inputs(psi, z)
    r = validate_nonnegative(r, "r")
    f0, n_t = psi.shape
    gram = psi @ psi.T
    target = psi @ z
    threshold = 0.5 * n_t * r
    w = np.zeros(f0)
    fit = np.zeros(f0)  # G w

    for sweep in range(max_sweeps):
        largest_step = 0.0
        for j in range(f0):
            g_jj = gram[j, j]
            if g_jj <= 0.0:
                continue
            partial = target[j] - fit[j] + g_jj * w[j]
            updated = math.copysign(max(abs(partial) - threshold, 0.0), partial) / g_jj
            step = updated - w[j]
            if step != 0.0:
                fit += gram[:, j] * step
                w[j] = updated
                largest_step = max(largest_step, abs(step))
        if largest_step <= tol:
            break
    else:
        get_logger().warning(f"lasso stopped after {max_sweeps} sweeps without meeting tol={tol:g}")
    return w


def sparse_max_eig_bound(transform: np.ndarray) -> float:
    """
    Upper bound on the largest eigenvalue of F'F from the sparsity of F:
    max over rows i of sum_j nnz(F[:, j]) * F[i, j]^2.
    """
    transform = np.asarray(transform, dtype=np.float64)
    if transform.size == 0:
        return 0.0
    column_counts = np.count_nonzero(transform, axis=0)
    return float(np.max((transform ** 2) @ column_counts))


def failure_probability(f0: int, a: float) -> float:
    """
    Probability 1 - f0^(1 - a^2/8) with which the bound holds.

    Raises:
        ValidationError: If f0 < 2 or a < sqrt(8)
    """
    f0 = validate_int_at_least(f0, 2, "f0")
    a = _check_a(a)
    # sqrt(8) itself does not square back to exactly 8
    if math.isclose(a * a, 8.0, rel_tol=1e-12):
        return 0.0
    return 1.0 - float(f0) ** (1.0 - a * a / 8.0)


def _check_a(a: float) -> float:
    a = validate_positive(a, "a")
    if a < MIN_A * (1.0 - 1e-12):
        raise ValidationError(f"a must be at least sqrt(8), got {a}", field="a")
    return a


def row_norm_max(psi: np.ndarray) -> float:
    """eps_psi: the largest Euclidean norm of a row of Psi."""
    return float(np.max(np.linalg.norm(psi, axis=1)))


def penalty_from_a(a: float, eps_psi: float, n_t: int, f0: int) -> float:
    """Lasso penalty r = a eps_psi sqrt(ln f0) / n_t."""
    return a * eps_psi * math.sqrt(math.log(f0)) / n_t


def cone_constant(delta: np.ndarray, support: np.ndarray) -> float:
    """
    c0 = ||delta off the support||_1 / ||delta on the support||_1, or 0 when the
    on-support part vanishes.
    """
    mask = np.zeros(delta.shape[0], dtype=bool)
    mask[np.asarray(support, dtype=int)] = True
    inside = float(np.sum(np.abs(delta[mask])))
    if inside == 0.0:
        return 0.0
    return float(np.sum(np.abs(delta[~mask]))) / inside


def noise_radius(psi: np.ndarray, noise: np.ndarray) -> float:
    """r_e = ||Psi e||_inf / n_t."""
    return float(np.max(np.abs(psi @ noise))) / psi.shape[1]


def error_bound_rhs(a: float, eps_psi: float, n_t: int, s: int, c0: float, f0: int,
                    features: Sequence[np.ndarray], transforms: Sequence[np.ndarray]) -> float:
    """
    Right-hand side of the lasso error bound.

    The denominator sums, over tasks, the smallest eigenvalue of the
    D_m x D_m Gram matrix X_m X_m' / n_t divided by the sparse eigenvalue
    bound of F_m.

    Raises:
        ValidationError: If f0 < 2 or a < sqrt(8)
        NumericalError: If the denominator is not positive
    """
    f0 = validate_int_at_least(f0, 2, "f0")
    a = _check_a(a)
    s = validate_int_at_least(s, 0, "s")
    if len(features) != len(transforms):
        raise ValidationError("need one transform per task", field="transforms")
    denom = bound_denominator(features, transforms, n_t)
    numerator = 2.0 * a * eps_psi / n_t * math.sqrt(s * (1.0 + c0 * c0 * s) * math.log(f0))
    return numerator / denom


def bound_denominator(features: Sequence[np.ndarray], transforms: Sequence[np.ndarray], n_t: int) -> float:
    denom = 0.0
    for m, (x_m, f_m) in enumerate(zip(features, transforms)):
        smallest = float(linalg.eigvalsh(x_m @ x_m.T / n_t, subset_by_index=[0, 0])[0])
        eig_bound = sparse_max_eig_bound(f_m)
        if eig_bound <= 0.0:
            raise NumericalError("transform is identically zero", context=f"task {m}")
        denom += smallest / eig_bound
    if not denom > 0.0:
        raise NumericalError(f"bound denominator is {denom:g}", context="error bound")
    return denom


@dataclass
class BoundConfig:
    """
    Synthetic setting of the bound check: b = 0, mu = 0, Sigma = I, d_m = 0.

    Transforms are Laplacian with rate gamma unless transform_density is set,
    in which case a fraction of standard-normal entries is kept.
    """
    f0: int = 8
    s: int = 3
    task_dims: List[int] = field(default_factory=lambda: [12, 12, 12, 12])
    labeled_per_task: List[int] = field(default_factory=lambda: [250, 250, 250, 250])
    a: float = 4.0
    eta: float = 0.01
    gamma: float = 1.0
    transform_density: Optional[float] = None
    seed: int = 7

    def __post_init__(self):
        validate_int_at_least(self.f0, 2, "f0")
        validate_int_at_least(self.s, 0, "s")
        if self.s > self.f0:
            raise ValidationError(f"s={self.s} exceeds f0={self.f0}", field="s")
        if len(self.task_dims) != len(self.labeled_per_task) or not self.task_dims:
            raise ValidationError("task_dims and labeled_per_task must be non-empty and of equal length",
                                  field="task_dims")
        for m, d_m in enumerate(self.task_dims):
            if validate_int_at_least(d_m, 1, f"task_dims[{m}]") < self.f0:
                raise ValidationError(f"task {m} has {d_m} features, fewer than f0={self.f0}",
                                      field=f"task_dims[{m}]")
            validate_int_at_least(self.labeled_per_task[m], 1, f"labeled_per_task[{m}]")
        _check_a(self.a)
        validate_positive(self.eta, "eta")
        validate_positive(self.gamma, "gamma")

    @property
    def n_t(self) -> int:
        return int(sum(self.labeled_per_task))

    def hyperparams(self) -> Hyperparams:
        return Hyperparams.from_rates(self.gamma, 1.0, self.eta, self.f0)


@dataclass
class BoundReport:
    """Outcome of one bound trial."""
    trial: int
    s: int
    c0: float
    eps_psi: float
    a: float
    r: float
    n_t: int
    denom: float
    rhs: float
    delta_norm: float
    p_e: float
    r_e: float
    held: bool
    event_held: bool

    CSV_FIELDS = ("trial", "s", "c0", "eps_psi", "a", "r", "n_t", "denom",
                  "rhs", "delta_norm", "p_e", "r_e", "held", "event_held")

    def to_row(self) -> list:
        values = asdict(self)
        return [values[key] for key in self.CSV_FIELDS]


@dataclass
class BoundSummary:
    trials: int
    holds: int
    events: int
    p_e: float

    @property
    def holds_fraction(self) -> float:
        return self.holds / self.trials if self.trials else float("nan")

    @property
    def threshold(self) -> float:
        """One-sided acceptance level p_e - 3 sqrt(p_e (1 - p_e) / trials)."""
        return self.p_e - 3.0 * math.sqrt(self.p_e * (1.0 - self.p_e) / self.trials)

    @property
    def vacuous(self) -> bool:
        return self.p_e <= 0.0

    @property
    def passed(self) -> bool:
        return self.holds_fraction >= self.threshold

    def summary_line(self) -> str:
        line = (f"bound held in {self.holds}/{self.trials} trials "
                f"({self.holds_fraction:.4f}); guaranteed p_e={self.p_e:.4f}, "
                f"acceptance threshold {self.threshold:.4f}: {'PASS' if self.passed else 'FAIL'}")
        if self.vacuous:
            line += " (vacuous: a = sqrt(8))"
        return line


def run_bound_trial(config: BoundConfig, trial: int) -> BoundReport:
    """One draw of w*, the transforms and data, followed by the lasso fit."""
    rng = substream(config.seed, trial)
    f0 = config.f0
    hyper = config.hyperparams()
    w_star = sample_sparse_classifier(f0, config.s, rng)

    transforms = []
    for d_m in config.task_dims:
        if config.transform_density is None:
            f_m, _ = sample_transform(d_m, hyper, rng)
        else:
            f_m = sample_sparse_transform(d_m, f0, config.transform_density, rng)
        transforms.append(f_m)
    params = LpmParams(mu=np.zeros(f0), sigma=np.eye(f0), b=0.0, w=w_star,
                       transforms=tuple(transforms), offsets=tuple(np.zeros(d) for d in config.task_dims))

    features, latents = [], []
    for m, n_m in enumerate(config.labeled_per_task):
        task, _ = sample_task(params, hyper, m, n_m, 1.0, rng)
        features.append(task.x)
        latents.append(two_step_latent(transforms[m], task.x))
    psi = pool_psi(latents)
    n_t = psi.shape[1]

    noise = rng.standard_normal(n_t)
    z = psi.T @ w_star + noise
    eps_psi = row_norm_max(psi)
    r = penalty_from_a(config.a, eps_psi, n_t, f0)
    w_hat = lasso_solve(psi, z, r)

    delta = w_hat - w_star
    delta_norm = float(np.linalg.norm(delta))
    c0 = cone_constant(delta, np.flatnonzero(w_star))
    denom = bound_denominator(features, transforms, n_t)
    rhs = error_bound_rhs(config.a, eps_psi, n_t, config.s, c0, f0, features, transforms)
    r_e = noise_radius(psi, noise)
    report = BoundReport(trial=trial, s=config.s, c0=c0, eps_psi=eps_psi, a=config.a, r=r, n_t=n_t,
                         denom=denom, rhs=rhs, delta_norm=delta_norm,
                         p_e=failure_probability(f0, config.a), r_e=r_e,
                         held=delta_norm <= rhs, event_held=2.0 * r_e <= r)
    get_logger().debug(f"bound trial {trial}: |delta|={delta_norm:.4g} rhs={rhs:.4g} held={report.held}")
    return report


def verify_error_bound(config: BoundConfig, trials: int, workers: int = 1):
    """
    Monte-Carlo check of the error bound.

    Trials use independent substreams keyed by the trial index and are
    reported in trial order whatever the worker count.

    Returns:
        (list of BoundReport, BoundSummary)
    """
    trials = validate_int_at_least(trials, 1, "trials")
    workers = validate_int_at_least(workers, 1, "workers")
    logger = get_logger()
    p_e = failure_probability(config.f0, config.a)
    if p_e <= 0.0:
        logger.warning("a = sqrt(8) makes the guarantee vacuous (p_e = 0)")

    if workers == 1:
        reports = [run_bound_trial(config, t) for t in range(trials)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            reports = list(executor.map(lambda t: run_bound_trial(config, t), range(trials)))

    summary = BoundSummary(trials=trials, holds=sum(rep.held for rep in reports),
                           events=sum(rep.event_held for rep in reports), p_e=p_e)
    logger.info(summary.summary_line())
    return reports, summary
