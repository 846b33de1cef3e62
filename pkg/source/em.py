#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
MAP estimation of the latent probit model by expectation-maximization.

One iteration updates (mu, Sigma), then every task's (F_m, d_m), then the
shared classifier (w, b), recomputing the E-step moments before each block.
The Laplacian priors enter through reweighting matrices diag(sqrt|f_mk|)
and diag(sqrt|w|), which turn each penalized M-step into a linear solve and
keep exact zeros at zero.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg, special

from .exceptions import DivergenceError, NumericalError, ValidationError
from .logger import get_logger
from .model import Hyperparams, LpmParams, TaskDataset, validate
from .utils import substream

_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)
_LOG_2PI = math.log(2.0 * math.pi)


class OperationCounter:
    """Tally of scalar multiply-adds spent in the dominant matrix products."""

    def __init__(self):
        self.total = 0

    def add(self, count: int) -> None:
        self.total += int(count)

    def matmul(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        a = np.asarray(a)
        b = np.asarray(b)
        inner = a.shape[-1]
        outer = int(np.prod(a.shape[:-1])) * (b.shape[-1] if b.ndim > 1 else 1)
        self.add(outer * inner)
        return a @ b


def _count(counter: Optional[OperationCounter]) -> OperationCounter:
    return counter if counter is not None else OperationCounter()


def _spd_inverse(matrix: np.ndarray, context: str) -> np.ndarray:
    try:
        factor = linalg.cho_factor(matrix, lower=True)
    except linalg.LinAlgError:
        raise NumericalError("matrix is not positive definite", context=context)
    inverse = linalg.cho_solve(factor, np.eye(matrix.shape[0]))
    return 0.5 * (inverse + inverse.T)


def truncated_normal_moments(zeta, rho, y):
    """
    Mean and variance of z ~ N(zeta, rho) conditioned on y * z >= 0.

    For y = +1 with t = zeta / sqrt(rho) and lambda = pdf(t) / cdf(t):
        xi = zeta + sqrt(rho) * lambda
        beta = rho * (1 - t * lambda - lambda**2)
    y = -1 is the mirror image. lambda is evaluated through erfcx so the
    ratio stays finite deep in either tail.

    Args:
        zeta: Mean(s) of the untruncated normal
        rho: Variance(s), must be > 0
        y: Label(s) in {+1, -1}

    Returns:
        (xi, beta), floats for scalar input, arrays otherwise

    Raises:
        ValidationError: If any rho <= 0 or a label is not +1/-1
    """
    zeta_arr, rho_arr, y_arr = np.broadcast_arrays(np.asarray(zeta, dtype=np.float64),
                                                   np.asarray(rho, dtype=np.float64),
                                                   np.asarray(y))
    if np.any(~(rho_arr > 0.0)):
        raise ValidationError("variance must be positive", field="rho")
    if not np.all(np.isin(y_arr, (-1, 1))):
        raise ValidationError("labels must be +1 or -1", field="y")

    sign = y_arr.astype(np.float64)
    scale = np.sqrt(rho_arr)
    t = sign * zeta_arr / scale
    with np.errstate(over="ignore"):
        ratio = _SQRT_2_OVER_PI / special.erfcx(-t / math.sqrt(2.0))
    xi = zeta_arr + sign * scale * ratio
    beta = rho_arr * (1.0 - ratio * (ratio + t))
    beta = np.maximum(beta, np.finfo(np.float64).tiny)

    if np.ndim(xi) == 0:
        return float(xi), float(beta)
    return xi, beta


@dataclass
class EStepMoments:
    """
    Conditional moments for one task under the current parameters.

    Columns of phi are E[s_mi | data]; xi and beta are the conditional mean
    and variance of z_mi, equal to (zeta, rho) for unlabeled examples.
    """
    R: np.ndarray
    Q: np.ndarray
    phi: np.ndarray
    zeta: np.ndarray
    rho: np.ndarray
    xi: np.ndarray
    beta: np.ndarray
    labeled: np.ndarray

    @property
    def n(self) -> int:
        return self.phi.shape[1]

    def covariance_sum(self, w: np.ndarray, index=None) -> np.ndarray:
        """Sum over examples of Cov(s | data) = R + beta R w w' R."""
        beta = self.beta if index is None else self.beta[index]
        rw = self.R @ w
        return beta.shape[0] * self.R + float(np.sum(beta)) * np.outer(rw, rw)


def predictive_law(params: LpmParams, hyper: Hyperparams, task_index: int, x: np.ndarray,
                   sigma_inv: Optional[np.ndarray] = None, counter: Optional[OperationCounter] = None):
    """
    Shared pieces of the E-step and of the predictive law z | x ~ N(zeta, rho)
    for the columns of x.

    Returns:
        (F_m, d_m, Q_m^{-1}, Q_m, rho, zeta)
    """
    counter = _count(counter)
    if sigma_inv is None:
        sigma_inv = params.sigma_inverse()
    f_m, d_m = params.for_task(task_index)
    if x.shape[0] != f_m.shape[0]:
        raise ValidationError(f"task {task_index} has {x.shape[0]} features, "
                              f"transform expects {f_m.shape[0]}", field="x")
    f0 = params.f0
    w = params.w
    precision = sigma_inv + counter.matmul(f_m.T, f_m) / hyper.eta
    q_m = _spd_inverse(precision, f"Q_{task_index}")
    counter.add(f0 ** 3)
    rho = 1.0 + float(w @ q_m @ w)
    centered = x - (f_m @ params.mu + d_m)[:, None]
    direction = f_m @ (q_m @ w)
    zeta = float(w @ params.mu) + params.b + counter.matmul(direction, centered) / hyper.eta
    return f_m, d_m, precision, q_m, rho, zeta


def e_step_task(params: LpmParams, hyper: Hyperparams, task: TaskDataset, task_index: int,
                counter: Optional[OperationCounter] = None) -> EStepMoments:
    """
    Compute the conditional moments of one task's latent variables.

    Raises:
        NumericalError: If Sigma, R_m or Q_m is not positive definite
    """
    counter = _count(counter)
    try:
        sigma_inv = params.sigma_inverse()
    except linalg.LinAlgError:
        raise NumericalError("Sigma is singular", context="E-step")
    x = task.x
    f_m, d_m, precision, q_m, rho, zeta = predictive_law(params, hyper, task_index, x, sigma_inv, counter)
    w = params.w
    r_m = _spd_inverse(precision + np.outer(w, w), f"R_{task_index}")
    counter.add(params.f0 ** 3)

    xi = zeta.copy()
    beta = np.full(task.n, rho)
    labeled = task.labeled_mask
    if np.any(labeled):
        xi[labeled], beta[labeled] = truncated_normal_moments(zeta[labeled], rho, task.labels[labeled])

    drive = (sigma_inv @ params.mu)[:, None] + np.outer(w, xi - params.b) \
        + counter.matmul(f_m.T, x - d_m[:, None]) / hyper.eta
    phi = counter.matmul(r_m, drive)
    return EStepMoments(R=r_m, Q=q_m, phi=phi, zeta=zeta, rho=np.full(task.n, rho),
                        xi=xi, beta=beta, labeled=labeled)


def _ensure_pd(matrix: np.ndarray, context: str) -> np.ndarray:
    """Add diagonal jitter (1e-10 * mean diagonal, growing tenfold) until Cholesky succeeds."""
    matrix = 0.5 * (matrix + matrix.T)
    try:
        linalg.cholesky(matrix, lower=True)
        return matrix
    except linalg.LinAlgError:
        pass
    f0 = matrix.shape[0]
    scale = float(np.trace(matrix)) / f0
    if not scale > 0.0:
        scale = 1.0
    jitter = 1e-10 * scale
    for _ in range(12):
        candidate = matrix + jitter * np.eye(f0)
        try:
            linalg.cholesky(candidate, lower=True)
            get_logger().warning(f"{context}: added jitter {jitter:.3g} to keep the matrix positive definite")
            return candidate
        except linalg.LinAlgError:
            jitter *= 10.0
    raise NumericalError("matrix could not be made positive definite", context=context)


def m_step_latent(moments: Sequence[EStepMoments], params: LpmParams,
                  counter: Optional[OperationCounter] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Update the latent mean and covariance.

    mu is the average of all phi_mi; Sigma averages the centred outer products
    plus the posterior covariances R_m + beta R_m w w' R_m. Task sums run in
    task order.
    """
    counter = _count(counter)
    n_a = sum(mom.n for mom in moments)
    mu_hat = sum(mom.phi.sum(axis=1) for mom in moments) / n_a
    scatter = np.zeros((params.f0, params.f0))
    for mom in moments:
        centered = mom.phi - mu_hat[:, None]
        scatter += counter.matmul(centered, centered.T) + mom.covariance_sum(params.w)
    sigma_hat = _ensure_pd(scatter / n_a, "Sigma update")
    return mu_hat, sigma_hat


def _reweighted_solve(gram: np.ndarray, rhs: np.ndarray, current: np.ndarray, penalty: float,
                      context: str, counter: OperationCounter) -> np.ndarray:
    """
    Solve V (penalty I + V gram V)^{-1} V rhs with V = diag(sqrt|current|).

    Coordinates where current is exactly zero stay zero, so the system is
    solved on the support only.
    """
    result = np.zeros_like(current)
    support = np.flatnonzero(current)
    if support.size == 0 or np.isinf(penalty):
        return result
    v = np.sqrt(np.abs(current[support]))
    system = penalty * np.eye(support.size) + v[:, None] * gram[np.ix_(support, support)] * v[None, :]
    target = v * rhs[support]
    counter.add(support.size ** 3)
    try:
        solution = np.linalg.solve(system, target)
        if not np.all(np.isfinite(solution)):
            raise np.linalg.LinAlgError("non-finite solution")
    except np.linalg.LinAlgError:
        get_logger().warning(f"{context}: singular reweighted system, using the pseudo-inverse")
        solution = np.linalg.pinv(system) @ target
    result[support] = v * solution
    return result


def m_step_domain(moments: EStepMoments, task: TaskDataset, hyper: Hyperparams, params: LpmParams,
                  task_index: int, counter: Optional[OperationCounter] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Update one task's translation d_m and then its transform F_m row by row
    (using the new d_m).

    Returns:
        (F_m_hat, d_m_hat)
    """
    counter = _count(counter)
    f_m, _ = params.for_task(task_index)
    phi = moments.phi
    d_hat = (task.x - counter.matmul(f_m, phi)).mean(axis=1)

    gamma1 = counter.matmul(phi, phi.T) + moments.covariance_sum(params.w)
    rhs = counter.matmul(phi, (task.x - d_hat[:, None]).T)
    f_hat = np.zeros_like(f_m)
    for k in range(f_m.shape[0]):
        f_hat[k] = _reweighted_solve(gamma1, rhs[:, k], f_m[k], hyper.alpha,
                                     f"F_{task_index} row {k}", counter)
    return f_hat, d_hat


def m_step_classifier(moments: Sequence[EStepMoments], params: LpmParams, hyper: Hyperparams,
                      exact_cross_moment: bool = True,
                      counter: Optional[OperationCounter] = None) -> Tuple[np.ndarray, float]:
    """
    Update the shared probit classifier from the labeled examples of all tasks.

    With exact_cross_moment the right-hand side includes the posterior
    covariance between z and s (beta R_m w per example), which makes the
    update the exact maximizer of the EM surrogate. b is then the mean
    residual xi - phi'w over the n_l labeled examples.

    Raises:
        ValidationError: If no task has a labeled example
    """
    counter = _count(counter)
    n_l = sum(int(np.count_nonzero(mom.labeled)) for mom in moments)
    if n_l == 0:
        raise ValidationError("classifier update requires labels", field="labels")

    w = params.w
    gamma2 = np.zeros((params.f0, params.f0))
    rhs = np.zeros(params.f0)
    for mom in moments:
        index = np.flatnonzero(mom.labeled)
        if index.size == 0:
            continue
        phi_l = mom.phi[:, index]
        gamma2 += counter.matmul(phi_l, phi_l.T) + mom.covariance_sum(w, index)
        rhs += counter.matmul(phi_l, mom.xi[index] - params.b)
        if exact_cross_moment:
            rhs += float(np.sum(mom.beta[index])) * (mom.R @ w)

    w_hat = _reweighted_solve(gamma2, rhs, w, hyper.vartheta, "classifier", counter)
    residual = 0.0
    for mom in moments:
        index = np.flatnonzero(mom.labeled)
        residual += float(np.sum(mom.xi[index] - w_hat @ mom.phi[:, index]))
    return w_hat, residual / n_l


def _laplace_log_prior(values: np.ndarray, rate: float) -> float:
    # a zero rate is a flat prior and an infinite one a point mass; neither contributes
    if not (rate > 0.0 and math.isfinite(rate)):
        return 0.0
    root = math.sqrt(rate)
    return values.size * math.log(root / 2.0) - root * float(np.sum(np.abs(values)))


def log_posterior(params: LpmParams, hyper: Hyperparams, data: Sequence[TaskDataset]) -> float:
    """
    Closed-form log posterior l(Theta) with s, z, tau and u integrated out.

    Every example contributes its Gaussian marginal log density
    log N(x | F_m mu + d_m, eta I + F_m Sigma F_m'); labeled examples add
    log Phi(y zeta / sqrt(rho)); the priors contribute Laplace log densities.

    Raises:
        NumericalError: If a marginal covariance is not positive definite
    """
    sigma_inv = params.sigma_inverse()
    counter = OperationCounter()
    total = 0.0
    for m, task in enumerate(data):
        f_m, d_m = params.for_task(m)
        covariance = hyper.eta * np.eye(task.d) + f_m @ params.sigma @ f_m.T
        try:
            factor = linalg.cholesky(covariance, lower=True)
        except linalg.LinAlgError:
            raise NumericalError("marginal covariance is not positive definite", context=f"task {m}")
        residual = task.x - (f_m @ params.mu + d_m)[:, None]
        whitened = linalg.solve_triangular(factor, residual, lower=True)
        log_det = 2.0 * float(np.sum(np.log(np.diag(factor))))
        total -= 0.5 * (task.n * (task.d * _LOG_2PI + log_det) + float(np.sum(whitened ** 2)))

        labeled = task.labeled_mask
        if np.any(labeled):
            _, _, _, _, rho, zeta = predictive_law(params, hyper, m, task.x[:, labeled], sigma_inv, counter)
            total += float(np.sum(special.log_ndtr(task.labels[labeled] * zeta / math.sqrt(rho))))

    for f_m in params.transforms:
        total += _laplace_log_prior(f_m, hyper.gamma)
    total += _laplace_log_prior(params.w, hyper.lam)
    return total


@dataclass
class FitOptions:
    """Knobs of the EM loop."""
    tol: float = 1e-6
    max_iters: int = 500
    fix_latent: bool = True
    seed: int = 0
    exact_cross_moment: bool = True
    init_floor: float = 1e-6
    zero_threshold: float = 1e-8


@dataclass
class FitTrace:
    """
    Per-iteration record of a fit. log_posterior[0] is l(Theta) at the
    initial parameters, log_posterior[t] after iteration t.
    """
    log_posterior: List[float] = field(default_factory=list)
    changes: List[Dict[str, float]] = field(default_factory=list)
    scalar_products: List[int] = field(default_factory=list)
    converged: bool = False
    n_a: int = 0
    n_l: int = 0
    sparsity: Dict[str, float] = field(default_factory=dict)

    CHANGE_KEYS = ("mu", "sigma", "transforms", "offsets", "w", "b")

    @property
    def iterations(self) -> int:
        return len(self.changes)

    def to_rows(self) -> List[List]:
        """Rows for the trace CSV: iteration, log_posterior, block change norms."""
        rows = []
        for t, value in enumerate(self.log_posterior):
            changes = self.changes[t - 1] if t > 0 else {}
            rows.append([t, value] + [changes.get(key, 0.0) for key in self.CHANGE_KEYS])
        return rows

    @classmethod
    def header(cls) -> List[str]:
        return ["iteration", "log_posterior"] + [f"change_{key}" for key in cls.CHANGE_KEYS]


def _floor_magnitude(values: np.ndarray, floor: float) -> np.ndarray:
    signs = np.where(values < 0.0, -1.0, 1.0)
    return np.where(np.abs(values) < floor, signs * floor, values)


def initialize_params(data: Sequence[TaskDataset], hyper: Hyperparams, seed: int = 0,
                      floor: float = 1e-6) -> LpmParams:
    """
    Data-driven starting point for EM.

    d_m is the task mean, F_m the leading f0 principal directions of the
    centred features scaled by singular value / sqrt(n_m), w small random
    N(0, 0.01) entries and b the probit of the labeled positive fraction.
    Every entry of F_m and w is kept at least `floor` in magnitude because the
    reweighted M-steps can never revive an exact zero.
    """
    f0 = hyper.f0
    rng = substream(seed, 0)
    transforms, offsets = [], []
    for task in data:
        offset = task.x.mean(axis=1)
        centered = task.x - offset[:, None]
        left, singular, _ = np.linalg.svd(centered, full_matrices=False)
        k = min(f0, singular.size)
        f_m = np.zeros((task.d, f0))
        f_m[:, :k] = left[:, :k] * (singular[:k] / math.sqrt(task.n))
        # sign convention: largest-magnitude entry of each column is positive
        pivots = np.argmax(np.abs(f_m), axis=0)
        signs = np.where(f_m[pivots, np.arange(f0)] < 0.0, -1.0, 1.0)
        transforms.append(_floor_magnitude(f_m * signs, floor))
        offsets.append(offset)

    w = _floor_magnitude(rng.normal(0.0, 0.1, size=f0), floor)
    labels = np.concatenate([task.labels[task.labeled_mask] for task in data])
    if labels.size:
        positive = float(np.mean(labels > 0))
        b = float(special.ndtri(min(max(positive, 0.01), 0.99)))
    else:
        b = 0.0
    return LpmParams(mu=np.zeros(f0), sigma=np.eye(f0), b=b, w=w,
                     transforms=tuple(transforms), offsets=tuple(offsets))


def _change_norms(old: LpmParams, new: LpmParams) -> Dict[str, float]:
    return {
        "mu": float(np.linalg.norm(new.mu - old.mu)),
        "sigma": float(np.linalg.norm(new.sigma - old.sigma)),
        "transforms": float(math.sqrt(sum(np.sum((a - b) ** 2) for a, b in zip(new.transforms, old.transforms)))),
        "offsets": float(math.sqrt(sum(np.sum((a - b) ** 2) for a, b in zip(new.offsets, old.offsets)))),
        "w": float(np.linalg.norm(new.w - old.w)),
        "b": abs(new.b - old.b),
    }


def _threshold(params: LpmParams, threshold: float) -> LpmParams:
    transforms = tuple(np.where(np.abs(f) < threshold, 0.0, f) for f in params.transforms)
    w = np.where(np.abs(params.w) < threshold, 0.0, params.w)
    return params.replace(transforms=transforms, w=w)


def _sparsity(params: LpmParams) -> Dict[str, float]:
    entries = sum(f.size for f in params.transforms)
    zeros = sum(int(np.count_nonzero(f == 0.0)) for f in params.transforms)
    return {"transforms_zero_fraction": zeros / entries,
            "w_zero_fraction": float(np.mean(params.w == 0.0))}


def em_iteration(params: LpmParams, hyper: Hyperparams, data: Sequence[TaskDataset],
                 options: FitOptions, have_labels: bool,
                 counter: Optional[OperationCounter] = None) -> LpmParams:
    """One pass of the block updates: (mu, Sigma), each (F_m, d_m), then (w, b)."""
    counter = _count(counter)
    if not options.fix_latent:
        moments = [e_step_task(params, hyper, task, m, counter) for m, task in enumerate(data)]
        mu, sigma = m_step_latent(moments, params, counter)
        params = params.replace(mu=mu, sigma=sigma)

    transforms, offsets = list(params.transforms), list(params.offsets)
    for m, task in enumerate(data):
        moments = e_step_task(params, hyper, task, m, counter)
        transforms[m], offsets[m] = m_step_domain(moments, task, hyper, params, m, counter)
    params = params.replace(transforms=tuple(transforms), offsets=tuple(offsets))

    if have_labels:
        moments = [e_step_task(params, hyper, task, m, counter) for m, task in enumerate(data)]
        w, b = m_step_classifier(moments, params, hyper, options.exact_cross_moment, counter)
        params = params.replace(w=w, b=b)
    return params


def fit(data: Sequence[TaskDataset], hyper: Hyperparams, init: Union[LpmParams, int, None] = None,
        options: Optional[FitOptions] = None) -> Tuple[LpmParams, FitTrace]:
    """
    Fit the LPM to M partially labeled tasks.

    Args:
        data: One TaskDataset per task
        hyper: Fixed hyperparameters
        init: Starting parameters, or a seed for initialize_params
        options: FitOptions (defaults: tol 1e-6 relative, 500 iterations,
            mu and Sigma fixed at 0 and I)

    Returns:
        (fitted params, FitTrace)

    Raises:
        DivergenceError: If l(Theta) stops being finite; carries the trace so far
    """
    options = options or FitOptions()
    logger = get_logger()
    if not data:
        raise ValidationError("at least one task is required", field="data")
    if isinstance(init, LpmParams):
        params = init
    else:
        params = initialize_params(data, hyper, options.seed if init is None else int(init),
                                   options.init_floor)
    if params.f0 != hyper.f0:
        raise ValidationError(f"initial params have f0={params.f0}, hyperparameters say {hyper.f0}",
                              field="f0")
    problems = validate(params, data)
    if problems:
        raise ValidationError("; ".join(problems), field="init")

    trace = FitTrace(n_a=sum(task.n for task in data), n_l=sum(task.num_labeled for task in data))
    have_labels = trace.n_l > 0
    if not have_labels:
        logger.warning("No labeled examples: the classifier update is skipped")

    ell = log_posterior(params, hyper, data)
    if not math.isfinite(ell):
        raise DivergenceError("log posterior at the initial parameters is not finite", trace=trace)
    trace.log_posterior.append(ell)

    for iteration in range(1, options.max_iters + 1):
        counter = OperationCounter()
        try:
            updated = em_iteration(params, hyper, data, options, have_labels, counter)
            ell_new = log_posterior(updated, hyper, data)
        except (ValidationError, NumericalError) as e:
            raise DivergenceError(f"iteration {iteration} failed: {e}", trace=trace) from e
        if not math.isfinite(ell_new):
            raise DivergenceError(f"log posterior became {ell_new} at iteration {iteration}", trace=trace)

        trace.changes.append(_change_norms(params, updated))
        trace.log_posterior.append(ell_new)
        trace.scalar_products.append(counter.total)
        params = updated
        logger.debug(f"EM iteration {iteration}: log posterior {ell_new:.10g}")

        if abs(ell_new - ell) / max(abs(ell), np.finfo(np.float64).tiny) < options.tol:
            trace.converged = True
            break
        ell = ell_new

    if trace.iterations:
        params = _threshold(params, options.zero_threshold)
        # The last entry describes the parameters actually returned.
        trace.log_posterior[-1] = log_posterior(params, hyper, data)
    trace.sparsity = _sparsity(params)
    logger.info(f"EM finished after {trace.iterations} iterations "
                f"(converged={trace.converged}, log posterior {trace.log_posterior[-1]:.6g})")
    return params, trace
