#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Generative process of the latent probit model.

Sparse parameters come from the hierarchical Laplacian priors
(w_j ~ N(0, u_j) with u_j exponential of rate lam/2, and likewise f_mkj with
rate gamma/2), then each task draws

    s ~ N(mu, Sigma),  x = F_m s + d_m + N(0, eta I),
    z ~ N(w's + b, 1), y = +1 if z >= 0 else -1.

All randomness flows through numpy Generators. generate() derives one
independent substream per task from the configuration seed.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .exceptions import ValidationError
from .logger import get_logger
from .model import Hyperparams, LpmParams, SparsityScales, TaskDataset
from .utils import substream, validate_fraction, validate_int_at_least

# substream keys
_CLASSIFIER_STREAM = 0
_TRANSFORM_STREAM = 1
_DATA_STREAM = 2
_OFFSET_STREAM = 3


def laplace_variance(rate: float) -> float:
    """Variance 2/rate of the marginal Laplace law with density (sqrt(rate)/2) exp(-sqrt(rate)|v|)."""
    return 2.0 / rate


def _exponential_scales(rate: float, size, rng: np.random.Generator) -> np.ndarray:
    # exponential with rate/2, i.e. mean 2/rate; an infinite rate pins the scale to zero
    if np.isinf(rate):
        return np.zeros(size)
    if rate <= 0.0:
        raise ValidationError("a flat prior (zero rate) cannot be sampled", field="rate")
    return rng.exponential(scale=2.0 / rate, size=size)


def sample_classifier(hyper: Hyperparams, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """
    Draw the shared probit weights.

    Returns:
        (w, u): weights of length f0 and their mixing variances
    """
    u = _exponential_scales(hyper.lam, hyper.f0, rng)
    w = rng.standard_normal(hyper.f0) * np.sqrt(u)
    return w, u


def sample_transform(d_m: int, hyper: Hyperparams, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """
    Draw one domain transform F_m (d_m x f0) with marginally Laplace entries.

    Returns:
        (F_m, tau_m)
    """
    d_m = validate_int_at_least(d_m, 1, "d_m")
    tau = _exponential_scales(hyper.gamma, (d_m, hyper.f0), rng)
    f_m = rng.standard_normal((d_m, hyper.f0)) * np.sqrt(tau)
    return f_m, tau


def sample_sparse_classifier(f0: int, nonzeros: int, rng: np.random.Generator,
                             low: float = 0.5, high: float = 1.5) -> np.ndarray:
    """
    Weights with exactly `nonzeros` entries at uniform random positions,
    magnitudes uniform in [low, high] and random signs.
    """
    nonzeros = validate_int_at_least(nonzeros, 0, "nonzeros")
    if nonzeros > f0:
        raise ValidationError(f"cannot place {nonzeros} nonzeros in {f0} entries", field="nonzeros")
    w = np.zeros(f0)
    support = rng.choice(f0, size=nonzeros, replace=False)
    signs = rng.choice((-1.0, 1.0), size=nonzeros)
    w[np.sort(support)] = signs * rng.uniform(low, high, size=nonzeros)
    return w


def sample_sparse_transform(d_m: int, f0: int, density: float, rng: np.random.Generator) -> np.ndarray:
    """
    Transform with a fraction `density` of nonzero standard-normal entries.
    Every column keeps at least one nonzero so F_m has no dead latent feature.
    """
    density = validate_fraction(density, "density")
    f_m = rng.standard_normal((d_m, f0))
    mask = rng.random((d_m, f0)) < density
    for j in np.flatnonzero(~mask.any(axis=0)):
        mask[rng.integers(d_m), j] = True
    return np.where(mask, f_m, 0.0)


@dataclass
class HiddenDraws:
    """Latent draws kept away from the learner: s (f0 x n), z and the full label vector y."""
    s: np.ndarray
    z: np.ndarray
    y: np.ndarray


def sample_task(params: LpmParams, hyper: Hyperparams, task_index: int, n_m: int,
                labeled_fraction: float, rng: np.random.Generator) -> Tuple[TaskDataset, HiddenDraws]:
    """
    Draw one task's dataset from the generative process.

    Labels are kept for round(labeled_fraction * n_m) examples chosen uniformly
    at random (no class balancing); the rest are unlabeled.
    """
    n_m = validate_int_at_least(n_m, 1, "n_m")
    labeled_fraction = validate_fraction(labeled_fraction, "labeled_fraction")
    f_m, d_m = params.for_task(task_index)
    f0 = params.f0

    s = params.mu[:, None] + params.sigma_cholesky() @ rng.standard_normal((f0, n_m))
    noise = np.sqrt(hyper.eta) * rng.standard_normal((f_m.shape[0], n_m))
    x = f_m @ s + d_m[:, None] + noise
    z = params.w @ s + params.b + rng.standard_normal(n_m)
    y = np.where(z >= 0.0, 1, -1).astype(np.int8)

    num_labeled = int(round(labeled_fraction * n_m))
    labeled = rng.choice(n_m, size=num_labeled, replace=False)
    labels = np.zeros(n_m, dtype=np.int8)
    labels[labeled] = y[labeled]

    dataset = TaskDataset(x=x, labels=labels, name=f"task{task_index}")
    return dataset, HiddenDraws(s=s, z=z, y=y)


@dataclass
class GenConfig:
    """
    Inputs of a synthetic experiment.

    With w_nonzeros / transform_density unset the sparse parameters come from
    the Laplacian priors; setting them gives exactly-sparse ground truth.
    """
    hyper: Hyperparams
    task_dims: List[int]
    n_per_task: List[int]
    labeled_fraction: List[float]
    seed: int = 0
    w_nonzeros: Optional[int] = None
    w_magnitude: Tuple[float, float] = (0.5, 1.5)
    transform_density: Optional[float] = None
    bias: float = 0.0
    offset_scale: float = 0.0

    def __post_init__(self):
        sizes = {len(self.task_dims), len(self.n_per_task), len(self.labeled_fraction)}
        if len(sizes) != 1:
            raise ValidationError("task_dims, n_per_task and labeled_fraction must have equal length",
                                  field="tasks")
        validate_int_at_least(len(self.task_dims), 1, "num_tasks")
        for m in range(len(self.task_dims)):
            validate_int_at_least(self.task_dims[m], 1, f"task_dims[{m}]")
            validate_int_at_least(self.n_per_task[m], 1, f"n_per_task[{m}]")
            validate_fraction(self.labeled_fraction[m], f"labeled_fraction[{m}]")

    @property
    def num_tasks(self) -> int:
        return len(self.task_dims)


@dataclass
class SyntheticSample:
    params: LpmParams
    scales: SparsityScales
    datasets: List[TaskDataset] = field(default_factory=list)
    hidden: List[HiddenDraws] = field(default_factory=list)


def sample_params(config: GenConfig) -> Tuple[LpmParams, SparsityScales]:
    """Draw Theta for a GenConfig: mu = 0, Sigma = I, sparse w and F_m."""
    hyper = config.hyper
    f0 = hyper.f0
    rng = substream(config.seed, _CLASSIFIER_STREAM)
    if config.w_nonzeros is None:
        w, u = sample_classifier(hyper, rng)
    else:
        low, high = config.w_magnitude
        w = sample_sparse_classifier(f0, config.w_nonzeros, rng, low, high)
        u = w ** 2

    transforms, taus, offsets = [], [], []
    for m, d_m in enumerate(config.task_dims):
        task_rng = substream(config.seed, _TRANSFORM_STREAM, m)
        if config.transform_density is None:
            f_m, tau = sample_transform(d_m, hyper, task_rng)
        else:
            f_m = sample_sparse_transform(d_m, f0, config.transform_density, task_rng)
            tau = f_m ** 2
        transforms.append(f_m)
        taus.append(tau)
        offset_rng = substream(config.seed, _OFFSET_STREAM, m)
        offsets.append(config.offset_scale * offset_rng.standard_normal(d_m))

    params = LpmParams(mu=np.zeros(f0), sigma=np.eye(f0), b=config.bias, w=w,
                       transforms=tuple(transforms), offsets=tuple(offsets))
    return params, SparsityScales(tau=tuple(taus), u=u)


def generate(config: GenConfig, params: Optional[LpmParams] = None) -> SyntheticSample:
    """
    Sample parameters (unless given) and one dataset per task.

    Identical configurations, seed included, give bit-identical output, and
    task m's draws do not depend on how many tasks follow it.
    """
    if params is None:
        params, scales = sample_params(config)
    else:
        scales = SparsityScales(tau=tuple(np.zeros_like(f) for f in params.transforms),
                                u=np.zeros(params.f0))
    if params.num_tasks != config.num_tasks:
        raise ValidationError(f"params have {params.num_tasks} tasks, config has {config.num_tasks}",
                              field="params")

    sample = SyntheticSample(params=params, scales=scales)
    for m in range(config.num_tasks):
        dataset, hidden = sample_task(params, config.hyper, m, config.n_per_task[m],
                                      config.labeled_fraction[m], substream(config.seed, _DATA_STREAM, m))
        sample.datasets.append(dataset)
        sample.hidden.append(hidden)
    get_logger().debug(f"Generated {config.num_tasks} synthetic tasks (seed={config.seed})")
    return sample
