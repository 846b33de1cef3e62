#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Domain types for the latent probit model (LPM).

Hyperparams holds the fixed learning inputs, LpmParams the parameter set
{mu, Sigma, b, w} plus one (F_m, d_m) pair per task, and TaskDataset one
task's features with a partial labeling. All three are frozen after
construction; their arrays are marked read-only.

The module also owns the parameter file format (see save_params).
"""

import json
import math
from dataclasses import dataclass, field, InitVar, replace
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg

from .exceptions import ParseError, UnsupportedVersionError, ValidationError
from .utils import validate_int_at_least, validate_nonnegative, validate_positive


PARAMS_FORMAT = "latentprobit-params"
PARAMS_VERSION = 1


def _frozen(array, ndim: int, name: str) -> np.ndarray:
    array = np.array(array, dtype=np.float64, copy=True)
    if array.ndim != ndim:
        raise ValidationError(f"expected a {ndim}-d array, got shape {array.shape}", field=name)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class Hyperparams:
    """
    Fixed inputs to learning.

    gamma and lam are the Laplacian rates of the transform entries and the
    classifier weights, eta the observation noise variance and f0 the latent
    dimensionality. alpha = eta * sqrt(gamma) and vartheta = sqrt(lam) are the
    regularizers that appear in the M-step. A zero rate is a flat prior.
    Use from_rates or from_regularizers rather than the raw constructor.
    """
    gamma: float
    lam: float
    eta: float
    f0: int
    alpha: float
    vartheta: float

    def __post_init__(self):
        validate_positive(self.eta, "eta")
        validate_int_at_least(self.f0, 1, "f0")
        validate_nonnegative(self.gamma, "gamma", allow_inf=True)
        validate_nonnegative(self.lam, "lam", allow_inf=True)
        validate_nonnegative(self.alpha, "alpha", allow_inf=True)
        validate_nonnegative(self.vartheta, "vartheta", allow_inf=True)
        if not math.isclose(self.alpha, self.eta * math.sqrt(self.gamma), rel_tol=1e-12, abs_tol=0.0):
            raise ValidationError("alpha must equal eta * sqrt(gamma)", field="alpha")
        if not math.isclose(self.vartheta, math.sqrt(self.lam), rel_tol=1e-12, abs_tol=0.0):
            raise ValidationError("vartheta must equal sqrt(lam)", field="vartheta")

    @classmethod
    def from_rates(cls, gamma: float, lam: float, eta: float, f0: int) -> "Hyperparams":
        """Build from the prior rates (gamma, lam)."""
        gamma = validate_nonnegative(gamma, "gamma", allow_inf=True)
        lam = validate_nonnegative(lam, "lam", allow_inf=True)
        eta = validate_positive(eta, "eta")
        return cls(gamma=gamma, lam=lam, eta=eta, f0=int(f0),
                   alpha=eta * math.sqrt(gamma), vartheta=math.sqrt(lam))

    @classmethod
    def from_regularizers(cls, alpha: float, vartheta: float, eta: float, f0: int) -> "Hyperparams":
        """Build from the M-step regularizers (alpha, vartheta), back-solving the rates."""
        alpha = validate_nonnegative(alpha, "alpha", allow_inf=True)
        vartheta = validate_nonnegative(vartheta, "vartheta", allow_inf=True)
        eta = validate_positive(eta, "eta")
        return cls(gamma=(alpha / eta) ** 2, lam=vartheta ** 2, eta=eta, f0=int(f0),
                   alpha=alpha, vartheta=vartheta)

    def with_regularizers(self, alpha: float, vartheta: float) -> "Hyperparams":
        return Hyperparams.from_regularizers(alpha, vartheta, self.eta, self.f0)

    def with_f0(self, f0: int) -> "Hyperparams":
        return replace(self, f0=int(f0))


@dataclass(frozen=True, eq=False)
class LpmParams:
    """
    The full parameter set Theta.

    transforms[m] is F_m (d_m x f0) and offsets[m] is d_m. With strict=True
    (the default) construction fails on any invariant violation, including a
    covariance that is not positive definite.
    """
    mu: np.ndarray
    sigma: np.ndarray
    b: float
    w: np.ndarray
    transforms: Tuple[np.ndarray, ...]
    offsets: Tuple[np.ndarray, ...]
    strict: InitVar[bool] = True

    def __post_init__(self, strict: bool):
        object.__setattr__(self, "mu", _frozen(self.mu, 1, "mu"))
        object.__setattr__(self, "sigma", _frozen(self.sigma, 2, "sigma"))
        object.__setattr__(self, "w", _frozen(self.w, 1, "w"))
        object.__setattr__(self, "b", float(self.b))
        object.__setattr__(self, "transforms",
                           tuple(_frozen(f, 2, f"transforms[{m}]") for m, f in enumerate(self.transforms)))
        object.__setattr__(self, "offsets",
                           tuple(_frozen(d, 1, f"offsets[{m}]") for m, d in enumerate(self.offsets)))
        if strict:
            problems = validate(self)
            if problems:
                raise ValidationError("; ".join(problems), field="params")

    @property
    def f0(self) -> int:
        return self.mu.shape[0]

    @property
    def num_tasks(self) -> int:
        return len(self.transforms)

    @property
    def task_dims(self) -> List[int]:
        return [f.shape[0] for f in self.transforms]

    def sigma_cholesky(self) -> np.ndarray:
        """Lower Cholesky factor of sigma."""
        return linalg.cholesky(self.sigma, lower=True)

    def sigma_inverse(self) -> np.ndarray:
        factor = linalg.cho_factor(self.sigma, lower=True)
        return linalg.cho_solve(factor, np.eye(self.f0))

    def replace(self, **changes) -> "LpmParams":
        return replace(self, **changes)

    def for_task(self, task_index: int) -> Tuple[np.ndarray, np.ndarray]:
        """(F_m, d_m) for one task."""
        if not 0 <= task_index < self.num_tasks:
            raise ValidationError(f"task index {task_index} out of range [0, {self.num_tasks})",
                                  field="task_index")
        return self.transforms[task_index], self.offsets[task_index]

    def equals(self, other: "LpmParams") -> bool:
        """Bit-exact equality of every parameter block."""
        if not isinstance(other, LpmParams) or self.num_tasks != other.num_tasks:
            return False
        same = (np.array_equal(self.mu, other.mu) and np.array_equal(self.sigma, other.sigma)
                and np.array_equal(self.w, other.w)
                and np.float64(self.b).tobytes() == np.float64(other.b).tobytes())
        return same and all(
            np.array_equal(a, b) for a, b in zip(self.transforms + self.offsets,
                                                 other.transforms + other.offsets))


@dataclass(frozen=True, eq=False)
class TaskDataset:
    """
    One task's observed features (d_m x n_m, one column per example) and a
    partial labeling: labels[i] is +1 or -1 for i in L_m and 0 for i in U_m.
    """
    x: np.ndarray
    labels: np.ndarray
    name: str = ""

    def __post_init__(self):
        x = _frozen(self.x, 2, "x")
        if not np.all(np.isfinite(x)):
            raise ValidationError("features contain non-finite entries", field="x")
        labels = np.array(self.labels, copy=True)
        if labels.shape != (x.shape[1],):
            raise ValidationError(f"expected {x.shape[1]} labels, got shape {labels.shape}", field="labels")
        if not np.all(np.isin(labels, (-1, 0, 1))):
            raise ValidationError("labels must be +1, -1 or 0 (unlabeled)", field="labels")
        labels = labels.astype(np.int8)
        labels.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_optional_labels(cls, x, labels: Sequence[Optional[int]], name: str = "") -> "TaskDataset":
        """Build from a per-example list where None marks an unlabeled example."""
        coded = [0 if y is None else int(y) for y in labels]
        if any(y == 0 for y, raw in zip(coded, labels) if raw is not None):
            raise ValidationError("a present label must be +1 or -1", field="labels")
        return cls(x=x, labels=np.asarray(coded, dtype=np.int8), name=name)

    @property
    def d(self) -> int:
        return self.x.shape[0]

    @property
    def n(self) -> int:
        return self.x.shape[1]

    @property
    def labeled_mask(self) -> np.ndarray:
        return self.labels != 0

    @property
    def labeled_index(self) -> np.ndarray:
        return np.flatnonzero(self.labels != 0)

    @property
    def unlabeled_index(self) -> np.ndarray:
        return np.flatnonzero(self.labels == 0)

    @property
    def num_labeled(self) -> int:
        return int(np.count_nonzero(self.labels))

    def optional_labels(self) -> List[Optional[int]]:
        return [None if y == 0 else int(y) for y in self.labels]

    def subset(self, columns: Sequence[int]) -> "TaskDataset":
        columns = np.asarray(columns, dtype=np.intp)
        return TaskDataset(x=self.x[:, columns], labels=self.labels[columns], name=self.name)

    def with_labels(self, labels) -> "TaskDataset":
        return TaskDataset(x=self.x, labels=labels, name=self.name)

    def hide_labels(self, columns: Sequence[int]) -> "TaskDataset":
        """Copy with the given examples moved from L_m to U_m."""
        labels = np.array(self.labels, copy=True)
        labels[np.asarray(columns, dtype=np.intp)] = 0
        return self.with_labels(labels)


@dataclass(frozen=True, eq=False)
class SparsityScales:
    """Per-entry mixing variances of the Laplacian hierarchy (sampler only)."""
    tau: Tuple[np.ndarray, ...] = field(default_factory=tuple)
    u: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        object.__setattr__(self, "u", _frozen(self.u, 1, "u"))
        object.__setattr__(self, "tau", tuple(_frozen(t, 2, f"tau[{m}]") for m, t in enumerate(self.tau)))
        if np.any(self.u < 0) or any(np.any(t < 0) for t in self.tau):
            raise ValidationError("mixing variances must be nonnegative", field="scales")


def validate(params: LpmParams, data: Optional[Sequence[TaskDataset]] = None) -> List[str]:
    """
    Check every parameter invariant and the dimensions shared with data.

    Returns:
        List of violated invariants, empty when everything is consistent
    """
    problems = []
    f0 = params.mu.shape[0] if params.mu.ndim == 1 else -1

    if f0 < 1:
        problems.append("mu must be a nonempty vector")
    if params.sigma.shape != (f0, f0):
        problems.append(f"sigma shape {params.sigma.shape} does not match f0={f0}")
    else:
        if not np.all(np.isfinite(params.sigma)):
            problems.append("sigma has non-finite entries")
        elif not np.allclose(params.sigma, params.sigma.T, rtol=1e-12, atol=1e-14):
            problems.append("sigma not symmetric")
        else:
            try:
                linalg.cholesky(params.sigma, lower=True)
            except linalg.LinAlgError:
                problems.append("sigma not PD")
    if params.w.shape != (f0,):
        problems.append(f"w length {params.w.shape[0]} does not match f0={f0}")
    if not math.isfinite(params.b):
        problems.append("b is not finite")
    for block, name in ((params.mu, "mu"), (params.w, "w")):
        if not np.all(np.isfinite(block)):
            problems.append(f"{name} has non-finite entries")

    if len(params.transforms) != len(params.offsets):
        problems.append(f"{len(params.transforms)} transforms but {len(params.offsets)} offsets")
    if not params.transforms:
        problems.append("at least one task transform is required")
    for m, (f_m, d_m) in enumerate(zip(params.transforms, params.offsets)):
        if f_m.shape[1] != f0:
            problems.append(f"transform column mismatch: task {m} has {f_m.shape[1]} columns, expected {f0}")
        if d_m.shape[0] != f_m.shape[0]:
            problems.append(f"offset length mismatch: task {m} has {d_m.shape[0]} entries, "
                            f"transform has {f_m.shape[0]} rows")
        if not (np.all(np.isfinite(f_m)) and np.all(np.isfinite(d_m))):
            problems.append(f"task {m} transform or offset has non-finite entries")

    if data is not None:
        if len(data) != len(params.transforms):
            problems.append(f"{len(data)} datasets but {len(params.transforms)} task transforms")
        for m, (task, f_m) in enumerate(zip(data, params.transforms)):
            if task.d != f_m.shape[0]:
                problems.append(f"task {m} has {task.d} features but its transform has {f_m.shape[0]} rows")
    return problems


def _encode_array(array: np.ndarray) -> dict:
    return {"shape": list(array.shape), "data": [float(v) for v in array.ravel()]}


def save_params(params: LpmParams) -> bytes:
    """
    Serialize parameters to the versioned parameter file format.

    The format is UTF-8 JSON. Every matrix is stored as
    {"shape": [rows, cols], "data": [row-major values]}; floats are written
    with their shortest round-trip representation, so load_params(save_params(p))
    reproduces p bit for bit. Top-level keys: format, version, f0, num_tasks,
    mu, sigma, b, w, tasks (each with d_m, transform, offset).
    """
    document = {
        "format": PARAMS_FORMAT,
        "version": PARAMS_VERSION,
        "f0": params.f0,
        "num_tasks": params.num_tasks,
        "mu": _encode_array(params.mu),
        "sigma": _encode_array(params.sigma),
        "b": float(params.b),
        "w": _encode_array(params.w),
        "tasks": [
            {"d_m": int(f_m.shape[0]), "transform": _encode_array(f_m), "offset": _encode_array(d_m)}
            for f_m, d_m in zip(params.transforms, params.offsets)
        ],
    }
    return json.dumps(document, indent=1, allow_nan=False).encode("utf-8")


def _decode_array(document: dict, key: str, field_name: str, shape: Tuple[int, ...]) -> np.ndarray:
    if not isinstance(document, dict) or key not in document:
        raise ParseError("missing field", field=field_name)
    entry = document[key]
    if not isinstance(entry, dict) or "shape" not in entry or "data" not in entry:
        raise ParseError("expected an object with shape and data", field=field_name)
    if list(entry["shape"]) != list(shape):
        raise ParseError(f"declared shape {entry['shape']} does not match expected {list(shape)}",
                         field=field_name)
    values = entry["data"]
    if not isinstance(values, list) or len(values) != int(np.prod(shape)):
        raise ParseError(f"expected {int(np.prod(shape))} values", field=field_name)
    if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in values):
        raise ParseError("non-numeric value", field=field_name)
    return np.asarray(values, dtype=np.float64).reshape(shape)


def _require_int(document: dict, key: str, field_name: str, minimum: int) -> int:
    value = document.get(key)
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ParseError(f"expected an integer >= {minimum}", field=field_name)
    return value


def load_params(stream: bytes) -> LpmParams:
    """
    Decode a parameter file produced by save_params.

    Raises:
        ParseError: Malformed stream, naming the offending field
        UnsupportedVersionError: Unknown format version
    """
    try:
        document = json.loads(bytes(stream).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ParseError(f"not a valid parameter document ({e})", field="document")
    if not isinstance(document, dict):
        raise ParseError("top level must be an object", field="document")
    if document.get("format") != PARAMS_FORMAT:
        raise ParseError(f"expected format {PARAMS_FORMAT!r}", field="format")
    if document.get("version") != PARAMS_VERSION:
        raise UnsupportedVersionError(document.get("version"), supported=PARAMS_VERSION)

    f0 = _require_int(document, "f0", "f0", 1)
    num_tasks = _require_int(document, "num_tasks", "num_tasks", 1)
    mu = _decode_array(document, "mu", "mu", (f0,))
    sigma = _decode_array(document, "sigma", "sigma", (f0, f0))
    w = _decode_array(document, "w", "w", (f0,))
    b = document.get("b")
    if isinstance(b, bool) or not isinstance(b, (int, float)):
        raise ParseError("expected a number", field="b")

    tasks = document.get("tasks")
    if not isinstance(tasks, list) or len(tasks) != num_tasks:
        raise ParseError(f"expected {num_tasks} task entries", field="tasks")
    transforms, offsets = [], []
    for m, task in enumerate(tasks):
        if not isinstance(task, dict):
            raise ParseError("expected an object", field=f"tasks[{m}]")
        d_m = _require_int(task, "d_m", f"tasks[{m}].d_m", 1)
        transforms.append(_decode_array(task, "transform", f"tasks[{m}].transform", (d_m, f0)))
        offsets.append(_decode_array(task, "offset", f"tasks[{m}].offset", (d_m,)))

    try:
        return LpmParams(mu=mu, sigma=sigma, b=float(b), w=w,
                         transforms=tuple(transforms), offsets=tuple(offsets))
    except ValidationError as e:
        raise ParseError(e.message, field="params")


def write_params(params: LpmParams, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(save_params(params))
    return path


def read_params(path: Union[str, Path]) -> LpmParams:
    return load_params(Path(path).read_bytes())
