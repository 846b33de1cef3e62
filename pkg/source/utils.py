#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Utility functions for latentprobit.
Scalar validation, deterministic random substreams and small file helpers.
"""

import math
import re
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .exceptions import ValidationError

Number = Union[int, float]


def validate_positive(value: Number, field: str) -> float:
    """
    Validate a strictly positive finite real.

    Raises:
        ValidationError: If value is not > 0 or not finite
    """
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise ValidationError(f"expected a number, got {value!r}", field=field)
    if not math.isfinite(value) or value <= 0.0:
        raise ValidationError(f"must be a positive finite number, got {value}", field=field)
    return value


def validate_nonnegative(value: Number, field: str, allow_inf: bool = False) -> float:
    """Validate a real >= 0 (optionally +inf, used for rate limits)."""
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise ValidationError(f"expected a number, got {value!r}", field=field)
    if math.isnan(value) or value < 0.0 or (math.isinf(value) and not allow_inf):
        raise ValidationError(f"must be a nonnegative number, got {value}", field=field)
    return value


def validate_fraction(value: Number, field: str) -> float:
    """Validate a real in [0, 1]."""
    value = validate_nonnegative(value, field)
    if value > 1.0:
        raise ValidationError(f"must lie in [0, 1], got {value}", field=field)
    return value


def validate_int_at_least(value, minimum: int, field: str) -> int:
    """Validate an integer >= minimum."""
    try:
        integral = not isinstance(value, bool) and int(value) == value
    except (TypeError, ValueError, OverflowError):
        integral = False
    if not integral:
        raise ValidationError(f"expected an integer, got {value!r}", field=field)
    value = int(value)
    if value < minimum:
        raise ValidationError(f"must be >= {minimum}, got {value}", field=field)
    return value


def validate_label_vector(labels: Sequence[int], field: str = "labels") -> np.ndarray:
    """Validate a {+1, -1} label vector and return it as int8."""
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise ValidationError("labels must be one-dimensional", field=field)
    if not np.all(np.isin(labels, (-1, 1))):
        raise ValidationError("labels must be +1 or -1", field=field)
    return labels.astype(np.int8)


def substream(seed: int, *key: int) -> np.random.Generator:
    """
    Deterministic random generator for a (seed, key...) pair.

    Streams with different keys are independent, and adding a key never
    changes the draws of another key.
    """
    sequence = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=tuple(int(k) for k in key))
    return np.random.default_rng(sequence)


def ensure_directory(path: Union[str, Path]) -> Path:
    """
    Create a directory (and parents) if needed and return it as a Path.

    Raises:
        ValidationError: If the directory cannot be created
    """
    path = Path(path).expanduser()
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ValidationError(f"cannot create output directory {path}: {e}", field="out")
    return path


def sanitize_filename(filename: str) -> str:
    """
    Sanitize a filename by removing characters that are invalid on common
    filesystems.
    """
    filename = re.sub(r'[<>:"/\\|?*\s]', '_', filename)
    filename = filename.strip('. ')
    if not filename:
        filename = "output"
    return filename
