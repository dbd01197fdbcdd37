"""Input validation helpers shared by the public functions and estimators."""
from __future__ import annotations

import numbers

import numpy as np


def check_binary_mask(mask, name="mask") -> np.ndarray:
    """Return ``mask`` as a 2-D boolean array, rejecting anything non-binary."""
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must be at least 1x1, got shape {arr.shape}")
    if arr.dtype == bool:
        return arr
    if not np.issubdtype(arr.dtype, np.integer) and not np.issubdtype(arr.dtype, np.floating):
        raise TypeError(f"{name} has unsupported dtype {arr.dtype}")
    if not np.isin(arr, (0, 1)).all():
        raise ValueError(f"{name} must only contain 0/1 values; binarize probabilities first")
    return arr.astype(bool)


def check_label_mask(labels, name="labels") -> np.ndarray:
    """Return ``labels`` as a 2-D array of non-negative integer labels.

    Boolean arrays are accepted as they are and read as labels 0 and 1.
    """
    arr = np.asarray(labels)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.dtype == bool:
        return arr
    if not np.issubdtype(arr.dtype, np.integer):
        raise TypeError(f"{name} must hold integer labels, got {arr.dtype}")
    if arr.size and arr.min() < 0:
        raise ValueError(f"{name} labels must be non-negative")
    return arr


def check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")


def check_fraction(value, name, *, low=0.0, high=1.0, high_open=False) -> float:
    if not isinstance(value, numbers.Real) or isinstance(value, bool):
        raise TypeError(f"{name} must be a real number, got {type(value).__name__}")
    value = float(value)
    ok = low <= value < high if high_open else low <= value <= high
    if not ok:
        bracket = ")" if high_open else "]"
        raise ValueError(f"{name} must lie in [{low}, {high}{bracket}, got {value}")
    return value


def check_choice(value, name, choices) -> str:
    if value not in choices:
        raise ValueError(f"{name} must be one of {sorted(choices)}, got {value!r}")
    return value
