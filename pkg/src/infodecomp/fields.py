"""Latent fields: shaped (channels, height, width) float64 arrays.

A field is a plain ndarray; these helpers validate the contract at module
boundaries so downstream math can assume 3-D finite float64 input.
"""

from __future__ import annotations

import numpy as np

from .errors import DomainError, ShapeMismatchError

LatentField = np.ndarray


def ensure_field(values, name: str = "field") -> np.ndarray:
    """Validate and return a (C, H, W) float64 field."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 3:
        raise DomainError(f"{name}: expected 3 dims (channels, height, width), got {arr.ndim}")
    if arr.size == 0:
        raise DomainError(f"{name}: empty field")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name}: non-finite values")
    return arr


def ensure_same_shape(a: np.ndarray, b: np.ndarray, name: str) -> None:
    if a.shape != b.shape:
        raise ShapeMismatchError(name, a.shape, b.shape)


def scalar_field(value: float) -> np.ndarray:
    """1x1x1 field holding a single scalar, for 1-D toy models."""
    return np.asarray([[[float(value)]]], dtype=np.float64)
