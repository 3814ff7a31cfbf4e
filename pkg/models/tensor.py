"""
GAN Ensemble Lab - Tensors
Dense float64 arrays are the substrate of every model and gradient.

A tensor is a C-contiguous ``numpy.ndarray`` of dtype float64 with positive
extents. Non-finite entries are never silently accepted: ``check_finite``
turns them into a ``NonFiniteError``.
"""
from typing import Any, Optional, Sequence

import numpy as np

from utils.errors import NonFiniteError, ShapeError

DTYPE = np.float64


def as_tensor(values: Any, name: str = 'tensor', ndim: Optional[int] = None) -> np.ndarray:
    """
    Convert input to a float64 C-contiguous array.

    Args:
        values: Array-like input
        name: Name used in error messages
        ndim: Required number of dimensions, if any

    Returns:
        float64 ndarray
    """
    array = np.ascontiguousarray(values, dtype=DTYPE)
    if ndim is not None and array.ndim != ndim:
        raise ShapeError(f"{name} must be {ndim}-D, got shape {array.shape}")
    return array


def check_finite(array: np.ndarray, name: str = 'tensor') -> np.ndarray:
    """Raise NonFiniteError when any entry is NaN or Inf."""
    if not np.all(np.isfinite(array)):
        bad = int(np.size(array) - np.count_nonzero(np.isfinite(array)))
        raise NonFiniteError(f"{name} contains {bad} non-finite entries",
                             state={'name': name, 'shape': list(np.shape(array)), 'non_finite': bad})
    return array


def is_finite(array: np.ndarray) -> bool:
    """Explicit finiteness check, for callers that branch instead of raising."""
    return bool(np.all(np.isfinite(array)))


def check_width(batch: np.ndarray, width: int, name: str = 'batch') -> None:
    """Ensure a [B x width] batch."""
    if batch.ndim != 2 or batch.shape[1] != width:
        raise ShapeError(f"{name} must have shape [B x {width}], got {batch.shape}")


def zeros(shape: Sequence[int]) -> np.ndarray:
    return np.zeros(tuple(shape), dtype=DTYPE)


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    """Glorot/Xavier uniform initialization for a [fan_in x fan_out] weight."""
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(DTYPE)
