"""
Tensor helpers.

Tensors are float64 numpy arrays in row-major order; the shape carries the
metadata and ``arr.size`` equals the product of the shape by construction.
"""

from typing import Any

import numpy as np

from diffkernel.errors import NonFiniteError

Tensor = np.ndarray


def as_tensor(value: Any) -> np.ndarray:
    """Convert scalars, lists and arrays to a float64 array"""
    return np.asarray(value, dtype=np.float64)


def frozen(value: Any) -> np.ndarray:
    """Read-only float64 copy, used for model parameters shared across workers"""
    arr = np.array(value, dtype=np.float64, copy=True)
    arr.flags.writeable = False
    return arr


def check_finite(arr: np.ndarray, what: str = "tensor") -> np.ndarray:
    """Raise NonFiniteError when arr holds NaN or Inf"""
    if not np.all(np.isfinite(arr)):
        bad = int(np.size(arr) - np.count_nonzero(np.isfinite(arr)))
        raise NonFiniteError(f"{what}: {bad} non-finite entries")
    return arr


def unit(shape, index: int) -> np.ndarray:
    """Standard basis tensor e_index in row-major order"""
    e = np.zeros(int(np.prod(shape)), dtype=np.float64)
    e[index] = 1.0
    return e.reshape(shape)


def inner(a: np.ndarray, b: np.ndarray) -> float:
    """Euclidean inner product of two equally shaped tensors"""
    return float(np.dot(np.ravel(a), np.ravel(b)))
