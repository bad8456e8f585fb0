"""Dense numeric primitives shared by every other module.

Matrices and vectors are float64 numpy arrays (2-D and 1-D). All functions here are pure.
"""

from typing import Callable

import numpy as np

from intentspace.errors import NumericError, ShapeError

DTYPE = np.float64


def as_vector(v) -> np.ndarray:
    """Return v as a 1-D float64 array."""
    arr = np.asarray(v, dtype=DTYPE)
    if arr.ndim != 1:
        raise ShapeError(f'expected a vector, got shape {arr.shape}')
    return arr


def as_matrix(m) -> np.ndarray:
    """Return m as a 2-D float64 array."""
    arr = np.asarray(m, dtype=DTYPE)
    if arr.ndim != 2:
        raise ShapeError(f'expected a matrix, got shape {arr.shape}')
    return arr


def check_finite(arr: np.ndarray, what: str = 'value') -> np.ndarray:
    """Raise NumericError if arr contains NaN or Inf."""
    if not np.all(np.isfinite(arr)):
        raise NumericError(f'non-finite {what}')
    return arr


def make_rng(seed: int) -> np.random.Generator:
    """Return the seeded generator used for all randomness (PCG64)."""
    return np.random.default_rng(seed)


def matvec(m, v) -> np.ndarray:
    """Matrix-vector product."""
    m = as_matrix(m)
    v = as_vector(v)
    if m.shape[1] != v.shape[0]:
        raise ShapeError(f'cannot multiply {m.shape[0]}x{m.shape[1]} matrix by '
                         f'{v.shape[0]}-vector')
    return m @ v


def sigmoid(x) -> np.ndarray:
    """Logistic sigmoid, evaluated without overflow for large |x|."""
    x = np.asarray(x, dtype=DTYPE)
    # exp of a non-positive number never overflows
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def elementwise_sigmoid(v) -> np.ndarray:
    return sigmoid(as_vector(v))


def softmax(v, axis: int = -1) -> np.ndarray:
    """Softmax with max-subtraction."""
    v = np.asarray(v, dtype=DTYPE)
    if v.size == 0:
        raise ShapeError('softmax of an empty vector')
    z = np.exp(v - np.max(v, axis=axis, keepdims=True))
    return z / np.sum(z, axis=axis, keepdims=True)


def softmax_backward(probs: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """Map a gradient w.r.t. softmax outputs onto its inputs (last axis)."""
    return probs * (grad - np.sum(grad * probs, axis=-1, keepdims=True))


def central_difference(f: Callable[[np.ndarray], float], point, eps: float) -> np.ndarray:
    """Numerical gradient of scalar f at point by central differences."""
    x = np.array(point, dtype=DTYPE)
    grad = np.zeros_like(x)
    for i in range(x.size):
        saved = x.flat[i]
        x.flat[i] = saved + eps
        plus = f(x)
        x.flat[i] = saved - eps
        minus = f(x)
        x.flat[i] = saved
        if not (np.isfinite(plus) and np.isfinite(minus)):
            raise NumericError(f'function is not finite near parameter {i}')
        grad.flat[i] = (plus - minus) / (2.0 * eps)
    return grad


def grad_check(f: Callable[[np.ndarray], float], point, analytic, eps: float = 1e-5) -> float:
    """Compare an analytic gradient with central differences.

    Args:
        f: scalar function of a parameter block
        point: the parameter block at which to check
        analytic: the analytic gradient of f at point
        eps: finite-difference step

    Returns:
        max over parameters of |analytic - numeric| / max(1, |numeric|)
    """
    if eps <= 0:
        raise ValueError('eps must be positive')
    numeric = central_difference(f, point, eps)
    analytic = np.asarray(analytic, dtype=DTYPE)
    if analytic.shape != numeric.shape:
        raise ShapeError(f'analytic gradient shape {analytic.shape} != {numeric.shape}')
    if numeric.size == 0:
        return 0.0
    return float(np.max(np.abs(analytic - numeric) / np.maximum(1.0, np.abs(numeric))))
