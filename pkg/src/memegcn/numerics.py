"""Dense float64 matrix helpers, activations and finite-difference checks.

Matrices are plain 2-D ``numpy.ndarray`` objects of dtype float64. Every
function here is pure and returns a new array.
"""

from typing import Callable

import numpy as np

from .errors import NumericError, ParameterError, ShapeError

DEFAULT_SLOPE = 0.2


def as_matrix(x) -> np.ndarray:
    """Coerce ``x`` to a 2-D float64 array. Scalars become 1x1, vectors 1xN."""
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 0:
        return a.reshape(1, 1)
    if a.ndim == 1:
        return a.reshape(1, -1)
    if a.ndim != 2:
        raise ShapeError(f"expected at most 2 dimensions, got shape {a.shape}")
    return a


def matmul(a, b) -> np.ndarray:
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape[0]}x{a.shape[1]} by {b.shape[0]}x{b.shape[1]}")
    return a @ b


def transpose(a) -> np.ndarray:
    return np.ascontiguousarray(as_matrix(a).T)


def sigmoid(x) -> np.ndarray:
    """Elementwise logistic function in the overflow-free two-branch form.

    Only ``exp(-|x|)`` is ever evaluated, so large logits of either sign are
    safe. Works on arrays of any shape.
    """
    x = np.asarray(x, dtype=np.float64)
    z = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))


def log_sigmoid(x) -> np.ndarray:
    """``log(sigmoid(x))`` without cancellation."""
    x = np.asarray(x, dtype=np.float64)
    return -np.logaddexp(0.0, -x)


def leaky_relu(x, slope: float = DEFAULT_SLOPE) -> np.ndarray:
    if slope < 0:
        raise ParameterError(f"leaky_relu slope must be >= 0, got {slope}")
    x = np.asarray(x, dtype=np.float64)
    return np.where(x >= 0, x, slope * x)


def leaky_relu_grad(x, slope: float = DEFAULT_SLOPE) -> np.ndarray:
    """Derivative of :func:`leaky_relu` w.r.t. its input (1 taken at x == 0)."""
    x = np.asarray(x, dtype=np.float64)
    return np.where(x >= 0, 1.0, slope)


def grad_check(
    f: Callable[[np.ndarray], float],
    theta,
    analytic_grad,
    step: float = 1e-6,
) -> float:
    """Compare an analytic gradient with central differences.

    Args:
        f: scalar function of an array shaped like ``theta``.
        theta: point at which to check. Not modified.
        analytic_grad: claimed gradient of ``f`` at ``theta``.
        step: finite-difference step, applied per coordinate.

    Returns:
        max over coordinates of ``|cd - g| / max(1e-12, |cd| + |g|)``.
    """
    if step <= 0:
        raise ParameterError(f"step must be positive, got {step}")
    theta = np.array(theta, dtype=np.float64)
    grad = np.asarray(analytic_grad, dtype=np.float64)
    if grad.shape != theta.shape:
        raise ShapeError(f"gradient shape {grad.shape} does not match parameter shape {theta.shape}")

    flat = theta.reshape(-1)
    worst = 0.0
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + step
        f_plus = float(f(theta))
        flat[k] = orig - step
        f_minus = float(f(theta))
        flat[k] = orig
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise NumericError(f"non-finite function value while perturbing coordinate {k}")
        cd = (f_plus - f_minus) / (2.0 * step)
        g = grad.reshape(-1)[k]
        err = abs(cd - g) / max(1e-12, abs(cd) + abs(g))
        worst = max(worst, err)
    return worst
