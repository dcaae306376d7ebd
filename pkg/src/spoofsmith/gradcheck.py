"""Central finite-difference gradient checking.

Used by both the test suite and the built-in verification command. The
error measure is max |ad - fd| / max(|ad|, |fd|, floor): relative for
healthy gradients, absolute near zero so finite-difference noise does not
blow up the quotient.
"""

from __future__ import annotations

import numpy as np

DEFAULT_H = 1e-6
DEFAULT_TOL = 1e-4
_FLOOR = 1e-3


def finite_difference_grad(f, x: np.ndarray, h: float = DEFAULT_H) -> np.ndarray:
    """Central differences of a scalar-valued f at x, elementwise."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * h)
    return grad


def grad_error(autodiff: np.ndarray, fd: np.ndarray, floor: float = _FLOOR) -> float:
    a = np.asarray(autodiff, dtype=np.float64)
    b = np.asarray(fd, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom))


def check_gradient(f, x: np.ndarray, autodiff_grad: np.ndarray,
                   h: float = DEFAULT_H, tol: float = DEFAULT_TOL) -> float:
    """Return the error measure; callers assert it is below tol."""
    fd = finite_difference_grad(f, x, h)
    return grad_error(autodiff_grad, fd)
