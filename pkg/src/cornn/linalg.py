"""Dense vector/matrix helpers and the infinity norms used by the bounds.

Vectors and matrices are plain float64 numpy arrays; this module only adds
shape checking and the norm definitions the stability checks rely on.
"""

import numpy as np

from .errors import NumericalError, ShapeError


def as_vector(data, name="vector"):
    v = np.asarray(data, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ShapeError(f"{name} must be a non-empty 1-D array, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise NumericalError(f"{name} has non-finite entries")
    return v


def as_matrix(data, name="matrix"):
    M = np.asarray(data, dtype=np.float64)
    if M.ndim != 2 or M.size == 0:
        raise ShapeError(f"{name} must be a non-empty 2-D array, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise NumericalError(f"{name} has non-finite entries")
    return M


def matvec(M, v):
    M = np.asarray(M, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if M.ndim != 2 or v.ndim != 1 or M.shape[1] != v.shape[0]:
        raise ShapeError(f"cannot multiply {M.shape} by {v.shape}")
    return M @ v


def inf_norm(M):
    """Maximum absolute row sum."""
    M = np.atleast_2d(np.asarray(M, dtype=np.float64))
    if M.size == 0:
        return 0.0
    return float(np.max(np.sum(np.abs(M), axis=1)))


def inf_norm_vec(v):
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0:
        return 0.0
    return float(np.max(np.abs(v)))


def one_norm(M):
    """Maximum absolute column sum."""
    return inf_norm(np.asarray(M, dtype=np.float64).T)
