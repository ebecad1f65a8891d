"""Input validation helpers shared by the public API."""

import numpy as np

from .errors import NonFinite


def check_vector(value, size, name="array"):
    """Return ``value`` as a 1-D float array of length ``size``.

    Raises
    ------
    ValueError
        If the shape does not match.
    NonFinite
        If any entry is NaN or infinite.
    """
    arr = np.asarray(value, dtype=float)
    if arr.shape != (size,):
        raise ValueError(f"{name} must have shape ({size},), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFinite(f"{name} contains non-finite entries: {arr}")
    return arr


def check_matrix(value, shape, name="matrix"):
    arr = np.asarray(value, dtype=float)
    if arr.shape != tuple(shape):
        raise ValueError(f"{name} must have shape {tuple(shape)}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFinite(f"{name} contains non-finite entries")
    return arr


def check_positive(value, name):
    value = float(value)
    if not np.isfinite(value) or value <= 0.0:
        raise ValueError(f"{name} must be strictly positive, got {value}")
    return value


def check_nonnegative(value, name):
    value = float(value)
    if not np.isfinite(value) or value < 0.0:
        raise ValueError(f"{name} must be non-negative, got {value}")
    return value


def is_psd(matrix, tol=1e-9):
    """True when ``matrix`` is symmetric with eigenvalues >= ``-tol``."""
    matrix = np.asarray(matrix, dtype=float)
    if not np.allclose(matrix, matrix.T, rtol=0.0, atol=1e-12):
        return False
    return bool(np.min(np.linalg.eigvalsh(matrix)) >= -tol)
