"""Small input checks shared by the estimators and the functional API."""

import numbers

import numpy as np
from sklearn.utils import check_array

MEMBERSHIP_TOL = 1e-9


class DomainError(ValueError):
    """A point lies outside the constraint set beyond tolerance."""


def check_vector(x, dim=None, name="x"):
    """Return ``x`` as a finite 1-d float array, optionally of length ``dim``."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    if dim is not None and arr.shape[0] != dim:
        raise ValueError(f"{name} has dimension {arr.shape[0]}, expected {dim}")
    return arr


def check_matrix(M, shape=None, name="M"):
    arr = check_array(M, dtype=float, ensure_2d=True, ensure_min_samples=1,
                      ensure_min_features=1, input_name=name)
    if shape is not None and arr.shape != tuple(shape):
        raise ValueError(f"{name} has shape {arr.shape}, expected {tuple(shape)}")
    return arr


def check_positive(value, name, strict=True):
    if not isinstance(value, numbers.Real) or not np.isfinite(value):
        raise ValueError(f"{name} must be a finite real number, got {value!r}")
    if strict and value <= 0:
        raise ValueError(f"{name} must be > 0, got {value}")
    if not strict and value < 0:
        raise ValueError(f"{name} must be >= 0, got {value}")
    return float(value)


def check_in_domain(dom, x, tol=MEMBERSHIP_TOL, name="x"):
    """Validate dimension and membership; return the point as an array."""
    arr = check_vector(x, dom.dim, name=name)
    if not dom.contains(arr, tol):
        raise DomainError(f"{name}={arr.tolist()} lies outside the domain")
    return arr
