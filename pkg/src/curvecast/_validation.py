"""Small input-validation helpers shared across estimators."""

import numpy as np

from .exceptions import LengthMismatch, NonPsdCov


def as_vector(x, name="x", min_len=1, dtype=float):
    x = np.asarray(x, dtype=dtype)
    if x.ndim != 1:
        raise ValueError(f"{name} must be 1-dimensional, got shape {x.shape}")
    if x.size < min_len:
        raise ValueError(f"{name} must have at least {min_len} elements, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite values")
    return x


def as_matrix(x, name="X", dtype=float):
    x = np.asarray(x, dtype=dtype)
    if x.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite values")
    return x


def check_same_length(a, b, name_a="a", name_b="b"):
    if len(a) != len(b):
        raise LengthMismatch(
            f"{name_a} and {name_b} must have equal length ({len(a)} != {len(b)})"
        )


def check_symmetric_psd(m, name="matrix", tol=1e-8):
    """Validate symmetry and positive semidefiniteness; returns the matrix."""
    m = as_matrix(m, name)
    if m.shape[0] != m.shape[1]:
        raise NonPsdCov(f"{name} must be square, got shape {m.shape}")
    scale = max(1.0, float(np.abs(m).max()))
    if np.abs(m - m.T).max() > tol * scale:
        raise NonPsdCov(f"{name} is not symmetric")
    w = np.linalg.eigvalsh(0.5 * (m + m.T))
    if w.min() < -tol * max(scale, w.max() if w.size else 1.0):
        raise NonPsdCov(f"{name} is not positive semidefinite (min eig {w.min():.3e})")
    return m
