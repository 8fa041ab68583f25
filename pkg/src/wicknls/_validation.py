"""Input validation helpers for complex coefficient arrays.

scikit-learn's ``check_array`` rejects complex input, so the estimators in
this package route through these instead.
"""
import numbers

import numpy as np

from .exceptions import ConfigError


def check_coeffs(X, n_modes=None, *, ensure_2d=True, name="X"):
    """Validate a (n_samples, n_modes) complex array of Fourier coefficients.

    A 1-D input is promoted to a single row when ``ensure_2d`` is set.
    """
    X = np.asarray(X)
    if X.dtype.kind not in "biufc":
        raise ValueError(f"{name} must be numeric, got dtype {X.dtype}")
    X = X.astype(np.complex128, copy=False)
    if ensure_2d and X.ndim == 1:
        X = X[None, :]
    if ensure_2d and X.ndim != 2:
        raise ValueError(f"{name} must be 2-D (n_samples, n_modes), got shape {X.shape}")
    if n_modes is not None and X.shape[-1] != n_modes:
        raise ValueError(f"{name} has {X.shape[-1]} modes, lattice has {n_modes}")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains NaN or Inf")
    return X


def check_positive(value, name, *, strict=True, integer=False):
    if integer and not isinstance(value, numbers.Integral):
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    if not isinstance(value, numbers.Real) or not np.isfinite(value):
        raise ConfigError(f"{name} must be a finite real, got {value!r}")
    if (strict and value <= 0) or (not strict and value < 0):
        raise ConfigError(f"{name} must be {'>' if strict else '>='} 0, got {value!r}")
    return value


def check_random_state(seed):
    """Turn ``seed`` into a ``np.random.Generator``."""
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None or isinstance(seed, (numbers.Integral, np.random.SeedSequence)):
        return np.random.default_rng(seed)
    raise ValueError(f"{seed!r} cannot be used to seed a Generator")


def check_is_fitted(estimator, attribute):
    from sklearn.exceptions import NotFittedError

    if not hasattr(estimator, attribute):
        raise NotFittedError(
            f"This {type(estimator).__name__} instance is not fitted yet; call 'fit' first."
        )
