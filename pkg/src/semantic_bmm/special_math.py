"""Scalar special functions and log-domain reductions.

``ln_gamma`` and ``digamma`` accept scalars or arrays. Scalars go through the
standard library / scipy directly; arrays are evaluated elementwise with
``scipy.special``. Both reject non-positive and non-finite arguments instead of
returning ``inf``/``nan`` the way the underlying routines do.
"""

from __future__ import annotations

import math
from typing import Iterable, Union

import numpy as np
from scipy import special

ArrayLike = Union[float, Iterable[float], np.ndarray]

NEG_INF = -math.inf


class DomainError(ValueError):
    """Argument outside the domain of a special function."""


def _check_positive(x: np.ndarray, name: str) -> None:
    if not np.all(np.isfinite(x)):
        raise DomainError(f"{name} requires finite arguments")
    if np.any(x <= 0):
        raise DomainError(f"{name} requires x > 0")


def ln_gamma(x: ArrayLike):
    """Natural log of the gamma function for x > 0."""
    if np.isscalar(x):
        xf = float(x)
        if not math.isfinite(xf) or xf <= 0:
            raise DomainError("ln_gamma requires finite x > 0")
        return math.lgamma(xf)
    arr = np.asarray(x, dtype=float)
    _check_positive(arr, "ln_gamma")
    return special.gammaln(arr)


def digamma(x: ArrayLike):
    """Logarithmic derivative of the gamma function for x > 0."""
    if np.isscalar(x):
        xf = float(x)
        if not math.isfinite(xf) or xf <= 0:
            raise DomainError("digamma requires finite x > 0")
        return float(special.digamma(xf))
    arr = np.asarray(x, dtype=float)
    _check_positive(arr, "digamma")
    return special.digamma(arr)


def log_sum_exp(values: ArrayLike, axis: int | None = None):
    """Compute ``log(sum(exp(values)))`` with a max shift.

    All ``-inf`` inputs give ``-inf`` (no warnings, no nan). ``+inf`` anywhere
    gives ``+inf``.
    """
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("log_sum_exp of an empty sequence")
    if np.any(np.isnan(v)):
        raise ValueError("log_sum_exp got nan")
    vmax = np.max(v, axis=axis, keepdims=True)
    finite_max = np.where(np.isfinite(vmax), vmax, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(v - finite_max), axis=axis, keepdims=True))
    out = out + finite_max
    # exp(-inf - 0) = 0 -> log 0 = -inf already; +inf max propagates here
    out = np.where(np.isposinf(vmax), np.inf, out)
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)
