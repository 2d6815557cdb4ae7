"""Closed-form posterior pieces for categorical and Gaussian-mixture measurements.

The Gaussian-mixture posterior after one property measurement ``y`` is a
``K``-term mixture: term ``j`` tilts the Dirichlet to ``a + e_j`` and applies the
normal-gamma/Gaussian conjugate update to class ``j`` only. Everything that
involves the per-term normalising constants is kept in the log domain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .distributions import DirichletParams, MapParams, NormalGammaBlock, ParameterError
from .special_math import log_sum_exp

__all__ = [
    "AllSuppressedError",
    "MixturePosteriorTerms",
    "dirichlet_tilt",
    "ng_conjugate_update",
    "categorical_update",
    "mixture_posterior_terms",
    "log_marginal",
]

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


class AllSuppressedError(ArithmeticError):
    """Every mixture term has zero likelihood in floating point."""


def _check_label(c: int, K: int) -> int:
    if isinstance(c, bool) or int(c) != c or not 0 <= c < K:
        raise IndexError(f"class label {c!r} out of range for K={K}")
    return int(c)


def _conjugate_arrays(mu, lam, alpha, beta, y):
    """Elementwise normal-gamma update and log normalising constant.

    Broadcasts over any leading shape; returns ``(log_c, mu*, lam*, alpha*, beta*)``.
    """
    lam_s = lam + 1.0
    mu_s = (lam * mu + y) / lam_s
    alpha_s = alpha + 0.5
    beta_s = beta + lam * (mu - y) ** 2 / (2.0 * lam_s)
    log_c = (
        -_HALF_LOG_2PI
        + 0.5 * (np.log(lam) - np.log(lam_s))
        + gammaln(alpha_s)
        - gammaln(alpha)
        + alpha * np.log(beta)
        - alpha_s * np.log(beta_s)
    )
    return log_c, mu_s, lam_s, alpha_s, beta_s


def dirichlet_tilt(d: DirichletParams, j: int) -> tuple[float, DirichletParams]:
    """``w_j D(w|a) = u_j D(w|a + e_j)`` with ``u_j = a_j / sum(a)``."""
    j = _check_label(j, d.K)
    a_star = d.a.copy()
    a_star[j] += 1.0
    return float(d.a[j] / d.a0), DirichletParams(a_star)


def ng_conjugate_update(b: NormalGammaBlock, y: float) -> tuple[float, NormalGammaBlock]:
    """Scalar Gaussian likelihood times normal-gamma prior.

    Returns ``(log c*, posterior block)`` where ``c*`` is the marginal density
    of ``y`` under the prior block.
    """
    if b.J != 1:
        raise ParameterError(f"expected a scalar block, got J={b.J}")
    y = float(y)
    if not math.isfinite(y):
        raise ValueError("measurement must be finite")
    log_c, mu_s, lam_s, alpha_s, beta_s = _conjugate_arrays(b.mu, b.lam, b.alpha, b.beta, y)
    return float(log_c[0]), NormalGammaBlock(mu_s, lam_s, alpha_s, beta_s)


def categorical_update(p: MapParams, c: int) -> MapParams:
    """Exact update for a class label: ``a_c += 1``; blocks are reused as-is."""
    c = _check_label(c, p.K)
    a = p.a.copy()
    a[c] += 1.0
    return MapParams(a, p.mu, p.lam, p.alpha, p.beta)


@dataclass(frozen=True, eq=False)
class MixturePosteriorTerms:
    """Parameters of the exact ``K``-term posterior after one property measurement.

    Row ``j`` of the starred arrays is class ``j``'s normal-gamma after
    conditioning on ``y``; term ``j`` keeps every other class at its prior.
    ``a_star[j]`` is ``a + e_j``.
    """

    a_star: np.ndarray
    mu_star: np.ndarray
    lam_star: np.ndarray
    alpha_star: np.ndarray
    beta_star: np.ndarray
    log_c_star: np.ndarray
    u: np.ndarray
    log_M: float

    @property
    def K(self) -> int:
        return self.u.shape[0]

    @property
    def log_weights(self) -> np.ndarray:
        """``log(u_j c*_j / M)``: normalised log weight of each term."""
        with np.errstate(divide="ignore"):
            return np.log(self.u) + self.log_c_star - self.log_M

    def responsibilities(self) -> np.ndarray:
        return np.exp(self.log_weights)

    def starred_params(self) -> MapParams:
        """Dirichlet prior ``a`` (recovered from ``a_star``) with every class conditioned."""
        a = self.a_star[0] - np.eye(self.K)[0]
        return MapParams(a, self.mu_star, self.lam_star, self.alpha_star, self.beta_star)


def _check_y(p: MapParams, y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.ndim == 0 or y.shape[-1] != p.J:
        raise ValueError(f"property vector must have length J={p.J}, got shape {y.shape}")
    if not np.all(np.isfinite(y)):
        raise ValueError("property vector must be finite")
    return y


def mixture_posterior_terms(p: MapParams, y) -> MixturePosteriorTerms:
    y = _check_y(p, y)
    if y.ndim != 1:
        raise ValueError("mixture_posterior_terms takes a single property vector")
    log_c, mu_s, lam_s, alpha_s, beta_s = _conjugate_arrays(p.mu, p.lam, p.alpha, p.beta, y)
    # per-dimension constants multiply: (2 pi)^(-J/2) overall
    log_c_star = log_c.sum(axis=1)
    u = p.a / p.a.sum()
    log_M = log_sum_exp(np.log(u) + log_c_star)
    if not math.isfinite(log_M):
        raise AllSuppressedError("measurement has zero likelihood under every class")
    a_star = p.a[None, :] + np.eye(p.K)
    return MixturePosteriorTerms(a_star, mu_s, lam_s, alpha_s, beta_s, log_c_star, u, log_M)


def log_marginal(p: MapParams, y) -> np.ndarray | float:
    """``log M(y) = log sum_j u_j c*_j(y)``, vectorised over leading axes of ``y``."""
    y = _check_y(p, y)
    yb = y[..., None, :]
    log_c, *_ = _conjugate_arrays(p.mu, p.lam, p.alpha, p.beta, yb)
    terms = np.log(p.a / p.a.sum()) + log_c.sum(axis=-1)
    out = log_sum_exp(terms, axis=-1)
    return float(out) if np.ndim(out) == 0 else out
