"""Brute-force ground truth for small problems.

* :class:`ExactMixturePosterior` keeps the exact posterior after ``N`` property
  measurements as a ``K**N``-term mixture of Dirichlet-normal-gammas.
* :func:`mc_moments` estimates posterior moments by self-normalised importance
  sampling from the prior, with delta-method standard errors.
* :func:`quadrature_check_lemma6` integrates the Gaussian x normal-gamma product
  numerically and compares with the closed-form normalising constant.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate, stats

from .conjugate_update import mixture_posterior_terms, ng_conjugate_update
from .distributions import (
    MapParams,
    NormalGammaBlock,
    PosteriorMoments,
    map_moments,
    sample_states,
)
from .special_math import ln_gamma, log_sum_exp

__all__ = [
    "BlowupError",
    "LowESSError",
    "QuadratureError",
    "ExactMixturePosterior",
    "MCMoments",
    "exact_update",
    "exact_moments",
    "mc_moments",
    "quadrature_check_lemma6",
    "dirichlet_tilt_mc",
    "MAX_TERMS",
]

MAX_TERMS = 10**6
_LOG_2PI = math.log(2.0 * math.pi)


class BlowupError(RuntimeError):
    """The exact mixture would exceed ``MAX_TERMS`` components."""


class LowESSError(RuntimeError):
    """Importance sampling degenerated (effective sample size below threshold)."""


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class ExactMixturePosterior:
    """Normalised mixture ``sum_t exp(log_weights[t]) p(Theta; terms[t])``.

    ``log_evidence`` is the log marginal likelihood of all measurements absorbed.
    """

    log_weights: np.ndarray
    terms: tuple[MapParams, ...]
    log_evidence: float = 0.0

    @classmethod
    def from_prior(cls, p: MapParams) -> "ExactMixturePosterior":
        return cls(np.zeros(1), (p,), 0.0)

    def __len__(self) -> int:
        return len(self.terms)


def exact_update(post: ExactMixturePosterior, y) -> ExactMixturePosterior:
    """Condition every component on ``y``; each splits into ``K`` children."""
    K = post.terms[0].K
    if len(post) * K > MAX_TERMS:
        raise BlowupError(f"{len(post) * K} mixture terms exceed the limit of {MAX_TERMS}")
    log_w: list[float] = []
    children: list[MapParams] = []
    for lw, p in zip(post.log_weights, post.terms):
        t = mixture_posterior_terms(p, y)
        for j in range(K):
            mu, lam, alpha, beta = (np.array(x) for x in (p.mu, p.lam, p.alpha, p.beta))
            mu[j], lam[j] = t.mu_star[j], t.lam_star[j]
            alpha[j], beta[j] = t.alpha_star[j], t.beta_star[j]
            children.append(MapParams(t.a_star[j], mu, lam, alpha, beta))
            with np.errstate(divide="ignore"):
                log_w.append(lw + math.log(t.u[j]) + t.log_c_star[j])
    log_w = np.array(log_w)
    log_norm = log_sum_exp(log_w)
    return ExactMixturePosterior(log_w - log_norm, tuple(children), post.log_evidence + log_norm)


def exact_moments(post: ExactMixturePosterior) -> PosteriorMoments:
    """Weight-averaged sufficient moments of the components."""
    w = np.exp(post.log_weights)
    w = w / w.sum()
    acc = None
    for wt, p in zip(w, post.terms):
        vals = [wt * v for _, v in map_moments(p).items()]
        acc = vals if acc is None else [s + v for s, v in zip(acc, vals)]
    return PosteriorMoments(*acc)


@dataclass(frozen=True)
class MCMoments:
    mean: PosteriorMoments
    se: PosteriorMoments
    ess: float
    n_samples: int

    def zscores(self, other: PosteriorMoments) -> dict[str, np.ndarray]:
        """``(other - mean) / se`` per moment.

        Where ``se`` is zero (a deterministic quantity such as the single-class
        weight) the z-score is 0 if the values agree to rounding, else infinite.
        """
        out = {}
        for (name, m), (_, s), (_, o) in zip(self.mean.items(), self.se.items(), other.items()):
            same = np.abs(o - m) <= 1e-12 * np.maximum(np.abs(m), 1.0)
            with np.errstate(divide="ignore", invalid="ignore"):
                z = np.where(s > 0, (o - m) / s, np.where(same, 0.0, np.inf))
            out[name] = z
        return out


def _log_lik(y: np.ndarray, w: np.ndarray, m: np.ndarray, tau: np.ndarray) -> np.ndarray:
    comp = 0.5 * np.sum(np.log(tau) - _LOG_2PI - tau * (y - m) ** 2, axis=-1)
    with np.errstate(divide="ignore"):
        return log_sum_exp(np.log(w) + comp, axis=-1)


def mc_moments(
    p: MapParams,
    ys: Sequence,
    n_samples: int,
    rng: np.random.Generator,
    chunk: int = 100_000,
    min_ess: float = 100.0,
) -> MCMoments:
    """Self-normalised importance-sampling estimate of posterior moments.

    Proposals are prior draws; weights are the mixture likelihoods of ``ys``.
    Chunks are drawn sequentially from ``rng``, so results depend only on the
    seed and ``chunk``.
    """
    if n_samples < 10_000:
        raise ValueError("mc_moments needs at least 10^4 samples")
    ys = [np.asarray(y, dtype=float) for y in ys]
    shift = -math.inf
    S0 = S2 = 0.0
    S1: Optional[list[np.ndarray]] = None
    S2g: Optional[list[np.ndarray]] = None
    S2gg: Optional[list[np.ndarray]] = None
    done = 0
    while done < n_samples:
        n = min(chunk, n_samples - done)
        done += n
        w, m, tau = sample_states(p, n, rng)
        lw = np.zeros(n)
        for y in ys:
            lw += _log_lik(y, w, m, tau)
        cmax = float(np.max(lw))
        if cmax > shift:
            if S1 is not None:
                s1, s2 = math.exp(shift - cmax), math.exp(2 * (shift - cmax))
                S0 *= s1
                S2 *= s2
                S1 = [v * s1 for v in S1]
                S2g = [v * s2 for v in S2g]
                S2gg = [v * s2 for v in S2gg]
            shift = cmax
        W = np.exp(lw - shift)
        W2 = W * W
        mt = m * tau
        gs = [w, w * w, m, tau, tau * tau, mt, mt * m]
        c1 = [np.tensordot(W, g, axes=(0, 0)) for g in gs]
        c2 = [np.tensordot(W2, g, axes=(0, 0)) for g in gs]
        c3 = [np.tensordot(W2, g * g, axes=(0, 0)) for g in gs]
        if S1 is None:
            S1, S2g, S2gg = c1, c2, c3
        else:
            S1 = [a + b for a, b in zip(S1, c1)]
            S2g = [a + b for a, b in zip(S2g, c2)]
            S2gg = [a + b for a, b in zip(S2gg, c3)]
        S0 += float(W.sum())
        S2 += float(W2.sum())
    ess = S0 * S0 / S2
    if ess < min_ess:
        raise LowESSError(f"effective sample size {ess:.1f} below {min_ess}")
    means = [v / S0 for v in S1]
    ses = [
        np.sqrt(np.maximum(gg - 2 * mu * g + mu * mu * S2, 0.0)) / S0
        for mu, g, gg in zip(means, S2g, S2gg)
    ]
    return MCMoments(PosteriorMoments(*means), PosteriorMoments(*ses), ess, n_samples)


def _ng_log_pdf(m, tau, mu, lam, alpha, beta):
    return (
        0.5 * (math.log(lam) - _LOG_2PI)
        + alpha * math.log(beta)
        - ln_gamma(alpha)
        + (alpha - 0.5) * math.log(tau)
        - beta * tau
        - 0.5 * lam * tau * (m - mu) ** 2
    )


def quadrature_check_lemma6(b: NormalGammaBlock, y: float, epsrel: float = 1e-11) -> float:
    """Relative error between the numerically integrated marginal of ``y`` and ``c*``.

    The double integral of ``N(y; m, 1/tau) NG(m, tau)`` is taken over ``tau``
    between a tiny lower cut and the prior's ``1 - 1e-10`` gamma quantile, and
    over ``m`` within 12 conditional standard deviations of both ``mu`` and ``y``.
    """
    if b.J != 1:
        raise ValueError("quadrature check is for scalar blocks")
    mu, lam, alpha, beta = (float(v[0]) for v in (b.mu, b.lam, b.alpha, b.beta))
    y = float(y)
    prior_tau = stats.gamma(alpha, scale=1.0 / beta)
    tau_lo = min(1e-6, float(prior_tau.ppf(1e-12)))
    tau_hi = float(prior_tau.ppf(1.0 - 1e-10))

    def integrand(m, tau):
        log_lik = 0.5 * (math.log(tau) - _LOG_2PI) - 0.5 * tau * (y - m) ** 2
        return math.exp(_ng_log_pdf(m, tau, mu, lam, alpha, beta) + log_lik)

    def inner(tau):
        half = 12.0 / math.sqrt((lam + 1.0) * tau)
        lo, hi = min(mu, y) - half, max(mu, y) + half
        val, _ = integrate.quad(integrand, lo, hi, args=(tau,), epsabs=0.0, epsrel=epsrel,
                                limit=200, points=sorted({mu, y}))
        return val

    # integrate in log(tau) so wide gamma ranges are resolved evenly
    def outer(s):
        t = math.exp(s)
        return inner(t) * t

    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, err = integrate.quad(outer, math.log(tau_lo), math.log(tau_hi),
                                      epsabs=0.0, epsrel=epsrel, limit=400)
        except integrate.IntegrationWarning as exc:
            raise QuadratureError(str(exc)) from exc
    if not val > 0 or err > 1e-6 * val:
        raise QuadratureError(f"quadrature did not converge: value {val}, error {err}")
    closed = math.exp(ng_conjugate_update(b, y)[0])
    return abs(val - closed) / closed


def dirichlet_tilt_mc(
    a: Sequence[float],
    j: int,
    n_samples: int,
    rng: np.random.Generator,
    f: Callable[[np.ndarray], np.ndarray] | None = None,
) -> tuple[float, float, float]:
    """Monte-Carlo check of ``E_a[w_j f(w)] = u_j E_{a+e_j}[f(w)]``.

    Returns ``(lhs_estimate, lhs_standard_error, rhs)``. With ``f=None`` the
    right side is exactly ``u_j``; otherwise it is itself estimated by MC and
    its variance folded into the returned standard error.
    """
    a = np.asarray(a, dtype=float)
    w = rng.dirichlet(a, size=n_samples)
    fw = np.ones(n_samples) if f is None else f(w)
    vals = w[:, j] * fw
    lhs = float(vals.mean())
    se2 = float(vals.var(ddof=1)) / n_samples
    u = a[j] / a.sum()
    if f is None:
        return lhs, math.sqrt(se2), float(u)
    a_star = a.copy()
    a_star[j] += 1.0
    f_star = f(rng.dirichlet(a_star, size=n_samples))
    se2 += u * u * float(f_star.var(ddof=1)) / n_samples
    return lhs, math.sqrt(se2), float(u * f_star.mean())
