"""Moment matching of the exact mixture posterior back onto the prior family."""

from __future__ import annotations

import numpy as np

from . import _kernels
from .conjugate_update import (
    AllSuppressedError,
    MixturePosteriorTerms,
    _check_y,
    mixture_posterior_terms,
)
from .distributions import MapParams, PosteriorMoments, ng_moment_arrays, normal_gamma_moments

__all__ = [
    "DegenerateMomentsError",
    "RESPONSIBILITY_FLOOR",
    "responsibilities",
    "posterior_moments",
    "project",
    "project_blocks",
    "project_weights",
    "bmm_property_update",
    "bmm_property_update_composed",
    "PROJECTIONS",
]

RESPONSIBILITY_FLOOR = 1e-15
_MIN_DENOM = 1e-300
PROJECTIONS = ("mean", "weighted")


class DegenerateMomentsError(ArithmeticError):
    """Moments do not correspond to a proper Dirichlet-normal-gamma."""


def responsibilities(terms: MixturePosteriorTerms) -> np.ndarray:
    """Posterior class responsibilities ``u_j c*_j / M``, tiny values set to 0."""
    r = terms.responsibilities()
    r = np.where(r < RESPONSIBILITY_FLOOR, 0.0, r)
    return r / r.sum()


def posterior_moments(p: MapParams, terms: MixturePosteriorTerms) -> PosteriorMoments:
    """Sufficient moments of the exact one-step posterior.

    Class ``i``'s normal-gamma moments are the starred ones in term ``i`` and the
    prior ones in every other term, so they mix as ``r_i E* + (1 - r_i) E``.
    Term ``j`` carries the Dirichlet ``a + e_j``; summing its Lemma-1 moments
    over ``j`` with weights ``r_j`` gives the closed forms below.
    """
    r = responsibilities(terms)
    a = p.a
    a0 = a.sum()
    Ew = (a + r) / (a0 + 1.0)
    Ew2 = (a * (a + 1.0) + 2.0 * r * (a + 1.0)) / ((a0 + 1.0) * (a0 + 2.0))

    prior = normal_gamma_moments(p)
    post = ng_moment_arrays(terms.mu_star, terms.lam_star, terms.alpha_star, terms.beta_star)
    rc = r[:, None]
    mixed = [rc * s + (1.0 - rc) * q for s, q in zip(post, prior)]
    return PosteriorMoments(Ew, Ew2, *mixed)


def _safe_denominator(d: np.ndarray, what: str) -> np.ndarray:
    if not np.all(d > _MIN_DENOM):
        raise DegenerateMomentsError(f"non-positive {what} in moment projection")
    return d


def _check_projection(projection: str) -> None:
    if projection not in PROJECTIONS:
        raise ValueError(f"unknown projection {projection!r}; expected one of {PROJECTIONS}")


def project_blocks(moments: PosteriorMoments, projection: str = "mean"):
    """Normal-gamma ``(mu, lam, alpha, beta)`` matching the block moments.

    ``projection="mean"`` matches ``E[m]``, ``E[tau]``, ``E[tau^2]`` and
    ``E[m^2 tau]``. Its scale ``E[m^2 tau] - E[m]^2 E[tau]`` is not invariant
    to shifting ``m`` and can go negative for mixtures whose means sit far
    from zero. ``projection="weighted"`` matches ``E[m tau]`` in place of
    ``E[m]``: the mean becomes ``E[m tau] / E[tau]`` and the scale
    ``E[m^2 tau] - E[m tau]^2 / E[tau]`` is positive by Cauchy-Schwarz.
    Both agree whenever the moments come from a single normal-gamma.
    """
    _check_projection(projection)
    Em, Etau, Etau2, Em2tau = moments.Em, moments.Etau, moments.Etau2, moments.Em2tau
    var_tau = _safe_denominator(Etau2 - Etau * Etau, "precision variance")
    if projection == "weighted":
        Em = moments.Emtau / Etau
        inv_lam = _safe_denominator(Em2tau - moments.Emtau * Em, "mean scale")
    else:
        inv_lam = _safe_denominator(Em2tau - Em * Em * Etau, "mean scale")
    return Em, 1.0 / inv_lam, Etau * Etau / var_tau, Etau / var_tau


def project_weights(Ew: np.ndarray, Ew2: np.ndarray) -> np.ndarray:
    """Dirichlet concentrations, each solved from its own class's two moments.

    Undefined for a single class, where ``w == 1`` has zero variance.
    """
    if Ew.shape[0] < 2:
        raise DegenerateMomentsError("a single-class weight has no variance to match")
    var_w = _safe_denominator(Ew2 - Ew * Ew, "weight variance")
    a = Ew * (Ew - Ew2) / var_w
    if not np.all(a > 0):
        raise DegenerateMomentsError("E[w^2] >= E[w] in moment projection")
    return a


def project(moments: PosteriorMoments, projection: str = "mean") -> MapParams:
    """Parameters whose sufficient moments equal ``moments``.

    For moments of a mixture of Dirichlets the per-class concentrations need
    not imply a common total, so only the normal-gamma part is reproduced
    exactly in that case.
    """
    a = project_weights(moments.Ew, moments.Ew2)
    return MapParams(a, *project_blocks(moments, projection))


def bmm_property_update_composed(p: MapParams, y, projection: str = "mean") -> MapParams:
    """Reference update: exact mixture terms, their moments, then projection.

    With one class the Dirichlet posterior ``a + 1`` is exact and kept as is.
    """
    terms = mixture_posterior_terms(p, y)
    moments = posterior_moments(p, terms)
    a = p.a + 1.0 if p.K == 1 else project_weights(moments.Ew, moments.Ew2)
    return MapParams(a, *project_blocks(moments, projection))


def bmm_property_update(p: MapParams, y, projection: str = "mean") -> MapParams:
    """One moment-matched update of ``p`` with property vector ``y``.

    Runs the fused compiled kernel; agrees with
    :func:`bmm_property_update_composed` to rounding.
    """
    _check_projection(projection)
    y = _check_y(p, y)
    if y.ndim != 1:
        raise ValueError("bmm_property_update takes a single property vector")
    K, J = p.K, p.J
    out = (np.empty(K), np.empty((K, J)), np.empty((K, J)), np.empty((K, J)), np.empty((K, J)))
    status = _kernels.bmm_update(p.a, p.mu, p.lam, p.alpha, p.beta, y, RESPONSIBILITY_FLOOR,
                                  projection == "weighted", *out)
    if status == _kernels.ALL_SUPPRESSED:
        raise AllSuppressedError("measurement has zero likelihood under every class")
    if status == _kernels.DEGENERATE:
        raise DegenerateMomentsError("posterior moments collapsed during projection")
    return MapParams._trusted(*out)
