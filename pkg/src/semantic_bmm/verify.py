"""Self-checks of the closed-form update against brute-force references.

Each suite returns a list of :class:`Check` results; the CLI's ``verify``
command prints them and exits non-zero if any failed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bmm import DegenerateMomentsError, bmm_property_update, bmm_property_update_composed, posterior_moments
from .conjugate_update import mixture_posterior_terms, ng_conjugate_update
from .distributions import MapParams, NormalGammaBlock
from .oracle import (
    ExactMixturePosterior,
    dirichlet_tilt_mc,
    exact_moments,
    exact_update,
    quadrature_check_lemma6,
)

__all__ = ["Check", "SUITES", "random_params", "run_suite", "suite_lemma5", "suite_lemma6", "suite_bmm"]


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


def random_params(K: int, J: int, rng: np.random.Generator) -> MapParams:
    """A moderately informative random parameter set for testing."""
    return MapParams(
        rng.uniform(0.5, 5.0, K),
        rng.uniform(-1.0, 1.0, (K, J)),
        rng.uniform(0.2, 5.0, (K, J)),
        rng.uniform(1.0, 10.0, (K, J)),
        rng.uniform(0.2, 5.0, (K, J)),
    )


def _rel_err(a, b) -> float:
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-300)))


def suite_lemma5(seed: int = 0, n_cases: int = 50, n_samples: int = 200_000) -> list[Check]:
    """Monte-Carlo ``E[w_j] = u_j`` under random Dirichlets, within 5 standard errors."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for case in range(n_cases):
        K = (2, 3, 5)[case % 3]
        a = rng.uniform(0.2, 10.0, K)
        j = int(rng.integers(K))
        lhs, se, rhs = dirichlet_tilt_mc(a, j, n_samples, rng)
        worst = max(worst, abs(lhs - rhs) / se)
    return [Check("lemma5.tilt_mean", worst < 5.0, f"max |z| = {worst:.2f} over {n_cases} cases")]


def suite_lemma6(seed: int = 0, n_cases: int = 100) -> list[Check]:
    """Normal-gamma evidence: analytic case and quadrature over random cases."""
    b = NormalGammaBlock.scalar(0.0, 1.0, 1.0, 1.0)
    c = math.exp(ng_conjugate_update(b, 0.0)[0])
    out = [Check("lemma6.analytic", abs(c - 0.25) < 1e-10, f"c* = {c:.15f}")]
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_cases):
        mu = rng.uniform(-2.0, 2.0)
        lam = rng.uniform(0.1, 10.0)
        alpha = rng.uniform(0.5, 10.0)
        beta = rng.uniform(0.1, 10.0)
        y = mu + rng.normal(0.0, 2.0)
        worst = max(worst, quadrature_check_lemma6(NormalGammaBlock.scalar(mu, lam, alpha, beta), y))
    out.append(Check("lemma6.quadrature", worst < 1e-4, f"max rel err = {worst:.2e} over {n_cases} cases"))
    return out


def suite_bmm(seed: int = 0, n_cases: int = 100) -> list[Check]:
    """Closed-form one-step moments vs the exact mixture; fused vs composed update."""
    rng = np.random.default_rng(seed)
    worst_mom = worst_kernel = 0.0
    mismatched = 0
    degenerate = {"mean": 0, "weighted": 0}
    for _ in range(n_cases):
        K, J = (int(v) for v in rng.integers(1, 6, 2))
        p = random_params(K, J, rng)
        y = rng.normal(0.0, 1.0, J)
        ours = posterior_moments(p, mixture_posterior_terms(p, y))
        ref = exact_moments(exact_update(ExactMixturePosterior.from_prior(p), y))
        worst_mom = max(worst_mom, max(_rel_err(a, b) for (_, a), (_, b) in zip(ours.items(), ref.items())))
        for proj in ("mean", "weighted"):
            results = []
            for update in (bmm_property_update, bmm_property_update_composed):
                try:
                    results.append(update(p, y, proj).flat())
                except DegenerateMomentsError:
                    results.append(None)
            if results[0] is None and results[1] is None:
                degenerate[proj] += 1
            elif results[0] is None or results[1] is None:
                mismatched += 1
            else:
                worst_kernel = max(worst_kernel, _rel_err(*results))
    detail = (f"max rel err = {worst_kernel:.2e}, {mismatched} disagreements; degenerate "
              f"projections: mean {degenerate['mean']}, weighted {degenerate['weighted']}")
    return [
        Check("bmm.one_step_moments", worst_mom < 1e-10, f"max rel err = {worst_mom:.2e}"),
        Check("bmm.fused_vs_composed", worst_kernel < 1e-9 and mismatched == 0
              and degenerate["weighted"] == 0, detail),
    ]


SUITES = {"lemma5": suite_lemma5, "lemma6": suite_lemma6, "bmm": suite_bmm}


def run_suite(name: str, seed: int = 0) -> list[Check]:
    if name == "all":
        return [c for fn in SUITES.values() for c in fn(seed)]
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}")
    return SUITES[name](seed)
