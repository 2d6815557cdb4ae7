"""Dirichlet-normal-gamma map parameters, sufficient moments and sampling.

A map with ``K`` semantic classes and ``J`` property dimensions is described by

* a Dirichlet concentration ``a`` of shape ``(K,)`` over the class weights, and
* per class and per dimension an independent normal-gamma over the mean ``m``
  and precision ``tau`` of the property likelihood, stored as four ``(K, J)``
  arrays ``mu``, ``lam``, ``alpha``, ``beta``.

Class indices are zero-based everywhere in this package.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

__all__ = [
    "ParameterError",
    "DirichletParams",
    "NormalGammaBlock",
    "MapParams",
    "MapState",
    "PosteriorMoments",
    "dirichlet_moments",
    "normal_gamma_moments",
    "ng_moment_arrays",
    "map_moments",
    "sample_state",
    "sample_states",
    "sample_property",
    "sample_class",
    "predictive_density",
    "log_predictive_density",
]


class ParameterError(ValueError):
    """Parameters violate the positivity / shape constraints of the model."""


def _frozen(x: Any, ndim: int, name: str) -> np.ndarray:
    arr = np.array(x, dtype=float)
    if arr.ndim != ndim:
        raise ParameterError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if arr.size == 0:
        raise ParameterError(f"{name} must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise ParameterError(f"{name} must be finite")
    arr.flags.writeable = False
    return arr


def _positive(arr: np.ndarray, name: str) -> None:
    if not np.all(arr > 0):
        raise ParameterError(f"{name} must be strictly positive")


@dataclass(frozen=True, eq=False)
class DirichletParams:
    a: np.ndarray

    def __post_init__(self):
        a = _frozen(self.a, 1, "a")
        _positive(a, "a")
        object.__setattr__(self, "a", a)

    @property
    def K(self) -> int:
        return self.a.shape[0]

    @property
    def a0(self) -> float:
        return float(self.a.sum())


@dataclass(frozen=True, eq=False)
class NormalGammaBlock:
    """Independent normal-gammas over ``J`` dimensions of one class."""

    mu: np.ndarray
    lam: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        arrays = {}
        for name in ("mu", "lam", "alpha", "beta"):
            arrays[name] = _frozen(getattr(self, name), 1, name)
        shapes = {v.shape for v in arrays.values()}
        if len(shapes) != 1:
            raise ParameterError(f"normal-gamma arrays disagree in length: {shapes}")
        for name in ("lam", "alpha", "beta"):
            _positive(arrays[name], name)
        for name, v in arrays.items():
            object.__setattr__(self, name, v)

    @property
    def J(self) -> int:
        return self.mu.shape[0]

    @classmethod
    def scalar(cls, mu: float, lam: float, alpha: float, beta: float) -> "NormalGammaBlock":
        return cls([mu], [lam], [alpha], [beta])

    def to_dict(self) -> dict:
        return {
            "mu": self.mu.tolist(),
            "lambda": self.lam.tolist(),
            "alpha": self.alpha.tolist(),
            "beta": self.beta.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NormalGammaBlock":
        return cls(d["mu"], d["lambda"], d["alpha"], d["beta"])


@dataclass(frozen=True, eq=False)
class MapParams:
    """Full parameter set of the Dirichlet-normal-gamma prior.

    ``a`` has shape ``(K,)``; ``mu``, ``lam``, ``alpha`` and ``beta`` have
    shape ``(K, J)``. Instances are immutable; use :meth:`replace` to derive
    modified copies.
    """

    a: np.ndarray
    mu: np.ndarray
    lam: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        a = _frozen(self.a, 1, "a")
        _positive(a, "a")
        object.__setattr__(self, "a", a)
        K = a.shape[0]
        shape = None
        for name in ("mu", "lam", "alpha", "beta"):
            v = _frozen(getattr(self, name), 2, name)
            if v.shape[0] != K:
                raise ParameterError(f"{name} has {v.shape[0]} classes, a has {K}")
            if shape is not None and v.shape != shape:
                raise ParameterError(f"{name} has shape {v.shape}, expected {shape}")
            shape = v.shape
            if name != "mu":
                _positive(v, name)
            object.__setattr__(self, name, v)

    @classmethod
    def _trusted(cls, a, mu, lam, alpha, beta) -> "MapParams":
        """Skip validation; callers guarantee shapes, finiteness and positivity."""
        obj = object.__new__(cls)
        for name, v in zip(("a", "mu", "lam", "alpha", "beta"), (a, mu, lam, alpha, beta)):
            v.flags.writeable = False
            object.__setattr__(obj, name, v)
        return obj

    @property
    def K(self) -> int:
        return self.mu.shape[0]

    @property
    def J(self) -> int:
        return self.mu.shape[1]

    @property
    def dirichlet(self) -> DirichletParams:
        return DirichletParams(self.a)

    @property
    def blocks(self) -> list[NormalGammaBlock]:
        return [self.block(i) for i in range(self.K)]

    def block(self, i: int) -> NormalGammaBlock:
        return NormalGammaBlock(self.mu[i], self.lam[i], self.alpha[i], self.beta[i])

    @classmethod
    def from_blocks(
        cls, dirichlet: DirichletParams | Sequence[float], blocks: Sequence[NormalGammaBlock]
    ) -> "MapParams":
        a = dirichlet.a if isinstance(dirichlet, DirichletParams) else dirichlet
        if len(blocks) != len(a):
            raise ParameterError(f"{len(blocks)} blocks for {len(a)} classes")
        if len({b.J for b in blocks}) != 1:
            raise ParameterError("blocks must share the same J")
        return cls(
            a,
            np.stack([b.mu for b in blocks]),
            np.stack([b.lam for b in blocks]),
            np.stack([b.alpha for b in blocks]),
            np.stack([b.beta for b in blocks]),
        )

    @classmethod
    def uniform(
        cls, K: int, J: int, mu: float = 0.0, lam: float = 1.0, alpha: float = 1.0,
        beta: float = 1.0, a: float = 1.0,
    ) -> "MapParams":
        full = lambda v: np.full((K, J), float(v))  # noqa: E731
        return cls(np.full(K, float(a)), full(mu), full(lam), full(alpha), full(beta))

    def replace(self, **changes) -> "MapParams":
        fields = {n: getattr(self, n) for n in ("a", "mu", "lam", "alpha", "beta")}
        fields.update(changes)
        return MapParams(**fields)

    def with_blocks_of(self, other: "MapParams") -> "MapParams":
        """This Dirichlet combined with ``other``'s normal-gamma blocks."""
        return MapParams(self.a, other.mu, other.lam, other.alpha, other.beta)

    def permute(self, order: Sequence[int]) -> "MapParams":
        idx = np.asarray(order)
        return MapParams(self.a[idx], self.mu[idx], self.lam[idx], self.alpha[idx], self.beta[idx])

    def flat(self) -> np.ndarray:
        """All parameters as one vector: a, then mu, lam, alpha, beta row-major."""
        return np.concatenate([self.a, self.mu.ravel(), self.lam.ravel(),
                               self.alpha.ravel(), self.beta.ravel()])

    def flat_names(self) -> list[str]:
        names = [f"a_{i}" for i in range(self.K)]
        for field in ("mu", "lambda", "alpha", "beta"):
            names += [f"{field}_{i}_{j}" for i in range(self.K) for j in range(self.J)]
        return names

    def allclose(self, other: "MapParams", rtol: float = 1e-12, atol: float = 0.0) -> bool:
        if (self.K, self.J) != (other.K, other.J):
            return False
        return bool(np.allclose(self.flat(), other.flat(), rtol=rtol, atol=atol))

    def to_dict(self) -> dict:
        return {"a": self.a.tolist(), "blocks": [b.to_dict() for b in self.blocks]}

    @classmethod
    def from_dict(cls, d: dict) -> "MapParams":
        return cls.from_blocks(d["a"], [NormalGammaBlock.from_dict(b) for b in d["blocks"]])

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_json(cls, text: str) -> "MapParams":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True, eq=False)
class MapState:
    """A latent map sample: class weights ``w`` and per-class ``m``, ``tau``."""

    w: np.ndarray
    m: np.ndarray
    tau: np.ndarray

    def __post_init__(self):
        w = _frozen(self.w, 1, "w")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ParameterError("w must lie on the probability simplex")
        m = _frozen(self.m, 2, "m")
        tau = _frozen(self.tau, 2, "tau")
        if m.shape != tau.shape or m.shape[0] != w.shape[0]:
            raise ParameterError("inconsistent state shapes")
        _positive(tau, "tau")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "tau", tau)

    @property
    def K(self) -> int:
        return self.w.shape[0]

    @property
    def J(self) -> int:
        return self.m.shape[1]


@dataclass(frozen=True, eq=False)
class PosteriorMoments:
    """Sufficient moments: ``Ew``, ``Ew2`` of shape ``(K,)``, the rest ``(K, J)``."""

    Ew: np.ndarray
    Ew2: np.ndarray
    Em: np.ndarray
    Etau: np.ndarray
    Etau2: np.ndarray
    Emtau: np.ndarray
    Em2tau: np.ndarray

    FIELDS = ("Ew", "Ew2", "Em", "Etau", "Etau2", "Emtau", "Em2tau")

    def items(self):
        return [(name, getattr(self, name)) for name in self.FIELDS]

    def check(self, tol: float = 1e-10) -> None:
        """Raise ``ParameterError`` if the moment inequalities are violated."""
        if abs(self.Ew.sum() - 1.0) > tol:
            raise ParameterError(f"sum of E[w] is {self.Ew.sum()}, expected 1")
        if np.any(self.Ew2 > self.Ew + tol):
            raise ParameterError("E[w^2] > E[w]")
        if np.any(self.Etau2 < self.Etau**2 * (1 - tol)):
            raise ParameterError("E[tau^2] < E[tau]^2")

    def allclose(self, other: "PosteriorMoments", rtol: float, atol: float = 0.0) -> bool:
        return all(
            np.allclose(a, b, rtol=rtol, atol=atol)
            for (_, a), (_, b) in zip(self.items(), other.items())
        )


def dirichlet_moments(d: DirichletParams | np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """First and second raw moments of each Dirichlet weight."""
    a = d.a if isinstance(d, DirichletParams) else np.asarray(d, dtype=float)
    a0 = a.sum(axis=-1, keepdims=True)
    return a / a0, a * (a + 1.0) / (a0 * (a0 + 1.0))


def normal_gamma_moments(b: NormalGammaBlock | MapParams):
    """``(Em, Etau, Etau2, Emtau, Em2tau)`` elementwise for a block or map."""
    return ng_moment_arrays(b.mu, b.lam, b.alpha, b.beta)


def ng_moment_arrays(mu, lam, alpha, beta):
    Etau = alpha / beta
    return mu, Etau, (alpha + alpha * alpha) / (beta * beta), mu * Etau, 1.0 / lam + mu * mu * Etau


def map_moments(p: MapParams) -> PosteriorMoments:
    Ew, Ew2 = dirichlet_moments(p.a)
    return PosteriorMoments(Ew, Ew2, *normal_gamma_moments(p))


def sample_states(p: MapParams, n: int, rng: np.random.Generator):
    """Draw ``n`` latent states at once; returns arrays ``w (n,K)``, ``m, tau (n,K,J)``."""
    w = rng.dirichlet(p.a, size=n)
    tau = rng.gamma(p.alpha, 1.0 / p.beta, size=(n, p.K, p.J))
    m = p.mu + rng.standard_normal((n, p.K, p.J)) / np.sqrt(p.lam * tau)
    return w, m, tau


def sample_state(p: MapParams, rng: np.random.Generator) -> MapState:
    w, m, tau = sample_states(p, 1, rng)
    w = w[0]
    # renormalise: dirichlet draws can be off the simplex by a few ulps
    return MapState(w / w.sum(), m[0], tau[0])


def sample_class(theta: MapState, rng: np.random.Generator) -> int:
    return int(rng.choice(theta.K, p=theta.w))


def sample_property(theta: MapState, rng: np.random.Generator) -> np.ndarray:
    i = sample_class(theta, rng)
    return theta.m[i] + rng.standard_normal(theta.J) / np.sqrt(theta.tau[i])


def log_predictive_density(p: MapParams, y) -> np.ndarray | float:
    """Log prior-predictive density of property vector(s) ``y`` (shape ``(..., J)``)."""
    from .conjugate_update import log_marginal

    return log_marginal(p, y)


def predictive_density(p: MapParams, y) -> np.ndarray | float:
    return np.exp(log_predictive_density(p, y))
