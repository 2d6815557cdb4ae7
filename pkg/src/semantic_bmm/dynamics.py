"""Exponential forgetting of map parameters and the sequential filter loop."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .bmm import bmm_property_update
from .conjugate_update import categorical_update
from .distributions import MapParams

__all__ = [
    "TimeRegressionError",
    "ForgettingConfig",
    "TimedMeasurement",
    "FilterState",
    "forgetting_factor",
    "predict",
    "step",
    "run_filter",
]

_FIELDS = ("a", "mu", "lam", "alpha", "beta")


class TimeRegressionError(ValueError):
    """A measurement is older than the filter's last update."""


@dataclass(frozen=True)
class ForgettingConfig:
    """Time constant ``delta`` (seconds, ``math.inf`` disables forgetting) and target."""

    delta: float = math.inf
    p_inf: Optional[MapParams] = None

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("forgetting time constant must be positive")
        if self.p_inf is None and not self.static:
            raise ValueError("finite time constant needs a target parameter set")

    @property
    def static(self) -> bool:
        return math.isinf(self.delta)

    @classmethod
    def static_config(cls) -> "ForgettingConfig":
        return cls(math.inf, None)


def forgetting_factor(h: float, delta: float) -> float:
    """``exp(-h / delta)``; exactly 1 for ``h == 0`` or infinite ``delta``."""
    if h < 0 or math.isnan(h):
        raise ValueError(f"negative prediction horizon {h}")
    if h == 0 or math.isinf(delta):
        return 1.0
    return math.exp(-h / delta)


def _relax(x: np.ndarray, target: np.ndarray, c: float) -> np.ndarray:
    return target + c * (x - target)


def predict(p: MapParams, h: float, cfg: ForgettingConfig) -> MapParams:
    """Pull every parameter toward ``cfg.p_inf`` by the factor ``exp(-h / delta)``."""
    c = forgetting_factor(h, cfg.delta)
    if c == 1.0:
        return p
    q = cfg.p_inf
    if (q.K, q.J) != (p.K, p.J):
        raise ValueError(f"target has shape {(q.K, q.J)}, filter has {(p.K, p.J)}")
    # convex combination of two valid parameter sets stays valid
    return MapParams._trusted(*(_relax(getattr(p, f), getattr(q, f), c) for f in _FIELDS))


@dataclass(frozen=True)
class TimedMeasurement:
    """A class label, a property vector, or both, observed at ``time`` seconds."""

    time: float
    label: Optional[int] = None
    y: Optional[np.ndarray] = None

    def __post_init__(self):
        if not math.isfinite(self.time):
            raise ValueError("measurement time must be finite")
        if self.label is None and self.y is None:
            raise ValueError("measurement carries no payload")
        if self.y is not None:
            object.__setattr__(self, "y", np.asarray(self.y, dtype=float))


@dataclass(frozen=True)
class FilterState:
    params: MapParams
    last_time: Optional[float] = None


def _apply(p: MapParams, meas: TimedMeasurement, projection: str) -> MapParams:
    # property first, then the exact categorical update
    if meas.y is not None:
        p = bmm_property_update(p, meas.y, projection)
    if meas.label is not None:
        p = categorical_update(p, meas.label)
    return p


def step(
    state: FilterState,
    meas: TimedMeasurement,
    cfg: ForgettingConfig,
    projection: str = "mean",
) -> FilterState:
    if state.last_time is None:
        h = 0.0
    else:
        h = meas.time - state.last_time
        if h < 0:
            raise TimeRegressionError(
                f"measurement at t={meas.time} precedes last update at t={state.last_time}"
            )
    p = predict(state.params, h, cfg)
    return FilterState(_apply(p, meas, projection), meas.time)


def run_filter(
    p0: MapParams,
    measurements: Iterable[TimedMeasurement],
    cfg: ForgettingConfig,
    record: bool = False,
    projection: str = "mean",
):
    """Fold :func:`step` over ``measurements``.

    Returns the final :class:`FilterState`, or with ``record=True`` the list of
    states after each measurement.
    """
    state = FilterState(p0)
    history: list[FilterState] = []
    for meas in measurements:
        state = step(state, meas, cfg, projection)
        if record:
            history.append(state)
    return history if record else state
