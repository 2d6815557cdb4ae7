"""Simulation scenarios, divergence metrics and the update-time benchmark."""

from __future__ import annotations

import csv
import gc
import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .bmm import PROJECTIONS, bmm_property_update
from .distributions import (
    MapParams,
    dirichlet_moments,
    log_predictive_density,
    sample_class,
    sample_property,
    sample_state,
)
from .dynamics import FilterState, ForgettingConfig, TimedMeasurement, step
from .special_math import log_sum_exp

__all__ = [
    "ScenarioConfig",
    "TruthTrajectory",
    "ScenarioResult",
    "gen_toy",
    "gen_driving",
    "run_scenario",
    "write_outputs",
    "grid_kl",
    "align_classes",
    "run_benchmark",
    "affine_fit",
    "M_START",
    "A_START",
    "A_END",
]

KINDS = ("toy_static", "driving_time_varying")

# front/rear friction means (rows) for dry asphalt, gravel, wet asphalt (columns)
M_START = np.array([[0.95, 0.8, 0.65], [0.9, 0.7, 0.5]])
A_START = np.array([50.0, 10.0, 10.0])
A_END = np.array([10.0, 10.0, 50.0])
M_END_SCALE = 0.9


def _parse_delta(v) -> float:
    if v is None or (isinstance(v, str) and v.lower() in ("inf", "infinity")):
        return math.inf
    return float(v)


@dataclass
class ScenarioConfig:
    kind: str = "toy_static"
    J: int = 5
    K: int = 5
    N: int = 10_000
    rate_hz: float = 10.0
    delta: float = math.inf
    seed: int = 0
    p_inf: str | dict = "copy-initial"
    labels: Optional[bool] = None  # default: driving emits labels, toy does not
    checkpoints: Optional[list[int]] = None  # default: N // 10 and N
    grid_points: int = 200
    record_every: int = 1
    projection: str = "weighted"
    prior_spread: Optional[float] = None  # prior-mean offset half-width; default 0.5 toy, 0 driving
    out_dir: Optional[str] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown scenario kind {self.kind!r}; expected one of {KINDS}")
        if min(self.J, self.K, self.N) < 1:
            raise ValueError("J, K and N must be >= 1")
        if not self.rate_hz > 0:
            raise ValueError("rate_hz must be positive")
        self.delta = _parse_delta(self.delta)
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.projection not in PROJECTIONS:
            raise ValueError(f"projection must be one of {PROJECTIONS}")
        if self.prior_spread is None:
            self.prior_spread = 0.5 if self.kind == "toy_static" else 0.0
        if not self.prior_spread >= 0:
            raise ValueError("prior_spread must be non-negative")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")
        if isinstance(self.p_inf, str) and self.p_inf != "copy-initial":
            raise ValueError("p_inf must be 'copy-initial' or an explicit parameter object")

    @property
    def emit_labels(self) -> bool:
        return self.kind == "driving_time_varying" if self.labels is None else self.labels

    @property
    def checkpoint_steps(self) -> list[int]:
        cps = self.checkpoints if self.checkpoints is not None else [max(self.N // 10, 1), self.N]
        return sorted({int(k) for k in cps if 1 <= k <= self.N})

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json_file(cls, path: str | Path) -> "ScenarioConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["delta"] = "inf" if math.isinf(self.delta) else self.delta
        return d


@dataclass
class TruthTrajectory:
    """True map parameters per step ``k = 1..N``; constant when no end point is set."""

    N: int
    start: MapParams
    end: Optional[MapParams] = None

    def gamma(self, k: int) -> float:
        return k / self.N

    def __getitem__(self, k: int) -> MapParams:
        if self.end is None:
            return self.start
        g = self.gamma(k)
        if g == 0.0:
            return self.start
        # only a and mu move; lam/alpha/beta are shared by start and end
        return self.start.replace(
            a=(1 - g) * self.start.a + g * self.end.a,
            mu=(1 - g) * self.start.mu + g * self.end.mu,
        )

    def __len__(self) -> int:
        return self.N


def _toy_truth_blocks(K: int, J: int, rng: np.random.Generator):
    tau = rng.uniform(100.0, 300.0, size=(K, J))
    lam = np.ones((K, J))
    alpha = np.full((K, J), 1e3)
    return lam, alpha, alpha / tau


def _initial_from_truth(truth: MapParams, rng: np.random.Generator, spread: float = 0.5) -> MapParams:
    delta = rng.uniform(-spread, spread, size=truth.mu.shape)
    return MapParams(
        np.ones(truth.K),
        truth.mu + delta,
        0.1 * truth.lam,
        0.1 * truth.alpha,
        0.1 * truth.beta,
    )


def gen_toy(cfg: ScenarioConfig, rng: np.random.Generator) -> tuple[TruthTrajectory, MapParams]:
    K, J = cfg.K, cfg.J
    a = rng.uniform(1.0, 3.0, size=K)
    mu = rng.uniform(0.0, 1.0, size=(K, J))
    lam, alpha, beta = _toy_truth_blocks(K, J, rng)
    truth = MapParams(a, mu, lam, alpha, beta)
    return TruthTrajectory(cfg.N, truth), _initial_from_truth(truth, rng, cfg.prior_spread)


def gen_driving(cfg: ScenarioConfig, rng: np.random.Generator) -> tuple[TruthTrajectory, MapParams]:
    J, K = M_START.shape
    if (cfg.J, cfg.K) != (J, K):
        raise ValueError(f"driving scenario is defined for J={J}, K={K}")
    lam, alpha, beta = _toy_truth_blocks(K, J, rng)
    start = MapParams(A_START, M_START.T, lam, alpha, beta)
    end = MapParams(A_END, M_END_SCALE * M_START.T, lam, alpha, beta)
    return TruthTrajectory(cfg.N, start, end), _initial_from_truth(start, rng, cfg.prior_spread)


def _grid_axes(truth: MapParams, n: int) -> list[np.ndarray]:
    sd = np.sqrt((1.0 + 1.0 / truth.lam) * truth.beta / truth.alpha)
    lo = (truth.mu - 4 * sd).min(axis=0)
    hi = (truth.mu + 4 * sd).max(axis=0)
    return [np.linspace(l, h, n) for l, h in zip(lo, hi)]


def grid_log_densities(truth: MapParams, estimates: Sequence[MapParams], n: int):
    """Log predictive densities of ``truth`` and each estimate on a shared tensor grid."""
    axes = _grid_axes(truth, n)
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, truth.J)
    return axes, log_predictive_density(truth, pts), [log_predictive_density(e, pts) for e in estimates]


def _discrete_kl(log_p: np.ndarray, log_q: np.ndarray) -> float:
    lp = log_p - log_sum_exp(log_p)
    lq = log_q - log_sum_exp(log_q)
    P = np.exp(lp)
    return float(np.sum(P * (lp - lq)))


def grid_kl(truth: MapParams, estimate: MapParams, n: int = 200) -> float:
    """KL(true || estimate) between predictive densities normalised on a grid."""
    if truth.J > 2:
        raise ValueError("grid KL is only evaluated for J <= 2")
    _, lp, (lq,) = grid_log_densities(truth, [estimate], n)
    return _discrete_kl(lp, lq)


@dataclass
class ScenarioResult:
    config: ScenarioConfig
    initial: MapParams
    truth: TruthTrajectory
    steps: list[int] = field(default_factory=list)
    times: list[float] = field(default_factory=list)
    static_rows: list[np.ndarray] = field(default_factory=list)
    dynamic_rows: list[np.ndarray] = field(default_factory=list)
    truth_rows: list[np.ndarray] = field(default_factory=list)
    checkpoints: list[dict] = field(default_factory=list)
    final_static: Optional[MapParams] = None
    final_dynamic: Optional[MapParams] = None


def _row(p: MapParams) -> np.ndarray:
    Ew, Ew2 = dirichlet_moments(p.a)
    return np.concatenate([p.flat(), Ew, Ew2 - Ew * Ew])


def _header(p: MapParams) -> list[str]:
    return p.flat_names() + [f"Ew_{i}" for i in range(p.K)] + [f"varw_{i}" for i in range(p.K)]


def align_classes(truth: MapParams, est: MapParams) -> np.ndarray:
    """Permutation ``perm`` with ``est`` class ``perm[i]`` matched to true class ``i``.

    Minimises the summed squared distance between class means.
    """
    cost = ((truth.mu[:, None, :] - est.mu[None, :, :]) ** 2).sum(axis=-1)
    _, cols = linear_sum_assignment(cost)
    return cols


def _checkpoint_metrics(k: int, truth: MapParams, static: MapParams, dynamic: MapParams,
                        grid_points: int) -> dict:
    w_true = truth.a / truth.a.sum()
    dom = int(np.argmax(w_true))
    out = {"step": k}
    for name, est in (("static", static), ("dynamic", dynamic)):
        Ew, _ = dirichlet_moments(est.a)
        perm = align_classes(truth, est)
        out[f"{name}_weight_mae_raw"] = float(np.mean(np.abs(Ew - w_true)))
        out[f"{name}_dominant_mean_err_raw"] = float(np.max(np.abs(est.mu[dom] - truth.mu[dom])))
        out[f"{name}_weight_mae"] = float(np.mean(np.abs(Ew[perm] - w_true)))
        out[f"{name}_dominant_mean_err"] = float(np.max(np.abs(est.mu[perm[dom]] - truth.mu[dom])))
        if truth.J <= 2:
            out[f"{name}_kl"] = grid_kl(truth, est, grid_points)
    return out


def run_scenario(cfg: ScenarioConfig) -> ScenarioResult:
    """Simulate measurements from the true map and run static and dynamic filters."""
    rng = np.random.default_rng(cfg.seed)
    gen = gen_toy if cfg.kind == "toy_static" else gen_driving
    truth, p0 = gen(cfg, rng)
    p_inf = p0 if cfg.p_inf == "copy-initial" else MapParams.from_dict(cfg.p_inf)
    static_cfg = ForgettingConfig.static_config()
    dynamic_cfg = ForgettingConfig(cfg.delta, p_inf)

    res = ScenarioResult(cfg, p0, truth)
    static, dynamic = FilterState(p0), FilterState(p0)
    checkpoints = set(cfg.checkpoint_steps)
    for k in range(1, cfg.N + 1):
        t = k / cfg.rate_hz
        pt = truth[k]
        theta = sample_state(pt, rng)
        y = sample_property(theta, rng)
        label = sample_class(theta, rng) if cfg.emit_labels else None
        meas = TimedMeasurement(t, label, y)
        static = step(static, meas, static_cfg, cfg.projection)
        dynamic = step(dynamic, meas, dynamic_cfg, cfg.projection)
        if k % cfg.record_every == 0 or k == cfg.N:
            res.steps.append(k)
            res.times.append(t)
            res.static_rows.append(_row(static.params))
            res.dynamic_rows.append(_row(dynamic.params))
            res.truth_rows.append(_row(pt))
        if k in checkpoints:
            res.checkpoints.append(
                _checkpoint_metrics(k, pt, static.params, dynamic.params, cfg.grid_points)
            )
    res.final_static, res.final_dynamic = static.params, dynamic.params
    return res


def _write_csv(path: Path, header: list[str], steps, times, rows) -> None:
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["step", "time_s"] + header)
        for k, t, row in zip(steps, times, rows):
            wr.writerow([k, repr(float(t))] + [repr(float(v)) for v in row])


def write_outputs(res: ScenarioResult, out_dir: str | Path) -> list[Path]:
    """Write trajectory CSVs, checkpoint metrics and a manifest; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    header = _header(res.initial)
    paths = []
    for name, rows in (("static", res.static_rows), ("dynamic", res.dynamic_rows),
                       ("truth", res.truth_rows)):
        path = out / f"{name}.csv"
        _write_csv(path, header, res.steps, res.times, rows)
        paths.append(path)
    manifest = {
        "config": res.config.to_dict(),
        "seed": res.config.seed,
        "initial_params": res.initial.to_dict(),
        "columns": ["step", "time_s"] + header,
        "files": [p.name for p in paths],
        "checkpoints": res.checkpoints,
    }
    mpath = out / "manifest.json"
    mpath.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return paths + [mpath]


def affine_fit(x: Sequence[float], y: Sequence[float]) -> tuple[float, float, float]:
    """Least-squares ``y = intercept + slope * x``; returns ``(intercept, slope, r2)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (intercept + slope * x)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return float(intercept), float(slope), r2


def _benchmark_case(J: int, K: int, rng: np.random.Generator):
    # a map shaped like the toy scenario's truth, measurements drawn from it
    alpha = np.full((K, J), 100.0)
    p = MapParams(
        rng.uniform(1, 3, K), rng.uniform(0, 1, (K, J)), np.ones((K, J)),
        alpha, alpha / rng.uniform(100, 300, (K, J)),
    )
    theta = sample_state(p, rng)
    ys = np.stack([sample_property(theta, rng) for _ in range(256)])
    return p, ys


def run_benchmark(
    J_list: Sequence[int],
    K: int = 10,
    n_reps: int = 100_000,
    seed: int = 0,
    block: int = 1000,
):
    """Time single property updates for each ``J``.

    Every call is timed individually. The ``J`` values are visited round-robin
    in blocks of ``block`` calls so that bursts of machine load spread over all
    of them rather than biasing whichever ``J`` happened to be running.

    Returns ``(rows, fit)`` where rows are ``(J, mean_ns, std_ns)`` and ``fit`` is
    ``(intercept_ns, slope_ns_per_dim, r2)`` of an affine model in ``J``.
    """
    if n_reps < 10_000:
        raise ValueError("benchmark needs at least 10^4 repetitions per J")
    rng = np.random.default_rng(seed)
    clock = time.perf_counter_ns
    cases = [_benchmark_case(int(J), K, rng) for J in J_list]
    for p, ys in cases:
        bmm_property_update(p, ys[0])  # compile / warm caches
    samples = np.empty((len(cases), n_reps))
    gc_was_enabled = gc.isenabled()
    gc.disable()
    try:
        for lo in range(0, n_reps, block):
            hi = min(lo + block, n_reps)
            for c, (p, ys) in enumerate(cases):
                out = samples[c]
                for r in range(lo, hi):
                    y = ys[r & 255]
                    t0 = clock()
                    bmm_property_update(p, y)
                    out[r] = clock() - t0
    finally:
        if gc_was_enabled:
            gc.enable()
    rows = [(int(J), float(s.mean()), float(s.std())) for J, s in zip(J_list, samples)]
    fit = affine_fit([r[0] for r in rows], [r[1] for r in rows])
    return rows, fit
