"""Sparse voxel maps: a Dirichlet per voxel, normal-gamma blocks shared map-wide.

With ``shared_blocks=False`` every voxel instead carries its own full
:class:`MapParams` and is filtered independently.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .bmm import bmm_property_update
from .distributions import MapParams
from .dynamics import (
    ForgettingConfig,
    FilterState,
    TimeRegressionError,
    TimedMeasurement,
    forgetting_factor,
    predict,
    step,
)

__all__ = ["VoxelGrid"]

Coord = tuple[int, ...]


@dataclass
class _Voxel:
    a: np.ndarray
    last_time: float
    params: Optional[MapParams] = None  # per-voxel-blocks mode only


def _elapsed(last: Optional[float], t: float) -> float:
    if last is None:
        return 0.0
    if t < last:
        raise TimeRegressionError(f"time {t} precedes last update at {last}")
    return t - last


class VoxelGrid:
    """Voxelised semantic map.

    ``blocks`` supplies the initial normal-gamma parameters (its Dirichlet part
    is ignored). Unvisited voxels use ``prior_a``, all ones by default.
    """

    def __init__(
        self,
        d: int,
        voxel_size: float | Sequence[float],
        blocks: MapParams,
        forgetting: ForgettingConfig | None = None,
        prior_a: Sequence[float] | None = None,
        shared_blocks: bool = True,
        projection: str = "mean",
    ):
        if d < 1:
            raise ValueError("spatial dimension must be >= 1")
        size = np.broadcast_to(np.asarray(voxel_size, dtype=float), (d,)).copy()
        if not np.all(np.isfinite(size)) or np.any(size <= 0):
            raise ValueError("voxel size must be positive")
        self.d = d
        self.voxel_size = size
        self.forgetting = forgetting or ForgettingConfig.static_config()
        a0 = np.ones(blocks.K) if prior_a is None else np.asarray(prior_a, dtype=float)
        self.prior_a = a0
        self.shared = shared_blocks
        self.projection = projection
        self._blocks = blocks.replace(a=a0)  # validates a0 against K
        self.shared_last_time: Optional[float] = None
        self._voxels: dict[Coord, _Voxel] = {}
        self._shared_lock = threading.Lock()
        self._registry_lock = threading.Lock()
        self._voxel_locks: dict[Coord, threading.Lock] = {}
        p_inf = self.forgetting.p_inf
        if p_inf is not None and (p_inf.K, p_inf.J) != (blocks.K, blocks.J):
            raise ValueError("forgetting target does not match the map dimensions")

    @property
    def K(self) -> int:
        return self._blocks.K

    @property
    def J(self) -> int:
        return self._blocks.J

    @property
    def shared_params(self) -> MapParams:
        """Current shared blocks (with the prior Dirichlet attached)."""
        return self._blocks

    def __len__(self) -> int:
        return len(self._voxels)

    def __contains__(self, coord) -> bool:
        return tuple(coord) in self._voxels

    def coords(self) -> list[Coord]:
        return sorted(self._voxels)

    def locate(self, point) -> Coord:
        x = np.asarray(point, dtype=float)
        if x.shape != (self.d,):
            raise ValueError(f"point must have {self.d} coordinates")
        if not np.all(np.isfinite(x)):
            raise ValueError("point must be finite")
        return tuple(int(v) for v in np.floor(x / self.voxel_size))

    def _lock_for(self, coord: Coord) -> threading.Lock:
        with self._registry_lock:
            lock = self._voxel_locks.get(coord)
            if lock is None:
                lock = self._voxel_locks[coord] = threading.Lock()
            return lock

    def _check(self, meas: TimedMeasurement) -> None:
        if meas.label is not None and not 0 <= meas.label < self.K:
            raise IndexError(f"class label {meas.label} out of range for K={self.K}")
        if meas.y is not None and meas.y.shape != (self.J,):
            raise ValueError(f"property vector must have length J={self.J}")

    def _relax_a(self, a: np.ndarray, h: float) -> np.ndarray:
        c = forgetting_factor(h, self.forgetting.delta)
        if c == 1.0:
            return a
        target = self.forgetting.p_inf.a
        return target + c * (a - target)

    def observe(self, point, meas: TimedMeasurement) -> "VoxelGrid":
        """Update the voxel containing ``point``; mutates and returns the grid."""
        self._check(meas)
        coord = self.locate(point)
        if not self.shared:
            with self._lock_for(coord):
                vox = self._voxels.get(coord)
                if vox is None:
                    state = FilterState(self._blocks)
                else:
                    state = FilterState(vox.params, vox.last_time)
                state = step(state, meas, self.forgetting, self.projection)
                self._voxels[coord] = _Voxel(state.params.a, meas.time, state.params)
            return self

        with self._lock_for(coord):
            vox = self._voxels.get(coord)
            a = self.prior_a if vox is None else self._relax_a(vox.a, _elapsed(vox.last_time, meas.time))
            if meas.y is not None:
                with self._shared_lock:
                    h = _elapsed(self.shared_last_time, meas.time)
                    blocks = predict(self._blocks, h, self.forgetting)
                    post = bmm_property_update(blocks.replace(a=a), meas.y, self.projection)
                    a = post.a
                    self._blocks = post.replace(a=self.prior_a)
                    self.shared_last_time = meas.time
            elif self.shared_last_time is None:
                with self._shared_lock:
                    if self.shared_last_time is None:
                        self.shared_last_time = meas.time
            a = np.array(a)
            if meas.label is not None:
                a[meas.label] += 1.0  # exact categorical update, blocks untouched
            self._voxels[coord] = _Voxel(a, meas.time)
        return self

    def query(self, point, t: float) -> MapParams:
        """Map parameters at ``point`` forgetting-predicted to time ``t``."""
        coord = self.locate(point)
        vox = self._voxels.get(coord)
        if not self.shared:
            if vox is None:
                return self._blocks
            return predict(vox.params, _elapsed(vox.last_time, t), self.forgetting)
        with self._shared_lock:
            blocks, last = self._blocks, self.shared_last_time
        blocks = predict(blocks, _elapsed(last, t), self.forgetting)
        a = self.prior_a if vox is None else self._relax_a(vox.a, _elapsed(vox.last_time, t))
        return blocks.replace(a=a)

    def snapshot(self) -> dict:
        voxels = []
        for coord in self.coords():
            vox = self._voxels[coord]
            entry = {"coord": list(coord), "a": vox.a.tolist(), "last_time": vox.last_time}
            if vox.params is not None:
                entry["blocks"] = vox.params.to_dict()["blocks"]
            voxels.append(entry)
        return {
            "d": self.d,
            "voxel_size": self.voxel_size.tolist(),
            "shared_blocks": self._blocks.to_dict()["blocks"],
            "shared_last_time": self.shared_last_time,
            "voxels": voxels,
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.snapshot(), **kwargs)

    @classmethod
    def from_snapshot(
        cls,
        snap: dict,
        forgetting: ForgettingConfig | None = None,
        prior_a: Sequence[float] | None = None,
    ) -> "VoxelGrid":
        blocks_json = snap["shared_blocks"]
        K = len(blocks_json)
        a0 = np.ones(K) if prior_a is None else prior_a
        blocks = MapParams.from_dict({"a": list(a0), "blocks": blocks_json})
        shared = not any("blocks" in v for v in snap["voxels"])
        grid = cls(snap["d"], snap["voxel_size"], blocks, forgetting, a0, shared_blocks=shared)
        grid.shared_last_time = snap.get("shared_last_time")
        for v in snap["voxels"]:
            params = None
            if "blocks" in v:
                params = MapParams.from_dict({"a": v["a"], "blocks": v["blocks"]})
            grid._voxels[tuple(v["coord"])] = _Voxel(np.asarray(v["a"], float), v["last_time"], params)
        return grid
