"""Equirectangular tiling, FOV-shaped probability kernels and tile probability maps."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from ..errors import ConfigError, EmptyViewportError, UnnormalizedMapError

EDGE_DEG = 2.0  # softness of the kernel boundary, degrees of overlap


@dataclass(frozen=True)
class TilingConfig:
    rows: int = 4
    cols: int = 8
    fov_deg: tuple[float, float] = (100.0, 100.0)  # (horizontal, vertical)
    high_mbps: float = 0.45
    low_mbps: float = 0.05

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ConfigError("tiling needs at least one row and column")
        if not self.high_mbps > self.low_mbps > 0:
            raise ConfigError("bitrates must satisfy high > low > 0")
        if not all(0 < f <= 360 for f in self.fov_deg):
            raise ConfigError("field of view must be in (0, 360] degrees")

    @property
    def n_tiles(self) -> int:
        return self.rows * self.cols

    @property
    def tile_width(self) -> float:
        return 360.0 / self.cols

    @property
    def tile_height(self) -> float:
        return 180.0 / self.rows

    def tile_of(self, yaw_deg: float, pitch_deg: float) -> int:
        """Tile containing a direction; column 0 starts at yaw -180, row 0 at the north pole."""
        col = int(np.floor(((yaw_deg + 180.0) % 360.0) / self.tile_width)) % self.cols
        row = int(np.clip(np.floor((90.0 - pitch_deg) / self.tile_height), 0, self.rows - 1))
        return row * self.cols + col

    @cached_property
    def _col_centers(self) -> np.ndarray:
        return -180.0 + self.tile_width * (np.arange(self.cols) + 0.5)

    @cached_property
    def _row_bounds(self) -> np.ndarray:
        top = 90.0 - self.tile_height * np.arange(self.rows)
        return np.stack([top - self.tile_height, top], axis=1)  # (rows, [lo, hi])

    def viewport_tiles(self, yaw_deg: float, pitch_deg: float) -> frozenset[int]:
        """Tiles whose rectangle overlaps the FOV rectangle centred on (yaw, pitch)."""
        half_w, half_h = self.fov_deg[0] / 2.0, self.fov_deg[1] / 2.0
        dyaw = np.abs((self._col_centers - yaw_deg + 180.0) % 360.0 - 180.0)
        cols = np.nonzero(dyaw < half_w + self.tile_width / 2.0)[0] if half_w < 180 else np.arange(self.cols)
        lo, hi = self._row_bounds[:, 0], self._row_bounds[:, 1]
        rows = np.nonzero(np.maximum(lo, pitch_deg - half_h) < np.minimum(hi, pitch_deg + half_h))[0]
        return frozenset(int(r * self.cols + c) for r in rows for c in cols)

    def kernel(self, yaw_deg: float, pitch_deg: float) -> np.ndarray:
        """Unnormalised tile weights: a soft version of "tile intersects the FOV centred here".

        Each tile's weight is a product of sigmoids of its yaw and pitch overlap
        with the FOV rectangle, so every intersecting tile gets comparable
        weight and the map varies smoothly with the centre.
        """
        half_w, half_h = self.fov_deg[0] / 2.0, self.fov_deg[1] / 2.0
        dyaw = np.abs((self._col_centers - yaw_deg + 180.0) % 360.0 - 180.0)
        yaw_overlap = half_w + self.tile_width / 2.0 - dyaw
        if half_w >= 180:
            yaw_overlap = np.full(self.cols, self.tile_width)
        lo, hi = self._row_bounds[:, 0], self._row_bounds[:, 1]
        pitch_overlap = np.minimum(hi, pitch_deg + half_h) - np.maximum(lo, pitch_deg - half_h)
        w = _sigmoid(pitch_overlap / EDGE_DEG)[:, None] * _sigmoid(yaw_overlap / EDGE_DEG)[None, :]
        return w.reshape(-1)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass(frozen=True)
class TileProbabilityMap:
    """Non-negative per-tile weights summing to one."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64)
        if w.ndim != 1 or np.any(w < 0) or not np.all(np.isfinite(w)):
            raise UnnormalizedMapError("tile weights must be a finite non-negative vector")
        if abs(w.sum() - 1.0) > 1e-9:
            raise UnnormalizedMapError(f"tile weights sum to {w.sum():.12g}, not 1")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_weights(cls, weights, fallback: np.ndarray | None = None) -> TileProbabilityMap:
        w = np.clip(np.asarray(weights, dtype=np.float64), 0.0, None)
        total = w.sum()
        if total <= 0:
            if fallback is None:
                w, total = np.ones_like(w), float(w.size)
            else:
                w, total = np.asarray(fallback, dtype=np.float64), float(np.sum(fallback))
        return cls(w / total)

    @classmethod
    def centered(cls, tiling: TilingConfig, yaw_deg: float, pitch_deg: float) -> TileProbabilityMap:
        return cls.from_weights(tiling.kernel(yaw_deg, pitch_deg))

    def argmax(self) -> int:
        return int(np.argmax(self.weights))

    def mass(self, tiles) -> float:
        return float(sum(self.weights[t] for t in tiles))

    def top_mass_tiles(self, coverage: float = 0.9) -> frozenset[int]:
        """Smallest highest-weight tile set whose mass reaches ``coverage`` (ties by index)."""
        order = np.argsort(-self.weights, kind="stable")
        csum = np.cumsum(self.weights[order])
        k = int(np.searchsorted(csum, coverage - 1e-12)) + 1
        return frozenset(int(t) for t in order[: min(k, order.size)])


def tile_overlap_ratio(predicted, actual) -> float:
    """|predicted ∩ actual| / |actual|."""
    actual = frozenset(actual)
    if not actual:
        raise EmptyViewportError("actual viewport has no tiles")
    return len(frozenset(predicted) & actual) / len(actual)
