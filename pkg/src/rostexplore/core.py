"""Cell decomposition of spacetime, neighbor topology and RNG plumbing.

Cells are half-open squares ``[k*w, (k+1)*w)`` in pixel space, stacked along
a discrete time axis.  In static-map mode every cell lives at ``t=0`` and the
grid has a single time slice, so temporal neighbors vanish.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


@dataclass(frozen=True, order=True)
class CellKey:
    x: int
    y: int
    t: int = 0

    def __post_init__(self):
        if self.x < 0 or self.y < 0 or self.t < 0:
            raise ValueError(f"negative cell coordinate: {self}")

    @property
    def xy(self) -> tuple[int, int]:
        return (self.x, self.y)


@dataclass(frozen=True)
class NeighborhoodConfig:
    """Manhattan spatial radius and temporal depth of the context G(c).

    The default (1, 1) gives the 6-neighborhood: 4 spatial + 2 temporal.
    """

    spatial_radius: int = 1
    temporal_depth: int = 1

    def __post_init__(self):
        if self.spatial_radius < 0 or self.temporal_depth < 0:
            raise ValueError("neighborhood radius and depth must be >= 0")


@dataclass(frozen=True)
class GridBounds:
    """Grid extent in cells.  ``timesteps=None`` leaves time unbounded above."""

    width: int
    height: int
    timesteps: int | None = 1

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("grid dimensions must be positive")
        if self.timesteps is not None and self.timesteps <= 0:
            raise ValueError("timesteps must be positive or None")

    @property
    def n_cells(self) -> int:
        return self.width * self.height

    def contains(self, c: CellKey) -> bool:
        if not (0 <= c.x < self.width and 0 <= c.y < self.height and c.t >= 0):
            return False
        return self.timesteps is None or c.t < self.timesteps


@dataclass(frozen=True)
class Vocabulary:
    """Word ids ``0..size-1``, optionally split into named half-open ranges."""

    size: int
    ranges: dict[str, tuple[int, int]] = field(default_factory=dict)

    def __post_init__(self):
        if self.size <= 0:
            raise ValueError("vocabulary size must be positive")
        for name, (lo, hi) in self.ranges.items():
            if not (0 <= lo < hi <= self.size):
                raise ValueError(f"range {name!r}=[{lo},{hi}) outside vocabulary of size {self.size}")

    def validate(self, words) -> np.ndarray:
        arr = np.asarray(words, dtype=np.int64).reshape(-1)
        if arr.size and (arr.min() < 0 or arr.max() >= self.size):
            bad = arr[(arr < 0) | (arr >= self.size)][0]
            raise VocabularyError(f"word id {bad} outside vocabulary [0, {self.size})")
        return arr.astype(np.int32)

    def range_of(self, name: str) -> range:
        lo, hi = self.ranges[name]
        return range(lo, hi)


class VocabularyError(ValueError):
    pass


def _spatial_offsets(radius: int) -> list[tuple[int, int]]:
    # row-major: dy outer, dx inner
    return [
        (dx, dy)
        for dy in range(-radius, radius + 1)
        for dx in range(-radius, radius + 1)
        if 0 < abs(dx) + abs(dy) <= radius
    ]


def neighbors(c: CellKey, cfg: NeighborhoodConfig, bounds: GridBounds) -> list[CellKey]:
    """In-bounds neighbors of ``c``, excluding ``c`` itself.

    Spatial neighbors share ``c.t`` and lie within Manhattan distance
    ``cfg.spatial_radius``; temporal neighbors share ``(x, y)`` and lie within
    ``cfg.temporal_depth`` timesteps.  Spatial cells come first in row-major
    order, then temporal cells in increasing ``t``.
    """
    if not bounds.contains(c):
        raise ValueError(f"{c} outside grid {bounds}")
    out = []
    for dx, dy in _spatial_offsets(cfg.spatial_radius):
        x, y = c.x + dx, c.y + dy
        if 0 <= x < bounds.width and 0 <= y < bounds.height:
            out.append(CellKey(x, y, c.t))
    for dt in range(-cfg.temporal_depth, cfg.temporal_depth + 1):
        t = c.t + dt
        if dt == 0 or t < 0 or (bounds.timesteps is not None and t >= bounds.timesteps):
            continue
        out.append(CellKey(c.x, c.y, t))
    return out


def spatial_neighbors(c: CellKey, bounds: GridBounds) -> list[CellKey]:
    """The 4-connected movement candidates of ``c`` (same timestep)."""
    return neighbors(c, NeighborhoodConfig(1, 0), bounds)


def cell_of(point: Sequence[float], cell_width: float, t: int = 0,
            extent: Sequence[float] | None = None) -> CellKey:
    """Cell containing a pixel-space point, using floor division.

    ``extent`` is the map size ``(width_px, height_px)``; points outside
    ``[0, width_px) x [0, height_px)`` raise ``ValueError``.
    """
    if cell_width <= 0:
        raise ValueError("cell_width must be positive")
    px, py = float(point[0]), float(point[1])
    if px < 0 or py < 0 or (extent is not None and (px >= extent[0] or py >= extent[1])):
        raise ValueError(f"point {tuple(point)} outside map extent {extent}")
    return CellKey(int(math.floor(px / cell_width)), int(math.floor(py / cell_width)), t)


def grid_for_extent(width_px: int, height_px: int, cell_width: int) -> GridBounds:
    """Number of cells covering a pixel extent (partial cells at the far edge count)."""
    return GridBounds(-(-width_px // cell_width), -(-height_px // cell_width))


def row_major(cells: Iterable[CellKey]) -> list[CellKey]:
    return sorted(cells, key=lambda c: (c.t, c.y, c.x))


def make_rng(seed: int | np.random.SeedSequence, *stream: int) -> np.random.Generator:
    """PCG64 generator for ``seed``, optionally on an independent child stream.

    ``make_rng(seed, a, b)`` is stable across processes: the stream is chosen
    by the spawn key, not by call order.
    """
    if isinstance(seed, np.random.SeedSequence):
        ss = seed
    else:
        ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF)
    if stream:
        ss = np.random.SeedSequence(ss.entropy, spawn_key=tuple(ss.spawn_key) + tuple(int(s) for s in stream))
    return np.random.Generator(np.random.PCG64(ss))


UNLABELED = -1


@dataclass
class Labeling:
    """Per-cell integer labels on a ``height x width`` grid; ``UNLABELED`` marks gaps."""

    labels: np.ndarray
    n_labels: int

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.ndim != 2:
            raise ValueError("labels must be a 2-D (height, width) grid")
        if self.labels.size and self.labels.max() >= self.n_labels:
            raise ValueError("label outside alphabet")

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape

    def __getitem__(self, xy: tuple[int, int]) -> int:
        x, y = xy
        return int(self.labels[y, x])


def derive_seed(seed: int, *keys: int) -> int:
    """A 63-bit integer seed for the child stream ``keys`` of ``seed``."""
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))
