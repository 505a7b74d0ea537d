"""Occupancy grids: splatting point clouds, binarizing, and IoU.

A grid covers the axis-aligned cube [origin, origin + D * h) with D cells
per axis. values[x, y, z] indexes cells in that axis order; flattening in C
order therefore runs z fastest, matching the file format.

Splatting treats each point as a cube of side h (one cell) centered on the
point and deposits into each of the up-to-8 overlapped cells the fraction of
the point cube's volume falling inside, i.e. trilinear weights. Weights that
fall outside the grid are discarded, so only points whose cube lies fully
inside conserve their unit of mass.
"""

from dataclasses import dataclass

import numpy as np

from .core import validate
from .errors import (EmptySet, GridMismatch, InvalidThreshold, NonBinaryGrid,
                     PointOutsideGrid)


@dataclass
class OccupancyGrid:
    dims: int
    origin: np.ndarray
    cell_size: float
    values: np.ndarray  # (D, D, D), axes (x, y, z)

    def __post_init__(self):
        self.dims = int(self.dims)
        self.origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
        self.cell_size = float(self.cell_size)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.dims < 1:
            raise ValueError("dims must be >= 1")
        if not self.cell_size > 0:
            raise ValueError("cell_size must be > 0")
        if self.values.shape != (self.dims,) * 3:
            raise ValueError(
                f"values shape {self.values.shape} does not match dims {self.dims}")


def splat(ps, dims, origin, cell_size, clamp_points=True, saturate=True):
    """Register a point cloud into a D^3 occupancy grid.

    clamp_points=True moves outside points onto the grid boundary first;
    with False such points raise PointOutsideGrid instead. saturate=True
    caps each cell at 1.0 (occupancy semantics); tests disable it to check
    raw mass conservation.
    """
    pts = validate(ps)
    if len(pts) == 0:
        raise EmptySet()
    dims = int(dims)
    origin = np.asarray(origin, dtype=np.float64).reshape(3)
    h = float(cell_size)
    if dims < 1 or not h > 0:
        raise ValueError("need dims >= 1 and cell_size > 0")
    lo = origin
    hi = origin + dims * h
    outside = (pts < lo) | (pts > hi)
    if outside.any():
        if not clamp_points:
            raise PointOutsideGrid(int(np.argmax(outside.any(axis=1))))
        pts = np.clip(pts, lo, hi)

    # cell c spans [origin + c h, origin + (c+1) h); a point cube of side h
    # centered at p overlaps cells floor(u) and floor(u)+1 per axis, where
    # u = (p - origin)/h - 1/2, with weights (1 - f) and f, f = u - floor(u)
    u = (pts - origin) / h - 0.5
    i0 = np.floor(u).astype(np.int64)
    f = u - i0
    grid = np.zeros((dims, dims, dims))
    flat = grid.ravel()
    for dx in (0, 1):
        wx = f[:, 0] if dx else 1.0 - f[:, 0]
        cx = i0[:, 0] + dx
        okx = (cx >= 0) & (cx < dims)
        for dy in (0, 1):
            wy = f[:, 1] if dy else 1.0 - f[:, 1]
            cy = i0[:, 1] + dy
            okxy = okx & (cy >= 0) & (cy < dims)
            for dz in (0, 1):
                wz = f[:, 2] if dz else 1.0 - f[:, 2]
                cz = i0[:, 2] + dz
                ok = okxy & (cz >= 0) & (cz < dims)
                if not ok.any():
                    continue
                w = (wx * wy * wz)[ok]
                cell = (cx[ok] * dims + cy[ok]) * dims + cz[ok]
                np.add.at(flat, cell, w)
    if saturate:
        np.clip(grid, 0.0, 1.0, out=grid)
    return OccupancyGrid(dims, origin, h, grid)


def binarize(g, threshold):
    """Map values to {0, 1} by v >= threshold. Idempotent."""
    t = float(threshold)
    if not 0.0 <= t <= 1.0:
        raise InvalidThreshold(threshold)
    return OccupancyGrid(g.dims, g.origin, g.cell_size,
                         (g.values >= t).astype(np.float64))


def _require_binary(values):
    if not np.isin(values, (0.0, 1.0)).all():
        raise NonBinaryGrid("grid values must be exactly 0 or 1; binarize first")


def iou(g1, g2):
    """Intersection over union of two binary grids on the same geometry.

    Defined as 1.0 when both grids are empty.
    """
    if (g1.dims != g2.dims or g1.cell_size != g2.cell_size
            or not np.array_equal(g1.origin, g2.origin)):
        raise GridMismatch("grids differ in dims, origin, or cell size")
    _require_binary(g1.values)
    _require_binary(g2.values)
    a = g1.values > 0
    b = g2.values > 0
    union = int(np.count_nonzero(a | b))
    if union == 0:
        return 1.0
    return float(np.count_nonzero(a & b)) / union


def grid_unit_scale(dims, cell_size):
    """One reporting unit = a tenth of the grid's side length: D * h / 10."""
    dims = int(dims)
    h = float(cell_size)
    if dims < 1 or not h > 0:
        raise ValueError("need dims >= 1 and cell_size > 0")
    return dims * h / 10.0
