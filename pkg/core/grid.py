import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Tuple, Union

import numpy as np
from scipy import ndimage

from core.world import World
from utils.errors import InvalidInputError

UNKNOWN = -1
FREE = 0
OCCUPIED = 100

# Portable graymap levels for the grid export
PGM_LEVELS = {UNKNOWN: 128, FREE: 254, OCCUPIED: 0}


@dataclass
class OccupancyGrid:
    """
    Ternary 2D grid. cells[row, col]; row 0 is the minimum y, col 0 the minimum x.
    The origin is the world position of the lower-left corner of cell (0, 0).
    """
    resolution: float
    origin_x: float
    origin_y: float
    cells: np.ndarray

    def __post_init__(self):
        if self.resolution <= 0:
            raise InvalidInputError("grid resolution must be positive")
        self.cells = np.asarray(self.cells, dtype=np.int8)
        if self.cells.ndim != 2 or min(self.cells.shape) < 1:
            raise InvalidInputError(f"grid needs at least one cell, got shape {self.cells.shape}")

    @classmethod
    def empty(cls, xmin: float, ymin: float, xmax: float, ymax: float, resolution: float) -> 'OccupancyGrid':
        width = max(1, int(math.ceil((xmax - xmin) / resolution - 1e-9)))
        height = max(1, int(math.ceil((ymax - ymin) / resolution - 1e-9)))
        return cls(resolution, xmin, ymin, np.full((height, width), UNKNOWN, dtype=np.int8))

    @classmethod
    def for_world(cls, world: World, resolution: float, margin: float = 0.5) -> 'OccupancyGrid':
        b = world.bounds
        return cls.empty(b.xmin - margin, b.ymin - margin, b.xmax + margin, b.ymax + margin, resolution)

    @property
    def width(self) -> int:
        return self.cells.shape[1]

    @property
    def height(self) -> int:
        return self.cells.shape[0]

    def copy(self) -> 'OccupancyGrid':
        return OccupancyGrid(self.resolution, self.origin_x, self.origin_y, self.cells.copy())

    def world_to_cell(self, x: float, y: float) -> Tuple[int, int]:
        """(col, row) of the cell containing a world point; may be out of bounds"""
        col = int(math.floor((x - self.origin_x) / self.resolution))
        row = int(math.floor((y - self.origin_y) / self.resolution))
        return col, row

    def world_to_cells(self, xy: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        cols = np.floor((xy[:, 0] - self.origin_x) / self.resolution).astype(int)
        rows = np.floor((xy[:, 1] - self.origin_y) / self.resolution).astype(int)
        return cols, rows

    def cell_to_world(self, col: int, row: int) -> Tuple[float, float]:
        """World coordinates of a cell centre"""
        return (self.origin_x + (col + 0.5) * self.resolution,
                self.origin_y + (row + 0.5) * self.resolution)

    def in_bounds(self, col: int, row: int) -> bool:
        return 0 <= col < self.width and 0 <= row < self.height

    def contains_point(self, x: float, y: float) -> bool:
        return self.in_bounds(*self.world_to_cell(x, y))

    def value_at(self, x: float, y: float) -> int:
        col, row = self.world_to_cell(x, y)
        if not self.in_bounds(col, row):
            return UNKNOWN
        return int(self.cells[row, col])

    def count(self, state: int) -> int:
        return int(np.count_nonzero(self.cells == state))

    def unknown_mask(self) -> np.ndarray:
        return self.cells == UNKNOWN

    def free_mask(self) -> np.ndarray:
        return self.cells == FREE

    def occupied_mask(self) -> np.ndarray:
        return self.cells == OCCUPIED

    def write_pgm(self, path: Union[str, Path]):
        """Binary P5 export, one byte per cell, first stored row = minimum y"""
        image = np.full(self.cells.shape, PGM_LEVELS[UNKNOWN], dtype=np.uint8)
        image[self.cells == FREE] = PGM_LEVELS[FREE]
        image[self.cells == OCCUPIED] = PGM_LEVELS[OCCUPIED]
        header = f"P5\n{self.width} {self.height}\n255\n".encode('ascii')
        with open(path, 'wb') as f:
            f.write(header)
            f.write(image.tobytes())
        logging.debug(f"Wrote {self.width}x{self.height} grid to {path}")


def disc_offsets(radius_cells: float) -> np.ndarray:
    """(dcol, drow) offsets of every cell whose centre lies within the radius"""
    r = int(math.floor(radius_cells))
    dc, dr = np.meshgrid(np.arange(-r, r + 1), np.arange(-r, r + 1))
    keep = dc ** 2 + dr ** 2 <= radius_cells ** 2 + 1e-9
    return np.stack([dc[keep], dr[keep]], axis=1)


def rasterize_world(world: World, resolution: float, margin: float = 0.5) -> OccupancyGrid:
    """Ground-truth grid: OCCUPIED where a wall or rectangle touches the cell, FREE elsewhere"""
    grid = OccupancyGrid.for_world(world, resolution, margin)
    cols, rows = np.meshgrid(np.arange(grid.width), np.arange(grid.height))
    cx = grid.origin_x + (cols.ravel() + 0.5) * resolution
    cy = grid.origin_y + (rows.ravel() + 0.5) * resolution
    blocked = np.zeros(cx.shape, dtype=bool)
    for rect in world.rects:
        blocked |= (cx >= rect.xmin - 0.5 * resolution) & (cx <= rect.xmax + 0.5 * resolution) \
            & (cy >= rect.ymin - 0.5 * resolution) & (cy <= rect.ymax + 0.5 * resolution)
    half_diag = 0.5 * math.sqrt(2.0) * resolution
    for seg in np.asarray(world.walls, dtype=float).reshape(-1, 4):
        blocked |= point_segment_distance_many(cx, cy, seg) <= half_diag
    outside = (cx < world.bounds.xmin) | (cx > world.bounds.xmax) | (cy < world.bounds.ymin) | (cy > world.bounds.ymax)
    cells = np.where(blocked | outside, OCCUPIED, FREE).reshape(grid.height, grid.width)
    grid.cells = cells.astype(np.int8)
    return grid


def point_segment_distance_many(px: np.ndarray, py: np.ndarray, seg: np.ndarray) -> np.ndarray:
    x1, y1, x2, y2 = seg
    ex, ey = x2 - x1, y2 - y1
    length_sq = ex * ex + ey * ey
    if length_sq == 0:
        return np.hypot(px - x1, py - y1)
    t = np.clip(((px - x1) * ex + (py - y1) * ey) / length_sq, 0.0, 1.0)
    return np.hypot(x1 + t * ex - px, y1 + t * ey - py)


def reachable_free_mask(truth: OccupancyGrid, x: float, y: float) -> np.ndarray:
    """4-connected flood fill of free cells from a world point"""
    labels, _ = ndimage.label(truth.cells == FREE)
    col, row = truth.world_to_cell(x, y)
    if not truth.in_bounds(col, row) or labels[row, col] == 0:
        raise InvalidInputError(f"start ({x:.2f}, {y:.2f}) is not in free space")
    return labels == labels[row, col]
