import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy import ndimage

from core.grid import OccupancyGrid
from utils.errors import InvalidInputError

LETHAL = np.inf
BASE_COST = 1.0
# Cost right next to an obstacle; decays linearly to BASE_COST at the inflation radius
INFLATED_PEAK_COST = 25.0


@dataclass
class CostGrid:
    """Per-cell traversal cost per meter; LETHAL cells cannot be entered"""
    cost: np.ndarray
    resolution: float
    origin_x: float
    origin_y: float
    # unknown cells touching free space; usable as a goal although lethal
    goal_exempt: np.ndarray

    @property
    def width(self) -> int:
        return self.cost.shape[1]

    @property
    def height(self) -> int:
        return self.cost.shape[0]

    def world_to_cell(self, x: float, y: float) -> Tuple[int, int]:
        col = int(np.floor((x - self.origin_x) / self.resolution))
        row = int(np.floor((y - self.origin_y) / self.resolution))
        return col, row

    def cell_to_world(self, col: int, row: int) -> Tuple[float, float]:
        return (self.origin_x + (col + 0.5) * self.resolution,
                self.origin_y + (row + 0.5) * self.resolution)

    def in_bounds(self, col: int, row: int) -> bool:
        return 0 <= col < self.width and 0 <= row < self.height

    def is_lethal(self, col: int, row: int) -> bool:
        return not self.in_bounds(col, row) or not np.isfinite(self.cost[row, col])


def inflate_costmap(grid: OccupancyGrid, inflation_radius: float, inscribed_radius: float = 0.0) -> CostGrid:
    """
    Cost grid for planning on an occupancy grid.

    Occupied and unknown cells are lethal, as is anything within
    inscribed_radius of an occupied cell. Up to inflation_radius the cost falls
    linearly from INFLATED_PEAK_COST to the base cost of 1 per meter.

    Args:
        grid: occupancy grid snapshot
        inflation_radius: meters, >= 0
        inscribed_radius: meters, >= 0

    Returns:
        CostGrid aligned with the input grid
    """
    if inflation_radius < 0 or inscribed_radius < 0:
        raise InvalidInputError("inflation and inscribed radii must be >= 0")
    occupied = grid.occupied_mask()
    unknown = grid.unknown_mask()
    cost = np.full(grid.cells.shape, BASE_COST)

    if occupied.any():
        distance = ndimage.distance_transform_edt(~occupied) * grid.resolution
        if inflation_radius > 0:
            band = (distance > 0) & (distance < inflation_radius)
            cost[band] = BASE_COST + (INFLATED_PEAK_COST - BASE_COST) * (1.0 - distance[band] / inflation_radius)
        if inscribed_radius > 0:
            cost[distance <= inscribed_radius] = LETHAL
    cost[occupied | unknown] = LETHAL

    touches_free = ndimage.binary_dilation(grid.free_mask(), structure=np.ones((3, 3), dtype=bool))
    goal_exempt = unknown & touches_free
    logging.debug(f"Costmap: {int(np.isinf(cost).sum())} lethal of {cost.size} cells")
    return CostGrid(cost, grid.resolution, grid.origin_x, grid.origin_y, goal_exempt)
