"""
Direct 2D raycast integration of simulated range scans into the occupancy grid.
"""

import logging
import math

import numpy as np

from core.geometry import Pose2
from core.grid import FREE, OCCUPIED, OccupancyGrid
from core.params import SensorModel
from core.world import World
from utils.errors import InvalidInputError

# Ray samples per cell
SAMPLES_PER_CELL = 4
# Pull-back applied to a hit point so it lands on the near side of the obstacle
HIT_EPS = 1e-6


def scan_angles(pose: Pose2, sensor: SensorModel, resolution: float) -> np.ndarray:
    """World-frame ray angles across the field of view, step atan2(resolution, max_range)"""
    step = math.atan2(resolution, sensor.max_range)
    if sensor.fov >= 2.0 * math.pi - 1e-12:
        n = int(math.ceil(2.0 * math.pi / step))
        rel = np.arange(n) * (2.0 * math.pi / n) - math.pi
    else:
        n = int(math.ceil(sensor.fov / step)) + 1
        rel = np.linspace(-0.5 * sensor.fov, 0.5 * sensor.fov, n)
    return pose.theta + rel


def integrate_scan(grid: OccupancyGrid, pose: Pose2, world: World, sensor: SensorModel) -> OccupancyGrid:
    """
    Raycast one scan from pose and return the updated grid.

    Cells crossed before the first obstacle become free, the hit cell becomes
    occupied and everything behind it is left alone. Occupied cells never go
    back to free. The input grid is not modified.

    Raises:
        InvalidInputError: pose outside the grid
    """
    if not grid.contains_point(pose.x, pose.y):
        raise InvalidInputError(f"pose ({pose.x:.2f}, {pose.y:.2f}) lies outside the grid")

    angles = scan_angles(pose, sensor, grid.resolution)
    hits = world.raycast_many(pose.x, pose.y, angles)
    hit_mask = hits <= sensor.max_range
    lengths = np.where(hit_mask, hits - HIT_EPS, sensor.max_range)

    ds = grid.resolution / SAMPLES_PER_CELL
    n_samples = int(math.ceil(sensor.max_range / ds)) + 1
    t = np.arange(n_samples) * ds
    # (rays, samples) sample positions, truncated per ray at its length
    valid = t[None, :] < lengths[:, None]
    cos_a, sin_a = np.cos(angles)[:, None], np.sin(angles)[:, None]
    xs = (pose.x + t[None, :] * cos_a)[valid]
    ys = (pose.y + t[None, :] * sin_a)[valid]
    free_cols, free_rows = grid.world_to_cells(np.column_stack([xs, ys]))

    hx = pose.x + lengths[hit_mask] * np.cos(angles[hit_mask])
    hy = pose.y + lengths[hit_mask] * np.sin(angles[hit_mask])
    occ_cols, occ_rows = grid.world_to_cells(np.column_stack([hx, hy]))

    updated = grid.copy()
    cells = updated.cells
    inside = (free_cols >= 0) & (free_cols < grid.width) & (free_rows >= 0) & (free_rows < grid.height)
    free_update = np.zeros(cells.shape, dtype=bool)
    free_update[free_rows[inside], free_cols[inside]] = True

    inside = (occ_cols >= 0) & (occ_cols < grid.width) & (occ_rows >= 0) & (occ_rows < grid.height)
    occ_update = np.zeros(cells.shape, dtype=bool)
    occ_update[occ_rows[inside], occ_cols[inside]] = True

    free_update &= ~occ_update
    free_update &= cells != OCCUPIED
    cells[free_update] = FREE
    cells[occ_update] = OCCUPIED
    logging.debug(f"Scan at ({pose.x:.2f}, {pose.y:.2f}): {len(angles)} rays, {int(hit_mask.sum())} hits")
    return updated
