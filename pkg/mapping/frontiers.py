"""
Frontier detection, clustering and pruning on the occupancy grid.

Two detectors feed one candidate pool: a morphological edge detector that
scans the whole grid, and an incremental RRT whose branches report where they
run from free into unknown space. The pooled points are clustered with a
flat-kernel mean-shift, and the clusters become FrontierCandidate goals.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Protocol, Sequence, Tuple

import numpy as np
from scipy import ndimage
from sklearn.neighbors import NearestNeighbors

from core.grid import FREE, OCCUPIED, UNKNOWN, OccupancyGrid, disc_offsets
from utils.errors import InvalidInputError

MEAN_SHIFT_TOL = 1e-4
MEAN_SHIFT_MAX_ITER = 100
EIGHT_NEIGHBOURHOOD = np.ones((3, 3), dtype=bool)


class FrontierDetector(str, Enum):
    EDGE = 'edge'
    RRT = 'rrt'


@dataclass(frozen=True)
class FrontierCandidate:
    frontier_id: int
    position: Tuple[float, float]
    cluster_size: int
    detector: FrontierDetector
    created_at: int


@dataclass
class Cluster:
    centroid: np.ndarray
    count: int
    members: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))


class ReachabilityOracle(Protocol):
    def reachable(self, x: float, y: float) -> bool:
        ...


def detect_frontiers_edge(grid: OccupancyGrid) -> List[Tuple[int, int]]:
    """
    Free cells 8-adjacent to unknown, after a 3x3 opening of the free mask.

    Returns:
        (col, row) cells in row-major order
    """
    free = grid.free_mask()
    if not free.any():
        return []
    opened = ndimage.binary_opening(free, structure=EIGHT_NEIGHBOURHOOD)
    near_unknown = ndimage.binary_dilation(grid.unknown_mask(), structure=EIGHT_NEIGHBOURHOOD)
    rows, cols = np.nonzero(opened & free & near_unknown)
    return list(zip(cols.tolist(), rows.tolist()))


def cells_to_points(grid: OccupancyGrid, cells: Sequence[Tuple[int, int]]) -> np.ndarray:
    if not cells:
        return np.zeros((0, 2))
    cr = np.asarray(cells, dtype=float)
    return np.column_stack([grid.origin_x + (cr[:, 0] + 0.5) * grid.resolution,
                            grid.origin_y + (cr[:, 1] + 0.5) * grid.resolution])


class RRTFrontierDetector:
    """
    Randomized tree grown through known free space.

    The tree and its random stream persist between calls, so every call keeps
    extending the same tree over the latest grid.
    """

    def __init__(self, root: Tuple[float, float], step: float, rng_seed=None):
        if step <= 0:
            raise InvalidInputError("RRT step must be positive")
        self.step = step
        self.rng = np.random.default_rng(rng_seed)
        self.nodes = np.asarray([root], dtype=float)
        self._root_checked = False

    def __len__(self) -> int:
        return len(self.nodes)

    def detect(self, grid: OccupancyGrid, iterations: int) -> List[Tuple[float, float]]:
        """Run `iterations` extensions; returns the boundary points hit, in emission order"""
        if not self._root_checked:
            rx, ry = self.nodes[0]
            if grid.value_at(rx, ry) != FREE:
                raise InvalidInputError(f"RRT root ({rx:.2f}, {ry:.2f}) is not in a free cell")
            self._root_checked = True

        xmax = grid.origin_x + grid.width * grid.resolution
        ymax = grid.origin_y + grid.height * grid.resolution
        n_check = max(2, int(math.ceil(2.0 * self.step / grid.resolution)) + 1)
        emitted = []
        for _ in range(iterations):
            sample = np.array([self.rng.uniform(grid.origin_x, xmax), self.rng.uniform(grid.origin_y, ymax)])
            dist = np.hypot(*(self.nodes - sample).T)
            nearest = self.nodes[int(np.argmin(dist))]
            gap = float(dist.min())
            if gap < 1e-12:
                continue
            target = sample if gap <= self.step else nearest + (sample - nearest) * (self.step / gap)

            path = nearest[None, :] + np.linspace(0.0, 1.0, n_check)[:, None] * (target - nearest)[None, :]
            cols, rows = grid.world_to_cells(path)
            inside = (cols >= 0) & (cols < grid.width) & (rows >= 0) & (rows < grid.height)
            states = np.full(len(path), UNKNOWN, dtype=int)
            states[inside] = grid.cells[rows[inside], cols[inside]]

            blocked = np.nonzero(states != FREE)[0]
            if len(blocked) == 0:
                self.nodes = np.vstack([self.nodes, target])
                continue
            first = blocked[0]
            if states[first] == OCCUPIED or first == 0:
                continue
            emitted.append((float(path[first - 1, 0]), float(path[first - 1, 1])))
        return emitted


def detect_frontiers_rrt(grid: OccupancyGrid, tree_root: Tuple[float, float], step: float,
                         iterations: int, rng_seed) -> List[Tuple[float, float]]:
    """One-shot RRT detection from a fresh tree"""
    return RRTFrontierDetector(tree_root, step, rng_seed).detect(grid, iterations)


def cluster_mean_shift(points, bandwidth: float) -> List[Cluster]:
    """
    Flat-kernel mean-shift seeded at every point.

    Modes closer than bandwidth / 2 merge into the better supported one; every
    point then joins its nearest surviving mode. The returned centroid is the
    mean of a cluster's members.
    """
    if bandwidth <= 0:
        raise InvalidInputError("bandwidth must be positive")
    X = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(X) == 0:
        return []

    nn = NearestNeighbors(radius=bandwidth).fit(X)
    modes = X.copy()
    for _ in range(MEAN_SHIFT_MAX_ITER):
        neighbourhoods = nn.radius_neighbors(modes, return_distance=False)
        shifted = np.array([X[idx].mean(axis=0) if len(idx) else m for idx, m in zip(neighbourhoods, modes)])
        displacement = np.hypot(*(shifted - modes).T).max()
        modes = shifted
        if displacement < MEAN_SHIFT_TOL:
            break

    support = np.array([len(idx) for idx in nn.radius_neighbors(modes, return_distance=False)])
    order = sorted(range(len(modes)), key=lambda i: (-support[i], modes[i][0], modes[i][1]))
    kept: List[np.ndarray] = []
    for i in order:
        if all(np.hypot(*(modes[i] - k)) >= 0.5 * bandwidth for k in kept):
            kept.append(modes[i])
    centres = np.array(kept)

    assign = NearestNeighbors(n_neighbors=1).fit(centres).kneighbors(X, return_distance=False)[:, 0]
    clusters = []
    for c in range(len(centres)):
        members = np.nonzero(assign == c)[0]
        if len(members) == 0:
            continue
        clusters.append(Cluster(X[members].mean(axis=0), len(members), members))
    logging.debug(f"Mean-shift: {len(X)} points -> {len(clusters)} clusters")
    return clusters


def candidate_from_cluster(cluster: Cluster, points: np.ndarray, detectors: Sequence[FrontierDetector],
                           frontier_id: int, epoch: int) -> FrontierCandidate:
    """Goal = the member point closest to the cluster centroid"""
    member_xy = points[cluster.members]
    best = int(np.argmin(np.hypot(*(member_xy - cluster.centroid).T)))
    idx = cluster.members[best]
    return FrontierCandidate(frontier_id, (float(points[idx, 0]), float(points[idx, 1])),
                             cluster.count, FrontierDetector(detectors[idx]), epoch)


def unknown_in_disc(grid: OccupancyGrid, x: float, y: float, radius_cells: float) -> int:
    """Number of in-bounds unknown cells within radius_cells of the cell holding (x, y)"""
    col, row = grid.world_to_cell(x, y)
    offsets = disc_offsets(radius_cells)
    cols, rows = col + offsets[:, 0], row + offsets[:, 1]
    inside = (cols >= 0) & (cols < grid.width) & (rows >= 0) & (rows < grid.height)
    return int(np.count_nonzero(grid.cells[rows[inside], cols[inside]] == UNKNOWN))


def near_unknown(grid: OccupancyGrid, x: float, y: float) -> bool:
    """True when the cell at (x, y) or one of its 8 neighbours is unknown"""
    return unknown_in_disc(grid, x, y, math.sqrt(2.0)) > 0 or not grid.contains_point(x, y)


def filter_frontiers(candidates: Sequence[FrontierCandidate], grid: OccupancyGrid,
                     planner: Optional[ReachabilityOracle], min_info_radius_cells: int,
                     max_age: int, epoch: int = 0) -> List[FrontierCandidate]:
    """
    Prune stale, uninformative, unreachable and duplicate candidates.

    Candidates are considered in frontier_id order; a candidate within one
    cell of an already accepted one is a duplicate.
    """
    kept: List[FrontierCandidate] = []
    kept_cells: List[Tuple[int, int]] = []
    reasons = {'age': 0, 'info': 0, 'unreachable': 0, 'duplicate': 0}
    for cand in sorted(candidates, key=lambda c: c.frontier_id):
        x, y = cand.position
        if epoch - cand.created_at > max_age:
            reasons['age'] += 1
            continue
        if unknown_in_disc(grid, x, y, min_info_radius_cells) == 0:
            reasons['info'] += 1
            continue
        if planner is not None and not planner.reachable(x, y):
            reasons['unreachable'] += 1
            continue
        col, row = grid.world_to_cell(x, y)
        if any(abs(col - c) <= 1 and abs(row - r) <= 1 for c, r in kept_cells):
            reasons['duplicate'] += 1
            continue
        kept.append(cand)
        kept_cells.append((col, row))
    logging.debug(f"Frontier filter kept {len(kept)}/{len(candidates)}; pruned {reasons}")
    return kept
