"""
8-connected Dijkstra over a CostGrid and vertex placement along planned paths.

A DijkstraPlanner runs one single-source search from the robot cell and then
answers reachability and path queries for any number of goals, which is what
frontier filtering and candidate evaluation both need.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from core.geometry import Pose2
from planning.costmap import BASE_COST, CostGrid
from utils.errors import InvalidInputError

NEIGHBOUR_OFFSETS = [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)]


@dataclass(frozen=True)
class PlannedPath:
    waypoints: List[Tuple[float, float]]
    cost: float

    @property
    def length(self) -> float:
        if len(self.waypoints) < 2:
            return 0.0
        xy = np.asarray(self.waypoints)
        return float(np.hypot(*np.diff(xy, axis=0).T).sum())

    @property
    def goal(self) -> Tuple[float, float]:
        return self.waypoints[-1]


def grid_graph(costs: CostGrid) -> csr_matrix:
    """
    Directed 8-connected cell graph. Entering a cell costs step length times
    that cell's cost; diagonal moves may not cut the corner of a lethal cell.
    """
    h, w = costs.cost.shape
    passable = np.isfinite(costs.cost)
    idx = np.arange(h * w).reshape(h, w)
    src_all, dst_all, weight_all = [], [], []
    for dc, dr in NEIGHBOUR_OFFSETS:
        r0, r1 = max(0, -dr), h - max(0, dr)
        c0, c1 = max(0, -dc), w - max(0, dc)
        src = (slice(r0, r1), slice(c0, c1))
        dst = (slice(r0 + dr, r1 + dr), slice(c0 + dc, c1 + dc))
        ok = passable[src] & passable[dst]
        if dc and dr:
            ok &= passable[r0:r1, c0 + dc:c1 + dc] & passable[r0 + dr:r1 + dr, c0:c1]
        step = math.hypot(dc, dr) * costs.resolution
        src_all.append(idx[src][ok])
        dst_all.append(idx[dst][ok])
        weight_all.append(step * costs.cost[dst][ok])
    src = np.concatenate(src_all)
    dst = np.concatenate(dst_all)
    weight = np.concatenate(weight_all)
    return csr_matrix((weight, (src, dst)), shape=(h * w, h * w))


class DijkstraPlanner:
    """Single-source shortest paths from one start position"""

    def __init__(self, costs: CostGrid, start: Tuple[float, float]):
        col, row = costs.world_to_cell(*start)
        if costs.is_lethal(col, row):
            raise InvalidInputError(f"start ({start[0]:.2f}, {start[1]:.2f}) lies in a lethal cell")
        self.costs = costs
        self.start_cell = (col, row)
        self._source = row * costs.width + col
        graph = grid_graph(costs)
        self.dist, self.pred = dijkstra(graph, directed=True, indices=self._source, return_predecessors=True)
        logging.debug(f"Dijkstra from cell {self.start_cell}: {int(np.isfinite(self.dist).sum())} reachable cells")

    def _goal_entry(self, x: float, y: float) -> Optional[Tuple[float, int, Optional[int]]]:
        """(cost, goal index, predecessor override) or None when unreachable"""
        c = self.costs
        col, row = c.world_to_cell(x, y)
        if not c.in_bounds(col, row):
            return None
        target = row * c.width + col
        if np.isfinite(self.dist[target]):
            return float(self.dist[target]), target, None
        if not c.goal_exempt[row, col]:
            return None
        # Exempt goal: enter it from its cheapest reachable neighbour at base cost
        best = None
        for dc, dr in NEIGHBOUR_OFFSETS:
            nc, nr = col + dc, row + dr
            if not c.in_bounds(nc, nr):
                continue
            n = nr * c.width + nc
            if not np.isfinite(self.dist[n]):
                continue
            if dc and dr and (c.is_lethal(col + dc, row) or c.is_lethal(col, row + dr)):
                continue
            total = self.dist[n] + math.hypot(dc, dr) * c.resolution * BASE_COST
            if best is None or total < best[0]:
                best = (float(total), target, n)
        return best

    def reachable(self, x: float, y: float) -> bool:
        return self._goal_entry(x, y) is not None

    def cost_to(self, x: float, y: float) -> float:
        entry = self._goal_entry(x, y)
        return math.inf if entry is None else entry[0]

    def plan(self, goal: Tuple[float, float]) -> Optional[PlannedPath]:
        entry = self._goal_entry(*goal)
        if entry is None:
            return None
        cost, target, via = entry
        chain = [target]
        node = target if via is None else via
        if via is not None:
            chain.append(via)
        while node != self._source:
            node = int(self.pred[node])
            if node < 0:
                return None
            chain.append(node)
        chain.reverse()
        w = self.costs.width
        waypoints = [self.costs.cell_to_world(n % w, n // w) for n in chain]
        return PlannedPath(waypoints, cost)


def plan_dijkstra(costs: CostGrid, start: Tuple[float, float], goal: Tuple[float, float]) -> Optional[PlannedPath]:
    """Minimum-cost 8-connected path, or None when the goal is unreachable"""
    return DijkstraPlanner(costs, start).plan(goal)


def place_vertices(path: PlannedPath, spacing: float, default_heading: float = 0.0) -> List[Pose2]:
    """
    Poses every `spacing` meters of arc length plus one at the path end.

    A path of length L gives ceil(L / spacing) poses (at least one). Each
    heading follows the path segment the pose lies on.
    """
    if spacing <= 0:
        raise InvalidInputError("spacing must be positive")
    xy = np.asarray(path.waypoints, dtype=float).reshape(-1, 2)
    seg = np.diff(xy, axis=0)
    seg_len = np.hypot(seg[:, 0], seg[:, 1]) if len(seg) else np.zeros(0)
    keep = seg_len > 1e-12
    seg, seg_len = seg[keep], seg_len[keep]
    starts = xy[:-1][keep] if len(xy) > 1 else np.zeros((0, 2))
    length = float(seg_len.sum())

    if length <= 0.0:
        return [Pose2(float(xy[-1, 0]), float(xy[-1, 1]), default_heading)]

    n = max(1, int(math.ceil(length / spacing - 1e-9)))
    cumulative = np.concatenate([[0.0], np.cumsum(seg_len)])
    poses = []
    for i in range(1, n + 1):
        s = min(i * spacing, length)
        j = int(np.clip(np.searchsorted(cumulative, s, side='left') - 1, 0, len(seg) - 1))
        frac = (s - cumulative[j]) / seg_len[j]
        x, y = starts[j] + frac * seg[j]
        poses.append(Pose2(float(x), float(y), math.atan2(seg[j, 1], seg[j, 0])))
    # The final pose sits exactly on the goal waypoint
    last = poses[-1]
    poses[-1] = Pose2(float(xy[-1, 0]), float(xy[-1, 1]), last.theta)
    return poses
