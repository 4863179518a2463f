"""
Posterior pose-graph prediction toward a frontier.

The branch poses placed along the planned path are appended to a copy of the
SLAM graph as an odometry chain from the robot vertex. A branch vertex that is
expected to re-observe enough map points already seen from an existing vertex
gets a loop-closure edge to it, carrying the expected loop-closure Hessian.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Mapping, Optional, Sequence, Tuple

import numpy as np

from core.geometry import Pose2, between
from core.graph import HALLUCINATED_ID_OFFSET, EdgeKind, InfoMatrix, PoseGraph
from core.grid import OCCUPIED, OccupancyGrid
from core.params import LoopClosureParams, SensorModel
from hallucination.weighting import lc_edge_hessians, odom_edge_hessian, point_hessians
from utils.errors import InvalidInputError

LOS_SAMPLES_PER_CELL = 2


@dataclass(frozen=True)
class PredictedLoopClosure:
    i: int
    k: int
    p_lc: float
    n_p: int


@dataclass
class HallucinatedGraph:
    graph: PoseGraph
    branch_vertex_ids: List[int]
    predicted_lc_edges: List[PredictedLoopClosure] = field(default_factory=list)
    # index of the first hallucinated edge in graph.edges; everything before it is SLAM
    first_hallucinated_edge: int = 0
    frontier: Optional[object] = None


def visibility_matrix(poses: Sequence[Pose2], map_points: Mapping[int, Tuple[float, float]],
                      sensor: SensorModel, grid: OccupancyGrid) -> Tuple[np.ndarray, List[int]]:
    """
    Expected visibility of every map point from every pose.

    A point counts when it is within range and field of view and the straight
    line to it crosses no occupied cell before the cell holding the point.

    Returns:
        (n_poses, n_points) boolean matrix and the point ids of its columns
    """
    ids = list(map_points)
    if not ids or not poses:
        return np.zeros((len(poses), len(ids)), dtype=bool), ids
    pts = np.array([map_points[i] for i in ids], dtype=float)
    state = np.array([p.as_array() for p in poses])

    dx = pts[None, :, 0] - state[:, None, 0]
    dy = pts[None, :, 1] - state[:, None, 1]
    dist = np.hypot(dx, dy)
    bearing = np.arctan2(dy, dx) - state[:, None, 2]
    bearing = np.mod(bearing + math.pi, 2.0 * math.pi) - math.pi
    in_fov = np.ones(dist.shape, dtype=bool) if sensor.fov >= 2.0 * math.pi - 1e-12 \
        else np.abs(bearing) <= 0.5 * sensor.fov
    candidate = (dist > 0.0) & (dist <= sensor.max_range) & in_fov

    visible = np.zeros(dist.shape, dtype=bool)
    pose_idx, point_idx = np.nonzero(candidate)
    if len(pose_idx) == 0:
        return visible, ids
    ds = grid.resolution / LOS_SAMPLES_PER_CELL
    t = np.arange(int(math.ceil(sensor.max_range / ds)) + 1) * ds
    d = dist[pose_idx, point_idx]
    ux, uy = dx[pose_idx, point_idx] / d, dy[pose_idx, point_idx] / d
    # samples stop one cell short of the point, which may itself sit on a wall
    valid = t[None, :] < (d - grid.resolution)[:, None]
    xs = state[pose_idx, 0][:, None] + t[None, :] * ux[:, None]
    ys = state[pose_idx, 1][:, None] + t[None, :] * uy[:, None]
    cols, rows = grid.world_to_cells(np.column_stack([xs.ravel(), ys.ravel()]))
    cols, rows = cols.reshape(xs.shape), rows.reshape(xs.shape)
    inside = (cols >= 0) & (cols < grid.width) & (rows >= 0) & (rows < grid.height)
    blocked = np.zeros(xs.shape, dtype=bool)
    blocked[inside] = grid.cells[rows[inside], cols[inside]] == OCCUPIED
    visible[pose_idx, point_idx] = ~(blocked & valid).any(axis=1)
    return visible, ids


def expected_covisible(pose: Pose2, map_points: Mapping[int, Tuple[float, float]],
                       sensor: SensorModel, grid: OccupancyGrid) -> List[int]:
    """Ids of the estimated map points expected inside the frustum from pose"""
    visible, ids = visibility_matrix([pose], map_points, sensor, grid)
    return [pid for pid, v in zip(ids, visible[0]) if v]


def lc_probability(n_p: int, params: LoopClosureParams) -> float:
    return float(lc_probabilities(np.array([n_p]), params)[0])


def lc_probabilities(n_p: np.ndarray, params: LoopClosureParams) -> np.ndarray:
    """lc_probability over an array of covisible counts"""
    n_p = np.asarray(n_p)
    if np.any(n_p < 0):
        raise InvalidInputError("n_p must be >= 0")
    ramp = n_p / params.n_p_max
    return np.where(n_p < params.n_p_min, 0.0, np.where(n_p > params.n_p_max, 1.0, ramp))


def hallucinate_graph(slam_graph: PoseGraph, branch_poses: Sequence[Pose2],
                      map_points: Mapping[int, Tuple[float, float]], sensor: SensorModel,
                      grid: OccupancyGrid, params: LoopClosureParams,
                      slam_visibility: Optional[np.ndarray] = None,
                      frontier=None) -> HallucinatedGraph:
    """
    Append the branch to a copy of slam_graph and predict its loop closures.

    Args:
        slam_graph: current essential graph, left untouched
        branch_poses: poses from place_vertices, in path order
        map_points: estimated map point positions by id
        sensor: sensor model used for frustum tests and Hessians
        grid: occupancy snapshot used for occlusion
        params: loop-closure thresholds
        slam_visibility: precomputed visibility_matrix of the SLAM vertices
            (rows in vertex order); computed here when omitted
        frontier: candidate the branch leads to, kept for reporting

    Returns:
        Unweighted HallucinatedGraph whose new edges already carry their
        predicted Hessians
    """
    if len(slam_graph) == 0:
        raise InvalidInputError("cannot hallucinate from an empty SLAM graph")
    graph = slam_graph.copy()
    first_new_edge = len(graph.edges)
    slam_ids = slam_graph.vertex_ids
    robot_id = slam_graph.last_vertex_id()
    h_odom = odom_edge_hessian(slam_graph) if branch_poses else None

    point_ids = list(map_points)
    if slam_visibility is None:
        slam_visibility, _ = visibility_matrix([slam_graph.vertices[v] for v in slam_ids], map_points, sensor, grid)
    branch_visibility, _ = visibility_matrix(list(branch_poses), map_points, sensor, grid)

    points = np.array([map_points[p] for p in point_ids], dtype=float).reshape(-1, 2)
    robot_row = slam_ids.index(robot_id)

    branch_ids = []
    predicted = []
    prev_id, prev_pose = robot_id, slam_graph.vertices[robot_id]
    for j, pose in enumerate(branch_poses):
        vid = HALLUCINATED_ID_OFFSET + j
        graph.add_vertex(vid, pose)
        graph.add_edge(prev_id, vid, EdgeKind.ODOMETRY, between(prev_pose, pose), h_odom)
        branch_ids.append(vid)
        prev_id, prev_pose = vid, pose

        seen = np.flatnonzero(branch_visibility[j])
        if len(seen) == 0:
            continue
        shared = slam_visibility[:, seen]
        counts = shared.sum(axis=1)
        p_lc = lc_probabilities(counts, params)
        if j == 0:
            # the robot vertex is linked to the first branch vertex by odometry
            p_lc[robot_row] = 0.0
        rows = np.flatnonzero(p_lc > 0.0)
        if len(rows) == 0:
            continue
        covisible = shared[rows]
        used = covisible.any(axis=0)
        per_point = point_hessians(pose, points[seen[used]], sensor)
        hessians = lc_edge_hessians(per_point, covisible[:, used], p_lc[rows])
        for row, info in zip(rows, hessians):
            slam_id = slam_ids[row]
            graph.add_edge(vid, slam_id, EdgeKind.LOOP_CLOSURE, between(pose, slam_graph.vertices[slam_id]),
                           InfoMatrix(info, check=False))
            predicted.append(PredictedLoopClosure(vid, slam_id, float(p_lc[row]), int(counts[row])))

    logging.debug(f"Hallucinated {len(branch_ids)} vertices and {len(predicted)} loop closures")
    return HallucinatedGraph(graph, branch_ids, predicted, first_new_edge, frontier)
