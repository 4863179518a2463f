from typing import Optional, Sequence, Tuple

import numpy as np

from core.geometry import Pose2
from core.graph import EdgeKind, InfoMatrix, PoseGraph, WeightedPoseGraph
from core.grid import UNKNOWN, OccupancyGrid, disc_offsets
from core.params import NoveltyParams, SensorModel
from frontend.observations import batch_jacobians
from optimality.criteria import dopt_matrices
from utils.errors import InvalidInputError


def odom_edge_hessian(slam_graph: PoseGraph) -> InfoMatrix:
    """Information of the most recent odometry edge; future odometry is expected to look the same"""
    last = None
    for edge in slam_graph.edges_of_kind(EdgeKind.ODOMETRY):
        last = edge
    if last is None:
        raise InvalidInputError("SLAM graph has no odometry edge")
    return last.info


def point_hessians(pose: Pose2, points: np.ndarray, sensor: SensorModel) -> np.ndarray:
    """(n, 3, 3) stack of J_i^T Sigma_obs^-1 J_i, one per point, all evaluated at pose"""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    states = np.broadcast_to(pose.as_array(), (len(pts), 3))
    jc, _ = batch_jacobians(states, pts)
    return np.einsum('nki,kl,nlj->nij', jc, sensor.observation_information(), jc)


def lc_edge_hessians(per_point: np.ndarray, shared: np.ndarray, p_lc: np.ndarray) -> np.ndarray:
    """
    Expected loop-closure information for many edges out of one pose.

    Args:
        per_point: (n_points, 3, 3) from point_hessians
        shared: (n_edges, n_points) mask of the points each edge re-observes
        p_lc: (n_edges,) loop-closure probabilities

    Returns:
        (n_edges, 3, 3) stack of p_lc * sum over shared points
    """
    h = np.einsum('en,nij->eij', np.asarray(shared, dtype=float), per_point)
    h = 0.5 * (h + h.transpose(0, 2, 1))
    return np.asarray(p_lc, dtype=float)[:, None, None] * h


def lc_edge_hessian(pose: Pose2, covisible_points: Sequence[Tuple[float, float]],
                    p_lc: float, sensor: SensorModel) -> InfoMatrix:
    """
    Expected loop-closure information: p_lc * sum_i J_i^T Sigma_obs^-1 J_i over
    the covisible points, each J_i evaluated at the predicted pose.
    """
    if len(covisible_points) == 0:
        raise InvalidInputError("loop-closure Hessian needs at least one covisible point")
    if not 0.0 < p_lc <= 1.0:
        raise InvalidInputError(f"p_lc must lie in (0, 1], got {p_lc}")
    per_point = point_hessians(pose, covisible_points, sensor)
    h = lc_edge_hessians(per_point, np.ones((1, len(per_point)), dtype=bool), np.array([p_lc]))
    return InfoMatrix(h[0], check=False)


def novelty_sigma(pose: Pose2, grid: OccupancyGrid, radius: float) -> float:
    """Fraction of unknown cells in the disc of `radius` around pose; off-grid cells count as unknown"""
    if radius <= 0:
        raise InvalidInputError("novelty radius must be positive")
    col, row = grid.world_to_cell(pose.x, pose.y)
    offsets = disc_offsets(radius / grid.resolution)
    cols, rows = col + offsets[:, 0], row + offsets[:, 1]
    inside = (cols >= 0) & (cols < grid.width) & (rows >= 0) & (rows < grid.height)
    unknown = np.count_nonzero(~inside)
    unknown += np.count_nonzero(grid.cells[rows[inside], cols[inside]] == UNKNOWN)
    return unknown / len(offsets)


def apply_novelty(H: InfoMatrix, sigma: float) -> InfoMatrix:
    """
    Reward edges that see new space.

    With alpha = 1 + 1/sigma the correction H - H / (1 - alpha) reduces to
    (1 + sigma) H, so sigma = 0 leaves H as it is.
    """
    if not 0.0 <= sigma <= 1.0:
        raise InvalidInputError(f"sigma must lie in [0, 1], got {sigma}")
    return H.scaled(1.0 + sigma)


def weight_graph(hg, grid: OccupancyGrid, novelty: NoveltyParams,
                 slam_weights: Optional[Sequence[float]] = None) -> WeightedPoseGraph:
    """
    Weight every edge with the D-optimality of its information.

    Hallucinated edges are first scaled by the novelty of their branch-side
    vertex; SLAM edges keep their information unscaled. The scaled matrices
    replace the edge information in the returned graph. slam_weights, when
    given, are reused for the SLAM edges instead of being recomputed.
    """
    graph = hg.graph.copy()
    first = hg.first_hallucinated_edge
    slam_edges = graph.edges[:first]
    if slam_weights is not None:
        weights = [float(w) for w in slam_weights[:first]]
    else:
        weights = dopt_matrices(np.array([e.info.m for e in slam_edges]).reshape(-1, 3, 3)).tolist()

    branch = set(hg.branch_vertex_ids)
    sigma_cache = {}
    scaled_infos = []
    for edge in graph.edges[first:]:
        far = edge.k if edge.k in branch else edge.i
        if far not in sigma_cache:
            sigma_cache[far] = novelty_sigma(graph.vertices[far], grid, novelty.radius)
        scaled = apply_novelty(edge.info, sigma_cache[far])
        scaled_infos.append(scaled)
    for offset, scaled in enumerate(scaled_infos):
        graph.replace_edge_info(first + offset, scaled)
    stack = np.array([s.m for s in scaled_infos]).reshape(-1, 3, 3)
    weights.extend(dopt_matrices(stack).tolist())
    return WeightedPoseGraph(graph, tuple(weights))
