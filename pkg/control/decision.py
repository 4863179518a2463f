"""
Per-epoch decision making: evaluate every surviving frontier on one frozen
snapshot and pick the one whose hallucinated graph has the highest D-optimality.
"""

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from core.graph import PoseGraph, WeightedPoseGraph
from core.grid import OccupancyGrid
from core.params import ExplorationConfig
from hallucination.predict import HallucinatedGraph, hallucinate_graph, visibility_matrix
from hallucination.weighting import weight_graph
from mapping.frontiers import FrontierCandidate
from optimality.criteria import dopt_graph, dopt_matrix
from planning.dijkstra import DijkstraPlanner, PlannedPath, place_vertices
from utils.errors import NoCandidatesError

TIE_RTOL = 1e-9


@dataclass(frozen=True)
class Snapshot:
    """Everything a candidate evaluation reads; shared read-only by all workers of an epoch"""
    slam_graph: PoseGraph
    grid: OccupancyGrid
    planner: DijkstraPlanner
    map_points: Dict[int, Tuple[float, float]]
    config: ExplorationConfig
    slam_visibility: np.ndarray
    slam_weights: Tuple[float, ...]
    record_wall_time: bool = True

    @classmethod
    def capture(cls, slam_graph: PoseGraph, grid: OccupancyGrid, planner: DijkstraPlanner,
                map_points: Dict[int, Tuple[float, float]], config: ExplorationConfig) -> 'Snapshot':
        """Freeze the epoch state and precompute what every candidate shares"""
        poses = [slam_graph.vertices[v] for v in slam_graph.vertex_ids]
        visibility, _ = visibility_matrix(poses, map_points, config.sensor, grid)
        weights = tuple(dopt_matrix(e.info.m) for e in slam_graph.edges)
        return cls(slam_graph, grid, planner, dict(map_points), config, visibility, weights,
                   config.exploration.record_wall_time)


@dataclass
class CandidateEvaluation:
    frontier: FrontierCandidate
    path: PlannedPath
    graph: WeightedPoseGraph
    utility: float
    eval_wall_time: float = 0.0
    hallucinated: Optional[HallucinatedGraph] = field(default=None, repr=False)

    @property
    def num_predicted_lc(self) -> int:
        return len(self.hallucinated.predicted_lc_edges) if self.hallucinated else 0


def evaluate_candidate(frontier: FrontierCandidate, snapshot: Snapshot) -> Optional[CandidateEvaluation]:
    """
    plan -> place_vertices -> hallucinate_graph -> weight_graph -> dopt_graph.

    Returns None, with the reason logged, when the frontier cannot be planned to.
    """
    started = time.perf_counter()
    cfg = snapshot.config
    path = snapshot.planner.plan(frontier.position)
    if path is None:
        logging.info(f"Frontier {frontier.frontier_id} dropped: no path from the robot")
        return None

    robot = snapshot.slam_graph.vertices[snapshot.slam_graph.last_vertex_id()]
    heading = math.atan2(frontier.position[1] - robot.y, frontier.position[0] - robot.x)
    branch = place_vertices(path, cfg.planner.spacing, default_heading=heading)
    hallucinated = hallucinate_graph(snapshot.slam_graph, branch, snapshot.map_points, cfg.sensor,
                                     snapshot.grid, cfg.loop_closure,
                                     slam_visibility=snapshot.slam_visibility, frontier=frontier)
    weighted = weight_graph(hallucinated, snapshot.grid, cfg.novelty, slam_weights=snapshot.slam_weights)
    utility = dopt_graph(weighted)
    elapsed = time.perf_counter() - started if snapshot.record_wall_time else 0.0

    logging.debug(
        f"Frontier {frontier.frontier_id} at ({frontier.position[0]:.2f}, {frontier.position[1]:.2f}): "
        f"path {path.length:.2f} m, {len(branch)} branch vertices, "
        f"{len(hallucinated.predicted_lc_edges)} predicted loop closures, utility {utility:.6g}")
    return CandidateEvaluation(frontier, path, weighted, utility, elapsed, hallucinated)


def evaluate_candidates(frontiers: Sequence[FrontierCandidate], snapshot: Snapshot,
                        jobs: int = 1) -> List[CandidateEvaluation]:
    """Evaluate all frontiers, in parallel when jobs > 1; output follows input order"""
    if jobs > 1 and len(frontiers) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(lambda f: evaluate_candidate(f, snapshot), frontiers))
    else:
        results = [evaluate_candidate(f, snapshot) for f in frontiers]
    return [r for r in results if r is not None]


def select_frontier(evals: Sequence[CandidateEvaluation]) -> CandidateEvaluation:
    """
    Highest utility wins. Utilities within TIE_RTOL of the best are ties,
    broken by the shorter path cost and then the lower frontier id.

    Raises:
        NoCandidatesError: evals is empty
    """
    if not evals:
        raise NoCandidatesError("no frontier candidates left to evaluate")
    best = max(e.utility for e in evals)
    tolerance = TIE_RTOL * max(abs(best), 1e-300)
    tied = [e for e in evals if e.utility >= best - tolerance]
    return min(tied, key=lambda e: (e.path.cost, e.frontier.frontier_id))
