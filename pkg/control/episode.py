"""
The exploration loop: sense, map, detect frontiers, decide, move.

An episode ends when no frontier candidate survives filtering (complete) or
when the epoch cap is reached (incomplete).
"""

import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from scipy import ndimage

from control.decision import CandidateEvaluation, Snapshot, evaluate_candidates, select_frontier
from core.geometry import Pose2, normalize_angle
from core.graph import EdgeKind, PoseGraph, WeightedPoseGraph
from core.grid import OCCUPIED, UNKNOWN, OccupancyGrid, rasterize_world, reachable_free_mask
from core.params import ExplorationConfig
from core.world import World
from frontend.slam import SlamFrontend
from mapping.frontiers import (FrontierCandidate, FrontierDetector, RRTFrontierDetector, candidate_from_cluster,
                               cells_to_points, cluster_mean_shift, detect_frontiers_edge, filter_frontiers,
                               near_unknown)
from mapping.occupancy import integrate_scan
from planning.costmap import BASE_COST, CostGrid, inflate_costmap
from planning.dijkstra import DijkstraPlanner, PlannedPath, place_vertices
from utils.errors import NoCandidatesError

CSV_COLUMNS = ['epoch', 'x_est', 'y_est', 'theta_est', 'x_true', 'y_true', 'theta_true',
               'n_frontiers', 'chosen_frontier', 'utility', 'coverage', 'decision_time_s', 'epoch_time_s']
# Candidates this close to an already reached goal (in cells) are not selected again
BLACKLIST_RADIUS_CELLS = 2
NO_FRONTIER = -1


@dataclass
class EpochRecord:
    epoch: int
    x_est: float
    y_est: float
    theta_est: float
    x_true: float
    y_true: float
    theta_true: float
    n_frontiers: int
    chosen_frontier: int
    utility: float
    coverage: float
    decision_time_s: float
    epoch_time_s: float
    candidate_utilities: Dict[int, float] = field(default_factory=dict)

    def row(self) -> Dict[str, float]:
        values = asdict(self)
        return {col: values[col] for col in CSV_COLUMNS}


@dataclass
class EpisodeLog:
    records: List[EpochRecord] = field(default_factory=list)
    complete: bool = False
    summary: Dict[str, float] = field(default_factory=dict)
    final_grid: Optional[OccupancyGrid] = None
    final_graph: Optional[PoseGraph] = None
    # (epoch, frontier id, weighted hallucinated graph), kept only when requested
    candidate_graphs: List[Tuple[int, int, WeightedPoseGraph]] = field(default_factory=list)

    @property
    def incomplete(self) -> bool:
        return not self.complete

    def to_dataframe(self) -> pd.DataFrame:
        return pd.DataFrame([r.row() for r in self.records], columns=CSV_COLUMNS)

    def write_csv(self, path: Union[str, Path]):
        self.to_dataframe().to_csv(path, index=False, float_format='%.9g', lineterminator='\n')


def coverage(grid: OccupancyGrid, reachable: np.ndarray) -> float:
    """Share of the reachable free cells that are no longer unknown"""
    total = int(np.count_nonzero(reachable))
    if total == 0:
        return 1.0
    return int(np.count_nonzero(reachable & (grid.cells != UNKNOWN))) / total


def release_start(costs: CostGrid, x: float, y: float):
    """Let the planner leave the robot cell even if new sensing made it lethal"""
    col, row = costs.world_to_cell(x, y)
    if costs.in_bounds(col, row) and not np.isfinite(costs.cost[row, col]):
        costs.cost[row, col] = BASE_COST


def reachable_frontier_cells(grid: OccupancyGrid, planner: DijkstraPlanner) -> int:
    """
    Known cells the planner can reach that touch an unknown cell (8-neighbourhood).

    Reachability is the planner's: finite Dijkstra cost on the inflated costmap,
    so cells inside the inscribed band of a wall do not count.
    """
    unknown = grid.unknown_mask()
    touching = ndimage.binary_dilation(unknown, structure=np.ones((3, 3), dtype=bool)) & ~unknown
    reached = np.isfinite(planner.dist).reshape(grid.cells.shape)
    return int(np.count_nonzero(reached & touching))


class ExplorationEpisode:
    """One seeded exploration run over a ground-truth world"""

    def __init__(self, world: World, config: ExplorationConfig, rng_seed: int, dump_candidates: bool = False):
        self.world = world
        self.config = config
        self.dump_candidates = dump_candidates
        self.rng = np.random.default_rng(rng_seed)
        mapping = config.mapping

        truth = rasterize_world(world, mapping.resolution, mapping.grid_margin)
        self.reachable = reachable_free_mask(truth, world.start.x, world.start.y)
        self.grid = OccupancyGrid.for_world(world, mapping.resolution, mapping.grid_margin)
        self.frontend = SlamFrontend(world, config.sensor, config.frontend, self.rng)
        self.true_pose = world.start
        self.rrt: Optional[RRTFrontierDetector] = None
        self.carried: List[FrontierCandidate] = []
        self.reached_goals: List[Tuple[float, float]] = []
        self.next_frontier_id = 0
        self.log = EpisodeLog()
        self.predicted_lc_certain = 0
        self.decision_time = 0.0

    def _clock(self) -> float:
        return time.perf_counter() if self.config.exploration.record_wall_time else 0.0

    def sense(self, true_pose: Pose2):
        """Add a keyframe and integrate a scan at the given true pose"""
        self.true_pose = true_pose
        self.frontend.add_keyframe(true_pose)
        self.grid = integrate_scan(self.grid, true_pose, self.world, self.config.sensor)

    def bootstrap(self):
        """Sense at the start, turn in place and sense again so the graph holds one odometry edge"""
        start = self.world.start
        self.sense(start)
        self.sense(Pose2(start.x, start.y, start.theta + self.config.exploration.bootstrap_turn))
        self.rrt = RRTFrontierDetector((start.x, start.y), self.config.mapping.rrt_step,
                                       int(self.rng.integers(0, 2 ** 31 - 1)))

    def detect_candidates(self, epoch: int, planner: DijkstraPlanner) -> List[FrontierCandidate]:
        """Run both detectors, cluster the pooled points and filter old plus new candidates"""
        mapping = self.config.mapping
        edge_points = cells_to_points(self.grid, detect_frontiers_edge(self.grid))
        rrt_points = np.asarray(self.rrt.detect(self.grid, mapping.rrt_iterations), dtype=float).reshape(-1, 2)
        points = np.vstack([edge_points, rrt_points])
        detectors = [FrontierDetector.EDGE] * len(edge_points) + [FrontierDetector.RRT] * len(rrt_points)

        fresh = []
        for cluster in cluster_mean_shift(points, mapping.bandwidth):
            fresh.append(candidate_from_cluster(cluster, points, detectors, self.next_frontier_id, epoch))
            self.next_frontier_id += 1

        # Carried candidates whose surroundings got mapped are stale
        carried = [c for c in self.carried if near_unknown(self.grid, *c.position)]
        candidates = filter_frontiers(carried + fresh, self.grid, planner, mapping.min_info_radius_cells,
                                      mapping.max_age, epoch)

        radius = BLACKLIST_RADIUS_CELLS * self.grid.resolution + 1e-9
        candidates = [c for c in candidates
                      if all(math.hypot(c.position[0] - gx, c.position[1] - gy) > radius
                             for gx, gy in self.reached_goals)]
        logging.debug(f"Epoch {epoch}: {len(edge_points)} edge points, {len(rrt_points)} RRT points, "
                      f"{len(fresh)} clusters, {len(candidates)} candidates after filtering")
        return candidates

    def execute(self, path: PlannedPath) -> bool:
        """
        Follow the path, sensing every sense_interval meters.

        Returns:
            True when the goal was reached, False when the rest of the path got blocked
        """
        waypoints = [self.true_pose.position] + list(path.waypoints[1:])
        if len(waypoints) == 1:
            waypoints.append(path.goal)
        xy = np.asarray(waypoints)
        cumulative = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(xy, axis=0).T))])
        route = PlannedPath(waypoints, path.cost)
        stops = place_vertices(route, self.config.exploration.sense_interval, default_heading=self.true_pose.theta)

        travelled = 0.0
        for stop in stops:
            travelled = min(travelled + self.config.exploration.sense_interval, cumulative[-1])
            self.sense(stop)
            remaining = xy[1:][cumulative[1:] > travelled + 1e-9]
            # The goal cell may be an unknown frontier cell; only the approach has to stay clear
            ahead = remaining[:-1] if len(remaining) else remaining
            if any(self.grid.value_at(x, y) == OCCUPIED for x, y in ahead):
                logging.info(f"Path blocked after {travelled:.2f} m, re-deciding")
                return False
        return True

    def planner_from_robot(self) -> DijkstraPlanner:
        costs = inflate_costmap(self.grid, self.config.planner.inflation_radius,
                                self.config.planner.inscribed_radius)
        release_start(costs, self.true_pose.x, self.true_pose.y)
        return DijkstraPlanner(costs, self.true_pose.position)

    def record(self, epoch: int, n_frontiers: int, chosen: Optional[CandidateEvaluation],
               evals: List[CandidateEvaluation], decision_time: float, epoch_start: float):
        est, true = self.frontend.estimate, self.true_pose
        self.log.records.append(EpochRecord(
            epoch=epoch,
            x_est=est.x, y_est=est.y, theta_est=est.theta,
            x_true=true.x, y_true=true.y, theta_true=true.theta,
            n_frontiers=n_frontiers,
            chosen_frontier=chosen.frontier.frontier_id if chosen else NO_FRONTIER,
            utility=chosen.utility if chosen else 0.0,
            coverage=coverage(self.grid, self.reachable),
            decision_time_s=decision_time,
            epoch_time_s=self._clock() - epoch_start,
            candidate_utilities={e.frontier.frontier_id: e.utility for e in evals},
        ))

    def run(self) -> EpisodeLog:
        exploration = self.config.exploration
        episode_start = self._clock()
        self.bootstrap()
        logging.info(f"Starting exploration at ({self.true_pose.x:.2f}, {self.true_pose.y:.2f}), "
                     f"{int(self.reachable.sum())} reachable cells")

        for epoch in range(exploration.epoch_cap):
            epoch_start = self._clock()
            planner = self.planner_from_robot()
            candidates = self.detect_candidates(epoch, planner)

            decision_start = self._clock()
            evals: List[CandidateEvaluation] = []
            if candidates:
                snapshot = Snapshot.capture(self.frontend.pose_graph(), self.grid, planner,
                                            self.frontend.map_points, self.config)
                evals = evaluate_candidates(candidates, snapshot, exploration.jobs)
            try:
                chosen = select_frontier(evals)
            except NoCandidatesError:
                self.record(epoch, 0, None, evals, self._clock() - decision_start, epoch_start)
                self.log.complete = True
                logging.info(f"No frontier candidates left after {epoch} epochs, exploration complete")
                open_cells = reachable_frontier_cells(self.grid, planner)
                if open_cells:
                    logging.warning(f"{open_cells} reachable cells still border unknown space")
                break
            decision_time = self._clock() - decision_start
            self.decision_time += decision_time

            for e in evals:
                self.predicted_lc_certain += sum(1 for lc in e.hallucinated.predicted_lc_edges if lc.p_lc >= 1.0)
                if self.dump_candidates:
                    self.log.candidate_graphs.append((epoch, e.frontier.frontier_id, e.graph))

            logging.info(f"Epoch {epoch}: {len(candidates)} candidates, chose frontier {chosen.frontier.frontier_id} "
                         f"at ({chosen.frontier.position[0]:.2f}, {chosen.frontier.position[1]:.2f}) "
                         f"utility {chosen.utility:.6g}")

            reached = self.execute(chosen.path)
            if reached:
                self.reached_goals.append(chosen.frontier.position)
            self.carried = [c for c in candidates if c.frontier_id != chosen.frontier.frontier_id]
            self.record(epoch, len(candidates), chosen, evals, decision_time, epoch_start)
        else:
            logging.warning(f"Epoch cap of {exploration.epoch_cap} reached, episode incomplete")

        self.log.final_grid = self.grid
        self.log.final_graph = self.frontend.pose_graph()
        self.log.summary = self.summarize(self._clock() - episode_start)
        return self.log

    def summarize(self, total_time: float) -> Dict[str, float]:
        errors = self.frontend.trajectory_errors()
        graph = self.log.final_graph
        heading_error = abs(normalize_angle(self.frontend.estimate.theta - self.true_pose.theta))
        return {
            'epochs': len(self.log.records),
            'complete': self.log.complete,
            'coverage': coverage(self.grid, self.reachable),
            'ate_rmse': float(np.sqrt(np.mean(errors ** 2))) if len(errors) else 0.0,
            'ate_max': float(errors.max()) if len(errors) else 0.0,
            'final_heading_error': heading_error,
            'num_vertices': len(graph),
            'num_edges': len(graph.edges),
            'num_loop_closures': sum(1 for _ in graph.edges_of_kind(EdgeKind.LOOP_CLOSURE)),
            'predicted_lc_certain': self.predicted_lc_certain,
            'reachable_frontier_cells': reachable_frontier_cells(self.grid, self.planner_from_robot()),
            'decision_time_fraction': self.decision_time / total_time if total_time > 0 else 0.0,
        }


def run_episode(world: World, config: ExplorationConfig, rng_seed: int, dump_candidates: bool = False) -> EpisodeLog:
    """Explore `world` until no frontier remains or the epoch cap is hit; deterministic given the seed"""
    return ExplorationEpisode(world, config, rng_seed, dump_candidates).run()
