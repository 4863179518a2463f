"""
Keyframe bookkeeping for the simulated visual SLAM.

Every sense point becomes a keyframe. Its vertex pose is the dead-reckoned
estimate, map points are running means of the back-projected observations, and
the essential pose-graph is rebuilt lazily from the camera-point Hessian.
"""

import logging
from typing import Dict, List, Optional, Set, Tuple

import numpy as np

from core.geometry import Pose2, RelativePose2, between, compose
from core.graph import PoseGraph
from core.params import FrontendParams, SensorModel
from core.world import World
from frontend.essential_graph import extract_pose_graph
from frontend.hessian import build_camera_point_hessian, schur_reduce
from frontend.observations import Observation, back_project, observe


class SlamFrontend:
    def __init__(self, world: World, sensor: SensorModel, params: FrontendParams, rng: np.random.Generator):
        self.world = world
        self.sensor = sensor
        self.params = params
        self.rng = rng
        self.true_poses: Dict[int, Pose2] = {}
        self.estimates: Dict[int, Pose2] = {}
        self.observations: List[Observation] = []
        self.visible: Dict[int, Set[int]] = {}
        self._point_sums: Dict[int, np.ndarray] = {}
        self._point_counts: Dict[int, int] = {}
        self._graph: Optional[PoseGraph] = None

    def __len__(self) -> int:
        return len(self.estimates)

    @property
    def last_id(self) -> int:
        return len(self.estimates) - 1

    @property
    def estimate(self) -> Pose2:
        return self.estimates[self.last_id]

    @property
    def true_pose(self) -> Pose2:
        return self.true_poses[self.last_id]

    def add_keyframe(self, true_pose: Pose2) -> int:
        """
        Sense from true_pose and append a keyframe.

        The first keyframe is placed at its true pose; later ones are
        dead-reckoned from the previous estimate with a noisy odometry reading.

        Returns:
            The new vertex id
        """
        vid = len(self.estimates)
        if vid == 0:
            est = true_pose
        else:
            motion = between(self.true_poses[vid - 1], true_pose)
            noise = self.rng.normal(0.0, 1.0, size=3) * np.asarray(self.sensor.odom_noise_std)
            measured = RelativePose2(motion.dx + noise[0], motion.dy + noise[1], motion.dtheta + noise[2])
            est = compose(self.estimates[vid - 1], measured)
        self.true_poses[vid] = true_pose
        self.estimates[vid] = est

        seed = int(self.rng.integers(0, 2 ** 31 - 1))
        new_obs = observe(true_pose, self.world, self.sensor, seed, pose_id=vid)
        self.observations.extend(new_obs)
        self.visible[vid] = {o.landmark_id for o in new_obs}
        for o in new_obs:
            xy = np.asarray(back_project(est, o))
            if o.landmark_id in self._point_sums:
                self._point_sums[o.landmark_id] += xy
                self._point_counts[o.landmark_id] += 1
            else:
                self._point_sums[o.landmark_id] = xy
                self._point_counts[o.landmark_id] = 1
        self._graph = None
        logging.debug(f"Keyframe {vid}: {len(new_obs)} observations, {len(self._point_sums)} map points")
        return vid

    @property
    def map_points(self) -> Dict[int, Tuple[float, float]]:
        return {lid: tuple(self._point_sums[lid] / self._point_counts[lid]) for lid in sorted(self._point_sums)}

    def pose_graph(self) -> PoseGraph:
        """Essential graph over all keyframes; cached until the next keyframe"""
        if self._graph is None:
            points = self.map_points
            hessian = build_camera_point_hessian(self.estimates, self.observations, self.sensor, points)
            reduced = schur_reduce(hessian, self.params.damping)
            self._graph = extract_pose_graph(reduced, self.estimates, self.params.theta_covis,
                                             self.sensor.odometry_information())
        return self._graph

    def trajectory_errors(self) -> np.ndarray:
        """Position error of every keyframe estimate against ground truth"""
        return np.array([self.estimates[v].distance_to(self.true_poses[v]) for v in self.estimates])
