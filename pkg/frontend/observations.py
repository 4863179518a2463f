"""
Simulated planar range-bearing sensor.

The residual (range, bearing) of a 2D landmark seen from an (x, y, theta) pose
keeps the structure of a camera-point problem: each observation couples one
pose block (3 columns) with one point block (2 columns).
"""

import math
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from core.geometry import Pose2, normalize_angle
from core.params import SensorModel
from core.world import World
from utils.errors import SingularityError

COINCIDENT_EPS = 1e-9


@dataclass(frozen=True)
class Observation:
    pose_id: int
    landmark_id: int
    range: float
    bearing: float


def predict_measurement(pose: Pose2, landmark: Tuple[float, float]) -> Tuple[float, float]:
    dx, dy = landmark[0] - pose.x, landmark[1] - pose.y
    return math.hypot(dx, dy), normalize_angle(math.atan2(dy, dx) - pose.theta)


def observe(true_pose: Pose2, world: World, sensor: SensorModel, rng_seed, pose_id: int = 0) -> List[Observation]:
    """
    Noisy observations of every landmark in range, inside the field of view and
    not hidden behind an obstacle. Deterministic for a given seed.
    """
    rng = np.random.default_rng(rng_seed)
    observations = []
    for lm in world.landmarks:
        r, b = predict_measurement(true_pose, (lm.x, lm.y))
        if not 0.0 < r <= sensor.max_range or not sensor.in_fov(b):
            continue
        if not world.line_of_sight(true_pose.x, true_pose.y, lm.x, lm.y):
            continue
        noise_r, noise_b = rng.normal(0.0, 1.0, size=2)
        # noisy readings stay inside the sensor footprint
        noisy_r = min(max(r + sensor.range_noise_std * noise_r, COINCIDENT_EPS), sensor.max_range)
        noisy_b = b + sensor.bearing_noise_std * noise_b
        if sensor.fov >= 2.0 * math.pi - 1e-12:
            noisy_b = normalize_angle(noisy_b)
        else:
            noisy_b = min(max(noisy_b, -0.5 * sensor.fov), 0.5 * sensor.fov)
        observations.append(Observation(pose_id, lm.id, noisy_r, noisy_b))
    return observations


def back_project(pose: Pose2, obs: Observation) -> Tuple[float, float]:
    """World position implied by an observation from the given pose"""
    angle = pose.theta + obs.bearing
    return pose.x + obs.range * math.cos(angle), pose.y + obs.range * math.sin(angle)


def observation_jacobian(pose: Pose2, landmark: Tuple[float, float]) -> np.ndarray:
    """
    ∂(range, bearing)/∂(x, y, theta) at the given state.

    Raises:
        SingularityError: landmark coincides with the pose position
    """
    dx, dy = landmark[0] - pose.x, landmark[1] - pose.y
    q = dx * dx + dy * dy
    if q <= COINCIDENT_EPS ** 2:
        raise SingularityError(f"landmark at ({landmark[0]}, {landmark[1]}) coincides with the pose")
    r = math.sqrt(q)
    return np.array([
        [-dx / r, -dy / r, 0.0],
        [dy / q, -dx / q, -1.0],
    ])


def landmark_jacobian(pose: Pose2, landmark: Tuple[float, float]) -> np.ndarray:
    """∂(range, bearing)/∂(lx, ly)"""
    dx, dy = landmark[0] - pose.x, landmark[1] - pose.y
    q = dx * dx + dy * dy
    if q <= COINCIDENT_EPS ** 2:
        raise SingularityError(f"landmark at ({landmark[0]}, {landmark[1]}) coincides with the pose")
    r = math.sqrt(q)
    return np.array([
        [dx / r, dy / r],
        [-dy / q, dx / q],
    ])


def batch_jacobians(states: np.ndarray, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Vectorised pose and point Jacobians.

    Args:
        states: (n, 3) poses, one per observation
        points: (n, 2) landmark positions, one per observation

    Returns:
        (n, 2, 3) pose Jacobians and (n, 2, 2) point Jacobians
    """
    dx = points[:, 0] - states[:, 0]
    dy = points[:, 1] - states[:, 1]
    q = dx * dx + dy * dy
    if np.any(q <= COINCIDENT_EPS ** 2):
        raise SingularityError("an observation's landmark coincides with its pose")
    r = np.sqrt(q)
    n = len(states)
    jc = np.zeros((n, 2, 3))
    jc[:, 0, 0] = -dx / r
    jc[:, 0, 1] = -dy / r
    jc[:, 1, 0] = dy / q
    jc[:, 1, 1] = -dx / q
    jc[:, 1, 2] = -1.0
    jp = -jc[:, :, :2]
    return jc, jp
