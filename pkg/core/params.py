"""
Parameter records for every stage of the exploration pipeline.

Defaults marked "tuning" are simulator choices rather than part of the
decision method; all of them can be overridden through utils.config.
"""

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from utils.errors import InvalidInputError

# Floor applied to noise standard deviations when inverting them into information
MIN_NOISE_STD = 1e-6


@dataclass(frozen=True)
class SensorModel:
    fov: float = 2.0 * math.pi
    max_range: float = 4.0
    range_noise_std: float = 0.02
    bearing_noise_std: float = 0.01
    odom_noise_std: Tuple[float, float, float] = (0.01, 0.01, 0.005)

    def __post_init__(self):
        object.__setattr__(self, 'odom_noise_std', tuple(float(s) for s in self.odom_noise_std))
        if not 0.0 < self.fov <= 2.0 * math.pi + 1e-12:
            raise InvalidInputError(f"fov must lie in (0, 2pi], got {self.fov}")
        if self.max_range <= 0:
            raise InvalidInputError(f"max_range must be positive, got {self.max_range}")
        if len(self.odom_noise_std) != 3:
            raise InvalidInputError("odom_noise_std needs three components")
        stds = (self.range_noise_std, self.bearing_noise_std) + self.odom_noise_std
        if any(s < 0 for s in stds):
            raise InvalidInputError("noise standard deviations must be >= 0")

    def in_fov(self, bearing: float) -> bool:
        return self.fov >= 2.0 * math.pi - 1e-12 or abs(bearing) <= 0.5 * self.fov

    def observation_information(self) -> np.ndarray:
        """Sigma_obs^-1 for the (range, bearing) residual"""
        sr = max(self.range_noise_std, MIN_NOISE_STD)
        sb = max(self.bearing_noise_std, MIN_NOISE_STD)
        return np.diag([1.0 / sr ** 2, 1.0 / sb ** 2])

    def odometry_information(self) -> np.ndarray:
        """Sigma_odom^-1 in the relative (robot) frame"""
        return np.diag([1.0 / max(s, MIN_NOISE_STD) ** 2 for s in self.odom_noise_std])


@dataclass(frozen=True)
class LoopClosureParams:
    n_p_min: int = 3
    n_p_max: int = 6

    def __post_init__(self):
        if not 0 < self.n_p_min <= self.n_p_max:
            raise InvalidInputError(
                f"need 0 < n_p_min <= n_p_max, got ({self.n_p_min}, {self.n_p_max})")


@dataclass(frozen=True)
class NoveltyParams:
    radius: float = 1.5

    def __post_init__(self):
        if self.radius <= 0:
            raise InvalidInputError(f"novelty radius must be positive, got {self.radius}")


@dataclass(frozen=True)
class FrontendParams:
    theta_covis: int = 3
    damping: float = 1e-9

    def __post_init__(self):
        if self.theta_covis < 1:
            raise InvalidInputError("theta_covis must be >= 1")
        if self.damping < 0:
            raise InvalidInputError("damping must be >= 0")


@dataclass(frozen=True)
class MappingParams:
    # tuning defaults
    resolution: float = 0.1
    grid_margin: float = 0.5
    bandwidth: float = 0.75
    min_info_radius_cells: int = 10
    max_age: int = 3
    rrt_step: float = 0.5
    rrt_iterations: int = 150

    def __post_init__(self):
        if self.resolution <= 0 or self.bandwidth <= 0 or self.rrt_step <= 0:
            raise InvalidInputError("resolution, bandwidth and rrt_step must be positive")
        if self.min_info_radius_cells < 0 or self.max_age < 0 or self.rrt_iterations < 0:
            raise InvalidInputError("counts must be >= 0")


@dataclass(frozen=True)
class PlannerParams:
    inflation_radius: float = 0.3
    inscribed_radius: float = 0.15
    spacing: float = 1.0

    def __post_init__(self):
        if self.inflation_radius < 0 or self.inscribed_radius < 0:
            raise InvalidInputError("radii must be >= 0")
        if self.spacing <= 0:
            raise InvalidInputError("vertex spacing must be positive")


@dataclass(frozen=True)
class ExplorationParams:
    epoch_cap: int = 200
    sense_interval: float = 0.5
    jobs: int = 1
    record_wall_time: bool = True
    bootstrap_turn: float = 0.5 * math.pi + 0.3

    def __post_init__(self):
        if self.epoch_cap < 1:
            raise InvalidInputError("epoch_cap must be >= 1")
        if self.sense_interval <= 0:
            raise InvalidInputError("sense_interval must be positive")
        if self.jobs < 1:
            raise InvalidInputError("jobs must be >= 1")


@dataclass(frozen=True)
class ExplorationConfig:
    """Every parameter record the episode needs, bundled"""
    sensor: SensorModel = SensorModel()
    loop_closure: LoopClosureParams = LoopClosureParams()
    novelty: NoveltyParams = NoveltyParams()
    frontend: FrontendParams = FrontendParams()
    mapping: MappingParams = MappingParams()
    planner: PlannerParams = PlannerParams()
    exploration: ExplorationParams = ExplorationParams()
