"""
SE(2) poses and relative transforms.

States are (x, y, theta) with theta in (-pi, pi]. Relative transforms are
expressed in the frame of the first pose, so compose(a, between(a, b)) == b.
"""

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

TWO_PI = 2.0 * math.pi


def normalize_angle(theta: float) -> float:
    """Wrap an angle to (-pi, pi]"""
    wrapped = math.remainder(theta, TWO_PI)
    if wrapped <= -math.pi:
        wrapped += TWO_PI
    return wrapped


@dataclass(frozen=True)
class RelativePose2:
    dx: float
    dy: float
    dtheta: float

    def __post_init__(self):
        object.__setattr__(self, 'dtheta', normalize_angle(float(self.dtheta)))

    def as_array(self) -> np.ndarray:
        return np.array([self.dx, self.dy, self.dtheta])


@dataclass(frozen=True)
class Pose2:
    x: float
    y: float
    theta: float

    def __post_init__(self):
        object.__setattr__(self, 'theta', normalize_angle(float(self.theta)))

    @classmethod
    def identity(cls) -> 'Pose2':
        return cls(0.0, 0.0, 0.0)

    @property
    def position(self) -> Tuple[float, float]:
        return (self.x, self.y)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta])

    def distance_to(self, other: 'Pose2') -> float:
        return math.hypot(other.x - self.x, other.y - self.y)


def compose(a: Pose2, b: RelativePose2) -> Pose2:
    """Apply the relative transform b in the frame of a (a ⊕ b)"""
    c, s = math.cos(a.theta), math.sin(a.theta)
    return Pose2(
        a.x + c * b.dx - s * b.dy,
        a.y + s * b.dx + c * b.dy,
        a.theta + b.dtheta,
    )


def between(a: Pose2, b: Pose2) -> RelativePose2:
    """Relative transform taking a to b, expressed in a's frame"""
    c, s = math.cos(a.theta), math.sin(a.theta)
    tx, ty = b.x - a.x, b.y - a.y
    return RelativePose2(c * tx + s * ty, -s * tx + c * ty, b.theta - a.theta)


def inverse(p: Pose2) -> RelativePose2:
    """Transform that brings p back to the identity when composed onto p"""
    c, s = math.cos(p.theta), math.sin(p.theta)
    return RelativePose2(-c * p.x - s * p.y, s * p.x - c * p.y, -p.theta)


def relative_jacobian(a: Pose2) -> np.ndarray:
    """
    Jacobian of between(a, b) with respect to b's (x, y, theta).

    Used to rotate a relative-frame information matrix into world coordinates.
    """
    c, s = math.cos(a.theta), math.sin(a.theta)
    return np.array([
        [c, s, 0.0],
        [-s, c, 0.0],
        [0.0, 0.0, 1.0],
    ])
