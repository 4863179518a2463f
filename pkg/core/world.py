"""
Ground-truth world: landmarks, wall segments, solid rectangles and bounds.

Scene files are plain text, one record per line:

    BOUNDS <xmin> <ymin> <xmax> <ymax>
    WALL <x1> <y1> <x2> <y2>
    RECT <xmin> <ymin> <xmax> <ymax>
    LANDMARK <id> <x> <y>
    START <x> <y> <theta>

Blank lines and lines starting with '#' are ignored.
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np

from core.geometry import Pose2
from utils.errors import InvalidInputError, ParseError

RAY_EPS = 1e-9


@dataclass(frozen=True)
class Landmark:
    id: int
    x: float
    y: float


@dataclass(frozen=True)
class Rect:
    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def __post_init__(self):
        if self.xmax <= self.xmin or self.ymax <= self.ymin:
            raise InvalidInputError(f"degenerate rectangle {self}")

    def contains(self, x: float, y: float) -> bool:
        return self.xmin <= x <= self.xmax and self.ymin <= y <= self.ymax

    def edges(self) -> List[Tuple[float, float, float, float]]:
        return [
            (self.xmin, self.ymin, self.xmax, self.ymin),
            (self.xmax, self.ymin, self.xmax, self.ymax),
            (self.xmax, self.ymax, self.xmin, self.ymax),
            (self.xmin, self.ymax, self.xmin, self.ymin),
        ]


@dataclass
class World:
    bounds: Rect
    landmarks: List[Landmark] = field(default_factory=list)
    walls: List[Tuple[float, float, float, float]] = field(default_factory=list)
    rects: List[Rect] = field(default_factory=list)
    start: Optional[Pose2] = None

    def __post_init__(self):
        ids = [lm.id for lm in self.landmarks]
        if len(ids) != len(set(ids)):
            raise InvalidInputError("landmark ids must be unique")
        for lm in self.landmarks:
            if not self.bounds.contains(lm.x, lm.y):
                raise InvalidInputError(f"landmark {lm.id} lies outside the world bounds")
        if self.start is None:
            self.start = Pose2(0.5 * (self.bounds.xmin + self.bounds.xmax),
                               0.5 * (self.bounds.ymin + self.bounds.ymax), 0.0)
        segments = list(self.walls)
        for rect in self.rects:
            segments.extend(rect.edges())
        # (n, 4) array of x1, y1, x2, y2
        self._segments = np.array(segments, dtype=float).reshape(-1, 4)

    @property
    def segments(self) -> np.ndarray:
        return self._segments

    def raycast(self, x: float, y: float, angle: float, max_range: float) -> Optional[float]:
        """Distance along the ray to the first obstacle segment, None if nothing within max_range"""
        hits = self._ray_hits(x, y, np.array([math.cos(angle)]), np.array([math.sin(angle)]))
        t = hits[0]
        return float(t) if t <= max_range else None

    def raycast_many(self, x: float, y: float, angles: np.ndarray) -> np.ndarray:
        """Hit distance for every angle (inf where no segment is hit)"""
        return self._ray_hits(x, y, np.cos(angles), np.sin(angles))

    def _ray_hits(self, x: float, y: float, dx: np.ndarray, dy: np.ndarray) -> np.ndarray:
        if len(self._segments) == 0:
            return np.full(dx.shape, np.inf)
        sx1, sy1, sx2, sy2 = (self._segments[:, j][None, :] for j in range(4))
        ex, ey = sx2 - sx1, sy2 - sy1
        rdx, rdy = dx[:, None], dy[:, None]
        denom = rdx * ey - rdy * ex
        qx, qy = sx1 - x, sy1 - y
        with np.errstate(divide='ignore', invalid='ignore'):
            t = (qx * ey - qy * ex) / denom
            u = (qx * rdy - qy * rdx) / denom
        valid = (np.abs(denom) > RAY_EPS) & (t > RAY_EPS) & (u >= -RAY_EPS) & (u <= 1.0 + RAY_EPS)
        t = np.where(valid, t, np.inf)
        return t.min(axis=1)

    def line_of_sight(self, ax: float, ay: float, bx: float, by: float) -> bool:
        """True if the open segment a→b crosses no obstacle"""
        dist = math.hypot(bx - ax, by - ay)
        if dist < RAY_EPS:
            return True
        angle = math.atan2(by - ay, bx - ax)
        hit = self._ray_hits(ax, ay, np.array([math.cos(angle)]), np.array([math.sin(angle)]))[0]
        return hit >= dist - 1e-7


def parse_world(lines: List[str]) -> World:
    bounds = None
    landmarks: List[Landmark] = []
    walls = []
    rects = []
    start = None

    for line_no, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith('#'):
            continue
        parts = line.split()
        tag, args = parts[0].upper(), parts[1:]
        try:
            if tag == 'BOUNDS' and len(args) == 4:
                bounds = Rect(*(float(a) for a in args))
            elif tag == 'WALL' and len(args) == 4:
                walls.append(tuple(float(a) for a in args))
            elif tag == 'RECT' and len(args) == 4:
                rects.append(Rect(*(float(a) for a in args)))
            elif tag == 'LANDMARK' and len(args) == 3:
                landmarks.append(Landmark(int(args[0]), float(args[1]), float(args[2])))
            elif tag == 'START' and len(args) == 3:
                start = Pose2(*(float(a) for a in args))
            else:
                raise ParseError(line_no, f"unrecognised record '{parts[0]}' with {len(args)} fields")
        except (ValueError, InvalidInputError) as e:
            if isinstance(e, ParseError):
                raise
            raise ParseError(line_no, str(e)) from e

    if bounds is None:
        raise InvalidInputError("world file has no BOUNDS record")
    world = World(bounds=bounds, landmarks=landmarks, walls=walls, rects=rects, start=start)
    logging.debug(f"Parsed world: {len(landmarks)} landmarks, {len(walls)} walls, {len(rects)} rects")
    return world


def load_world(path: Union[str, Path]) -> World:
    """Read a scene file from disk"""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"world file not found: {path}")
    with open(path, 'r') as f:
        return parse_world(f.readlines())
