from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from core.geometry import Pose2, RelativePose2
from utils.errors import InvalidInputError

# Hallucinated vertices live above this id so they never collide with SLAM keyframes
HALLUCINATED_ID_OFFSET = 1_000_000

SYMMETRY_RTOL = 1e-10
PSD_RTOL = 1e-9
# Blocks read back from 9-significant-digit text may dip this far below zero
ROUNDED_PSD_RTOL = 1e-8


class InfoMatrix:
    """3x3 symmetric positive-semidefinite information block attached to an edge"""

    __slots__ = ('_m',)

    def __init__(self, m, check: bool = True, psd_rtol: float = PSD_RTOL):
        arr = np.array(m, dtype=float)
        if arr.shape != (3, 3):
            raise InvalidInputError(f"information block must be 3x3, got {arr.shape}")
        if check:
            scale = max(np.abs(arr).max(), 1e-300)
            if np.abs(arr - arr.T).max() > SYMMETRY_RTOL * scale:
                raise InvalidInputError("information block is not symmetric")
            eig = np.linalg.eigvalsh(0.5 * (arr + arr.T))
            if eig.min() < -psd_rtol * np.abs(eig).max():
                raise InvalidInputError(f"information block is not PSD (min eigenvalue {eig.min():.3e})")
        arr.setflags(write=False)
        self._m = arr

    @property
    def m(self) -> np.ndarray:
        return self._m

    @classmethod
    def identity(cls, scale: float = 1.0) -> 'InfoMatrix':
        return cls(scale * np.eye(3))

    @classmethod
    def from_upper(cls, values: Sequence[float], rounded: bool = False) -> 'InfoMatrix':
        """
        Build from (I11, I12, I13, I22, I23, I33).

        With rounded=True the values come from text: eigenvalues slightly below
        zero are accepted within ROUNDED_PSD_RTOL and clamped back onto the PSD cone.
        """
        i11, i12, i13, i22, i23, i33 = (float(v) for v in values)
        m = [[i11, i12, i13], [i12, i22, i23], [i13, i23, i33]]
        if not rounded:
            return cls(m)
        info = cls(m, psd_rtol=ROUNDED_PSD_RTOL)
        if np.linalg.eigvalsh(info.m).min() < 0:
            return nearest_psd(info.m)
        return info

    def upper(self) -> Tuple[float, ...]:
        m = self._m
        return (m[0, 0], m[0, 1], m[0, 2], m[1, 1], m[1, 2], m[2, 2])

    def scaled(self, factor: float) -> 'InfoMatrix':
        return InfoMatrix(factor * self._m, check=False)

    def __add__(self, other: 'InfoMatrix') -> 'InfoMatrix':
        return InfoMatrix(self._m + other.m, check=False)

    def __eq__(self, other) -> bool:
        return isinstance(other, InfoMatrix) and np.array_equal(self._m, other.m)

    def __repr__(self) -> str:
        return f"InfoMatrix({self._m.tolist()})"


def nearest_psd(m: np.ndarray) -> InfoMatrix:
    """Symmetrize and clamp negative eigenvalues to zero"""
    sym = 0.5 * (np.asarray(m, dtype=float) + np.asarray(m, dtype=float).T)
    eig, vec = np.linalg.eigh(sym)
    projected = (vec * np.clip(eig, 0.0, None)) @ vec.T
    return InfoMatrix(0.5 * (projected + projected.T), check=False)


class EdgeKind(str, Enum):
    ODOMETRY = 'odometry'
    LOOP_CLOSURE = 'loop-closure'


@dataclass(frozen=True)
class Edge:
    i: int
    k: int
    kind: EdgeKind
    measurement: RelativePose2
    info: InfoMatrix

    @property
    def pair(self) -> Tuple[int, int]:
        return (min(self.i, self.k), max(self.i, self.k))


class PoseGraph:
    """
    Keyframe poses joined by relative constraints.

    Mutation is reserved for whoever owns the graph (the frontend while it is
    being extracted, the hallucinator on its own copy); everyone else treats a
    PoseGraph as a value and calls copy() before changing it.
    """

    def __init__(self):
        self._vertices: Dict[int, Pose2] = {}
        self._edges: List[Edge] = []
        self._pairs = set()

    # -- construction -----------------------------------------------------
    def add_vertex(self, vertex_id: int, pose: Pose2):
        if vertex_id in self._vertices:
            raise InvalidInputError(f"vertex {vertex_id} already exists")
        self._vertices[int(vertex_id)] = pose

    def add_edge(self, i: int, k: int, kind: EdgeKind, measurement: RelativePose2, info: InfoMatrix) -> Edge:
        if i == k:
            raise InvalidInputError(f"self-loop on vertex {i}")
        if i not in self._vertices or k not in self._vertices:
            raise InvalidInputError(f"edge ({i}, {k}) references an unknown vertex")
        edge = Edge(int(i), int(k), EdgeKind(kind), measurement, info)
        key = (edge.pair, edge.kind)
        if key in self._pairs:
            raise InvalidInputError(f"duplicate {edge.kind.value} edge between {i} and {k}")
        self._pairs.add(key)
        self._edges.append(edge)
        return edge

    def replace_edge_info(self, index: int, info: InfoMatrix):
        old = self._edges[index]
        self._edges[index] = Edge(old.i, old.k, old.kind, old.measurement, info)

    def copy(self) -> 'PoseGraph':
        clone = PoseGraph()
        clone._vertices = dict(self._vertices)
        clone._edges = list(self._edges)
        clone._pairs = set(self._pairs)
        return clone

    # -- queries ----------------------------------------------------------
    @property
    def vertices(self) -> Dict[int, Pose2]:
        return self._vertices

    @property
    def edges(self) -> List[Edge]:
        return self._edges

    @property
    def vertex_ids(self) -> List[int]:
        return list(self._vertices.keys())

    def __len__(self) -> int:
        return len(self._vertices)

    def index_of(self) -> Dict[int, int]:
        """Vertex id -> dense row index, in insertion order"""
        return {vid: idx for idx, vid in enumerate(self._vertices)}

    def has_edge(self, i: int, k: int, kind: Optional[EdgeKind] = None) -> bool:
        pair = (min(i, k), max(i, k))
        if kind is not None:
            return (pair, EdgeKind(kind)) in self._pairs
        return any((pair, kd) in self._pairs for kd in EdgeKind)

    def edges_of_kind(self, kind: EdgeKind) -> Iterator[Edge]:
        return (e for e in self._edges if e.kind == kind)

    def last_vertex_id(self) -> int:
        if not self._vertices:
            raise InvalidInputError("pose graph is empty")
        return next(reversed(self._vertices))

    def adjacency(self) -> Dict[int, set]:
        adj = {vid: set() for vid in self._vertices}
        for e in self._edges:
            adj[e.i].add(e.k)
            adj[e.k].add(e.i)
        return adj

    def is_connected(self) -> bool:
        """Breadth-first check over all edges"""
        if len(self._vertices) <= 1:
            return True
        adj = self.adjacency()
        start = next(iter(self._vertices))
        seen = {start}
        queue = deque([start])
        while queue:
            v = queue.popleft()
            for n in adj[v]:
                if n not in seen:
                    seen.add(n)
                    queue.append(n)
        return len(seen) == len(self._vertices)


@dataclass(frozen=True)
class WeightedPoseGraph:
    base: PoseGraph
    weights: Tuple[float, ...] = field(default_factory=tuple)

    def __post_init__(self):
        weights = tuple(float(w) for w in self.weights)
        if len(weights) != len(self.base.edges):
            raise InvalidInputError(
                f"{len(weights)} weights for {len(self.base.edges)} edges")
        values = np.asarray(weights, dtype=float)
        bad = ~np.isfinite(values) | (values < 0)
        if bad.any():
            raise InvalidInputError(f"edge weight must be finite and >= 0, got {values[bad][0]}")
        object.__setattr__(self, 'weights', weights)

    @classmethod
    def uniform(cls, base: PoseGraph, weight: float = 1.0) -> 'WeightedPoseGraph':
        return cls(base, tuple(weight for _ in base.edges))

    @property
    def num_vertices(self) -> int:
        return len(self.base)


def graph_from_edges(n_vertices: int, edges: Sequence[Tuple[int, int]],
                     weights: Optional[Sequence[float]] = None,
                     info: Optional[InfoMatrix] = None) -> WeightedPoseGraph:
    """Small helper for building topology-only graphs (oracles and tests)"""
    graph = PoseGraph()
    for vid in range(n_vertices):
        graph.add_vertex(vid, Pose2(float(vid), 0.0, 0.0))
    info = info or InfoMatrix.identity()
    for i, k in edges:
        kind = EdgeKind.ODOMETRY if abs(i - k) == 1 else EdgeKind.LOOP_CLOSURE
        if graph.has_edge(i, k, kind):
            kind = EdgeKind.LOOP_CLOSURE if kind == EdgeKind.ODOMETRY else EdgeKind.ODOMETRY
        graph.add_edge(i, k, kind, RelativePose2(0.0, 0.0, 0.0), info)
    if weights is None:
        return WeightedPoseGraph.uniform(graph)
    return WeightedPoseGraph(graph, tuple(weights))
