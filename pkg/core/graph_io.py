"""
Line-oriented pose-graph text format.

    VERTEX_SE2 <id> <x> <y> <theta>
    EDGE_SE2 <i> <k> <dx> <dy> <dtheta> <I11> <I12> <I13> <I22> <I23> <I33> [# weight <gamma>]

Numbers are written with 9 significant digits. The format carries no edge kind:
on reading, an edge between consecutive ids is odometry unless that pair already
has one, anything else is a loop closure.
"""

import logging
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, TextIO, Tuple, Union

from core.geometry import Pose2, RelativePose2
from core.graph import EdgeKind, InfoMatrix, PoseGraph, WeightedPoseGraph
from utils.errors import InvalidInputError, ParseError


def _fmt(value: float) -> str:
    text = f"{value:.9g}"
    return '0' if text == '-0' else text


def format_pose_graph(graph: PoseGraph, weights: Optional[Sequence[float]] = None) -> List[str]:
    lines = []
    for vid, pose in graph.vertices.items():
        lines.append(f"VERTEX_SE2 {vid} {_fmt(pose.x)} {_fmt(pose.y)} {_fmt(pose.theta)}")
    for idx, edge in enumerate(graph.edges):
        m = edge.measurement
        fields = [f"EDGE_SE2 {edge.i} {edge.k}", _fmt(m.dx), _fmt(m.dy), _fmt(m.dtheta)]
        fields.extend(_fmt(v) for v in edge.info.upper())
        line = ' '.join(fields)
        if weights is not None:
            line += f" # weight {_fmt(weights[idx])}"
        lines.append(line)
    return lines


def write_pose_graph(graph: Union[PoseGraph, WeightedPoseGraph], target: Union[str, Path, TextIO]):
    """Write a graph; a WeightedPoseGraph also gets its per-edge weight comments"""
    if isinstance(graph, WeightedPoseGraph):
        lines = format_pose_graph(graph.base, graph.weights)
    else:
        lines = format_pose_graph(graph)
    text = '\n'.join(lines) + '\n'
    if hasattr(target, 'write'):
        target.write(text)
    else:
        with open(target, 'w') as f:
            f.write(text)


def parse_pose_graph(lines: Iterable[str]) -> Tuple[PoseGraph, Optional[Tuple[float, ...]]]:
    """
    Parse the text format.

    Returns:
        The graph and its weights if every edge line carries a weight comment,
        otherwise None for the weights.
    """
    graph = PoseGraph()
    weights: List[Optional[float]] = []

    for line_no, raw in enumerate(lines, start=1):
        body, _, comment = raw.partition('#')
        parts = body.split()
        if not parts:
            continue
        tag = parts[0]
        try:
            if tag == 'VERTEX_SE2':
                if len(parts) != 5:
                    raise ParseError(line_no, "VERTEX_SE2 needs 4 fields")
                graph.add_vertex(int(parts[1]), Pose2(*(float(p) for p in parts[2:5])))
            elif tag == 'EDGE_SE2':
                if len(parts) != 12:
                    raise ParseError(line_no, "EDGE_SE2 needs 11 fields")
                i, k = int(parts[1]), int(parts[2])
                measurement = RelativePose2(*(float(p) for p in parts[3:6]))
                info = InfoMatrix.from_upper((float(p) for p in parts[6:12]), rounded=True)
                kind = EdgeKind.ODOMETRY
                if abs(k - i) != 1 or graph.has_edge(i, k, EdgeKind.ODOMETRY):
                    kind = EdgeKind.LOOP_CLOSURE
                graph.add_edge(i, k, kind, measurement, info)
                weights.append(_parse_weight(comment, line_no))
            else:
                raise ParseError(line_no, f"unknown record '{tag}'")
        except ParseError:
            raise
        except (ValueError, InvalidInputError) as e:
            raise ParseError(line_no, str(e)) from e

    logging.debug(f"Parsed pose graph: {len(graph)} vertices, {len(graph.edges)} edges")
    if weights and all(w is not None for w in weights):
        return graph, tuple(weights)
    return graph, None


def _parse_weight(comment: str, line_no: int) -> Optional[float]:
    parts = comment.split()
    if len(parts) >= 2 and parts[0] == 'weight':
        try:
            return float(parts[1])
        except ValueError:
            raise ParseError(line_no, f"bad weight '{parts[1]}'")
    return None


def read_pose_graph(path: Union[str, Path]) -> Tuple[PoseGraph, Optional[Tuple[float, ...]]]:
    with open(path, 'r') as f:
        return parse_pose_graph(f.readlines())
