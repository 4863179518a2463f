import logging
from typing import Mapping, Optional

import numpy as np

from core.geometry import Pose2, between, relative_jacobian
from core.graph import EdgeKind, InfoMatrix, PoseGraph, nearest_psd
from frontend.hessian import ReducedHessian
from utils.errors import InvalidInputError


def odometry_information_world(prev: Pose2, odometry_information: np.ndarray) -> np.ndarray:
    """J^T Sigma_odom^-1 J with J the Jacobian of between(prev, .) at prev"""
    J = relative_jacobian(prev)
    return J.T @ odometry_information @ J


def extract_pose_graph(reduced: ReducedHessian,
                       poses: Mapping[int, Pose2],
                       theta_covis: int,
                       odometry_information: Optional[np.ndarray] = None) -> PoseGraph:
    """
    Sparsify the reduced pose Hessian into an essential graph.

    An edge (i, k) is kept when the pair shares at least theta_covis landmarks
    or when k directly follows i. Its information is the negated off-diagonal
    block of H_c' projected onto the PSD cone; consecutive edges also get the
    odometry information when it is given.
    """
    if theta_covis < 1:
        raise InvalidInputError("theta_covis must be >= 1")
    ids = list(poses)
    position = {vid: idx for idx, vid in enumerate(ids)}
    graph = PoseGraph()
    for vid in ids:
        graph.add_vertex(vid, poses[vid])

    def coupling(i: int, k: int) -> np.ndarray:
        if i in reduced.pose_index and k in reduced.pose_index:
            return -reduced.block(i, k)
        return np.zeros((3, 3))

    for a, b in zip(ids, ids[1:]):
        info = nearest_psd(coupling(a, b)).m
        if odometry_information is not None:
            info = info + odometry_information_world(poses[a], odometry_information)
        graph.add_edge(a, b, EdgeKind.ODOMETRY, between(poses[a], poses[b]), InfoMatrix(info, check=False))

    n_lc = 0
    for (i, k), count in sorted(reduced.covisibility.items()):
        if count < theta_covis or i not in position or k not in position:
            continue
        if abs(position[i] - position[k]) == 1:
            continue
        graph.add_edge(i, k, EdgeKind.LOOP_CLOSURE, between(poses[i], poses[k]), nearest_psd(coupling(i, k)))
        n_lc += 1

    logging.debug(f"Essential graph: {len(graph)} vertices, {len(ids) - 1} odometry and {n_lc} covisibility edges")
    return graph
