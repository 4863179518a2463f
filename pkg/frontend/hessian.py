import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Sequence, Tuple

import numpy as np

from core.geometry import Pose2
from core.params import SensorModel
from frontend.observations import Observation, batch_jacobians
from utils.errors import InvalidInputError

POSE_DOF = 3
POINT_DOF = 2
# Relative determinant threshold below which a 2x2 landmark block counts as singular
SINGULAR_BLOCK_RTOL = 1e-12


@dataclass
class CameraPointHessian:
    """Gauss-Newton Hessian of the pose/landmark problem, split into its three blocks"""
    h_c: np.ndarray
    h_p: np.ndarray
    h_cp: np.ndarray
    pose_index: Dict[int, int]
    point_index: Dict[int, int]
    # landmark id -> pose ids that observed it
    observers: Dict[int, List[int]] = field(default_factory=dict)

    def full(self, damping: float = 0.0) -> np.ndarray:
        """Dense [[h_c, h_cp], [h_cp^T, h_p + damping I]]"""
        h_p = self.h_p + damping * np.eye(self.h_p.shape[0])
        return np.block([[self.h_c, self.h_cp], [self.h_cp.T, h_p]])


@dataclass
class ReducedHessian:
    h_c: np.ndarray
    pose_index: Dict[int, int]
    covisibility: Dict[Tuple[int, int], int]
    skipped_landmarks: List[int] = field(default_factory=list)

    def block(self, i: int, k: int) -> np.ndarray:
        a, b = self.pose_index[i] * POSE_DOF, self.pose_index[k] * POSE_DOF
        return self.h_c[a:a + POSE_DOF, b:b + POSE_DOF]


def build_camera_point_hessian(poses: Mapping[int, Pose2],
                               observations: Sequence[Observation],
                               sensor: SensorModel,
                               points: Mapping[int, Tuple[float, float]],
                               anchor: float = 0.0) -> CameraPointHessian:
    """
    Accumulate J^T Sigma_obs^-1 J per observation into the three Hessian blocks.

    Args:
        poses: pose id -> linearization pose
        observations: measurements referencing those poses
        sensor: supplies Sigma_obs
        points: landmark id -> linearization position
        anchor: optional prior added to the first pose block

    Returns:
        CameraPointHessian; landmarks never observed are absent from h_p
    """
    pose_index = {pid: idx for idx, pid in enumerate(poses)}
    observed = []
    for obs in observations:
        if obs.pose_id not in pose_index:
            raise InvalidInputError(f"observation references unknown pose {obs.pose_id}")
        if obs.landmark_id not in points:
            raise InvalidInputError(f"observation references unknown landmark {obs.landmark_id}")
        if obs.landmark_id not in observed:
            observed.append(obs.landmark_id)
    observed_set = sorted(set(observed))
    point_index = {lid: idx for idx, lid in enumerate(observed_set)}

    n_c, n_p = len(pose_index) * POSE_DOF, len(point_index) * POINT_DOF
    h_c = np.zeros((n_c, n_c))
    h_p = np.zeros((n_p, n_p))
    h_cp = np.zeros((n_c, n_p))
    observers: Dict[int, List[int]] = defaultdict(list)

    if observations:
        states = np.array([poses[o.pose_id].as_array() for o in observations])
        pts = np.array([points[o.landmark_id] for o in observations], dtype=float)
        jc, jp = batch_jacobians(states, pts)
        omega = sensor.observation_information()
        cc = np.einsum('nki,kl,nlj->nij', jc, omega, jc)
        pp = np.einsum('nki,kl,nlj->nij', jp, omega, jp)
        cp = np.einsum('nki,kl,nlj->nij', jc, omega, jp)

        ci = np.array([pose_index[o.pose_id] for o in observations]) * POSE_DOF
        pi = np.array([point_index[o.landmark_id] for o in observations]) * POINT_DOF
        r3, r2 = np.arange(POSE_DOF), np.arange(POINT_DOF)
        np.add.at(h_c, (ci[:, None, None] + r3[None, :, None], ci[:, None, None] + r3[None, None, :]), cc)
        np.add.at(h_p, (pi[:, None, None] + r2[None, :, None], pi[:, None, None] + r2[None, None, :]), pp)
        np.add.at(h_cp, (ci[:, None, None] + r3[None, :, None], pi[:, None, None] + r2[None, None, :]), cp)

        for o in observations:
            if o.pose_id not in observers[o.landmark_id]:
                observers[o.landmark_id].append(o.pose_id)

    if anchor and n_c:
        h_c[:POSE_DOF, :POSE_DOF] += anchor * np.eye(POSE_DOF)

    return CameraPointHessian(h_c, h_p, h_cp, pose_index, point_index, dict(observers))


def schur_reduce(h: CameraPointHessian, damping: float = 1e-9) -> ReducedHessian:
    """
    H_c' = H_c - H_cp (H_p + damping I)^-1 H_cp^T, one 2x2 landmark block at a time.

    Also counts, for every pose pair, the landmarks observed from both.
    """
    if damping < 0:
        raise InvalidInputError("damping must be >= 0")
    reduced = h.h_c.copy()
    covisibility: Dict[Tuple[int, int], int] = defaultdict(int)
    skipped = []
    r3 = np.arange(POSE_DOF)

    for lid, j in h.point_index.items():
        cols = slice(j * POINT_DOF, (j + 1) * POINT_DOF)
        block = h.h_p[cols, cols] + damping * np.eye(POINT_DOF)
        det = np.linalg.det(block)
        scale = max(np.abs(block).max() ** 2, 1e-300)
        if abs(det) <= SINGULAR_BLOCK_RTOL * scale:
            skipped.append(lid)
            continue
        observers = h.observers.get(lid) or _observers_from_coupling(h, cols)
        if not observers:
            continue
        rows = np.concatenate([h.pose_index[pid] * POSE_DOF + r3 for pid in observers])
        coupling = h.h_cp[rows, cols]
        reduced[np.ix_(rows, rows)] -= coupling @ np.linalg.solve(block, coupling.T)

        ordered = sorted(observers, key=lambda pid: h.pose_index[pid])
        for a in range(len(ordered)):
            for b in range(a + 1, len(ordered)):
                covisibility[(ordered[a], ordered[b])] += 1

    if skipped:
        logging.warning(f"Schur reduction skipped {len(skipped)} singular landmark block(s): {skipped}")
    return ReducedHessian(reduced, dict(h.pose_index), dict(covisibility), skipped)


def _observers_from_coupling(h: CameraPointHessian, cols: slice) -> List[int]:
    nonzero = np.abs(h.h_cp[:, cols]).sum(axis=1) > 0
    return [pid for pid, idx in h.pose_index.items() if nonzero[idx * POSE_DOF:(idx + 1) * POSE_DOF].any()]
