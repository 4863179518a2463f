"""
Brute-force oracles for the decision math.

Each suite compares a fast implementation against an independent reference on
randomly generated inputs:

    trees     spanning-tree enumeration, Laplacian spectrum, D-opt closed form
    schur     dense Schur complement and the determinant identity
    jacobian  central finite differences of the observation model
    ranking   dopt_graph ranking against the full-FIM D-optimality ranking
"""

import itertools
import logging
import math
import time
from typing import Callable, Dict, List, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.stats import spearmanr
from tqdm import tqdm

from core.geometry import Pose2, RelativePose2, normalize_angle
from core.graph import EdgeKind, InfoMatrix, PoseGraph, WeightedPoseGraph, graph_from_edges
from core.params import SensorModel
from frontend.hessian import build_camera_point_hessian, schur_reduce
from frontend.observations import Observation, observation_jacobian, predict_measurement
from optimality.criteria import assemble_full_fim, dopt_graph, dopt_matrix, log_tree_weight, weighted_laplacian
from utils.errors import InvalidInputError

SUITES = ('trees', 'schur', 'jacobian', 'ranking')
# Scenes whose full Hessian is worse conditioned than this are redrawn
MAX_SCENE_CONDITION = 1e8
RESULT_COLUMNS = ['suite', 'check', 'cases', 'failures', 'worst', 'tolerance', 'passed', 'seconds']


def spanning_tree_weight(n_vertices: int, edges: Sequence[Tuple[int, int]], weights: Sequence[float]) -> float:
    """Sum over every spanning tree of the product of its edge weights, by enumeration"""
    total = 0.0
    for subset in itertools.combinations(range(len(edges)), n_vertices - 1):
        parent = list(range(n_vertices))

        def find(v):
            while parent[v] != v:
                parent[v] = parent[parent[v]]
                v = parent[v]
            return v

        acyclic = True
        for j in subset:
            a, b = find(edges[j][0]), find(edges[j][1])
            if a == b:
                acyclic = False
                break
            parent[a] = b
        if acyclic:
            total += math.prod(weights[j] for j in subset)
    return total


def dense_schur(full: np.ndarray, n_pose_rows: int) -> np.ndarray:
    """H_c - H_cp H_p^-1 H_cp^T through a dense inverse of the point block"""
    h_c = full[:n_pose_rows, :n_pose_rows]
    h_cp = full[:n_pose_rows, n_pose_rows:]
    h_p = full[n_pose_rows:, n_pose_rows:]
    return h_c - h_cp @ np.linalg.inv(h_p) @ h_cp.T


def finite_difference_jacobian(pose: Pose2, landmark: Tuple[float, float], step: float = 1e-6) -> np.ndarray:
    """Central differences of (range, bearing) with respect to (x, y, theta)"""
    J = np.zeros((2, 3))
    base = pose.as_array()
    for j in range(3):
        delta = np.zeros(3)
        delta[j] = step
        r_plus, b_plus = predict_measurement(Pose2(*(base + delta)), landmark)
        r_minus, b_minus = predict_measurement(Pose2(*(base - delta)), landmark)
        J[0, j] = (r_plus - r_minus) / (2.0 * step)
        J[1, j] = normalize_angle(b_plus - b_minus) / (2.0 * step)
    return J


def random_connected_graph(rng: np.random.Generator, n_vertices: int,
                           extra_edge_prob: float = 0.5) -> Tuple[List[Tuple[int, int]], List[float]]:
    """Random spanning tree plus random extra edges, weights in [0.1, 3]"""
    edges = []
    order = rng.permutation(n_vertices)
    for idx in range(1, n_vertices):
        edges.append((int(order[idx]), int(order[rng.integers(0, idx)])))
    present = {tuple(sorted(e)) for e in edges}
    for a in range(n_vertices):
        for b in range(a + 1, n_vertices):
            if (a, b) not in present and rng.random() < extra_edge_prob:
                edges.append((a, b))
    weights = rng.uniform(0.1, 3.0, size=len(edges)).tolist()
    return edges, weights


def random_info(rng: np.random.Generator, scale: float) -> InfoMatrix:
    """scale * R^T diag(1, a, b) R with mild anisotropy"""
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    diag = np.diag([1.0, rng.uniform(0.7, 1.4), rng.uniform(0.7, 1.4)])
    m = scale * q.T @ diag @ q
    return InfoMatrix(0.5 * (m + m.T), check=False)


class OracleRunner:
    """Runs the oracle suites and collects one result row per check"""

    def __init__(self, seed: int = 0, show_progress: bool = True):
        self.seed = seed
        self.show_progress = show_progress
        self.rows: List[Dict] = []
        self.spearman: List[float] = []

    def _cases(self, n: int, desc: str):
        return tqdm(range(n), desc=desc, leave=False, disable=not self.show_progress)

    def _check(self, suite: str, check: str, n: int, tolerance: float,
               error_fn: Callable[[np.random.Generator], float]):
        rng = np.random.default_rng(self.seed)
        started = time.perf_counter()
        worst, failures = 0.0, 0
        for _ in self._cases(n, f"{suite}/{check}"):
            err = error_fn(rng)
            worst = max(worst, err)
            if not err <= tolerance:
                failures += 1
        self.rows.append({
            'suite': suite, 'check': check, 'cases': n, 'failures': failures,
            'worst': worst, 'tolerance': tolerance, 'passed': failures == 0,
            'seconds': round(time.perf_counter() - started, 3),
        })

    # -- trees ----------------------------------------------------------------
    def run_trees(self):
        def matrix_tree(rng):
            n = int(rng.integers(2, 7))
            edges, weights = random_connected_graph(rng, n)
            expected = spanning_tree_weight(n, edges, weights)
            got = math.exp(log_tree_weight(graph_from_edges(n, edges, weights)))
            return abs(got - expected) / expected

        def spectrum(rng):
            n = int(rng.integers(2, 9))
            edges, weights = random_connected_graph(rng, n)
            g = graph_from_edges(n, edges, weights)
            eig = np.sort(np.linalg.eigvalsh(weighted_laplacian(g).m))[1:]
            expected = n * math.exp(log_tree_weight(g))
            return abs(float(np.prod(eig)) - expected) / expected

        def closed_form(rng):
            dim = int(rng.integers(1, 7))
            a = rng.normal(size=(dim, dim))
            m = a @ a.T + 0.1 * np.eye(dim)
            expected = np.linalg.det(m) ** (1.0 / dim)
            return abs(dopt_matrix(m) - expected) / expected

        self._check('trees', 'matrix-tree enumeration', 200, 1e-7, matrix_tree)
        self._check('trees', 'laplacian eigenvalue product', 100, 1e-6, spectrum)
        self._check('trees', 'dopt closed form', 500, 1e-8, closed_form)

    # -- schur ----------------------------------------------------------------
    @staticmethod
    def random_scene(rng: np.random.Generator, n_poses: int, n_points: int):
        poses = {i: Pose2(*rng.uniform(0.0, 5.0, size=2), rng.uniform(-math.pi, math.pi)) for i in range(n_poses)}
        points = {}
        while len(points) < n_points:
            xy = rng.uniform(-1.0, 6.0, size=2)
            if all(math.hypot(xy[0] - p.x, xy[1] - p.y) > 0.3 for p in poses.values()):
                points[len(points)] = (float(xy[0]), float(xy[1]))
        observations = []
        for pid, pose in poses.items():
            for lid, xy in points.items():
                r, b = predict_measurement(pose, xy)
                observations.append(Observation(pid, lid, r, b))
        return poses, points, observations

    @classmethod
    def nonsingular_scene(cls, rng: np.random.Generator, sensor: SensorModel, max_tries: int = 100):
        """
        Draw scenes until the anchored full Hessian is positive definite.

        A scene with too few landmarks (two poses and one point, say) leaves
        pose directions unobserved, and the determinant identity says nothing
        about a singular matrix.

        Returns:
            poses, points, observations and the CameraPointHessian (anchor 1.0)
        """
        for _ in range(max_tries):
            poses, points, obs = cls.random_scene(rng, int(rng.integers(2, 7)), int(rng.integers(1, 26)))
            h = build_camera_point_hessian(poses, obs, sensor, points, anchor=1.0)
            full = h.full()
            sign, _ = np.linalg.slogdet(full)
            if sign > 0 and np.linalg.cond(full) < MAX_SCENE_CONDITION:
                return poses, points, obs, h
        raise InvalidInputError(f"no nonsingular scene in {max_tries} draws")

    def run_schur(self):
        sensor = SensorModel(range_noise_std=0.05, bearing_noise_std=0.02)

        def dense_match(rng):
            poses, points, obs = self.random_scene(rng, int(rng.integers(2, 7)), int(rng.integers(1, 26)))
            h = build_camera_point_hessian(poses, obs, sensor, points, anchor=1.0)
            reduced = schur_reduce(h, damping=0.0).h_c
            expected = dense_schur(h.full(), h.h_c.shape[0])
            return float(np.abs(reduced - expected).max() / max(np.abs(h.h_c).max(), 1.0))

        def determinant(rng):
            _, _, _, h = self.nonsingular_scene(rng, sensor)
            reduced = schur_reduce(h, damping=0.0).h_c
            _, ld_full = np.linalg.slogdet(h.full())
            _, ld_p = np.linalg.slogdet(h.h_p)
            _, ld_c = np.linalg.slogdet(reduced)
            return abs(math.expm1(ld_full - ld_p - ld_c))

        self._check('schur', 'dense inverse', 50, 1e-9, dense_match)
        self._check('schur', 'determinant identity', 50, 1e-6, determinant)

    # -- jacobian -------------------------------------------------------------
    def run_jacobian(self):
        def fd_error(rng):
            pose = Pose2(*rng.uniform(-5.0, 5.0, size=2), rng.uniform(-math.pi, math.pi))
            r, phi = rng.uniform(0.5, 5.0), rng.uniform(-math.pi, math.pi)
            landmark = (pose.x + r * math.cos(phi), pose.y + r * math.sin(phi))
            return float(np.abs(observation_jacobian(pose, landmark)
                                - finite_difference_jacobian(pose, landmark)).max())

        self._check('jacobian', 'central differences', 1000, 1e-5, fd_error)

    # -- ranking --------------------------------------------------------------
    @staticmethod
    def ranking_scenario(rng: np.random.Generator) -> Tuple[List[float], List[float]]:
        """
        One SLAM graph and 4-8 candidate branches of equal length.

        Returns:
            dopt_graph and full-FIM D-optimality per candidate
        """
        n_slam = int(rng.integers(4, 8))
        n_branch = int(rng.integers(2, 15 - n_slam + 1))
        base = PoseGraph()
        for v in range(n_slam):
            base.add_vertex(v, Pose2(float(v), 0.0, 0.0))
        for v in range(1, n_slam):
            base.add_edge(v - 1, v, EdgeKind.ODOMETRY, RelativePose2(1.0, 0.0, 0.0),
                          random_info(rng, rng.uniform(5.0, 20.0)))
        for _ in range(int(rng.integers(0, 3))):
            i, k = sorted(rng.choice(n_slam, size=2, replace=False).tolist())
            if k - i > 1 and not base.has_edge(i, k, EdgeKind.LOOP_CLOSURE):
                base.add_edge(i, k, EdgeKind.LOOP_CLOSURE, RelativePose2(0.0, 0.0, 0.0),
                              random_info(rng, rng.uniform(1.0, 10.0)))
        odom_scale = rng.uniform(5.0, 20.0)

        graph_utils, fim_utils = [], []
        for _ in range(int(rng.integers(4, 9))):
            g = base.copy()
            prev = n_slam - 1
            for j in range(n_branch):
                vid = n_slam + j
                g.add_vertex(vid, Pose2(float(vid), 0.0, 0.0))
                g.add_edge(prev, vid, EdgeKind.ODOMETRY, RelativePose2(1.0, 0.0, 0.0),
                           random_info(rng, odom_scale * (1.0 + rng.uniform(0.0, 1.0))))
                if rng.random() < 0.3:
                    target = int(rng.integers(0, n_slam - 1))
                    g.add_edge(vid, target, EdgeKind.LOOP_CLOSURE, RelativePose2(0.0, 0.0, 0.0),
                               random_info(rng, rng.uniform(1.0, 10.0)))
                prev = vid
            weighted = WeightedPoseGraph(g, tuple(dopt_matrix(e.info.m) for e in g.edges))
            graph_utils.append(dopt_graph(weighted))
            fim_utils.append(dopt_matrix(assemble_full_fim(weighted).m))
        return graph_utils, fim_utils

    def run_ranking(self, n_scenarios: int = 30):
        rng = np.random.default_rng(self.seed)
        started = time.perf_counter()
        coefficients, top1 = [], []
        for _ in self._cases(n_scenarios, 'ranking/spearman'):
            graph_utils, fim_utils = self.ranking_scenario(rng)
            if np.ptp(graph_utils) == 0 and np.ptp(fim_utils) == 0:
                rho = 1.0
            else:
                rho = float(spearmanr(graph_utils, fim_utils).correlation)
            coefficients.append(rho)
            top1.append(int(np.argmax(graph_utils)) == int(np.argmax(fim_utils)))
        self.spearman = coefficients
        median = float(np.median(coefficients))
        agreement = float(np.mean(top1))
        seconds = round(time.perf_counter() - started, 3)
        self.rows.append({'suite': 'ranking', 'check': 'median spearman', 'cases': n_scenarios,
                          'failures': int(sum(r < 0.8 for r in coefficients)), 'worst': median,
                          'tolerance': 0.8, 'passed': median >= 0.8, 'seconds': seconds})
        self.rows.append({'suite': 'ranking', 'check': 'top-1 agreement', 'cases': n_scenarios,
                          'failures': int(len(top1) - sum(top1)), 'worst': agreement,
                          'tolerance': 0.7, 'passed': agreement >= 0.7, 'seconds': seconds})
        for idx in range(0, n_scenarios, 10):
            batch = coefficients[idx:idx + 10]
            logging.info(f"Ranking scenarios {idx}-{idx + len(batch) - 1}: "
                         f"spearman {', '.join(f'{r:.3f}' for r in batch)}")

    def run(self, suite: str) -> pd.DataFrame:
        if suite == 'all':
            selected = SUITES
        elif suite in SUITES:
            selected = (suite,)
        else:
            raise InvalidInputError(f"unknown oracle suite '{suite}', expected one of {SUITES + ('all',)}")
        for name in selected:
            getattr(self, f"run_{name}")()
        return pd.DataFrame(self.rows, columns=RESULT_COLUMNS)


def run_oracles(suite: str, seed: int = 0, show_progress: bool = True) -> Tuple[pd.DataFrame, bool]:
    """Run one suite (or 'all'); returns the result table and whether every check passed"""
    table = OracleRunner(seed, show_progress).run(suite)
    return table, bool(table['passed'].all())
