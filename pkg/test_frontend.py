import math
from pathlib import Path

import numpy as np
import pytest

from benchmarks.oracles import OracleRunner, dense_schur, finite_difference_jacobian
from core.geometry import Pose2
from core.graph import EdgeKind
from core.params import FrontendParams, SensorModel
from core.world import Landmark, Rect, World, load_world
from frontend.essential_graph import extract_pose_graph
from frontend.hessian import CameraPointHessian, ReducedHessian, build_camera_point_hessian, schur_reduce
from frontend.observations import (Observation, landmark_jacobian, observation_jacobian, observe,
                                   predict_measurement)
from frontend.slam import SlamFrontend
from utils.errors import InvalidInputError, SingularityError

NOISELESS = SensorModel(fov=math.pi / 2, max_range=5.0, range_noise_std=0.0, bearing_noise_std=0.0)
SENSOR = SensorModel(range_noise_std=0.05, bearing_noise_std=0.02)
SINGLE_ROOM = Path(__file__).parent / 'data' / 'worlds' / 'single_room.txt'


def open_world(landmarks, walls=()):
    return World(bounds=Rect(-10, -10, 10, 10), landmarks=[Landmark(i, x, y) for i, (x, y) in enumerate(landmarks)],
                 walls=list(walls))


class TestObservations:

    def test_landmark_straight_ahead(self):
        obs = observe(Pose2.identity(), open_world([(1.0, 0.0)]), NOISELESS, 0)
        assert len(obs) == 1
        assert obs[0].range == pytest.approx(1.0)
        assert obs[0].bearing == pytest.approx(0.0)

    def test_landmark_behind_is_excluded(self):
        assert observe(Pose2.identity(), open_world([(-1.0, 0.0)]), NOISELESS, 0) == []

    def test_landmark_behind_wall_is_excluded(self):
        world = open_world([(2.0, 0.0)], walls=[(1.0, -1.0, 1.0, 1.0)])
        assert observe(Pose2.identity(), world, NOISELESS, 0) == []

    def test_out_of_range_is_excluded(self):
        assert observe(Pose2.identity(), open_world([(6.0, 0.0)]), NOISELESS, 0) == []

    def test_seeded_noise_is_deterministic(self):
        world = open_world([(1.0, 0.5), (2.0, -1.0)])
        assert observe(Pose2(0.1, 0.2, 0.3), world, SENSOR, 9) == observe(Pose2(0.1, 0.2, 0.3), world, SENSOR, 9)

    @pytest.mark.parametrize('fov', [math.pi / 2, 2.0 * math.pi])
    def test_noisy_readings_stay_in_footprint(self, fov):
        # landmarks on the edge of range and field of view, noise far above the defaults
        sensor = SensorModel(fov=fov, max_range=3.0, range_noise_std=0.5, bearing_noise_std=0.5)
        half = min(0.5 * fov, math.pi) - 1e-6
        world = open_world([(2.999 * math.cos(a), 2.999 * math.sin(a)) for a in np.linspace(-half, half, 9)]
                           + [(0.01, 0.0)])
        for seed in range(50):
            obs = observe(Pose2.identity(), world, sensor, seed)
            assert len(obs) == 10
            for o in obs:
                assert 0.0 < o.range <= sensor.max_range
                assert -math.pi < o.bearing <= math.pi
                assert sensor.in_fov(o.bearing)


class TestJacobians:

    def test_analytic_example(self):
        J = observation_jacobian(Pose2.identity(), (1.0, 0.0))
        np.testing.assert_allclose(J, [[-1, 0, 0], [0, -1, -1]], atol=1e-12)

    def test_range_row_norm_is_rotation_invariant(self):
        pose, landmark = Pose2(0.5, -0.2, 0.3), (2.0, 1.0)
        for phi in np.linspace(-math.pi, math.pi, 7):
            c, s = math.cos(phi), math.sin(phi)
            rotated_pose = Pose2(c * pose.x - s * pose.y, s * pose.x + c * pose.y, pose.theta + phi)
            rotated_lm = (c * landmark[0] - s * landmark[1], s * landmark[0] + c * landmark[1])
            row = observation_jacobian(rotated_pose, rotated_lm)[0]
            assert np.linalg.norm(row) == pytest.approx(1.0)

    def test_finite_differences(self):
        rng = np.random.default_rng(4)
        for _ in range(1000):
            pose = Pose2(*rng.uniform(-5, 5, 2), rng.uniform(-math.pi, math.pi))
            r, phi = rng.uniform(0.5, 5.0), rng.uniform(-math.pi, math.pi)
            landmark = (pose.x + r * math.cos(phi), pose.y + r * math.sin(phi))
            np.testing.assert_allclose(observation_jacobian(pose, landmark),
                                       finite_difference_jacobian(pose, landmark), atol=1e-5)

    def test_landmark_jacobian_is_negated_translation(self):
        pose, landmark = Pose2(1.0, 2.0, 0.4), (3.0, -1.0)
        np.testing.assert_allclose(landmark_jacobian(pose, landmark), -observation_jacobian(pose, landmark)[:, :2])

    def test_coincident_landmark_raises(self):
        with pytest.raises(SingularityError):
            observation_jacobian(Pose2(1.0, 1.0, 0.0), (1.0, 1.0))


class TestCameraPointHessian:

    def test_single_observation(self):
        pose, landmark = Pose2(0.0, 0.0, 0.2), (2.0, 1.0)
        r, b = predict_measurement(pose, landmark)
        h = build_camera_point_hessian({0: pose}, [Observation(0, 7, r, b)], SENSOR, {7: landmark})
        omega = SENSOR.observation_information()
        jc, jp = observation_jacobian(pose, landmark), landmark_jacobian(pose, landmark)
        np.testing.assert_allclose(h.h_c, jc.T @ omega @ jc)
        np.testing.assert_allclose(h.h_p, jp.T @ omega @ jp)
        np.testing.assert_allclose(h.h_cp, jc.T @ omega @ jp)
        assert h.observers == {7: [0]}

    def test_disjoint_landmarks_give_block_diagonal(self):
        poses = {0: Pose2(0, 0, 0), 1: Pose2(5, 0, 0)}
        points = {0: (1.0, 1.0), 1: (6.0, -1.0)}
        obs = [Observation(0, 0, *predict_measurement(poses[0], points[0])),
               Observation(1, 1, *predict_measurement(poses[1], points[1]))]
        h = build_camera_point_hessian(poses, obs, SENSOR, points)
        np.testing.assert_array_equal(h.h_c[:3, 3:], 0.0)
        np.testing.assert_array_equal(h.h_c[3:, :3], 0.0)

    def test_full_matrix_is_psd(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            poses, points, obs = OracleRunner.random_scene(rng, 4, 10)
            h = build_camera_point_hessian(poses, obs, SENSOR, points)
            full = h.full()
            np.testing.assert_allclose(full, full.T, atol=1e-9)
            eig = np.linalg.eigvalsh(full)
            assert eig.min() >= -1e-9 * eig.max()

    def test_unknown_references_raise(self):
        with pytest.raises(InvalidInputError):
            build_camera_point_hessian({0: Pose2(0, 0, 0)}, [Observation(3, 0, 1.0, 0.0)], SENSOR, {0: (1.0, 0.0)})
        with pytest.raises(InvalidInputError):
            build_camera_point_hessian({0: Pose2(0, 0, 0)}, [Observation(0, 4, 1.0, 0.0)], SENSOR, {0: (1.0, 0.0)})


class TestSchurReduce:

    def test_decoupled_case_is_unchanged(self):
        h_c = np.diag([1.0, 2.0, 3.0])
        h = CameraPointHessian(h_c, np.eye(2), np.zeros((3, 2)), {0: 0}, {5: 0})
        np.testing.assert_array_equal(schur_reduce(h).h_c, h_c)

    def test_two_poses_one_landmark_matches_dense(self):
        poses = {0: Pose2(0.0, 0.0, 0.0), 1: Pose2(1.0, 0.0, 0.5)}
        points = {0: (0.5, 1.5)}
        obs = [Observation(pid, 0, *predict_measurement(p, points[0])) for pid, p in poses.items()]
        h = build_camera_point_hessian(poses, obs, SENSOR, points, anchor=1.0)
        reduced = schur_reduce(h, damping=0.0)
        np.testing.assert_allclose(reduced.h_c, dense_schur(h.full(), 6), atol=1e-9 * np.abs(h.h_c).max())
        assert reduced.covisibility == {(0, 1): 1}

    def test_determinant_identity(self):
        rng = np.random.default_rng(21)
        for _ in range(50):
            _, _, _, h = OracleRunner.nonsingular_scene(rng, SENSOR)
            reduced = schur_reduce(h, damping=0.0).h_c
            _, ld_full = np.linalg.slogdet(h.full())
            _, ld_p = np.linalg.slogdet(h.h_p)
            sign_c, ld_c = np.linalg.slogdet(reduced)
            assert sign_c == 1
            assert ld_full == pytest.approx(ld_p + ld_c, rel=1e-6, abs=1e-6)

    def test_underdetermined_scene_is_redrawn(self):
        # two poses sharing one landmark leave a pose direction unobserved
        poses = {0: Pose2(0.0, 0.0, 0.0), 1: Pose2(1.0, 0.0, 0.5)}
        points = {0: (0.5, 1.5)}
        obs = [Observation(pid, 0, *predict_measurement(p, points[0])) for pid, p in poses.items()]
        full = build_camera_point_hessian(poses, obs, SENSOR, points, anchor=1.0).full()
        assert np.linalg.matrix_rank(full) < full.shape[0]

        rng = np.random.default_rng(0)
        for _ in range(60):
            _, _, _, h = OracleRunner.nonsingular_scene(rng, SENSOR)
            assert np.linalg.slogdet(h.full())[0] == 1

    def test_negative_damping_raises(self):
        h = CameraPointHessian(np.eye(3), np.eye(2), np.zeros((3, 2)), {0: 0}, {0: 0})
        with pytest.raises(InvalidInputError):
            schur_reduce(h, damping=-1.0)

    def test_singular_block_is_skipped(self):
        h = CameraPointHessian(np.eye(3), np.zeros((2, 2)), np.ones((3, 2)), {0: 0}, {9: 0}, {9: [0]})
        reduced = schur_reduce(h, damping=0.0)
        assert reduced.skipped_landmarks == [9]
        np.testing.assert_array_equal(reduced.h_c, np.eye(3))


class TestEssentialGraph:

    @staticmethod
    def reduced_for(n, covisibility):
        h_c = np.zeros((3 * n, 3 * n))
        for a in range(n):
            for b in range(n):
                if a != b:
                    h_c[3 * a:3 * a + 3, 3 * b:3 * b + 3] = -np.eye(3)
        return ReducedHessian(h_c, {i: i for i in range(n)}, covisibility)

    def test_pair_below_threshold_has_no_edge(self):
        poses = {i: Pose2(float(i), 0.0, 0.0) for i in range(3)}
        graph = extract_pose_graph(self.reduced_for(3, {(0, 2): 2}), poses, theta_covis=3)
        assert not graph.has_edge(0, 2)
        assert len(graph.edges) == 2

    def test_no_pruning_gives_complete_topology(self):
        n = 5
        poses = {i: Pose2(float(i), 0.0, 0.0) for i in range(n)}
        covis = {(a, b): 1 for a in range(n) for b in range(a + 1, n)}
        graph = extract_pose_graph(self.reduced_for(n, covis), poses, theta_covis=1)
        assert len(graph.edges) == n * (n - 1) // 2
        assert len(list(graph.edges_of_kind(EdgeKind.ODOMETRY))) == n - 1
        lc = next(graph.edges_of_kind(EdgeKind.LOOP_CLOSURE))
        np.testing.assert_allclose(lc.info.m, np.eye(3), atol=1e-12)

    def test_odometry_information_is_added(self):
        poses = {0: Pose2(0, 0, 0), 1: Pose2(1, 0, 0)}
        reduced = ReducedHessian(np.zeros((6, 6)), {0: 0, 1: 1}, {})
        graph = extract_pose_graph(reduced, poses, 3, odometry_information=np.diag([4.0, 4.0, 9.0]))
        np.testing.assert_allclose(graph.edges[0].info.m, np.diag([4.0, 4.0, 9.0]))

    def test_threshold_must_be_positive(self):
        with pytest.raises(InvalidInputError):
            extract_pose_graph(self.reduced_for(2, {}), {0: Pose2(0, 0, 0), 1: Pose2(1, 0, 0)}, theta_covis=0)


class TestSlamFrontend:

    def test_graph_is_connected_along_a_trajectory(self):
        world = load_world(SINGLE_ROOM)
        frontend = SlamFrontend(world, SensorModel(), FrontendParams(), np.random.default_rng(0))
        for step in range(8):
            frontend.add_keyframe(Pose2(1.0 + 0.5 * step, 2.5, 0.3 * step))
        graph = frontend.pose_graph()
        assert len(graph) == 8
        assert graph.is_connected()
        assert frontend.pose_graph() is graph
        assert frontend.estimates[0] == frontend.true_poses[0]
        assert len(frontend.map_points) > 0
        assert frontend.trajectory_errors().shape == (8,)

    def test_seeded_frontends_agree(self):
        world = load_world(SINGLE_ROOM)
        runs = []
        for _ in range(2):
            frontend = SlamFrontend(world, SensorModel(), FrontendParams(), np.random.default_rng(3))
            for step in range(4):
                frontend.add_keyframe(Pose2(2.0 + 0.4 * step, 2.0, 0.0))
            runs.append((frontend.estimate, frontend.map_points))
        assert runs[0] == runs[1]
