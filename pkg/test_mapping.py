import math
from pathlib import Path

import numpy as np
import pytest

from core.geometry import Pose2
from core.grid import FREE, OCCUPIED, UNKNOWN, OccupancyGrid, rasterize_world, reachable_free_mask
from core.params import SensorModel
from core.world import Rect, World, load_world
from mapping.frontiers import (FrontierCandidate, FrontierDetector, RRTFrontierDetector, candidate_from_cluster,
                               cells_to_points, cluster_mean_shift, detect_frontiers_edge, detect_frontiers_rrt,
                               filter_frontiers, near_unknown, unknown_in_disc)
from mapping.occupancy import integrate_scan, scan_angles
from utils.errors import InvalidInputError


def grid_of(cells, resolution=0.1):
    return OccupancyGrid(resolution, 0.0, 0.0, np.asarray(cells))


def half_known(width=10, height=10, free_cols=5):
    cells = np.full((height, width), UNKNOWN)
    cells[:, :free_cols] = FREE
    return grid_of(cells)


class Reachable:
    """Reachability stub: everything inside the given box is reachable"""

    def __init__(self, box=None):
        self.box = box

    def reachable(self, x, y):
        return self.box is None or self.box.contains(x, y)


class TestIntegrateScan:

    def test_empty_world_gives_free_disc(self):
        world = World(bounds=Rect(-5, -5, 5, 5))
        sensor = SensorModel(max_range=2.0)
        grid = OccupancyGrid.empty(-5, -5, 5, 5, 0.1)
        updated = integrate_scan(grid, Pose2(0, 0, 0), world, sensor)
        assert updated.count(OCCUPIED) == 0
        cols, rows = np.meshgrid(np.arange(grid.width), np.arange(grid.height))
        cx = grid.origin_x + (cols + 0.5) * grid.resolution
        cy = grid.origin_y + (rows + 0.5) * grid.resolution
        dist = np.hypot(cx, cy)
        inner = updated.cells[dist <= 1.5]
        assert np.count_nonzero(inner == FREE) >= 0.95 * inner.size
        assert np.all(updated.cells[dist > 2.0 + grid.resolution] == UNKNOWN)
        for angle in np.linspace(-math.pi, math.pi, 16, endpoint=False):
            assert updated.value_at(2.5 * math.cos(angle), 2.5 * math.sin(angle)) == UNKNOWN
        # input grid untouched
        assert grid.count(UNKNOWN) == grid.width * grid.height

    def test_wall_occludes(self):
        world = World(bounds=Rect(-5, -5, 5, 5), walls=[(2.0, -4.0, 2.0, 4.0)])
        grid = OccupancyGrid.empty(-5, -5, 5, 5, 0.1)
        updated = integrate_scan(grid, Pose2(0, 0, 0), world, SensorModel(max_range=5.0))
        assert updated.value_at(1.5, 0.05) == FREE
        assert updated.value_at(1.95, 0.05) == OCCUPIED
        assert updated.value_at(2.5, 0.05) == UNKNOWN

    def test_second_identical_scan_changes_nothing(self):
        world = World(bounds=Rect(-5, -5, 5, 5), walls=[(2.0, -4.0, 2.0, 4.0)])
        sensor = SensorModel(max_range=3.0)
        once = integrate_scan(OccupancyGrid.empty(-5, -5, 5, 5, 0.1), Pose2(0, 0, 0.3), world, sensor)
        twice = integrate_scan(once, Pose2(0, 0, 0.3), world, sensor)
        np.testing.assert_array_equal(once.cells, twice.cells)

    def test_pose_outside_grid_raises(self):
        world = World(bounds=Rect(-5, -5, 5, 5))
        with pytest.raises(InvalidInputError):
            integrate_scan(OccupancyGrid.empty(-1, -1, 1, 1, 0.1), Pose2(3, 3, 0), world, SensorModel())

    def test_narrow_fov_angles(self):
        sensor = SensorModel(fov=math.pi / 2, max_range=4.0)
        angles = scan_angles(Pose2(0, 0, 1.0), sensor, 0.1)
        assert angles.min() == pytest.approx(1.0 - math.pi / 4)
        assert angles.max() == pytest.approx(1.0 + math.pi / 4)

    def test_knowledge_never_shrinks(self):
        world = load_world(Path(__file__).parent / 'data' / 'worlds' / 'two_rooms.txt')
        truth = rasterize_world(world, 0.1)
        rows, cols = np.nonzero(reachable_free_mask(truth, world.start.x, world.start.y))
        rng = np.random.default_rng(6)
        grid = OccupancyGrid.for_world(world, 0.1)
        sensor = SensorModel(max_range=3.0)
        for idx in rng.choice(len(rows), size=25, replace=False):
            x, y = truth.cell_to_world(int(cols[idx]), int(rows[idx]))
            updated = integrate_scan(grid, Pose2(x, y, rng.uniform(-math.pi, math.pi)), world, sensor)
            assert updated.count(UNKNOWN) <= grid.count(UNKNOWN)
            known = grid.cells != UNKNOWN
            assert np.all(updated.cells[known] != UNKNOWN)
            assert np.all(updated.cells[grid.cells == OCCUPIED] == OCCUPIED)
            grid = updated


class TestEdgeFrontiers:

    def test_all_unknown(self):
        assert detect_frontiers_edge(grid_of(np.full((8, 8), UNKNOWN))) == []

    def test_half_plane_boundary(self):
        cells = detect_frontiers_edge(half_known())
        assert cells == [(4, row) for row in range(10)]

    def test_closed_room_has_no_frontier(self):
        cells = np.full((12, 12), OCCUPIED)
        cells[1:-1, 1:-1] = FREE
        assert detect_frontiers_edge(grid_of(cells)) == []

    def test_thin_gap_is_opened_away(self):
        cells = np.full((12, 12), UNKNOWN)
        cells[2:9, 2:9] = FREE
        # a one-cell free sliver poking into unknown space
        cells[5, 9:12] = FREE
        frontier = detect_frontiers_edge(grid_of(cells))
        assert all(col <= 8 for col, _ in frontier)

    def test_cells_to_points(self):
        grid = half_known()
        pts = cells_to_points(grid, [(4, 0), (4, 9)])
        np.testing.assert_allclose(pts, [[0.45, 0.05], [0.45, 0.95]])
        assert cells_to_points(grid, []).shape == (0, 2)


class TestRRTFrontiers:

    def test_known_grid_emits_nothing(self):
        grid = grid_of(np.full((20, 20), FREE))
        assert detect_frontiers_rrt(grid, (1.0, 1.0), 0.5, 200, rng_seed=1) == []

    def test_corridor_end_matches_edge_frontier(self):
        grid = half_known(width=20, height=5, free_cols=10)
        points = detect_frontiers_rrt(grid, (0.25, 0.25), 0.5, 300, rng_seed=2)
        assert points
        edge_cols = {col for col, _ in detect_frontiers_edge(grid)}
        assert edge_cols == {9}
        for x, y in points:
            col, _ = grid.world_to_cell(x, y)
            assert col in (8, 9)
            assert grid.value_at(x, y) == FREE

    def test_same_seed_same_emissions(self):
        grid = half_known(width=20, height=5, free_cols=10)
        a = detect_frontiers_rrt(grid, (0.25, 0.25), 0.5, 100, rng_seed=5)
        b = detect_frontiers_rrt(grid, (0.25, 0.25), 0.5, 100, rng_seed=5)
        assert a == b

    def test_tree_persists_between_calls(self):
        grid = grid_of(np.full((20, 20), FREE))
        rrt = RRTFrontierDetector((1.0, 1.0), 0.5, rng_seed=0)
        rrt.detect(grid, 20)
        size = len(rrt)
        rrt.detect(grid, 20)
        assert size > 1 and len(rrt) > size

    def test_root_must_be_free(self):
        grid = half_known()
        with pytest.raises(InvalidInputError):
            RRTFrontierDetector((0.85, 0.5), 0.5, rng_seed=0).detect(grid, 5)
        with pytest.raises(InvalidInputError):
            RRTFrontierDetector((0.0, 0.0), 0.0)


class TestMeanShift:

    def test_single_point(self):
        clusters = cluster_mean_shift([[1.0, 2.0]], 0.5)
        assert len(clusters) == 1
        np.testing.assert_allclose(clusters[0].centroid, [1.0, 2.0])
        assert clusters[0].count == 1

    def test_two_separated_clusters(self):
        rng = np.random.default_rng(0)
        bandwidth = 0.5
        a = rng.normal([0.0, 0.0], 0.05, size=(12, 2))
        b = rng.normal([10 * bandwidth, 0.0], 0.05, size=(7, 2))
        clusters = cluster_mean_shift(np.vstack([a, b]), bandwidth)
        assert sorted(c.count for c in clusters) == [7, 12]
        by_count = {c.count: c.centroid for c in clusters}
        np.testing.assert_allclose(by_count[12], a.mean(axis=0))
        np.testing.assert_allclose(by_count[7], b.mean(axis=0))

    def test_tight_points_form_one_cluster(self):
        pts = np.array([[0.0, 0.0], [0.1, 0.0], [0.0, 0.1], [0.1, 0.1], [0.05, 0.02]])
        clusters = cluster_mean_shift(pts, 1.0)
        assert len(clusters) == 1
        np.testing.assert_allclose(clusters[0].centroid, pts.mean(axis=0))

    def test_empty_and_bad_bandwidth(self):
        assert cluster_mean_shift(np.zeros((0, 2)), 1.0) == []
        with pytest.raises(InvalidInputError):
            cluster_mean_shift([[0.0, 0.0]], 0.0)

    def test_candidate_is_closest_member(self):
        pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.4, 0.0]])
        cluster = cluster_mean_shift(pts, 5.0)[0]
        detectors = [FrontierDetector.EDGE, FrontierDetector.EDGE, FrontierDetector.RRT]
        cand = candidate_from_cluster(cluster, pts, detectors, frontier_id=4, epoch=2)
        assert cand.position == (0.4, 0.0)
        assert cand.detector == FrontierDetector.RRT
        assert (cand.frontier_id, cand.cluster_size, cand.created_at) == (4, 3, 2)


class TestFilterFrontiers:

    def candidate(self, fid, x, y, created_at=0):
        return FrontierCandidate(fid, (x, y), 5, FrontierDetector.EDGE, created_at)

    def test_informative_reachable_candidate_is_kept(self):
        grid = half_known()
        cand = self.candidate(0, 0.45, 0.55)
        assert filter_frontiers([cand], grid, Reachable(), 3, 3) == [cand]

    def test_surrounded_by_known_is_pruned(self):
        grid = half_known(width=30, free_cols=25)
        assert filter_frontiers([self.candidate(0, 0.55, 0.55)], grid, Reachable(), 3, 3) == []

    def test_unreachable_is_pruned(self):
        grid = half_known()
        blocked = Reachable(Rect(5.0, 5.0, 6.0, 6.0))
        assert filter_frontiers([self.candidate(0, 0.45, 0.55)], grid, blocked, 3, 3) == []

    def test_stale_is_pruned(self):
        grid = half_known()
        cand = self.candidate(0, 0.45, 0.55, created_at=0)
        assert filter_frontiers([cand], grid, Reachable(), 3, max_age=3, epoch=3) == [cand]
        assert filter_frontiers([cand], grid, Reachable(), 3, max_age=3, epoch=4) == []

    def test_duplicates_keep_lowest_id(self):
        grid = half_known()
        first, second = self.candidate(1, 0.45, 0.55), self.candidate(2, 0.45, 0.65)
        assert filter_frontiers([second, first], grid, Reachable(), 3, 3) == [first]

    def test_unknown_counting(self):
        grid = half_known()
        assert unknown_in_disc(grid, 0.45, 0.55, 0) == 0
        assert unknown_in_disc(grid, 0.55, 0.55, 0) == 1
        assert near_unknown(grid, 0.45, 0.55)
        assert not near_unknown(grid, 0.15, 0.55)
        assert near_unknown(grid, -1.0, -1.0)
