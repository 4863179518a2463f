import math

import numpy as np
import pytest
from scipy.sparse.csgraph import bellman_ford

from core.grid import FREE, OCCUPIED, UNKNOWN, OccupancyGrid
from planning.costmap import BASE_COST, INFLATED_PEAK_COST, inflate_costmap
from planning.dijkstra import DijkstraPlanner, PlannedPath, grid_graph, place_vertices, plan_dijkstra
from utils.errors import InvalidInputError

RES = 0.1


def free_grid(width=20, height=20):
    return OccupancyGrid(RES, 0.0, 0.0, np.full((height, width), FREE))


class TestInflateCostmap:

    def test_all_free_is_uniform(self):
        costs = inflate_costmap(free_grid(), 0.5, 0.2)
        np.testing.assert_array_equal(costs.cost, BASE_COST)
        assert not costs.goal_exempt.any()

    def test_zero_radius_only_blocks_obstacles(self):
        grid = free_grid()
        grid.cells[5, 5] = OCCUPIED
        grid.cells[0, :] = UNKNOWN
        costs = inflate_costmap(grid, 0.0)
        lethal = ~np.isfinite(costs.cost)
        expected = np.zeros_like(lethal)
        expected[5, 5] = True
        expected[0, :] = True
        np.testing.assert_array_equal(lethal, expected)
        np.testing.assert_array_equal(costs.cost[~lethal], BASE_COST)

    def test_inscribed_disc_cell_by_cell(self):
        grid = free_grid()
        grid.cells[10, 10] = OCCUPIED
        costs = inflate_costmap(grid, 0.5, 3 * RES)
        for row in range(grid.height):
            for col in range(grid.width):
                distance = math.hypot(col - 10, row - 10) * RES
                assert costs.is_lethal(col, row) == (distance <= 3 * RES)

    def test_inflation_decays_with_distance(self):
        grid = free_grid()
        grid.cells[10, 10] = OCCUPIED
        costs = inflate_costmap(grid, 0.5)
        ring = [costs.cost[10, 10 + d] for d in range(1, 7)]
        assert all(a > b for a, b in zip(ring[:5], ring[1:5]))
        assert ring[0] == pytest.approx(BASE_COST + (INFLATED_PEAK_COST - BASE_COST) * (1 - RES / 0.5))
        assert ring[-1] == BASE_COST

    def test_goal_exemption_needs_free_neighbour(self):
        grid = free_grid()
        grid.cells[:, 15:] = UNKNOWN
        costs = inflate_costmap(grid, 0.2)
        assert costs.goal_exempt[3, 15]
        assert not costs.goal_exempt[3, 17]

    def test_negative_radius_raises(self):
        with pytest.raises(InvalidInputError):
            inflate_costmap(free_grid(), -1.0)


class TestDijkstra:

    def test_straight_corridor_cost(self):
        grid = OccupancyGrid(RES, 0.0, 0.0, np.full((3, 30), FREE))
        costs = inflate_costmap(grid, 0.0)
        path = plan_dijkstra(costs, (0.05, 0.15), (2.85, 0.15))
        assert path.cost == pytest.approx(2.8, abs=RES)
        assert path.length == pytest.approx(2.8, abs=RES)
        assert path.waypoints[0] == pytest.approx((0.05, 0.15))
        assert path.goal == pytest.approx((2.85, 0.15))

    def test_goal_behind_complete_wall(self):
        grid = free_grid()
        grid.cells[:, 10] = OCCUPIED
        planner = DijkstraPlanner(inflate_costmap(grid, 0.0), (0.5, 0.5))
        assert planner.plan((1.5, 0.5)) is None
        assert not planner.reachable(1.5, 0.5)
        assert planner.cost_to(1.5, 0.5) == math.inf

    def test_start_equals_goal(self):
        path = plan_dijkstra(inflate_costmap(free_grid(), 0.0), (0.55, 0.55), (0.55, 0.55))
        assert len(path.waypoints) == 1
        assert path.cost == 0.0

    def test_lethal_start_raises(self):
        grid = free_grid()
        grid.cells[5, 5] = OCCUPIED
        with pytest.raises(InvalidInputError):
            DijkstraPlanner(inflate_costmap(grid, 0.0), (0.55, 0.55))

    def test_exempt_unknown_goal_is_reachable(self):
        grid = free_grid()
        grid.cells[:, 15:] = UNKNOWN
        planner = DijkstraPlanner(inflate_costmap(grid, 0.0), (0.55, 0.55))
        path = planner.plan((1.55, 0.55))
        assert path is not None
        assert path.goal == pytest.approx((1.55, 0.55))
        assert not planner.reachable(1.85, 0.55)

    def test_no_corner_cutting(self):
        grid = OccupancyGrid(RES, 0.0, 0.0, np.full((2, 2), FREE))
        grid.cells[0, 1] = OCCUPIED
        grid.cells[1, 0] = OCCUPIED
        graph = grid_graph(inflate_costmap(grid, 0.0))
        assert graph.nnz == 0

    def test_diagonal_step_cost(self):
        grid = OccupancyGrid(RES, 0.0, 0.0, np.full((2, 2), FREE))
        graph = grid_graph(inflate_costmap(grid, 0.0))
        assert graph[0, 3] == pytest.approx(math.sqrt(2) * RES)
        assert graph[0, 1] == pytest.approx(RES)

    def test_planner_answers_many_goals(self):
        planner = DijkstraPlanner(inflate_costmap(free_grid(), 0.0), (0.05, 0.05))
        assert planner.cost_to(1.05, 0.05) == pytest.approx(1.0)
        assert planner.cost_to(1.05, 1.05) == pytest.approx(math.sqrt(2))

    @pytest.mark.parametrize('size', [8, 17, 30])
    def test_costs_match_bellman_ford(self, size):
        rng = np.random.default_rng(size)
        for _ in range(4):
            cells = np.where(rng.random((size, size)) < 0.15, OCCUPIED, FREE)
            cells[0, 0] = FREE
            grid = OccupancyGrid(RES, 0.0, 0.0, cells)
            costs = inflate_costmap(grid, 0.3)
            planner = DijkstraPlanner(costs, (0.05, 0.05))
            expected = bellman_ford(grid_graph(costs), directed=True, indices=0)
            np.testing.assert_array_equal(np.isfinite(planner.dist), np.isfinite(expected))
            finite = np.isfinite(expected)
            np.testing.assert_allclose(planner.dist[finite], expected[finite], rtol=0, atol=1e-9)

            # a returned path costs what it claims, cell by cell
            target = int(np.flatnonzero(finite)[-1])
            path = planner.plan(costs.cell_to_world(target % size, target // size))
            walked = 0.0
            for (x0, y0), (x1, y1) in zip(path.waypoints, path.waypoints[1:]):
                col, row = costs.world_to_cell(x1, y1)
                walked += math.hypot(x1 - x0, y1 - y0) * costs.cost[row, col]
            assert walked == pytest.approx(expected[target], abs=1e-9)


class TestPlaceVertices:

    def test_five_meter_path(self):
        poses = place_vertices(PlannedPath([(0.0, 0.0), (5.0, 0.0)], 5.0), 1.0)
        assert len(poses) == 5
        assert (poses[-1].x, poses[-1].y) == (5.0, 0.0)
        assert [p.x for p in poses] == pytest.approx([1, 2, 3, 4, 5])

    def test_short_path_gives_one_pose_at_goal(self):
        poses = place_vertices(PlannedPath([(0.0, 0.0), (0.3, 0.0)], 0.3), 1.0)
        assert len(poses) == 1
        assert (poses[0].x, poses[0].y) == (0.3, 0.0)

    def test_headings_follow_straight_path(self):
        poses = place_vertices(PlannedPath([(0.0, 0.0), (1.0, 1.0), (3.0, 3.0)], 0.0), 0.5)
        for pose in poses:
            assert pose.theta == pytest.approx(math.pi / 4)

    def test_headings_follow_turns(self):
        poses = place_vertices(PlannedPath([(0.0, 0.0), (2.0, 0.0), (2.0, 2.0)], 0.0), 1.0)
        assert [p.theta for p in poses] == pytest.approx([0, 0, math.pi / 2, math.pi / 2])
        assert (poses[-1].x, poses[-1].y) == (2.0, 2.0)

    def test_degenerate_path(self):
        poses = place_vertices(PlannedPath([(1.0, 1.0)], 0.0), 1.0, default_heading=0.7)
        assert len(poses) == 1
        assert poses[0].theta == pytest.approx(0.7)
        with pytest.raises(InvalidInputError):
            place_vertices(PlannedPath([(1.0, 1.0)], 0.0), 0.0)
