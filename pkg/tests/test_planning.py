import functools
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import dijkstra, path_collision_free, step_counts
from skytest.geom import SeededRng
from skytest.mapping import OccupancyGrid
from skytest.planning import (
    GoalOccupied,
    NoPath,
    Path,
    PlannerConfig,
    StartOccupied,
    astar,
    plan,
    rrt_star,
    shortcut_smooth,
    straight_line,
)
from skytest.world import Box

A26 = PlannerConfig(kind="astar", connectivity=26)
A6 = PlannerConfig(kind="astar", connectivity=6)


def keys_of(grid, path):
    return [grid.key_of(w) for w in path.waypoints]


def random_grid(rng, n=20, res=1.0, p=0.2):
    g = OccupancyGrid(Box(0, 0, 0, n * res, n * res, n * res), res)
    for i in range(n):
        for j in range(n):
            for k in range(n):
                if rng.uniform() < p:
                    g.occupied.add((i, j, k))
    return g


def test_start_equals_goal():
    g = OccupancyGrid(Box(0, 0, 0, 2, 2, 2), 0.1)
    p = astar(g, (0.55, 0.55, 0.55), (0.56, 0.57, 0.58), A26)
    assert len(p) == 1 and p.cost == 0.0


def test_straight_line_ten_voxels():
    g = OccupancyGrid(Box(0, 0, 0, 2, 1, 1), 0.1)
    p = astar(g, (0.05, 0.05, 0.05), (1.05, 0.05, 0.05), A6)
    assert math.isclose(p.cost, 10 * 0.1, rel_tol=0, abs_tol=1e-12)
    assert step_counts(keys_of(g, p)) == (10, 0, 0)


def test_wall_with_gap_matches_dijkstra():
    g = OccupancyGrid(Box(0, 0, 0, 5, 5, 1), 1.0)
    for j in range(5):
        if j != 3:
            g.occupied.add((2, j, 0))
    for conn, cfg in ((6, A6), (26, A26)):
        p = astar(g, (0.5, 0.5, 0.5), (4.5, 0.5, 0.5), cfg)
        cost, counts = dijkstra(g, (0, 0, 0), (4, 0, 0), conn)
        assert step_counts(keys_of(g, p)) == counts
        assert math.isclose(p.cost, cost, rel_tol=1e-15)
        assert (2, 3, 0) in keys_of(g, p)


def test_astar_equals_dijkstra_on_50_random_grids():
    rng = SeededRng(50)
    solved = 0
    for _ in range(50):
        g = random_grid(rng)
        s, t = (0, 0, 0), (19, 19, 19)
        g.occupied.discard(s)
        g.occupied.discard(t)
        cost, counts = dijkstra(g, s, t)
        if counts is None:
            with pytest.raises(NoPath):
                astar(g, (0.5, 0.5, 0.5), (19.5, 19.5, 19.5), A26)
            continue
        p = astar(g, (0.5, 0.5, 0.5), (19.5, 19.5, 19.5), A26)
        # Equal move counts means equal cost in exact arithmetic.
        assert step_counts(keys_of(g, p)) == counts
        assert math.isclose(p.cost, cost, rel_tol=1e-14)
        solved += 1
    assert solved >= 45


def test_occupied_endpoints():
    g = OccupancyGrid(Box(0, 0, 0, 5, 5, 5), 0.5)
    g.insert_obstacle(Box(4, 4, 4, 5, 5, 5))
    with pytest.raises(GoalOccupied):
        astar(g, (0.2, 0.2, 0.2), (4.6, 4.6, 4.6), A26)
    with pytest.raises(StartOccupied):
        astar(g, (4.6, 4.6, 4.6), (0.2, 0.2, 0.2), A26)
    rng = SeededRng(1)
    with pytest.raises(GoalOccupied):
        rrt_star(g, (0.2, 0.2, 0.2), (4.6, 4.6, 4.6), PlannerConfig(), rng)
    assert rng.draws == 0


def test_rrt_star_empty_world_near_straight():
    g = OccupancyGrid(Box(0, 0, 0, 20, 20, 20), 0.5)
    start, goal = (1.0, 1.0, 1.0), (19.0, 19.0, 19.0)
    p = rrt_star(g, start, goal, PlannerConfig(max_iterations=4000), SeededRng(7))
    assert p.cost <= 1.05 * math.dist(start, goal)


def test_rrt_star_threads_the_gap():
    # Wall at x in [9.5, 10.5] with a 1 m gap y in [9.5, 10.5] (top to bottom).
    b = Box(0, 0, 0, 20, 20, 4)
    g = OccupancyGrid(b, 0.25)
    g.insert_obstacle(Box(9.5, 0, 0, 10.5, 9.5, 4))
    g.insert_obstacle(Box(9.5, 10.5, 0, 10.5, 20, 4))
    cfg = PlannerConfig(max_iterations=3000, step=1.0)
    for seed in (1, 2, 3):
        p = rrt_star(g, (2.0, 3.0, 2.0), (18.0, 16.0, 2.0), cfg, SeededRng(seed))
        assert path_collision_free(g, p.waypoints)
        for a, c in zip(p.waypoints, p.waypoints[1:]):
            if (a.x - 10.0) * (c.x - 10.0) < 0:
                t = (10.0 - a.x) / (c.x - a.x)
                y = a.y + t * (c.y - a.y)
                assert 9.5 <= y <= 10.5


def test_rrt_star_anytime():
    g = OccupancyGrid(Box(0, 0, 0, 20, 20, 6), 0.5)
    g.insert_obstacle(Box(8, 0, 0, 12, 14, 6))
    costs = []
    for n in (1000, 2000, 4000):
        costs.append(rrt_star(g, (2.0, 2.0, 3.0), (18.0, 2.0, 3.0), PlannerConfig(max_iterations=n), SeededRng(11)).cost)
    assert costs[0] >= costs[1] >= costs[2]


def test_smooth_two_waypoints_unchanged():
    g = OccupancyGrid(Box(0, 0, 0, 5, 5, 5), 0.2)
    p = straight_line((1, 1, 1), (4, 4, 4))
    assert shortcut_smooth(p, g, SeededRng(0)) == p


def test_smooth_right_angle_detour():
    g = OccupancyGrid(Box(0, 0, 0, 10, 10, 5), 0.2)
    p = Path.from_waypoints([(1, 1, 2), (1, 5, 2), (1, 9, 2), (5, 9, 2), (9, 9, 2)])
    s = shortcut_smooth(p, g, SeededRng(3))
    assert s.cost < p.cost
    assert s.cost <= math.dist((1, 1, 2), (9, 9, 2)) + 1e-9


@functools.lru_cache(maxsize=1)
def corridor_grid():
    # A 1.2 m wide dog-leg corridor carved out of a solid block.
    g = OccupancyGrid(Box(0, 0, 0, 12, 12, 3), 0.2)
    g.insert_obstacle(Box(0, 0, 0, 12, 12, 3))
    free = [Box(1, 1, 0, 2.2, 11, 3), Box(1, 9.8, 0, 11, 11, 3), Box(9.8, 1, 0, 11, 11, 3)]
    for k in list(g.occupied):
        c = g.center(k)
        if any(f.contains(c) for f in free):
            g.occupied.discard(k)
    return g


def test_smoothing_on_100_corridor_paths():
    g = corridor_grid()
    rng = SeededRng(100)
    free_keys = sorted(k for k in ((i, j, 5) for i in range(60) for j in range(60)) if k not in g.occupied and g.key_in_bounds(k))
    improved = 0
    for seed in range(100):
        a = free_keys[rng.randint(len(free_keys))]
        b = free_keys[rng.randint(len(free_keys))]
        p = astar(g, g.center(a), g.center(b), A6)
        assert path_collision_free(g, p.waypoints)
        s = shortcut_smooth(p, g, SeededRng(seed), passes=60)
        assert s.cost <= p.cost
        assert path_collision_free(g, s.waypoints)
        improved += s.cost < p.cost
    assert improved > 50


def test_plan_dispatch():
    g = OccupancyGrid(Box(0, 0, 0, 10, 10, 5), 0.5)
    s = plan(g, (1, 1, 2), (8, 8, 2), PlannerConfig(kind="straight"), SeededRng(0))
    assert len(s) == 2
    with pytest.raises(ValueError):
        PlannerConfig(kind="dfs")


@settings(max_examples=25)
@given(st.integers(0, 2**32), st.floats(0.0, 0.6))
def test_inflation_never_decreases_cost(seed, extra):
    rng = SeededRng(seed)
    b = Box(0, 0, 0, 6, 6, 1)
    shapes = []
    for _ in range(3):
        x, y = rng.uniform(1.5, 4.5), rng.uniform(1.5, 4.5)
        shapes.append(Box(x - 0.3, y - 0.3, 0, x + 0.3, y + 0.3, 1))
    lo = OccupancyGrid.from_shapes(b, 0.2, shapes, inflation=0.1)
    hi = OccupancyGrid.from_shapes(b, 0.2, shapes, inflation=0.1 + extra)
    start, goal = (0.3, 0.3, 0.5), (5.7, 5.7, 0.5)
    try:
        c_hi = astar(hi, start, goal, A26).cost
    except (NoPath, StartOccupied, GoalOccupied):
        return
    assert astar(lo, start, goal, A26).cost <= c_hi + 1e-12


@settings(max_examples=25)
@given(st.integers(0, 2**32))
def test_smoothing_properties_random_paths(seed):
    g = corridor_grid()
    rng = SeededRng(seed)
    a = g.center((5 + rng.randint(6), 5 + rng.randint(45), 5))
    b = g.center((49 + rng.randint(6), 5 + rng.randint(45), 5))
    p = astar(g, a, b, A26)
    s = shortcut_smooth(p, g, rng)
    assert s.cost <= p.cost
    if path_collision_free(g, p.waypoints):
        assert path_collision_free(g, s.waypoints)
