import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import chord_through_voxel, march, voxel_brute_force
from skytest.geom import SeededRng, Vec3
from skytest.mapping import OccupancyGrid, OutOfBounds, insert_obstacle, memory_report, raycast
from skytest.world import Box, Cylinder

BOUNDS = Box(-2, -2, -2, 2, 2, 2)


def random_shape(rng, room=1.5):
    cx, cy = rng.uniform(-room, room) * 0.6, rng.uniform(-room, room) * 0.6
    if rng.uniform() < 0.5:
        return Cylinder(cx, cy, rng.uniform(0.1, 0.6), rng.uniform(0.2, 1.8))
    hx, hy, hz = rng.uniform(0.05, 0.6), rng.uniform(0.05, 0.6), rng.uniform(0.1, 1.8)
    z0 = rng.uniform(-1.8, 0.0)
    return Box(cx - hx, cy - hy, z0, cx + hx, cy + hy, z0 + hz)


def unit(rng):
    while True:
        v = Vec3(rng.gaussian(), rng.gaussian(), rng.gaussian())
        if v.norm() > 1e-3:
            return v.normalized()


def test_empty_grid_is_free_and_misses():
    g = OccupancyGrid(BOUNDS, 0.1)
    assert not g.occupied_at((0.3, -1.2, 0.7))
    assert raycast(g, (0, 0, 0), (1, 0, 0), 10.0) is None
    assert memory_report(g)["voxels"] == 0


def test_unit_box_27_voxels():
    g = OccupancyGrid(BOUNDS, 0.1)
    insert_obstacle(g, Box(0, 0, 0, 0.3, 0.3, 0.3))
    assert len(g.occupied) == 27
    assert memory_report(g)["voxels"] == 27
    assert memory_report(g)["bytes_estimate"] == 27 * memory_report(g)["bytes_per_voxel"]


def test_cylinder_matches_brute_force():
    g = OccupancyGrid(BOUNDS, 0.1)
    cyl = Cylinder(0.0, 0.0, 0.25, 1.0)
    insert_obstacle(g, cyl)
    assert g.occupied == voxel_brute_force(g, cyl)


def test_voxelization_matches_brute_force_on_20_shapes():
    rng = SeededRng(20)
    for _ in range(20):
        g = OccupancyGrid(BOUNDS, 0.1)
        s = random_shape(rng)
        g.insert_obstacle(s)
        assert g.occupied == voxel_brute_force(g, s)


def test_halving_resolution_multiplies_count_by_eight():
    box = Box(-1.23, -0.71, -0.4, 0.88, 1.05, 1.37)
    coarse = OccupancyGrid(BOUNDS, 0.1).insert_obstacle(box)
    fine = OccupancyGrid(BOUNDS, 0.05).insert_obstacle(box)
    ratio = len(fine.occupied) / len(coarse.occupied)
    assert abs(ratio - 8.0) <= 0.15 * 8.0


def test_single_voxel_hit_at_entry_face():
    g = OccupancyGrid(Box(-1, -1, -1, 2, 1, 1), 0.1)
    g.occupied.add((10, 0, 0))
    hit = raycast(g, (0.0, 0.0, 0.0), (1.0, 0.0, 0.0), 5.0)
    assert hit is not None and hit.voxel == (10, 0, 0)
    assert abs(hit.distance - 1.0) <= 0.05


def test_ray_starting_inside_occupied_hits_at_zero():
    g = OccupancyGrid(BOUNDS, 0.1).insert_obstacle(Box(0, 0, 0, 0.3, 0.3, 0.3))
    hit = raycast(g, (0.15, 0.15, 0.15), (0.0, 0.0, 1.0))
    assert hit.distance == 0.0


def test_raycast_agrees_with_marching_on_1000_rays():
    rng = SeededRng(1000)
    res = 0.2
    g = OccupancyGrid(BOUNDS, res)
    for _ in range(6):
        g.insert_obstacle(random_shape(rng))
    diag = res * math.sqrt(3.0)
    step = 0.01 * res
    hits = grazes = 0
    for _ in range(1000):
        o = (rng.uniform(-1.9, 1.9), rng.uniform(-1.9, 1.9), rng.uniform(-1.9, 1.9))
        d = unit(rng)
        a = g.raycast(o, d, 3.0)
        b = march(g, o, d, 3.0, step)
        if a is not None and (b is None or b[0] != a.voxel):
            # The marcher can only step over a voxel the ray barely clips.
            assert chord_through_voxel(g, a.voxel, o, d) < step
            grazes += 1
            continue
        assert (a is None) == (b is None)
        if a is not None:
            hits += 1
            assert abs(a.distance - b[1]) <= diag
    assert grazes <= 5
    assert hits > 100  # the scene is not trivially empty along the rays


def test_out_of_bounds_insert():
    g = OccupancyGrid(BOUNDS, 0.1)
    with pytest.raises(OutOfBounds):
        g.insert_obstacle(Box(1.5, 1.5, 0, 2.5, 2.5, 1))
    g.insert_obstacle(Box(1.5, 1.5, 0, 2.5, 2.5, 1), clip=True)
    assert all(g.key_in_bounds(k) for k in g.occupied)


@given(st.integers(0, 2**32))
def test_insert_is_idempotent(seed):
    s = random_shape(SeededRng(seed))
    g = OccupancyGrid(BOUNDS, 0.2).insert_obstacle(s)
    once = set(g.occupied)
    g.insert_obstacle(s)
    assert g.occupied == once


@given(st.integers(0, 2**32))
def test_occupancy_independent_of_insertion_order(seed):
    rng = SeededRng(seed)
    shapes = [random_shape(rng) for _ in range(4)]
    a = OccupancyGrid(BOUNDS, 0.2)
    b = OccupancyGrid(BOUNDS, 0.2)
    for s in shapes:
        a.insert_obstacle(s)
    for s in reversed(shapes):
        b.insert_obstacle(s)
    assert a.occupied == b.occupied
