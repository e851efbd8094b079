import math
import statistics

from hypothesis import given
from hypothesis import strategies as st

from skytest.geom import Pose3, SeededRng, Vec3, quat_from_yaw
from skytest.sensors import (
    CameraIntrinsics,
    DetectorGates,
    GpsBias,
    GpsParams,
    MarkerSpec,
    camera_pose,
    detect,
    distort,
    gps_read,
    project_marker,
    range_read,
    undistort_pixel,
)
from skytest.world import Box, WorldModel

INTR = CameraIntrinsics()
MARKER = MarkerSpec(7)
WORLD = WorldModel(Box(-10, -10, 0, 10, 10, 12))


def test_nadir_projection_pinhole_arithmetic():
    proj = project_marker(camera_pose(Vec3(0, 0, 1.5), 0.0), INTR, MARKER)
    assert proj is not None
    us = sorted({round(u, 9) for u, _ in proj.corners})
    vs = sorted({round(v, 9) for _, v in proj.corners})
    assert us == [320 - 32, 320 + 32] and vs == [240 - 24, 240 + 24]
    cu = sum(u for u, _ in proj.corners) / 4
    cv = sum(v for _, v in proj.corners) / 4
    assert (cu, cv) == (320.0, 240.0)
    assert abs(proj.min_side_px - 48.0) < 1e-9


def test_marker_behind_camera_not_visible():
    # Camera below the marker plane, looking down: marker is behind it.
    pose = camera_pose(Vec3(0, 0, 1.5), 0.0)
    marker = MarkerSpec(3, 0.15, Pose3(Vec3(0, 0, 3.0), quat_from_yaw(0.0)))
    assert project_marker(pose, INTR, marker) is None


def test_detect_full_occlusion_always_none():
    proj = project_marker(camera_pose(Vec3(0, 0, 1.5), 0.0), INTR, MARKER)
    rng = SeededRng(1)
    assert all(detect(proj, 1.0, 1.0, rng) is None for _ in range(200))


def test_detect_high_altitude_too_small():
    proj = project_marker(camera_pose(Vec3(0, 0, 30.0), 0.0), INTR, MARKER)
    # Apparent side along u is fx * 0.15 / 30 = 3.2 px.
    if proj is not None:
        us = [u for u, _ in proj.corners]
        assert abs(max(us) - min(us) - 3.2) < 1e-9
    assert detect(proj, 1.0, 0.0, SeededRng(1)) is None


def test_detect_nominal_hover_is_noisy_and_certain():
    proj = project_marker(camera_pose(Vec3(0, 0, 1.5), 0.0), INTR, MARKER)
    rng = SeededRng(2)
    obs = [detect(proj, 1.0, 0.0, rng, intr=INTR) for _ in range(300)]
    assert all(o is not None for o in obs)
    assert obs[0].corners != proj.corners
    du = [o.corners[0][0] - proj.corners[0][0] for o in obs]
    assert abs(statistics.pstdev(du) - 0.5) < 0.1


def test_gps_noiseless_and_dropout():
    p = Vec3(1.0, 2.0, 3.0)
    fix, _ = gps_read(p, GpsParams(0.0, 0.0, 0.0), GpsBias(), True, SeededRng(0))
    assert fix.position == p
    fix, bias = gps_read(p, GpsParams(), GpsBias(), False, SeededRng(0))
    assert fix is None and bias == GpsBias()


def test_gps_drift_random_walk_envelope():
    # 100 samples at 1 Hz: bias std = rate * sqrt(100 * 1 s).
    rate = 0.1
    params = GpsParams(0.0, 0.0, rate)
    finals = []
    for trial in range(1000):
        rng = SeededRng(trial)
        b = GpsBias()
        for k in range(101):
            _, b = gps_read(Vec3(0, 0, 0), params, b, True, rng, float(k))
        finals.append(b.bias.x)
    std = statistics.pstdev(finals)
    expected = rate * math.sqrt(100.0)
    assert abs(std - expected) / expected < 0.2


def test_range_examples():
    assert range_read(Vec3(0, 0, 2.5), WORLD, SeededRng(0), 0.0) == 2.5
    world = WorldModel(WORLD.bounds, (Box(-1, -1, 0, 1, 1, 1.0),))
    assert range_read(Vec3(0, 0, 2.5), world, SeededRng(0), 0.0) == 1.5
    rng = SeededRng(4)
    inside = sum(abs(range_read(Vec3(0, 0, 2.5), WORLD, rng, 0.02) - 2.5) <= 0.1 for _ in range(10_000))
    assert inside / 10_000 >= 0.9999


def test_undistort_inverts_distort():
    intr = CameraIntrinsics(dist=(-0.1, 0.02, 0.001, -0.001, 0.0))
    for xn, yn in ((0.1, -0.2), (-0.3, 0.25), (0.0, 0.0)):
        xd, yd = distort(intr, xn, yn)
        u, v = intr.fx * xd + intr.cx, intr.fy * yd + intr.cy
        bu, bv = undistort_pixel(intr, u, v)
        assert abs(bu - (intr.fx * xn + intr.cx)) < 1e-7 and abs(bv - (intr.fy * yn + intr.cy)) < 1e-7


@given(st.floats(0, 1), st.floats(0, 1), st.integers(0, 2**32), st.floats(1.0, 6.0))
def test_lower_lighting_never_creates_detection(l_hi, frac, seed, z):
    l_lo = l_hi * frac
    proj = project_marker(camera_pose(Vec3(0, 0, z), 0.0), INTR, MARKER)
    hi = detect(proj, l_hi, 0.0, SeededRng(seed))
    lo = detect(proj, l_lo, 0.0, SeededRng(seed))
    assert not (hi is None and lo is not None)


@given(st.floats(-0.3, 0.3), st.floats(-0.3, 0.3), st.floats(1.0, 4.0), st.floats(-3, 3))
def test_nominal_detection_rate_is_one(x, y, z, yaw):
    proj = project_marker(camera_pose(Vec3(x, y, z), yaw), INTR, MARKER)
    gates = DetectorGates()
    assert proj is not None and proj.min_side_px >= gates.min_side_px
    rng = SeededRng(int(z * 1000))
    assert all(detect(proj, 1.0, 0.0, rng) is not None for _ in range(20))
