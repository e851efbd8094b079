"""Geometric sensor models: downward camera + marker detector, GPS, rangefinder."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

from .geom import (
    Pose3,
    Quat,
    SeededRng,
    Vec3,
    pose_compose,
    pose_inverse,
    quat_from_yaw,
    rng_next_gaussian,
    transform_point,
)
from .world import WorldModel

DICTIONARY = "4X4_50"

# Body-to-camera rotation for a nadir camera: half turn about body X, so the
# optical axis points at the ground and image +X stays along body +X.
CAMERA_MOUNT = Quat(0.0, 1.0, 0.0, 0.0)


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float = 640.0
    fy: float = 480.0
    cx: float = 320.0
    cy: float = 240.0
    width: int = 640
    height: int = 480
    dist: tuple = (0.0, 0.0, 0.0, 0.0, 0.0)

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ValueError("principal point must lie inside the image")
        if len(self.dist) != 5:
            raise ValueError("distortion needs 5 coefficients (k1 k2 p1 p2 k3)")

    @property
    def has_distortion(self) -> bool:
        return any(c != 0.0 for c in self.dist)


@dataclass(frozen=True)
class MarkerSpec:
    id: int
    side_length: float = 0.15
    pose: Pose3 = field(default_factory=lambda: Pose3(Vec3(0.0, 0.0, 0.0), quat_from_yaw(0.0)))
    dictionary: str = DICTIONARY

    def __post_init__(self):
        if not 0 <= self.id < 50:
            raise ValueError("marker id must be in [0, 50)")
        if not self.side_length > 0:
            raise ValueError("marker side length must be positive")

    def corners_local(self) -> tuple:
        """Counter-clockwise from top-left, in the marker plane."""
        h = 0.5 * self.side_length
        return (Vec3(-h, h, 0.0), Vec3(-h, -h, 0.0), Vec3(h, -h, 0.0), Vec3(h, h, 0.0))


def marker_corners_local(side: float) -> tuple:
    h = 0.5 * side
    return ((-h, h), (-h, -h), (h, -h), (h, h))


class MarkerProjection(NamedTuple):
    """Noise-free forward model of one marker in one camera frame."""

    marker_id: int
    corners: tuple  # 4 x (u, v)
    view_angle: float  # radians between marker normal and ray to camera
    min_side_px: float


class MarkerObservation(NamedTuple):
    marker_id: int
    corners: tuple
    timestamp: float


@dataclass(frozen=True)
class DetectorGates:
    min_side_px: float = 12.0
    max_view_angle_deg: float = 65.0
    occlusion_cutoff: float = 0.5
    pixel_sigma: float = 0.5
    miss_scale: float = 0.9


def camera_pose(position: Vec3, yaw: float) -> Pose3:
    """World pose of the nadir camera on a level drone."""
    return Pose3(position, quat_from_yaw(yaw) * CAMERA_MOUNT)


def distort(intr: CameraIntrinsics, xn: float, yn: float) -> tuple[float, float]:
    k1, k2, p1, p2, k3 = intr.dist
    r2 = xn * xn + yn * yn
    radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3))
    xd = xn * radial + 2.0 * p1 * xn * yn + p2 * (r2 + 2.0 * xn * xn)
    yd = yn * radial + p1 * (r2 + 2.0 * yn * yn) + 2.0 * p2 * xn * yn
    return xd, yd


def undistort_pixel(intr: CameraIntrinsics, u: float, v: float) -> tuple[float, float]:
    """Pixel to ideal (undistorted) pixel by fixed-point iteration."""
    xd = (u - intr.cx) / intr.fx
    yd = (v - intr.cy) / intr.fy
    if not intr.has_distortion:
        return u, v
    k1, k2, p1, p2, k3 = intr.dist
    x, y = xd, yd
    for _ in range(30):
        r2 = x * x + y * y
        radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3))
        dx = 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x)
        dy = p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y
        x = (xd - dx) / radial
        y = (yd - dy) / radial
    return intr.fx * x + intr.cx, intr.fy * y + intr.cy


def project_point(intr: CameraIntrinsics, pc) -> tuple[float, float]:
    xn = pc[0] / pc[2]
    yn = pc[1] / pc[2]
    if intr.has_distortion:
        xn, yn = distort(intr, xn, yn)
    return intr.fx * xn + intr.cx, intr.fy * yn + intr.cy


def project_marker(cam_pose: Pose3, intr: CameraIntrinsics, marker: MarkerSpec) -> Optional[MarkerProjection]:
    """Corner pixels of ``marker`` or None when not fully in view."""
    cam_from_marker = pose_compose(pose_inverse(cam_pose), marker.pose)
    pix = []
    for c in marker.corners_local():
        pc = transform_point(cam_from_marker, c)
        if pc[2] <= 0.0:
            return None
        u, v = project_point(intr, pc)
        if not (0.0 <= u <= intr.width and 0.0 <= v <= intr.height):
            return None
        pix.append((u, v))
    # View angle: marker normal against the ray from marker center to camera.
    normal = marker.pose.orientation.rotate((0.0, 0.0, 1.0))
    ray = cam_pose.position - marker.pose.position
    rn = ray.norm()
    if rn == 0.0:
        return None
    cosang = max(-1.0, min(1.0, normal.dot(ray) / rn))
    side = min(math.dist(pix[i], pix[(i + 1) % 4]) for i in range(4))
    return MarkerProjection(marker.id, tuple(pix), math.acos(cosang), side)


def geometric_gates_pass(proj: Optional[MarkerProjection], occlusion: float, gates: DetectorGates) -> bool:
    """True when detection is geometrically possible (lighting aside)."""
    return (
        proj is not None
        and proj.min_side_px >= gates.min_side_px
        and proj.view_angle <= math.radians(gates.max_view_angle_deg)
        and occlusion < gates.occlusion_cutoff
    )


def miss_probability(lighting_factor: float, gates: DetectorGates = DetectorGates()) -> float:
    return min(max(1.0 - lighting_factor, 0.0), 1.0) * gates.miss_scale


def detect(
    proj: Optional[MarkerProjection],
    lighting_factor: float,
    occlusion_fraction: float,
    rng: SeededRng,
    timestamp: float = 0.0,
    gates: DetectorGates = DetectorGates(),
    intr: Optional[CameraIntrinsics] = None,
) -> Optional[MarkerObservation]:
    """Gate a forward projection into a noisy detection.

    One uniform is drawn on every call; eight normals follow only on success.
    """
    u = rng.uniform()
    if proj is None:
        return None
    if not geometric_gates_pass(proj, occlusion_fraction, gates):
        return None
    if u < miss_probability(lighting_factor, gates):
        return None
    w = intr.width if intr is not None else float("inf")
    h = intr.height if intr is not None else float("inf")
    s = gates.pixel_sigma
    noisy = []
    for (cu, cv) in proj.corners:
        nu = min(max(cu + rng_next_gaussian(rng, 0.0, s), 0.0), w)
        nv = min(max(cv + rng_next_gaussian(rng, 0.0, s), 0.0), h)
        noisy.append((nu, nv))
    return MarkerObservation(proj.marker_id, tuple(noisy), timestamp)


@dataclass(frozen=True)
class GpsParams:
    sigma_xy: float = 0.1
    sigma_z: float = 0.15
    drift_rate: float = 0.0

    def __post_init__(self):
        if min(self.sigma_xy, self.sigma_z, self.drift_rate) < 0:
            raise ValueError("GPS parameters must be nonnegative")


class GpsBias(NamedTuple):
    bias: Vec3 = Vec3(0.0, 0.0, 0.0)
    last_time: Optional[float] = None


class GpsFix(NamedTuple):
    position: Vec3
    timestamp: float


def gps_read(
    true_pos: Vec3,
    params: GpsParams,
    bias_state: GpsBias,
    available: bool,
    rng: SeededRng,
    now: float = 0.0,
) -> tuple[Optional[GpsFix], GpsBias]:
    """Sample the receiver. The bias random walk only advances on a sample."""
    if not available:
        return None, bias_state
    dt = 0.0 if bias_state.last_time is None else max(now - bias_state.last_time, 0.0)
    k = params.drift_rate * math.sqrt(dt)
    b = bias_state.bias
    b = Vec3(
        b.x + k * rng_next_gaussian(rng, 0.0, 1.0),
        b.y + k * rng_next_gaussian(rng, 0.0, 1.0),
        b.z + k * rng_next_gaussian(rng, 0.0, 1.0),
    )
    fix = Vec3(
        true_pos.x + b.x + rng_next_gaussian(rng, 0.0, params.sigma_xy),
        true_pos.y + b.y + rng_next_gaussian(rng, 0.0, params.sigma_xy),
        true_pos.z + b.z + rng_next_gaussian(rng, 0.0, params.sigma_z),
    )
    return GpsFix(fix, now), GpsBias(b, now)


def surface_height_below(p, world: WorldModel) -> float:
    top = 0.0
    for shape in world.obstacles:
        h = shape.surface_below(p)
        if h is not None and h > top:
            top = h
    return top


def range_read(true_pos, world: WorldModel, rng: SeededRng, sigma: float = 0.01) -> float:
    """Downward range to the closest surface under the drone, plus noise."""
    return rng_next_gaussian(rng, true_pos[2] - surface_height_below(true_pos, world), sigma)
