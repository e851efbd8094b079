"""Geometric value types, quaternion algebra and the seeded RNG.

Conventions: world frame is X-east, Y-north, Z-up. Camera frame has +Z along
the optical axis and +X to the right in the image. Quaternions are stored
scalar-first ``(w, x, y, z)`` and represent active rotations.
"""

from __future__ import annotations

import math
from typing import NamedTuple

_MASK64 = 0xFFFFFFFFFFFFFFFF
_TWO_PI = 2.0 * math.pi


class Vec3(NamedTuple):
    x: float
    y: float
    z: float

    def __add__(self, o):  # type: ignore[override]
        return Vec3(self.x + o[0], self.y + o[1], self.z + o[2])

    def __sub__(self, o):
        return Vec3(self.x - o[0], self.y - o[1], self.z - o[2])

    def __neg__(self):
        return Vec3(-self.x, -self.y, -self.z)

    def scale(self, s: float) -> "Vec3":
        return Vec3(self.x * s, self.y * s, self.z * s)

    def dot(self, o) -> float:
        return self.x * o[0] + self.y * o[1] + self.z * o[2]

    def cross(self, o) -> "Vec3":
        return Vec3(
            self.y * o[2] - self.z * o[1],
            self.z * o[0] - self.x * o[2],
            self.x * o[1] - self.y * o[0],
        )

    def norm(self) -> float:
        return math.sqrt(self.x * self.x + self.y * self.y + self.z * self.z)

    def norm_xy(self) -> float:
        return math.hypot(self.x, self.y)

    def normalized(self) -> "Vec3":
        n = self.norm()
        if n == 0.0:
            raise ValueError("cannot normalize zero vector")
        return Vec3(self.x / n, self.y / n, self.z / n)

    def is_finite(self) -> bool:
        return math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.z)


ZERO = Vec3(0.0, 0.0, 0.0)


class Quat(NamedTuple):
    """Unit quaternion. Build through the helpers below, which normalize."""

    w: float
    x: float
    y: float
    z: float

    def norm(self) -> float:
        return math.sqrt(self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z)

    def normalized(self) -> "Quat":
        n = self.norm()
        if n == 0.0 or not math.isfinite(n):
            raise ValueError("cannot normalize quaternion %r" % (self,))
        return Quat(self.w / n, self.x / n, self.y / n, self.z / n)

    def conj(self) -> "Quat":
        return Quat(self.w, -self.x, -self.y, -self.z)

    def __mul__(self, o):  # type: ignore[override]
        aw, ax, ay, az = self
        bw, bx, by, bz = o
        return Quat(
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ).normalized()

    def rotate(self, v) -> Vec3:
        # v' = v + 2w(q x v) + 2 q x (q x v)
        w, qx, qy, qz = self
        vx, vy, vz = v
        tx = 2.0 * (qy * vz - qz * vy)
        ty = 2.0 * (qz * vx - qx * vz)
        tz = 2.0 * (qx * vy - qy * vx)
        return Vec3(
            vx + w * tx + (qy * tz - qz * ty),
            vy + w * ty + (qz * tx - qx * tz),
            vz + w * tz + (qx * ty - qy * tx),
        )

    def matrix(self) -> tuple:
        w, x, y, z = self
        return (
            (1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)),
            (2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)),
            (2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)),
        )

    def yaw(self) -> float:
        w, x, y, z = self
        return wrap_angle(math.atan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z)))


IDENTITY_QUAT = Quat(1.0, 0.0, 0.0, 0.0)


def wrap_angle(a: float) -> float:
    """Map an angle to (-pi, pi]."""
    a = math.fmod(a, _TWO_PI)
    if a <= -math.pi:
        a += _TWO_PI
    elif a > math.pi:
        a -= _TWO_PI
    return a


def quat_from_yaw(yaw: float) -> Quat:
    h = 0.5 * yaw
    return Quat(math.cos(h), 0.0, 0.0, math.sin(h))


def quat_from_axis_angle(axis, angle: float) -> Quat:
    ax = Vec3(*axis).normalized()
    h = 0.5 * angle
    s = math.sin(h)
    return Quat(math.cos(h), ax.x * s, ax.y * s, ax.z * s).normalized()


def quat_from_rotvec(rv) -> Quat:
    rx, ry, rz = rv
    theta = math.sqrt(rx * rx + ry * ry + rz * rz)
    if theta < 1e-12:
        return Quat(1.0, 0.5 * rx, 0.5 * ry, 0.5 * rz).normalized()
    s = math.sin(0.5 * theta) / theta
    return Quat(math.cos(0.5 * theta), rx * s, ry * s, rz * s).normalized()


def quat_to_rotvec(q: Quat) -> Vec3:
    w, x, y, z = q
    if w < 0.0:
        w, x, y, z = -w, -x, -y, -z
    s = math.sqrt(x * x + y * y + z * z)
    if s < 1e-12:
        return Vec3(2.0 * x, 2.0 * y, 2.0 * z)
    theta = 2.0 * math.atan2(s, w)
    k = theta / s
    return Vec3(x * k, y * k, z * k)


def quat_from_matrix(m) -> Quat:
    (r00, r01, r02), (r10, r11, r12), (r20, r21, r22) = m
    tr = r00 + r11 + r22
    if tr > 0.0:
        s = 2.0 * math.sqrt(tr + 1.0)
        q = Quat(0.25 * s, (r21 - r12) / s, (r02 - r20) / s, (r10 - r01) / s)
    elif r00 > r11 and r00 > r22:
        s = 2.0 * math.sqrt(1.0 + r00 - r11 - r22)
        q = Quat((r21 - r12) / s, 0.25 * s, (r01 + r10) / s, (r02 + r20) / s)
    elif r11 > r22:
        s = 2.0 * math.sqrt(1.0 + r11 - r00 - r22)
        q = Quat((r02 - r20) / s, (r01 + r10) / s, 0.25 * s, (r12 + r21) / s)
    else:
        s = 2.0 * math.sqrt(1.0 + r22 - r00 - r11)
        q = Quat((r10 - r01) / s, (r02 + r20) / s, (r12 + r21) / s, 0.25 * s)
    return q.normalized()


def quat_angle_between(a: Quat, b: Quat) -> float:
    # atan2 form stays accurate for tiny angles, where acos of the dot loses digits.
    r = a.conj() * b
    return 2.0 * math.atan2(math.sqrt(r.x * r.x + r.y * r.y + r.z * r.z), abs(r.w))


def slerp(a: Quat, b: Quat, t: float) -> Quat:
    """Shortest-arc spherical interpolation from ``a`` (t=0) to ``b`` (t=1)."""
    d = a.w * b.w + a.x * b.x + a.y * b.y + a.z * b.z
    if d < 0.0:
        b = Quat(-b.w, -b.x, -b.y, -b.z)
        d = -d
    if d > 0.9995:
        return Quat(
            a.w + t * (b.w - a.w),
            a.x + t * (b.x - a.x),
            a.y + t * (b.y - a.y),
            a.z + t * (b.z - a.z),
        ).normalized()
    theta = math.acos(d)
    s = math.sin(theta)
    ka = math.sin((1.0 - t) * theta) / s
    kb = math.sin(t * theta) / s
    return Quat(
        ka * a.w + kb * b.w, ka * a.x + kb * b.x, ka * a.y + kb * b.y, ka * a.z + kb * b.z
    ).normalized()


class Pose3(NamedTuple):
    position: Vec3
    orientation: Quat


IDENTITY_POSE = Pose3(ZERO, IDENTITY_QUAT)


def transform_point(pose: Pose3, p_local) -> Vec3:
    return pose.orientation.rotate(p_local) + pose.position


def pose_inverse(pose: Pose3) -> Pose3:
    qi = pose.orientation.conj()
    return Pose3(-qi.rotate(pose.position), qi)


def pose_compose(a: Pose3, b: Pose3) -> Pose3:
    """Return ``a * b``: a point in b's frame mapped through b then a."""
    return Pose3(transform_point(a, b.position), a.orientation * b.orientation)


def fnv1a64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for byte in data:
        h ^= byte
        h = (h * 0x100000001B3) & _MASK64
    return h


class SeededRng:
    """SplitMix64 generator.

    Integer output is bit-reproducible everywhere. Gaussian draws use
    Box-Muller and always consume two uniforms, so the number of raw draws
    per call never depends on the values drawn.
    """

    __slots__ = ("seed", "state", "draws")

    def __init__(self, seed: int):
        if not 0 <= seed <= _MASK64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        self.seed = seed
        self.state = seed
        self.draws = 0

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        self.draws += 1
        return z ^ (z >> 31)

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        u = (self.next_u64() >> 11) * (1.0 / 9007199254740992.0)
        return lo + (hi - lo) * u

    def randint(self, n: int) -> int:
        """Uniform integer in [0, n)."""
        if n <= 0:
            raise ValueError("n must be positive")
        return self.next_u64() % n

    def gaussian(self, mean: float = 0.0, sigma: float = 1.0) -> float:
        return rng_next_gaussian(self, mean, sigma)

    def derive(self, name: str) -> "SeededRng":
        """Independent stream keyed by ``name``; does not advance ``self``."""
        mixed = SeededRng(self.seed ^ fnv1a64(name.encode("utf-8")))
        return SeededRng(mixed.next_u64())

    def getstate(self) -> tuple:
        return (self.seed, self.state, self.draws)

    def setstate(self, st: tuple) -> None:
        self.seed, self.state, self.draws = st


def rng_next_gaussian(rng: SeededRng, mean: float, sigma: float) -> float:
    if sigma < 0.0:
        raise ValueError("sigma must be nonnegative")
    u1 = 1.0 - rng.uniform()  # (0, 1]
    u2 = rng.uniform()
    z = math.sqrt(-2.0 * math.log(u1)) * math.cos(_TWO_PI * u2)
    if sigma == 0.0:
        return mean
    return mean + sigma * z
