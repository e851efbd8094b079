"""Fixed-step point-mass flight model.

The vehicle is abstracted as its autopilot's velocity loop: ground velocity
relaxes toward the commanded velocity with time constant ``tau``. Wind enters
as advection of its change (the loop rejects a steady wind at its own
bandwidth) plus a small steady leak, ``wind_leak * w``, that the loop never
rejects. This gives the drift-on-gust behaviour seen in outdoor landings while
keeping the model analytically checkable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple

from .geom import ZERO, SeededRng, Vec3, rng_next_gaussian, wrap_angle
from .world import WorldModel

PHYSICS_DT = 0.01
PHYSICS_HZ = 100
CONTROL_HZ = 20
CAMERA_HZ = 30
GPS_HZ = 5
RANGE_HZ = 20

TOUCHDOWN_SPEED = 0.5


class VelocityCommand(NamedTuple):
    vx: float = 0.0
    vy: float = 0.0
    vz: float = 0.0
    yaw_rate: float = 0.0
    issue_time: float = 0.0


HOVER = VelocityCommand()


class RigidState(NamedTuple):
    position: Vec3
    velocity: Vec3
    yaw: float
    tick: int = 0

    @property
    def time(self) -> float:
        return self.tick * PHYSICS_DT


@dataclass(frozen=True)
class DroneParams:
    tau: float = 0.4
    v_max: float = 2.0
    vz_max: float = 1.5
    yaw_rate_max: float = 1.0
    body_radius: float = 0.3
    wind_leak: float = 0.05
    # Fraction of each gust change that carries the airframe before the
    # velocity loop reacts (horizontal, vertical).
    gust_coupling: float = 0.2
    gust_coupling_z: float = 0.1

    def __post_init__(self):
        for name in ("tau", "v_max", "vz_max", "yaw_rate_max", "body_radius"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("wind_leak", "gust_coupling", "gust_coupling_z"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")


@dataclass(frozen=True)
class WindState:
    mean: Vec3 = ZERO
    gust: Vec3 = ZERO
    gust_sigma: float = 0.0
    gust_tau: float = 2.0

    def __post_init__(self):
        if not self.gust_tau > 0:
            raise ValueError("gust_tau must be positive")
        if self.gust_sigma < 0:
            raise ValueError("gust_sigma must be nonnegative")

    @property
    def velocity(self) -> Vec3:
        return self.mean + self.gust


CALM = WindState()


def clamp_command(cmd: VelocityCommand, params: DroneParams) -> VelocityCommand:
    vx, vy = cmd.vx, cmd.vy
    h = math.hypot(vx, vy)
    if h > params.v_max:
        s = params.v_max / h
        vx, vy = vx * s, vy * s
    vz = min(max(cmd.vz, -params.vz_max), params.vz_max)
    yr = min(max(cmd.yaw_rate, -params.yaw_rate_max), params.yaw_rate_max)
    return VelocityCommand(vx, vy, vz, yr, cmd.issue_time)


def wind_step(wind: WindState, rng: SeededRng, dt: float) -> WindState:
    """Ornstein-Uhlenbeck gust update. Always draws three normals."""
    a = math.exp(-dt / wind.gust_tau)
    b = wind.gust_sigma * math.sqrt(1.0 - a * a)
    g = wind.gust
    gust = Vec3(
        g.x * a + b * rng_next_gaussian(rng, 0.0, 1.0),
        g.y * a + b * rng_next_gaussian(rng, 0.0, 1.0),
        g.z * a + b * rng_next_gaussian(rng, 0.0, 1.0),
    )
    return replace(wind, gust=gust)


def step(
    state: RigidState,
    cmd: VelocityCommand,
    params: DroneParams,
    wind: WindState,
    rng: SeededRng,
    dt: float = PHYSICS_DT,
) -> tuple[RigidState, WindState]:
    if dt != PHYSICS_DT:
        raise ValueError("physics step is fixed at %r s" % PHYSICS_DT)
    c = clamp_command(cmd, params)
    w_old = wind.velocity
    wind2 = wind_step(wind, rng, dt)
    w_new = wind2.velocity
    k = -math.expm1(-dt / params.tau)
    leak = params.wind_leak
    gc, gz = params.gust_coupling, params.gust_coupling_z
    v = state.velocity
    vel = Vec3(
        v.x + k * (c.vx + leak * w_new.x - v.x) + gc * (w_new.x - w_old.x),
        v.y + k * (c.vy + leak * w_new.y - v.y) + gc * (w_new.y - w_old.y),
        v.z + k * (c.vz + leak * w_new.z - v.z) + gz * (w_new.z - w_old.z),
    )
    p = state.position
    pos = Vec3(p.x + dt * vel.x, p.y + dt * vel.y, p.z + dt * vel.z)
    yaw = state.yaw if c.yaw_rate == 0.0 else wrap_angle(state.yaw + dt * c.yaw_rate)
    return RigidState(pos, vel, yaw, state.tick + 1), wind2


class CollisionReport(NamedTuple):
    kind: str  # "none" | "obstacle" | "touchdown" | "crash"
    obstacle_index: int = -1
    speed: float = 0.0

    @property
    def hit(self) -> bool:
        return self.kind != "none"


NO_COLLISION = CollisionReport("none")


def check_collision(
    state: RigidState,
    world: WorldModel,
    body_radius: float = DroneParams.body_radius,
    touchdown_speed: float = TOUCHDOWN_SPEED,
) -> CollisionReport:
    p = state.position
    for i, shape in enumerate(world.obstacles):
        if shape.distance(p) <= body_radius:
            return CollisionReport("obstacle", i, state.velocity.norm())
    if p.z <= 0.0:
        speed = state.velocity.norm()
        return CollisionReport("touchdown" if speed < touchdown_speed else "crash", -1, speed)
    return NO_COLLISION
