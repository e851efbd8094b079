"""Landing mission state machine and its velocity controllers.

Phases run Takeoff -> Travel -> Search -> Align -> Descend -> Touchdown, with
Recovery (climb, then search) on marker loss and Abort as the failsafe exit.
``mission_step`` is called at the control rate and returns the next phase plus
a velocity setpoint. Per-run bookkeeping (timers, search pattern, waypoint list)
lives in a ``MissionContext`` that the step mutates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional

from .dynamics import VelocityCommand
from .geom import Vec3
from .perception import TrackStatus
from .world import Box

__all__ = [
    "Phase",
    "ControllerGains",
    "NavEstimate",
    "MarkerView",
    "MissionContext",
    "VelocityCommand",
    "mission_step",
    "geofence_check",
    "gains_preset",
    "expanding_square",
    "IllegalTransition",
]

_EPS_T = 1e-9


class Phase(NamedTuple):
    kind: str
    waypoint: int = -1
    reason: str = ""

    @property
    def terminal(self) -> bool:
        return self.kind in ("Touchdown", "Abort")

    def label(self) -> str:
        if self.kind == "Travel":
            return f"Travel({self.waypoint})"
        if self.kind == "Abort":
            return f"Abort({self.reason})"
        return self.kind


TAKEOFF = Phase("Takeoff")
SEARCH = Phase("Search")
ALIGN = Phase("Align")
DESCEND = Phase("Descend")
TOUCHDOWN = Phase("Touchdown")
RECOVERY = Phase("Recovery")


def travel(i: int) -> Phase:
    return Phase("Travel", i)


def abort(reason: str) -> Phase:
    return Phase("Abort", -1, reason)


# Allowed successor kinds. Abort is reachable from every non-terminal phase.
TRANSITIONS = {
    "Takeoff": {"Takeoff", "Travel", "Search"},
    "Travel": {"Travel", "Search"},
    "Search": {"Search", "Align"},
    "Align": {"Align", "Descend", "Recovery"},
    "Descend": {"Descend", "Touchdown", "Recovery"},
    "Recovery": {"Recovery", "Align"},
    "Touchdown": {"Touchdown"},
    "Abort": {"Abort"},
}


class IllegalTransition(RuntimeError):
    pass


def _check(old: Phase, new: Phase) -> Phase:
    if new.kind == "Abort" and not old.terminal:
        return new
    if new.kind not in TRANSITIONS[old.kind]:
        raise IllegalTransition(f"{old.label()} -> {new.label()}")
    return new


@dataclass(frozen=True)
class ControllerGains:
    kp_xy: float = 0.8
    kp_z: float = 1.0
    descent_speed: float = 0.35
    align_tolerance: float = 0.1
    takeoff_altitude: float = 4.0
    preset: str = "default"
    cruise_speed: float = 2.0
    search_speed: float = 1.0

    def __post_init__(self):
        if min(self.kp_xy, self.kp_z, self.descent_speed, self.cruise_speed, self.search_speed) <= 0:
            raise ValueError("gains and speeds must be positive")
        if self.align_tolerance <= 0 or self.takeoff_altitude <= 0:
            raise ValueError("align_tolerance and takeoff_altitude must be positive")


AGGRESSIVE_KP_SCALE = 2.0
AGGRESSIVE_DESCENT_SCALE = 0.75


def gains_preset(preset: str = "default", **overrides) -> ControllerGains:
    """Default gains, or the aggressive set (kp_xy x2, descent speed x0.75)."""
    g = ControllerGains(**overrides)
    if preset == "default":
        return g
    if preset == "aggressive":
        return replace(
            g,
            kp_xy=g.kp_xy * AGGRESSIVE_KP_SCALE,
            descent_speed=g.descent_speed * AGGRESSIVE_DESCENT_SCALE,
            preset="aggressive",
        )
    raise ValueError(f"unknown gains preset {preset!r}")


class NavEstimate(NamedTuple):
    """What the flight code believes about itself."""

    position: Vec3
    yaw: float
    range: float  # latest downward rangefinder reading [m]


class MarkerView(NamedTuple):
    """Filtered marker status and the drone-to-marker vector (world-aligned)."""

    status: TrackStatus
    offset: Optional[Vec3] = None


NO_MARKER = MarkerView(TrackStatus.LOST, None)


def geofence_check(pos, bounds: Box) -> bool:
    """True when ``pos`` is inside the closed bounds (ok); False is a breach."""
    return bounds.contains(pos)


def expanding_square(center: Vec3, leg: float = 0.5, legs: int = 48) -> list:
    """Vertices of an expanding-square sweep: legs of leg, leg, 2leg, 2leg, ..."""
    dirs = ((1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0))
    pts = []
    x, y = center.x, center.y
    for k in range(legs):
        d = dirs[k % 4]
        n = leg * (k // 2 + 1)
        x, y = x + d[0] * n, y + d[1] * n
        pts.append(Vec3(x, y, center.z))
    return pts


@dataclass
class MissionContext:
    """Mutable per-run mission bookkeeping."""

    bounds: Box
    waypoints: list = field(default_factory=list)
    recovery: bool = True
    search_timeout: float = 20.0
    recovery_timeout: float = 10.0
    recovery_climb: float = 1.0
    align_hold: float = 0.5
    commit_range: float = 0.15
    touchdown_range: float = 0.05
    waypoint_radius: float = 0.4
    search_leg: float = 0.5
    # runtime state
    entered: float = 0.0
    align_since: Optional[float] = None
    hold_z: float = 0.0
    pattern: list = field(default_factory=list)
    pattern_i: int = 0
    climbing: bool = False
    target_z: float = 0.0

    def enter(self, phase: Phase, est: NavEstimate, now: float) -> None:
        self.entered = now
        p = est.position
        if phase.kind == "Search":
            self.pattern = expanding_square(p, self.search_leg)
            self.pattern_i = 0
            self.hold_z = p.z
        elif phase.kind == "Align":
            self.align_since = None
            self.hold_z = self.target_z if self.climbing else p.z
            self.climbing = False
        elif phase.kind == "Recovery":
            self.target_z = min(p.z + self.recovery_climb, self.bounds.z1 - 0.5)
            self.climbing = True
            self.pattern = expanding_square(Vec3(p.x, p.y, self.target_z), self.search_leg)
            self.pattern_i = 0


def _toward(pos: Vec3, target: Vec3, kp_xy: float, kp_z: float, speed: float, now: float) -> VelocityCommand:
    dx, dy = target.x - pos.x, target.y - pos.y
    vx, vy = kp_xy * dx, kp_xy * dy
    h = math.hypot(vx, vy)
    if h > speed:
        vx, vy = vx * speed / h, vy * speed / h
    return VelocityCommand(vx, vy, kp_z * (target.z - pos.z), 0.0, now)


def _sweep(ctx: MissionContext, est: NavEstimate, gains: ControllerGains, now: float) -> VelocityCommand:
    pos = est.position
    if ctx.pattern_i >= len(ctx.pattern):
        return VelocityCommand(0.0, 0.0, gains.kp_z * (ctx.hold_z - pos.z), 0.0, now)
    wp = ctx.pattern[ctx.pattern_i]
    if math.hypot(wp.x - pos.x, wp.y - pos.y) < 0.2:
        ctx.pattern_i += 1
    return _toward(pos, Vec3(wp.x, wp.y, ctx.hold_z), gains.kp_xy, gains.kp_z, gains.search_speed, now)


def _lost_exit(ctx: MissionContext) -> Phase:
    return RECOVERY if ctx.recovery else abort("MarkerLost")


def _decide(phase: Phase, marker: MarkerView, est: NavEstimate, ctx: MissionContext, gains: ControllerGains, now: float):
    pos = est.position
    kind = phase.kind
    hover = VelocityCommand(0.0, 0.0, 0.0, 0.0, now)

    if kind in ("Touchdown", "Abort"):
        # Terminal: keep settling downward after touchdown, hold otherwise.
        vz = -gains.descent_speed if kind == "Touchdown" else 0.0
        return phase, VelocityCommand(0.0, 0.0, vz, 0.0, now)

    # The floor is ground contact, not a fence: noisy altitude below it is ignored.
    fence_pos = Vec3(pos.x, pos.y, max(pos.z, ctx.bounds.z0))
    if not geofence_check(fence_pos, ctx.bounds):
        return abort("Geofence"), hover

    if kind == "Takeoff":
        alt = gains.takeoff_altitude
        if abs(pos.z - alt) < 0.1:
            return (travel(0) if ctx.waypoints else SEARCH), hover
        return phase, VelocityCommand(0.0, 0.0, gains.kp_z * (alt - pos.z), 0.0, now)

    if kind == "Travel":
        i = phase.waypoint
        wp = ctx.waypoints[i]
        while (wp - pos).norm() < ctx.waypoint_radius:
            if i + 1 >= len(ctx.waypoints):
                return SEARCH, _toward(pos, wp, gains.kp_xy, gains.kp_z, gains.cruise_speed, now)
            i += 1
            wp = ctx.waypoints[i]
        return travel(i), _toward(pos, wp, gains.kp_xy, gains.kp_z, gains.cruise_speed, now)

    if kind == "Search":
        if marker.status is TrackStatus.TRACKING:
            return ALIGN, hover
        if now - ctx.entered >= ctx.search_timeout - _EPS_T:
            return abort("MarkerLostTimeout"), hover
        return phase, _sweep(ctx, est, gains, now)

    if kind == "Recovery":
        if marker.status is TrackStatus.TRACKING:
            return ALIGN, hover
        if now - ctx.entered >= ctx.recovery_timeout - _EPS_T:
            return abort("MarkerLostTimeout"), hover
        if ctx.climbing:
            if pos.z >= ctx.target_z - 0.1:
                ctx.climbing = False
                ctx.hold_z = ctx.target_z
            else:
                return phase, VelocityCommand(0.0, 0.0, gains.kp_z * (ctx.target_z - pos.z) + 0.2, 0.0, now)
        return phase, _sweep(ctx, est, gains, now)

    committed = kind == "Descend" and est.range < ctx.commit_range
    if marker.status is TrackStatus.LOST and not committed:
        return _lost_exit(ctx), hover
    off = marker.offset if marker.offset is not None else Vec3(0.0, 0.0, 0.0)

    if kind == "Align":
        vx, vy = gains.kp_xy * off.x, gains.kp_xy * off.y
        cmd = VelocityCommand(vx, vy, gains.kp_z * (ctx.hold_z - pos.z), 0.0, now)
        if math.hypot(off.x, off.y) < gains.align_tolerance:
            if ctx.align_since is None:
                ctx.align_since = now
            elif now - ctx.align_since >= ctx.align_hold - _EPS_T:
                return DESCEND, cmd
        else:
            ctx.align_since = None
        return phase, cmd

    # Descend
    if est.range < ctx.touchdown_range:
        return TOUCHDOWN, VelocityCommand(0.0, 0.0, -gains.descent_speed, 0.0, now)
    if committed:
        return phase, VelocityCommand(0.0, 0.0, -gains.descent_speed, 0.0, now)
    return phase, VelocityCommand(gains.kp_xy * off.x, gains.kp_xy * off.y, -gains.descent_speed, 0.0, now)


def mission_step(
    phase: Phase,
    marker: MarkerView,
    est: NavEstimate,
    ctx: MissionContext,
    gains: ControllerGains,
    now: float,
) -> tuple[Phase, VelocityCommand]:
    new, cmd = _decide(phase, marker, est, ctx, gains, now)
    _check(phase, new)
    if new.kind != phase.kind:
        ctx.enter(new, est, now)
    return new, cmd
