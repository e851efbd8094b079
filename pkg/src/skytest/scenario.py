"""Line-oriented scenario language (``.scn``).

One directive per line, whitespace separated, ``#`` starts a comment::

    scenario calm_001
    seed 42
    world bounds -15 -15 0 15 15 12
    marker id 7 pos 0 0 0 yaw 0 size 0.15
    drone start -8 -6 0 0 tau 0.4 vmax 2 radius 0.3
    mission takeoff 4
    mission land marker 7

Parsing applies every default and validates cross references, so a parsed
``Scenario`` is always runnable. ``canonicalize`` writes the fully-defaulted
form; ``parse(canonicalize(s)) == s``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from typing import Optional

from .dynamics import DroneParams
from .faults import (
    CmdLatency,
    GpsDrift,
    GpsDropout,
    Lighting,
    Occlusion,
    StaleObstacle,
    Wind,
)
from .geom import Pose3, Vec3, quat_from_yaw
from .sensors import CameraIntrinsics, MarkerSpec
from .telemetry import hash_hex
from .world import Box, Cylinder, WorldModel

STAGES = ("sil", "hilemu")
GAINS = ("default", "aggressive")
PRESETS = ("mls1", "mls2", "mls3")
_NAME_RE = re.compile(r"^[A-Za-z0-9_.\-]+$")
_U64_MAX = 2**64 - 1


class ParseError(ValueError):
    def __init__(self, line: int, token: str, message: str):
        super().__init__(f"line {line}: {message} (at {token!r})")
        self.line = line
        self.token = token
        self.message = message


class ScenarioInvalid(ValueError):
    pass


# -- override registry ----------------------------------------------------------


def _pos(v):
    return v > 0


def _nonneg(v):
    return v >= 0


def _unit(v):
    return 0.0 <= v <= 1.0


# key -> (kind, check, description). kind is "float", "int", "bool" or a tuple of choices.
SETTINGS = {
    "camera.fx": ("float", _pos, "focal length x [px]"),
    "camera.fy": ("float", _pos, "focal length y [px]"),
    "camera.cx": ("float", _pos, "principal point x [px]"),
    "camera.cy": ("float", _pos, "principal point y [px]"),
    "camera.width": ("int", _pos, "image width [px]"),
    "camera.height": ("int", _pos, "image height [px]"),
    "camera.k1": ("float", None, "radial distortion k1"),
    "camera.k2": ("float", None, "radial distortion k2"),
    "camera.p1": ("float", None, "tangential distortion p1"),
    "camera.p2": ("float", None, "tangential distortion p2"),
    "camera.k3": ("float", None, "radial distortion k3"),
    "map.resolution": ("float", _pos, "voxel edge [m]"),
    "map.enabled": ("bool", None, "persistent inflated map for planning"),
    "harness.preset": (PRESETS, None, "generation preset"),
    "harness.time_cap": ("float", _pos, "simulated time cap [s]"),
    "planner.kind": (("straight", "astar", "rrtstar"), None, "global planner"),
    "planner.connectivity": ("int", lambda v: v in (6, 26), "A* neighbourhood"),
    "planner.max_iterations": ("int", _pos, "RRT* iteration budget"),
    "planner.step": ("float", _pos, "RRT* steer length [m]"),
    "planner.goal_bias": ("float", _unit, "RRT* goal sampling probability"),
    "planner.gamma": ("float", _pos, "RRT* rewire radius constant [m]"),
    "planner.inflation": ("float", _nonneg, "obstacle inflation [m]"),
    "planner.smoothing": ("bool", None, "shortcut smoothing"),
    "planner.smooth_passes": ("int", _nonneg, "shortcut attempts"),
    "perception.filter": ("bool", None, "temporal marker filter"),
    "perception.alpha": ("float", lambda v: 0 < v <= 1, "EMA weight of new estimate"),
    "perception.coast_timeout": ("float", _pos, "tracking -> coasting gap [s]"),
    "perception.lost_timeout": ("float", _pos, "coasting -> lost gap [s]"),
    "mission.recovery": ("bool", None, "climb-and-search on marker loss"),
    "mission.align_tolerance": ("float", _pos, "horizontal alignment tolerance [m]"),
    "mission.descent_speed": ("float", _pos, "descent speed [m/s]"),
    "mission.kp_xy": ("float", _pos, "horizontal P gain [1/s]"),
    "mission.kp_z": ("float", _pos, "vertical P gain [1/s]"),
    "mission.search_timeout": ("float", _pos, "search before abort [s]"),
    "mission.recovery_timeout": ("float", _pos, "recovery before abort [s]"),
    "sensors.min_side_px": ("float", _pos, "detector minimum apparent side [px]"),
    "sensors.max_view_deg": ("float", lambda v: 0 < v <= 90, "detector max view angle [deg]"),
    "sensors.occlusion_cutoff": ("float", _unit, "detector occlusion cutoff"),
    "sensors.pixel_sigma": ("float", _nonneg, "corner noise [px]"),
    "gps.sigma_xy": ("float", _nonneg, "GPS horizontal noise [m]"),
    "gps.sigma_z": ("float", _nonneg, "GPS vertical noise [m]"),
    "gps.drift_rate": ("float", _nonneg, "GPS bias random walk [m/sqrt(s)]"),
    "range.sigma": ("float", _nonneg, "rangefinder noise [m]"),
    "wind.gust_tau": ("float", _pos, "gust correlation time [s]"),
    "drone.vz_max": ("float", _pos, "vertical speed limit [m/s]"),
    "drone.yaw_rate_max": ("float", _pos, "yaw rate limit [rad/s]"),
    "drone.wind_leak": ("float", _unit, "unrejected steady wind fraction"),
    "drone.gust_coupling": ("float", _unit, "horizontal gust advection fraction"),
    "drone.gust_coupling_z": ("float", _unit, "vertical gust advection fraction"),
}

# Keys held in structured Scenario fields rather than in ``settings``.
_CAMERA_KEYS = {
    "camera.fx": "fx",
    "camera.fy": "fy",
    "camera.cx": "cx",
    "camera.cy": "cy",
    "camera.width": "width",
    "camera.height": "height",
}
_DIST_KEYS = ("camera.k1", "camera.k2", "camera.p1", "camera.p2", "camera.k3")
_DRONE_KEYS = (
    ("drone.vz_max", "vz_max"),
    ("drone.yaw_rate_max", "yaw_rate_max"),
    ("drone.wind_leak", "wind_leak"),
    ("drone.gust_coupling", "gust_coupling"),
    ("drone.gust_coupling_z", "gust_coupling_z"),
)
_STRUCTURED = set(_CAMERA_KEYS) | set(_DIST_KEYS) | {"map.resolution", "harness.preset"}


# -- data -----------------------------------------------------------------------


@dataclass(frozen=True)
class MarkerDecl:
    id: int
    position: Vec3
    yaw: float
    size: float = 0.15

    def spec(self) -> MarkerSpec:
        return MarkerSpec(self.id, self.size, Pose3(self.position, quat_from_yaw(self.yaw)))


@dataclass(frozen=True)
class DroneSpec:
    start: Vec3
    yaw: float = 0.0
    params: DroneParams = field(default_factory=DroneParams)


@dataclass(frozen=True)
class MissionPlan:
    land_marker: int
    takeoff_altitude: float = 4.0
    waypoints: tuple = ()


@dataclass(frozen=True)
class Scenario:
    name: str
    seed: int
    bounds: Box
    markers: tuple
    drone: DroneSpec
    mission: MissionPlan
    obstacles: tuple = ()
    faults: tuple = ()
    stage: str = "sil"
    gains: str = "default"
    preset: str = "mls3"
    camera: CameraIntrinsics = field(default_factory=CameraIntrinsics)
    map_resolution: float = 0.2
    settings: tuple = ()  # sorted ((key, value), ...) explicit overrides

    def setting(self, key: str, default=None):
        for k, v in self.settings:
            if k == key:
                return v
        return default

    def marker(self, marker_id: int) -> MarkerDecl:
        for m in self.markers:
            if m.id == marker_id:
                return m
        raise KeyError(marker_id)

    @property
    def land_target(self) -> MarkerDecl:
        return self.marker(self.mission.land_marker)

    def stale_shapes(self) -> tuple:
        return tuple(f.shape for f in self.faults if isinstance(f, StaleObstacle))

    def world(self) -> WorldModel:
        """Ground truth world: mapped obstacles plus stale ones."""
        return WorldModel(self.bounds, tuple(self.obstacles) + self.stale_shapes())

    def with_settings(self, **overrides) -> "Scenario":
        """Copy with dotted-key overrides given as ``planner__kind="astar"``."""
        d = dict(self.settings)
        for k, v in overrides.items():
            d[k.replace("__", ".")] = v
        return replace(self, settings=tuple(sorted(d.items())))

    def scnhash(self) -> str:
        return hash_hex(canonicalize(self).encode("utf-8"))


# -- parsing --------------------------------------------------------------------


class _Line:
    def __init__(self, no: int, toks: list):
        self.no = no
        self.toks = toks

    def err(self, msg: str, idx: Optional[int] = None) -> ParseError:
        tok = self.toks[idx] if idx is not None and idx < len(self.toks) else (self.toks[-1] if self.toks else "")
        return ParseError(self.no, tok, msg)

    def arity(self, *allowed: int) -> None:
        if len(self.toks) not in allowed:
            want = " or ".join(str(a) for a in allowed)
            raise self.err(f"expected {want} tokens, got {len(self.toks)}")

    def num(self, i: int) -> float:
        try:
            v = float(self.toks[i])
        except (ValueError, IndexError):
            raise self.err("expected a number", i) from None
        if not math.isfinite(v):
            raise self.err("number must be finite", i)
        return v

    def int_(self, i: int) -> int:
        t = self.toks[i] if i < len(self.toks) else ""
        if not re.fullmatch(r"-?[0-9]+", t):
            raise self.err("expected an integer", i)
        return int(t)

    def kw(self, i: int, word: str) -> None:
        if i >= len(self.toks) or self.toks[i] != word:
            raise self.err(f"expected keyword {word!r}", i)

    def choice(self, i: int, options) -> str:
        if i >= len(self.toks) or self.toks[i] not in options:
            raise self.err(f"expected one of {', '.join(options)}", i)
        return self.toks[i]


def _tokenize(text: str):
    for no, raw in enumerate(text.split("\n"), 1):
        line = raw.split("#", 1)[0]
        toks = line.split()
        if toks:
            yield _Line(no, toks)


def _window(ln: _Line, i: int) -> tuple:
    t0, t1 = ln.num(i), ln.num(i + 1)
    if t0 < 0 or not t0 < t1:
        raise ln.err("fault window needs 0 <= t0 < t1", i + 1)
    return t0, t1


def _box(ln: _Line, i: int) -> Box:
    v = [ln.num(i + k) for k in range(6)]
    if not (v[0] < v[3] and v[1] < v[4] and v[2] < v[5]):
        raise ln.err("box needs x0<x1, y0<y1, z0<z1", i + 3)
    return Box(*v)


def _cyl(ln: _Line, i: int) -> Cylinder:
    cx, cy, r, h = (ln.num(i + k) for k in range(4))
    if r <= 0 or h <= 0:
        raise ln.err("cylinder radius and height must be positive", i + 2)
    return Cylinder(cx, cy, r, h)


def _shape(ln: _Line, i: int):
    kind = ln.choice(i, ("box", "cyl"))
    if kind == "box":
        ln.arity(i + 7)
        return _box(ln, i + 1)
    ln.arity(i + 5)
    return _cyl(ln, i + 1)


def _setting_value(ln: _Line, key: str):
    kind, check, _ = SETTINGS[key]
    tok = ln.toks[2]
    if kind == "float":
        v = ln.num(2)
    elif kind == "int":
        v = ln.int_(2)
    elif kind == "bool":
        v = ln.choice(2, ("on", "off")) == "on"
    else:
        v = ln.choice(2, kind)
    if check is not None and not check(v):
        raise ln.err(f"value out of range for {key}", 2)
    del tok
    return v


def parse(text: str) -> Scenario:
    name = "unnamed"
    seen: dict = {}
    seed = None
    stage = "sil"
    gains = "default"
    bounds = None
    obstacles: list = []
    markers: list = []
    drone = None
    takeoff = 4.0
    waypoints: list = []
    land = None
    faults: list = []
    settings: dict = {}
    refs: list = []  # (line, marker id) for occlusion faults
    lines_seen = 0

    def once(ln: _Line, key: str):
        if key in seen:
            raise ln.err(f"duplicate {key} (first on line {seen[key]})", 0)
        seen[key] = ln.no

    for ln in _tokenize(text):
        lines_seen = ln.no
        d = ln.toks[0]
        t = ln.toks
        if d == "scenario":
            ln.arity(2)
            once(ln, "scenario")
            if not _NAME_RE.match(t[1]):
                raise ln.err("scenario name may only use letters, digits, '_', '.', '-'", 1)
            name = t[1]
        elif d == "seed":
            ln.arity(2)
            once(ln, "seed")
            if not t[1].isdigit() or int(t[1]) > _U64_MAX:
                raise ln.err("seed must be an unsigned 64-bit integer", 1)
            seed = int(t[1])
        elif d == "stage":
            ln.arity(2)
            once(ln, "stage")
            stage = ln.choice(1, STAGES)
        elif d == "world":
            ln.kw(1, "bounds")
            ln.arity(8)
            once(ln, "world")
            bounds = (_box(ln, 2), ln)
        elif d == "obstacle":
            ln.arity(6, 8)
            obstacles.append((_shape(ln, 1), ln))
        elif d == "marker":
            ln.arity(9, 11)
            ln.kw(1, "id")
            mid = ln.int_(2)
            if not 0 <= mid < 50:
                raise ln.err("marker id must be in [0, 50) for dictionary 4X4_50", 2)
            ln.kw(3, "pos")
            pos = Vec3(ln.num(4), ln.num(5), ln.num(6))
            ln.kw(7, "yaw")
            yaw = ln.num(8)
            size = 0.15
            if len(t) == 11:
                ln.kw(9, "size")
                size = ln.num(10)
                if size <= 0:
                    raise ln.err("marker size must be positive", 10)
            markers.append((MarkerDecl(mid, pos, yaw, size), ln))
        elif d == "drone":
            once(ln, "drone")
            ln.kw(1, "start")
            if len(t) < 6:
                raise ln.err("drone start needs x y z yaw")
            start = Vec3(ln.num(2), ln.num(3), ln.num(4))
            yaw = ln.num(5)
            extra = {}
            i = 6
            while i < len(t):
                k = ln.choice(i, ("tau", "vmax", "radius"))
                if k in extra:
                    raise ln.err(f"duplicate {k}", i)
                if i + 1 >= len(t):
                    raise ln.err(f"missing value for {k}", i)
                v = ln.num(i + 1)
                if v <= 0:
                    raise ln.err(f"{k} must be positive", i + 1)
                extra[k] = v
                i += 2
            drone = (start, yaw, extra, ln)
        elif d == "gains":
            ln.arity(2)
            once(ln, "gains")
            gains = ln.choice(1, GAINS)
        elif d == "mission":
            sub = ln.choice(1, ("takeoff", "goto", "land"))
            if sub == "takeoff":
                ln.arity(3)
                once(ln, "mission takeoff")
                takeoff = ln.num(2)
                if takeoff <= 0:
                    raise ln.err("takeoff altitude must be positive", 2)
                seen["_takeoff_line"] = ln
            elif sub == "goto":
                ln.arity(5)
                waypoints.append((Vec3(ln.num(2), ln.num(3), ln.num(4)), ln))
            else:
                ln.arity(4)
                ln.kw(2, "marker")
                once(ln, "mission land")
                land = (ln.int_(3), ln)
        elif d == "fault":
            kind = ln.choice(
                1, ("gps_dropout", "gps_drift", "occlusion", "lighting", "wind", "latency", "stale_obstacle")
            )
            if kind == "gps_dropout":
                ln.arity(4)
                faults.append(GpsDropout(*_window(ln, 2)))
            elif kind == "gps_drift":
                ln.arity(5)
                rate = ln.num(2)
                if rate < 0:
                    raise ln.err("drift rate must be nonnegative", 2)
                faults.append(GpsDrift(rate, *_window(ln, 3)))
            elif kind == "occlusion":
                ln.arity(8)
                ln.kw(2, "marker")
                mid = ln.int_(3)
                t0, t1 = _window(ln, 4)
                ln.kw(6, "frac")
                frac = ln.num(7)
                if not 0.0 <= frac <= 1.0:
                    raise ln.err("occlusion fraction must be in [0, 1]", 7)
                faults.append(Occlusion(mid, frac, t0, t1))
                refs.append((ln, mid))
            elif kind == "lighting":
                ln.arity(5)
                factor = ln.num(2)
                if not 0.0 <= factor <= 1.0:
                    raise ln.err("lighting factor must be in [0, 1]", 2)
                faults.append(Lighting(factor, *_window(ln, 3)))
            elif kind == "wind":
                ln.arity(8)
                ln.kw(2, "mean")
                mean = Vec3(ln.num(3), ln.num(4), ln.num(5))
                ln.kw(6, "gust")
                sigma = ln.num(7)
                if sigma < 0:
                    raise ln.err("gust sigma must be nonnegative", 7)
                faults.append(Wind(mean, sigma))
            elif kind == "latency":
                ln.arity(6)
                ln.kw(2, "cmd")
                delay = ln.num(3)
                ln.kw(4, "jitter")
                jitter = ln.num(5)
                if delay < 0 or jitter < 0:
                    raise ln.err("delay and jitter must be nonnegative", 3 if delay < 0 else 5)
                faults.append(CmdLatency(delay, jitter))
            else:
                ln.arity(7, 9)
                shape = _shape(ln, 2)
                faults.append(StaleObstacle(shape))
                obstacles_stale = seen.setdefault("_stale", [])
                obstacles_stale.append((shape, ln))
        elif d == "set":
            ln.arity(3)
            key = t[1]
            if key not in SETTINGS:
                raise ln.err(f"unknown setting {key!r}", 1)
            if key in settings:
                raise ln.err(f"duplicate setting {key!r}", 1)
            settings[key] = (_setting_value(ln, key), ln)
        else:
            raise ln.err(f"unknown directive {d!r}", 0)

    last = max(lines_seen, 1)
    if seed is None:
        raise ParseError(last, "", "missing required 'seed' directive")
    if bounds is None:
        raise ParseError(last, "", "missing required 'world bounds' directive")
    if not markers:
        raise ParseError(last, "", "scenario declares no marker")
    if drone is None:
        raise ParseError(last, "", "missing required 'drone start' directive")
    if land is None:
        raise ParseError(last, "", "missing mission: no 'mission land marker <id>' directive")

    box, box_ln = bounds
    ids: dict = {}
    for m, ln in markers:
        if m.id in ids:
            raise ln.err(f"duplicate marker id {m.id} (first on line {ids[m.id]})", 2)
        ids[m.id] = ln.no
        if not box.contains(m.position):
            raise ln.err("marker outside world bounds", 4)
    for shape, ln in obstacles + seen.get("_stale", []):
        a = shape.aabb()
        if not (box.contains(a.lo) and box.contains(a.hi)):
            raise ln.err("obstacle exceeds world bounds", 2)
    for ln, mid in refs:
        if mid not in ids:
            raise ln.err(f"fault references unknown marker {mid}", 3)
    land_id, land_ln = land
    if land_id not in ids:
        raise land_ln.err(f"land target references unknown marker {land_id}", 3)
    for wp, ln in waypoints:
        if not box.contains(wp):
            raise ln.err("waypoint outside world bounds", 2)
    start, yaw, extra, d_ln = drone
    if not box.contains(start):
        raise d_ln.err("drone start outside world bounds", 2)
    if takeoff > box.z1:
        tl = seen.get("_takeoff_line")
        raise (tl or box_ln).err("takeoff altitude above world ceiling", 2)

    # Settings into structured fields.
    cam_kw = {}
    dist = [0.0] * 5
    map_res = 0.2
    preset = "mls3"
    rest = {}
    for key, (v, ln) in settings.items():
        if key in _CAMERA_KEYS:
            cam_kw[_CAMERA_KEYS[key]] = v
        elif key in _DIST_KEYS:
            dist[_DIST_KEYS.index(key)] = v
        elif key == "map.resolution":
            map_res = v
        elif key == "harness.preset":
            preset = v
        else:
            rest[key] = v
    try:
        camera = CameraIntrinsics(dist=tuple(dist), **cam_kw)
    except ValueError as exc:
        ln = next(l for k, (_, l) in settings.items() if k.startswith("camera."))
        raise ParseError(ln.no, ln.toks[1], str(exc)) from None
    coast = rest.get("perception.coast_timeout", 0.5)
    lost = rest.get("perception.lost_timeout", 2.0)
    if coast > lost:
        ln = settings.get("perception.coast_timeout", settings.get("perception.lost_timeout"))[1]
        raise ln.err("coast_timeout must not exceed lost_timeout", 2)

    dp_kw = {}
    for k, attr in (("tau", "tau"), ("vmax", "v_max"), ("radius", "body_radius")):
        if k in extra:
            dp_kw[attr] = extra[k]
    for k, attr in _DRONE_KEYS:
        if k in rest:
            dp_kw[attr] = rest.pop(k)
    params = DroneParams(**dp_kw)

    return Scenario(
        name=name,
        seed=seed,
        bounds=box,
        markers=tuple(m for m, _ in markers),
        drone=DroneSpec(start, yaw, params),
        mission=MissionPlan(land_id, takeoff, tuple(w for w, _ in waypoints)),
        obstacles=tuple(s for s, _ in obstacles),
        faults=tuple(faults),
        stage=stage,
        gains=gains,
        preset=preset,
        camera=camera,
        map_resolution=map_res,
        settings=tuple(sorted(rest.items())),
    )


def parse_file(path) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        return parse(fh.read())


# -- canonical form -------------------------------------------------------------


def _f(v: float) -> str:
    return repr(float(v))


def _fmt_setting(key: str, v) -> str:
    kind = SETTINGS[key][0]
    if kind == "bool":
        return "on" if v else "off"
    if kind == "float":
        return _f(v)
    return str(v)


def _fmt_shape(s) -> str:
    if isinstance(s, Box):
        return "box " + " ".join(_f(v) for v in (s.x0, s.y0, s.z0, s.x1, s.y1, s.z1))
    return "cyl " + " ".join(_f(v) for v in (s.cx, s.cy, s.r, s.h))


def _fmt_fault(f) -> str:
    if isinstance(f, GpsDropout):
        return f"fault gps_dropout {_f(f.t_start)} {_f(f.t_end)}"
    if isinstance(f, GpsDrift):
        return f"fault gps_drift {_f(f.rate)} {_f(f.t_start)} {_f(f.t_end)}"
    if isinstance(f, Occlusion):
        return f"fault occlusion marker {f.marker_id} {_f(f.t_start)} {_f(f.t_end)} frac {_f(f.fraction)}"
    if isinstance(f, Lighting):
        return f"fault lighting {_f(f.factor)} {_f(f.t_start)} {_f(f.t_end)}"
    if isinstance(f, Wind):
        m = f.mean
        return f"fault wind mean {_f(m.x)} {_f(m.y)} {_f(m.z)} gust {_f(f.gust_sigma)}"
    if isinstance(f, CmdLatency):
        return f"fault latency cmd {_f(f.delay)} jitter {_f(f.jitter)}"
    return f"fault stale_obstacle {_fmt_shape(f.shape)}"


def canonicalize(s: Scenario) -> str:
    b = s.bounds
    p = s.drone.params
    st = s.drone.start
    out = [
        f"scenario {s.name}",
        f"seed {s.seed}",
        f"stage {s.stage}",
        "world bounds " + " ".join(_f(v) for v in (b.x0, b.y0, b.z0, b.x1, b.y1, b.z1)),
    ]
    out += [f"obstacle {_fmt_shape(o)}" for o in s.obstacles]
    for m in s.markers:
        q = m.position
        out.append(f"marker id {m.id} pos {_f(q.x)} {_f(q.y)} {_f(q.z)} yaw {_f(m.yaw)} size {_f(m.size)}")
    out.append(
        f"drone start {_f(st.x)} {_f(st.y)} {_f(st.z)} {_f(s.drone.yaw)} "
        f"tau {_f(p.tau)} vmax {_f(p.v_max)} radius {_f(p.body_radius)}"
    )
    out.append(f"gains {s.gains}")
    out.append(f"mission takeoff {_f(s.mission.takeoff_altitude)}")
    out += [f"mission goto {_f(w.x)} {_f(w.y)} {_f(w.z)}" for w in s.mission.waypoints]
    out.append(f"mission land marker {s.mission.land_marker}")
    out += [_fmt_fault(f) for f in s.faults]
    c = s.camera
    structured = {
        "camera.fx": _f(c.fx),
        "camera.fy": _f(c.fy),
        "camera.cx": _f(c.cx),
        "camera.cy": _f(c.cy),
        "camera.width": str(c.width),
        "camera.height": str(c.height),
        "harness.preset": s.preset,
        "map.resolution": _f(s.map_resolution),
    }
    for k, v in zip(_DIST_KEYS, c.dist):
        structured[k] = _f(v)
    merged = dict(structured)
    dp_defaults = DroneParams()
    for key, attr in _DRONE_KEYS:
        if getattr(p, attr) != getattr(dp_defaults, attr):
            merged[key] = _f(getattr(p, attr))
    for k, v in s.settings:
        if k not in merged:
            merged[k] = _fmt_setting(k, v)
    out += [f"set {k} {merged[k]}" for k in sorted(merged)]
    return "\n".join(out) + "\n"
