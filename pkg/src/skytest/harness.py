"""Run orchestration: generation presets, the fixed-step loop, suites, gates, replay.

Per physics tick (100 Hz) the loop runs, in this fixed order: truth log,
fault evaluation, sensors (GPS 5 Hz, range 20 Hz, camera 30 Hz), perception
and filtering, mission (20 Hz), command channel, dynamics, collision check.
The camera fires on tick ``k`` whenever ``floor(30 k / 100)`` advances, so its
frames are 3 or 4 ticks apart and average exactly 30 per second.
"""

from __future__ import annotations

import json
import math
import os
import statistics
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from .dynamics import (
    CAMERA_HZ,
    HOVER,
    PHYSICS_DT,
    PHYSICS_HZ,
    RigidState,
    WindState,
    check_collision,
    step,
)
from .faults import DelayedChannel, faults_active, latency_pairs, latency_stats
from .geom import ZERO, Pose3, SeededRng, Vec3
from .mapping import OccupancyGrid
from .mission import (
    NO_MARKER,
    TAKEOFF,
    MarkerView,
    MissionContext,
    NavEstimate,
    gains_preset,
    mission_step,
)
from .perception import (
    RAW_FILTER,
    FilterConfig,
    FilteredMarkerState,
    PerceptionError,
    estimate_pose,
    filter_update,
    status_at,
)
from .planning import Path as PlannedPath
from .planning import PlannerConfig, PlanningError, plan, shortcut_smooth
from .scenario import ParseError, Scenario, ScenarioInvalid, parse, parse_file
from .sensors import (
    DetectorGates,
    GpsBias,
    GpsParams,
    camera_pose,
    detect,
    geometric_gates_pass,
    gps_read,
    project_marker,
    range_read,
)
from .telemetry import LogHeader, LogWriter, TelemetryLog, read_log
from .world import Box

TIME_CAP = 120.0
CONTROL_EVERY = 5
GPS_EVERY = 20
RANGE_EVERY = 5
AIRBORNE_Z = 0.05
PLAN_Z_MIN = 1.0
PLAN_Z_HEADROOM = 2.0


@dataclass(frozen=True)
class GenerationPreset:
    name: str
    filter: bool
    mapping: bool
    planner: str
    smoothing: bool
    recovery: bool


PRESETS = {
    "mls1": GenerationPreset("mls1", filter=False, mapping=False, planner="straight", smoothing=False, recovery=False),
    "mls2": GenerationPreset("mls2", filter=True, mapping=False, planner="astar", smoothing=True, recovery=True),
    "mls3": GenerationPreset("mls3", filter=True, mapping=True, planner="rrtstar", smoothing=True, recovery=True),
}


@dataclass
class RunMetrics:
    scenario: str
    seed: int
    preset: str
    stage: str
    outcome: str = "Timeout"  # Success | Crash | Abort | Timeout
    reason: str = ""
    landing_error: Optional[float] = None
    collisions: int = 0
    frames_nominal: int = 0
    frames_detected: int = 0
    latency: Optional[dict] = None
    timeline: list = field(default_factory=list)
    memory: Optional[dict] = None
    plan_cost: Optional[float] = None
    sim_time: float = 0.0
    recoveries: int = 0
    delays_us: list = field(default_factory=list, repr=False)

    @property
    def detection_availability(self) -> float:
        if self.frames_nominal == 0:
            return 0.0
        return min(self.frames_detected / self.frames_nominal, 1.0)

    @property
    def label(self) -> str:
        return f"Abort({self.reason})" if self.outcome == "Abort" else self.outcome

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "preset": self.preset,
            "stage": self.stage,
            "outcome": self.label,
            "landing_error": self.landing_error,
            "collisions": self.collisions,
            "detection_availability": self.detection_availability,
            "latency": self.latency,
            "timeline": [[t, p] for t, p in self.timeline],
            "memory": self.memory,
            "plan_cost": self.plan_cost,
            "sim_time": self.sim_time,
            "recoveries": self.recoveries,
        }


# -- configuration --------------------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    preset: GenerationPreset
    filter: FilterConfig
    planner: PlannerConfig
    mapping: bool
    recovery: bool
    gates: DetectorGates
    gps: GpsParams
    range_sigma: float
    gust_tau: float
    time_cap: float


def build_config(scn: Scenario, preset: Optional[str] = None) -> RunConfig:
    """Preset toggles first, then explicit scenario ``set`` overrides."""
    p = PRESETS[preset or scn.preset]
    s = scn.setting
    filt_on = s("perception.filter", p.filter)
    if filt_on:
        filt = FilterConfig(
            s("perception.alpha", 0.3), s("perception.coast_timeout", 0.5), s("perception.lost_timeout", 2.0)
        )
    else:
        filt = RAW_FILTER
    mapping = s("map.enabled", p.mapping)
    kw = {k: s("planner." + k) for k in ("connectivity", "max_iterations", "step", "goal_bias", "gamma", "smooth_passes")}
    kw = {k: v for k, v in kw.items() if v is not None}
    planner = PlannerConfig(
        kind=s("planner.kind", p.planner),
        smoothing=s("planner.smoothing", p.smoothing),
        inflation=s("planner.inflation", 0.5),
        **kw,
    )
    d = DetectorGates()
    gates = DetectorGates(
        min_side_px=s("sensors.min_side_px", d.min_side_px),
        max_view_angle_deg=s("sensors.max_view_deg", d.max_view_angle_deg),
        occlusion_cutoff=s("sensors.occlusion_cutoff", d.occlusion_cutoff),
        pixel_sigma=s("sensors.pixel_sigma", d.pixel_sigma),
        miss_scale=d.miss_scale,
    )
    g = GpsParams()
    gps = GpsParams(s("gps.sigma_xy", g.sigma_xy), s("gps.sigma_z", g.sigma_z), s("gps.drift_rate", g.drift_rate))
    return RunConfig(
        preset=p,
        filter=filt,
        planner=planner,
        mapping=mapping,
        recovery=s("mission.recovery", p.recovery),
        gates=gates,
        gps=gps,
        range_sigma=s("range.sigma", 0.01),
        gust_tau=s("wind.gust_tau", 2.0),
        time_cap=s("harness.time_cap", TIME_CAP),
    )


def build_gains(scn: Scenario):
    kw = {"takeoff_altitude": scn.mission.takeoff_altitude}
    for key in ("kp_xy", "kp_z", "descent_speed", "align_tolerance"):
        v = scn.setting("mission." + key)
        if v is not None:
            kw[key] = v
    return gains_preset(scn.gains, **kw)


def planning_grid(scn: Scenario, cfg: RunConfig, cruise: float, body_radius: float = 0.0) -> OccupancyGrid:
    """Grid over the cruise band holding the mapped (non-stale) obstacles."""
    b = scn.bounds
    z0 = max(b.z0, min(PLAN_Z_MIN, cruise))
    z1 = min(b.z1, cruise + PLAN_Z_HEADROOM)
    band = Box(b.x0, b.y0, z0, b.x1, b.y1, z1)
    grid = OccupancyGrid(band, scn.map_resolution)
    # Without the persistent map the planner only knows its own body radius;
    # the map adds the configured clearance margin on top.
    r = body_radius + (cfg.planner.inflation if cfg.mapping else 0.0)
    for shape in scn.obstacles:
        grid.insert_obstacle(shape.expanded(r) if r > 0 else shape, clip=True)
    return grid


def plan_route(scn: Scenario, cfg: RunConfig, grid: OccupancyGrid, gains, rng: SeededRng, smooth_rng: SeededRng):
    alt = gains.takeoff_altitude
    st = scn.drone.start
    target = scn.land_target.position
    stops = [Vec3(st.x, st.y, alt)] + list(scn.mission.waypoints) + [Vec3(target.x, target.y, alt)]
    wps = [stops[0]]
    for a, b in zip(stops, stops[1:]):
        leg = plan(grid, a, b, cfg.planner, rng)
        if cfg.planner.smoothing:
            leg = shortcut_smooth(leg, grid, smooth_rng, cfg.planner.smooth_passes)
        # Planner endpoints are voxel centers for A*; pin the exact stops.
        inner = list(leg.waypoints[1:-1])
        wps.extend(inner + [b])
    return PlannedPath.from_waypoints(wps)


# -- the run loop ---------------------------------------------------------------


def landing_error(touchdown, marker) -> float:
    """Horizontal distance from the touchdown point to the marker center."""
    return math.hypot(touchdown[0] - marker[0], touchdown[1] - marker[1])


def scenario_hash(scn: Scenario) -> str:
    return scn.scnhash()


def run_scenario(
    scn: Scenario,
    preset: Optional[str] = None,
    seed: Optional[int] = None,
    stage: Optional[str] = None,
) -> tuple[RunMetrics, TelemetryLog]:
    seed = scn.seed if seed is None else seed
    stage = stage or scn.stage
    cfg = build_config(scn, preset)
    gains = build_gains(scn)
    params = scn.drone.params
    world = scn.world()
    intr = scn.camera
    land = scn.land_target
    specs = [m.spec() for m in scn.markers]

    root = SeededRng(seed)
    rng_wind = root.derive("wind")
    rng_gps = root.derive("gps")
    rng_cam = root.derive("camera")
    rng_range = root.derive("range")
    rng_plan = root.derive("planner")
    rng_chan = root.derive("channel")
    rng_smooth = root.derive("smooth")

    writer = LogWriter(LogHeader(scn.name, seed, scn.scnhash()))
    rec = writer.write_record
    m = RunMetrics(scn.name, seed, cfg.preset.name, stage)
    rec(0, "run", preset=cfg.preset.name, stage=stage, planner=cfg.planner.kind, filter=int(cfg.filter is not RAW_FILTER))

    ctx = MissionContext(
        bounds=scn.bounds,
        recovery=cfg.recovery,
        search_timeout=scn.setting("mission.search_timeout", 20.0),
        recovery_timeout=scn.setting("mission.recovery_timeout", 10.0),
    )
    phase = TAKEOFF
    m.timeline.append((0.0, phase.label()))
    rec(0, "phase", phase=phase.kind, wp=phase.waypoint)

    grid = planning_grid(scn, cfg, gains.takeoff_altitude, params.body_radius)
    if cfg.mapping:
        m.memory = grid.memory_report()
    try:
        route = plan_route(scn, cfg, grid, gains, rng_plan, rng_smooth)
        ctx.waypoints = list(route.waypoints[1:])
        m.plan_cost = route.cost
    except PlanningError as exc:
        m.outcome, m.reason = "Abort", "NoPath"
        rec(0, "phase", phase="Abort", wp=-1, reason="NoPath")
        rec(0, "end", outcome="Abort", reason=type(exc).__name__)
        m.timeline.append((0.0, "Abort(NoPath)"))
        return m, writer.log

    st = scn.drone.start
    state = RigidState(Vec3(st.x, st.y, st.z), ZERO, scn.drone.yaw, 0)
    wind = WindState(ZERO, ZERO, 0.0, cfg.gust_tau)
    bias = GpsBias()
    fix = None
    odom_at_fix = None
    last_range = st.z
    filt = FilteredMarkerState()
    chan = DelayedChannel(0.0, 0.0, rng_chan) if stage == "hilemu" else None
    active = HOVER
    airborne = False
    prev_fault_key = None
    max_ticks = int(round(cfg.time_cap * PHYSICS_HZ))
    tick = 0

    while True:
        now_us = tick * 10_000
        now = tick * PHYSICS_DT
        pos = state.position
        rec(now_us, "truth.pose", x=pos.x, y=pos.y, z=pos.z, vx=state.velocity.x, vy=state.velocity.y, vz=state.velocity.z, yaw=state.yaw)

        cond = faults_active(scn.faults, now)
        key = (cond.gps_available, cond.gps_drift_rate, tuple(sorted(cond.occlusion.items())), cond.lighting_factor, cond.wind_mean, cond.wind_gust_sigma, cond.cmd_delay, cond.cmd_jitter)
        if key != prev_fault_key:
            if prev_fault_key is not None or scn.faults:
                occ = cond.occlusion_for(land.id)
                rec(now_us, "fault", gps=int(cond.gps_available), occ=occ, light=cond.lighting_factor, wind=cond.wind_mean.norm(), delay=cond.cmd_delay)
            prev_fault_key = key
        if wind.mean != cond.wind_mean or wind.gust_sigma != cond.wind_gust_sigma:
            wind = replace(wind, mean=cond.wind_mean, gust_sigma=cond.wind_gust_sigma)

        # Sensors.
        if tick % GPS_EVERY == 0:
            gp = cfg.gps if cond.gps_drift_rate is None else replace(cfg.gps, drift_rate=cond.gps_drift_rate)
            f, bias = gps_read(pos, gp, bias, cond.gps_available, rng_gps, now)
            if f is not None:
                fix, odom_at_fix = f, pos
                rec(now_us, "gps.fix", x=f.position.x, y=f.position.y, z=f.position.z)
        if tick % RANGE_EVERY == 0:
            last_range = range_read(pos, world, rng_range, cfg.range_sigma)
            rec(now_us, "range", r=last_range)
        if tick == 0 or (tick * CAMERA_HZ) // PHYSICS_HZ != ((tick - 1) * CAMERA_HZ) // PHYSICS_HZ:
            cam = camera_pose(pos, state.yaw)
            for spec in specs:
                proj = project_marker(cam, intr, spec)
                occ = cond.occlusion_for(spec.id)
                obs = detect(proj, cond.lighting_factor, occ, rng_cam, now, cfg.gates, intr)
                is_land = spec.id == land.id
                if is_land and geometric_gates_pass(proj, occ, cfg.gates):
                    m.frames_nominal += 1
                if obs is None:
                    continue
                try:
                    est = estimate_pose(obs, intr, spec.side_length)
                except PerceptionError:
                    continue
                world_pos = cam.position + cam.orientation.rotate(est.pose.position)
                rec(now_us, "marker.obs", id=spec.id, x=world_pos.x, y=world_pos.y, z=world_pos.z, rms=est.rms)
                if is_land:
                    m.frames_detected += 1
                    world_est = est._replace(pose=Pose3(world_pos, cam.orientation * est.pose.orientation))
                    filt = filter_update(filt, world_est, now, cfg.filter)
                    fp = filt.pose.position
                    rec(now_us, "marker.est", id=spec.id, x=fp.x, y=fp.y, z=fp.z, n=filt.updates)

        # Mission at control rate.
        if tick % CONTROL_EVERY == 0:
            if fix is None:
                nav = pos
            else:
                nav = fix.position + (pos - odom_at_fix)
            status = status_at(filt, now, cfg.filter)
            if filt.pose is None:
                view = NO_MARKER
            else:
                view = MarkerView(status, filt.pose.position - pos)
            new_phase, cmd = mission_step(phase, view, NavEstimate(nav, state.yaw, last_range), ctx, gains, now)
            if new_phase != phase:
                if new_phase.kind == "Recovery":
                    m.recoveries += 1
                m.timeline.append((now, new_phase.label()))
                fields = {"phase": new_phase.kind, "wp": new_phase.waypoint}
                if new_phase.reason:
                    fields["reason"] = new_phase.reason
                rec(now_us, "phase", **fields)
                phase = new_phase
            if phase.kind == "Abort":
                m.outcome, m.reason = "Abort", phase.reason
                break
            seq = chan.seq if chan is not None else tick // CONTROL_EVERY
            rec(now_us, "cmd.issue", seq=seq, vx=cmd.vx, vy=cmd.vy, vz=cmd.vz, yr=cmd.yaw_rate)
            if chan is None:
                active = cmd
            else:
                chan.delay, chan.jitter = cond.cmd_delay, cond.cmd_jitter
                chan.push(cmd, now, now_us)

        if chan is not None:
            for d in chan.poll(now, now_us):
                rec(now_us, "cmd.deliver", seq=d.seq)
                active = d.cmd

        state, wind = step(state, active, params, wind, rng_wind)
        tick += 1
        if state.position.z > AIRBORNE_Z:
            airborne = True
        col = check_collision(state, world, params.body_radius)
        if col.kind == "obstacle" or (airborne and col.kind in ("touchdown", "crash")):
            t_us = tick * 10_000
            p = state.position
            if col.kind == "touchdown" and phase.kind in ("Descend", "Touchdown"):
                m.outcome = "Success"
                m.landing_error = landing_error(p, land.position)
                rec(t_us, "touchdown", x=p.x, y=p.y, speed=col.speed, err=m.landing_error)
            else:
                m.outcome = "Crash"
                m.reason = col.kind if col.kind != "touchdown" else "ground"
                m.collisions += 1
                rec(t_us, "collision", kind=col.kind, obstacle=col.obstacle_index, speed=col.speed)
            break
        if tick >= max_ticks:
            m.outcome = "Timeout"
            break

    m.sim_time = tick * PHYSICS_DT
    end_fields = {"outcome": m.outcome}
    if m.reason:
        end_fields["reason"] = m.reason
    rec(tick * 10_000, "end", **end_fields)
    if chan is not None:
        m.delays_us = latency_pairs(writer.log.records)
        if m.delays_us:
            m.latency = latency_stats(m.delays_us)
    return m, writer.log


# -- suites ---------------------------------------------------------------------


@dataclass
class SuiteReport:
    rows: list
    errors: list = field(default_factory=list)  # (file, message)
    gates: list = field(default_factory=list)

    def aggregates(self) -> dict:
        return aggregate(self.rows)

    def to_dict(self) -> dict:
        return {
            "note": "landing error targets are evaluated as means over seeded runs",
            "aggregates": self.aggregates(),
            "rows": [r.to_dict() for r in self.rows],
            "errors": [{"file": f, "message": msg} for f, msg in self.errors],
            "gates": [g.to_dict() for g in self.gates],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


def aggregate(rows) -> dict:
    n = len(rows)
    errs = [r.landing_error for r in rows if r.landing_error is not None]
    delays = [d for r in rows for d in r.delays_us]
    out = {
        "runs": n,
        "success_rate": (sum(r.outcome == "Success" for r in rows) / n) if n else None,
        "collision_rate": (sum(r.collisions > 0 for r in rows) / n) if n else None,
        "abort_rate": (sum(r.outcome == "Abort" for r in rows) / n) if n else None,
        "timeout_rate": (sum(r.outcome == "Timeout" for r in rows) / n) if n else None,
        "mean_landing_error": statistics.fmean(errs) if errs else None,
        "median_landing_error": statistics.median(errs) if errs else None,
        "max_landing_error": max(errs) if errs else None,
        "mean_detection_availability": statistics.fmean(r.detection_availability for r in rows) if n else None,
        "recovery_rate": (sum(r.recoveries > 0 for r in rows) / n) if n else None,
    }
    if delays:
        st = latency_stats(delays)
        out.update({"latency_p50": st["p50"], "latency_p95": st["p95"], "latency_p99": st["p99"], "latency_max": st["max"]})
    else:
        out.update({"latency_p50": None, "latency_p95": None, "latency_p99": None, "latency_max": None})
    return out


def run_suite(
    source,
    seeds: int = 1,
    preset: Optional[str] = None,
    stage: Optional[str] = None,
) -> SuiteReport:
    """Run every scenario (a directory of .scn files or a list of Scenario/path) x seeds.

    Seeds are ``scenario.seed + i`` for ``i in range(seeds)``. Rows are ordered
    by file name, then seed index.
    """
    items = []
    errors = []
    if isinstance(source, (str, os.PathLike)):
        paths = sorted(Path(source).glob("*.scn"))
        for p in paths:
            try:
                items.append((p.name, parse_file(p)))
            except (ParseError, ScenarioInvalid, UnicodeDecodeError) as exc:
                errors.append((p.name, str(exc)))
    else:
        for i, s in enumerate(source):
            if isinstance(s, Scenario):
                items.append((s.name, s))
            else:
                try:
                    items.append((Path(s).name, parse_file(s)))
                except (ParseError, ScenarioInvalid, UnicodeDecodeError) as exc:
                    errors.append((Path(s).name, str(exc)))
    rows = []
    for _, scn in items:
        for i in range(seeds):
            metrics, _ = run_scenario(scn, preset=preset, seed=(scn.seed + i) % 2**64, stage=stage)
            rows.append(metrics)
    return SuiteReport(rows, errors)


# -- gates ----------------------------------------------------------------------


class UnknownMetric(KeyError):
    pass


_OPS = {
    "<=": lambda a, b: a <= b,
    ">=": lambda a, b: a >= b,
    "<": lambda a, b: a < b,
    ">": lambda a, b: a > b,
}


@dataclass(frozen=True)
class Gate:
    metric: str
    op: str
    threshold: float


@dataclass
class GateResult:
    gate: Gate
    value: Optional[float]
    passed: bool
    reason: str

    def to_dict(self) -> dict:
        g = self.gate
        return {"metric": g.metric, "op": g.op, "threshold": g.threshold, "value": self.value, "passed": self.passed, "reason": self.reason}

    def line(self) -> str:
        g = self.gate
        mark = "PASS" if self.passed else "FAIL"
        return f"{mark} {g.metric} {g.op} {g.threshold} (value {self.value}){': ' + self.reason if self.reason else ''}"


def parse_gates(text: str) -> list:
    gates = []
    for no, raw in enumerate(text.split("\n"), 1):
        toks = raw.split("#", 1)[0].split()
        if not toks:
            continue
        if len(toks) != 3 or toks[1] not in _OPS:
            raise ParseError(no, toks[-1], "gate must be '<metric> <op> <value>' with op in <= >= < >")
        try:
            v = float(toks[2])
        except ValueError:
            raise ParseError(no, toks[2], "gate threshold must be a number") from None
        gates.append(Gate(toks[0], toks[1], v))
    return gates


def _offenders(rows, metric: str) -> list:
    if metric in ("success_rate",):
        return [f"{r.scenario}#{r.seed}:{r.label}" for r in rows if r.outcome != "Success"]
    if metric in ("collision_rate",):
        return [f"{r.scenario}#{r.seed}" for r in rows if r.collisions > 0]
    if metric in ("abort_rate", "timeout_rate"):
        want = "Abort" if metric == "abort_rate" else "Timeout"
        return [f"{r.scenario}#{r.seed}" for r in rows if r.outcome == want]
    if "landing_error" in metric:
        with_err = [r for r in rows if r.landing_error is not None]
        if with_err:
            worst = max(with_err, key=lambda r: r.landing_error)
            return [f"worst {worst.scenario}#{worst.seed}={worst.landing_error:.4f}"]
    return []


def evaluate_gates(report: SuiteReport, gates) -> tuple[bool, list]:
    if isinstance(gates, str):
        gates = parse_gates(gates)
    agg = report.aggregates()
    results = []
    for g in gates:
        if g.metric not in agg:
            raise UnknownMetric(g.metric)
        v = agg[g.metric]
        if v is None:
            results.append(GateResult(g, None, False, "metric undefined for this suite"))
            continue
        ok = _OPS[g.op](v, g.threshold)
        reason = "" if ok else ", ".join(_offenders(report.rows, g.metric))
        results.append(GateResult(g, v, ok, reason))
    report.gates = results
    return all(r.passed for r in results), results


# -- replay ---------------------------------------------------------------------


class ScenarioNotFound(LookupError):
    pass


def find_scenario(scnhash: str, search_dirs) -> tuple:
    for d in search_dirs:
        d = Path(d)
        if not d.is_dir():
            continue
        for p in sorted(d.glob("*.scn")):
            try:
                s = parse_file(p)
            except (ParseError, UnicodeDecodeError):
                continue
            if s.scnhash() == scnhash:
                return p, s
    raise ScenarioNotFound(f"no .scn with hash {scnhash} in {', '.join(str(d) for d in search_dirs)}")


def replay(log_path, scenario: Optional[Scenario] = None, search_dirs=None) -> tuple[bool, TelemetryLog, TelemetryLog]:
    """Re-execute the run that produced ``log_path`` and compare bytes."""
    original = read_log(log_path)
    h = original.header
    if scenario is None:
        dirs = search_dirs or [Path(log_path).resolve().parent, Path.cwd()]
        _, scenario = find_scenario(h.scnhash, dirs)
    elif scenario.scnhash() != h.scnhash:
        raise ScenarioNotFound("scenario hash does not match log header")
    run = next((r for r in original.records if r.channel == "run"), None)
    preset = run.fields.get("preset") if run else None
    stage = run.fields.get("stage") if run else None
    _, fresh = run_scenario(scenario, preset=preset, seed=h.seed, stage=stage)
    return fresh.to_bytes() == original.to_bytes(), original, fresh


def run_text(text: str, **kw):
    return run_scenario(parse(text), **kw)
