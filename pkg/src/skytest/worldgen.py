"""Scenario corpus families: calm, cluttered, windy, occlusion, latency.

All families share a 30 x 30 x 12 m world with the land marker at the origin
and the drone starting on a ring around it. Obstacles are placed by rejection
sampling outside 2 m protected cylinders around the marker and the start.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .faults import CmdLatency, Occlusion, Wind
from .geom import SeededRng, Vec3
from .scenario import DroneSpec, MarkerDecl, MissionPlan, Scenario, canonicalize, parse
from .world import Box, Cylinder

FAMILIES = ("calm", "cluttered", "windy", "occlusion", "latency")
BOUNDS = Box(-15.0, -15.0, 0.0, 15.0, 15.0, 12.0)
PROTECT_RADIUS = 2.0
MAX_ATTEMPTS = 1000
# Occlusion-family descent starts at roughly 11-12 s and, from 5 m at the
# default 0.35 m/s, lasts about 14 s; windows therefore start in [13, 17] s.
OCCLUSION_START = (13.0, 17.0)
OCCLUSION_LENGTH = (3.0, 9.0)
FULL_OCCLUSION_EVERY = 5
LATENCY_SWEEP = (0.0, 0.02, 0.05, 0.1, 0.2)


class InfeasiblePlacement(RuntimeError):
    pass


@dataclass(frozen=True)
class CorpusFamily:
    name: str
    ring: tuple = (6.0, 10.0)
    takeoff: float = 4.0
    obstacles: tuple = (0, 0)
    obstacle_height: tuple = (3.0, 8.0)
    wind_mean: float = 0.0
    wind_gust: float = 0.0


FAMILY_PARAMS = {
    "calm": CorpusFamily("calm"),
    "cluttered": CorpusFamily("cluttered", obstacles=(6, 14)),
    "windy": CorpusFamily("windy", wind_mean=1.5, wind_gust=0.8),
    "occlusion": CorpusFamily("occlusion", ring=(8.0, 10.0), takeoff=5.0),
    "latency": CorpusFamily("latency", ring=(9.0, 10.0)),
}


def _r(v: float) -> float:
    return round(v, 3)


def obstacle_count(density: float, lo: int = 6, hi: int = 14) -> int:
    """Map a clutter density in [0, 1] to an obstacle count (monotone)."""
    if not 0.0 <= density <= 1.0:
        raise ValueError("density must be in [0, 1]")
    return lo + int(math.floor(density * (hi - lo) + 0.5))


def _protected_ok(shape, points, radius: float) -> bool:
    return all(shape.footprint_distance(p.x, p.y) > radius for p in points)


def _random_shape(rng: SeededRng, cx: float, cy: float, fam: CorpusFamily):
    h = _r(rng.uniform(*fam.obstacle_height))
    if rng.uniform() < 0.5:
        return Cylinder(_r(cx), _r(cy), _r(rng.uniform(0.3, 0.8)), h)
    hx, hy = rng.uniform(0.3, 0.8), rng.uniform(0.3, 0.8)
    return Box(_r(cx - hx), _r(cy - hy), 0.0, _r(cx + hx), _r(cy + hy), h)


def _inside(shape, bounds: Box) -> bool:
    a = shape.aabb()
    return bounds.contains(a.lo) and bounds.contains(a.hi)


def place_obstacles(rng: SeededRng, n: int, start: Vec3, marker: Vec3, fam: CorpusFamily, bounds: Box = BOUNDS) -> list:
    """Half the obstacles sit near the start-marker line, the rest anywhere."""
    keep = (start, marker)
    out = []
    for k in range(n):
        for _ in range(MAX_ATTEMPTS):
            if k % 2 == 0:
                t = rng.uniform(0.25, 0.75)
                lateral = rng.uniform(-1.0, 1.0)
                d = marker - start
                L = d.norm_xy()
                nx, ny = -d.y / L, d.x / L
                cx = start.x + t * d.x + lateral * nx
                cy = start.y + t * d.y + lateral * ny
            else:
                cx = rng.uniform(bounds.x0 + 2.0, bounds.x1 - 2.0)
                cy = rng.uniform(bounds.y0 + 2.0, bounds.y1 - 2.0)
            shape = _random_shape(rng, cx, cy, fam)
            if _inside(shape, bounds) and _protected_ok(shape, keep, PROTECT_RADIUS):
                out.append(shape)
                break
        else:
            raise InfeasiblePlacement(f"obstacle {k}: no valid placement in {MAX_ATTEMPTS} attempts")
    return out


def generate_one(family: str, index: int, seed: int, density: Optional[float] = None) -> Scenario:
    if family not in FAMILY_PARAMS:
        raise ValueError(f"unknown family {family!r}; choose from {', '.join(FAMILIES)}")
    fam = FAMILY_PARAMS[family]
    rng = SeededRng(seed).derive(f"{family}:{index}")
    scn_seed = rng.next_u64()
    marker_id = rng.randint(50)
    marker = MarkerDecl(marker_id, Vec3(0.0, 0.0, 0.0), 0.0, 0.15)
    r = rng.uniform(*fam.ring)
    a = rng.uniform(-math.pi, math.pi)
    start = Vec3(_r(r * math.cos(a)), _r(r * math.sin(a)), 0.0)
    drone = DroneSpec(start, 0.0)
    obstacles: list = []
    faults: list = []
    stage = "sil"

    if fam.obstacles[1] > 0:
        if density is None:
            n = fam.obstacles[0] + rng.randint(fam.obstacles[1] - fam.obstacles[0] + 1)
        else:
            n = obstacle_count(density, *fam.obstacles)
        obstacles = place_obstacles(rng, n, start, marker.position, fam)
    if fam.wind_mean > 0:
        wa = rng.uniform(-math.pi, math.pi)
        mean = Vec3(_r(fam.wind_mean * math.cos(wa)), _r(fam.wind_mean * math.sin(wa)), 0.0)
        faults.append(Wind(mean, fam.wind_gust))
    if family == "occlusion":
        if index % FULL_OCCLUSION_EVERY == FULL_OCCLUSION_EVERY - 1:
            faults.append(Occlusion(marker_id, 1.0, 0.0, 120.0))
        else:
            t0 = _r(rng.uniform(*OCCLUSION_START))
            length = _r(rng.uniform(*OCCLUSION_LENGTH))
            faults.append(Occlusion(marker_id, _r(rng.uniform(0.6, 1.0)), t0, _r(t0 + length)))
    waypoints = ()
    if family == "latency":
        # A detour waypoint keeps the flight long enough for >= 500 commands.
        b = a + math.pi / 2.0
        waypoints = (Vec3(_r(r * math.cos(b)), _r(r * math.sin(b)), fam.takeoff),)
        stage = "hilemu"
        delay = LATENCY_SWEEP[index % len(LATENCY_SWEEP)]
        faults.append(CmdLatency(delay, _r(delay / 5.0)))

    scn = Scenario(
        name=f"{family}_{index:03d}",
        seed=scn_seed,
        bounds=BOUNDS,
        markers=(marker,),
        drone=drone,
        mission=MissionPlan(marker_id, fam.takeoff, waypoints),
        obstacles=tuple(obstacles),
        faults=tuple(faults),
        stage=stage,
    )
    # Normalize through the text form so files and objects agree exactly.
    return parse(canonicalize(scn))


def generate(family: str, count: int, seed: int, density: Optional[float] = None) -> list:
    """Deterministic list of ``(filename, Scenario)``."""
    if count < 1:
        raise ValueError("count must be >= 1")
    return [(f"{family}_{i:03d}.scn", generate_one(family, i, seed, density)) for i in range(count)]


def write_corpus(family: str, count: int, seed: int, out_dir, density: Optional[float] = None) -> list:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, scn in generate(family, count, seed, density):
        p = out / name
        with open(p, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(canonicalize(scn))
        paths.append(p)
    return paths
