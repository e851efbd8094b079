"""Grid A*, RRT* and shortcut smoothing over an occupancy grid."""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np

from .geom import SeededRng, Vec3
from .mapping import OccupancyGrid


class PlanningError(Exception):
    pass


class NoPath(PlanningError):
    pass


class StartOccupied(PlanningError):
    pass


class GoalOccupied(PlanningError):
    pass


def path_cost(waypoints) -> float:
    return math.fsum(math.dist(a, b) for a, b in zip(waypoints, waypoints[1:]))


@dataclass(frozen=True)
class Path:
    waypoints: tuple
    cost: float

    @classmethod
    def from_waypoints(cls, waypoints) -> "Path":
        wps = []
        for w in waypoints:
            w = Vec3(float(w[0]), float(w[1]), float(w[2]))
            if not wps or w != wps[-1]:
                wps.append(w)
        return cls(tuple(wps), path_cost(wps))

    def __len__(self) -> int:
        return len(self.waypoints)


@dataclass(frozen=True)
class PlannerConfig:
    kind: str = "rrtstar"  # straight | astar | rrtstar
    connectivity: int = 26
    max_iterations: int = 4000
    step: float = 1.0
    goal_bias: float = 0.1
    gamma: float = 8.0
    inflation: float = 0.5
    smoothing: bool = True
    smooth_passes: int = 60

    def __post_init__(self):
        if self.kind not in ("straight", "astar", "rrtstar"):
            raise ValueError(f"unknown planner kind {self.kind!r}")
        if self.connectivity not in (6, 26):
            raise ValueError("connectivity must be 6 or 26")
        if not 0.0 <= self.goal_bias <= 1.0:
            raise ValueError("goal_bias must be in [0, 1]")
        if not self.step > 0:
            raise ValueError("step must be positive")
        if self.max_iterations < 1 or self.smooth_passes < 0:
            raise ValueError("iteration budgets must be positive")
        if self.inflation < 0 or self.gamma <= 0:
            raise ValueError("inflation must be >= 0 and gamma > 0")


def _offsets(connectivity: int):
    out = []
    for d in itertools.product((-1, 0, 1), repeat=3):
        n = abs(d[0]) + abs(d[1]) + abs(d[2])
        if n == 0 or (connectivity == 6 and n > 1):
            continue
        out.append((d, n))
    return out


def astar(grid: OccupancyGrid, start, goal, cfg: PlannerConfig = PlannerConfig()) -> Path:
    """Optimal voxel-center path under Euclidean edge costs.

    Open-list order is (f, -g, key): among equal f the deeper node wins, then
    the lexicographically smaller key.
    """
    s = grid.key_of(start)
    t = grid.key_of(goal)
    for k, what in ((s, "start"), (t, "goal")):
        if not grid.key_in_bounds(k):
            raise ValueError(f"{what} outside grid bounds")
    if s in grid.occupied:
        raise StartOccupied(f"start voxel {s} occupied")
    if t in grid.occupied:
        raise GoalOccupied(f"goal voxel {t} occupied")
    r = grid.resolution
    step_cost = {1: r, 2: r * math.sqrt(2.0), 3: r * math.sqrt(3.0)}
    nbrs = [(d[0], d[1], d[2], step_cost[n]) for d, n in _offsets(cfg.connectivity)]
    occ = grid.occupied
    lo, hi = grid.kmin, grid.kmax
    tx, ty, tz = t

    def h(k):
        return r * math.sqrt((k[0] - tx) ** 2 + (k[1] - ty) ** 2 + (k[2] - tz) ** 2)

    g = {s: 0.0}
    parent = {s: None}
    closed = set()
    heap = [(h(s), -0.0, s)]
    while heap:
        _, ng, k = heapq.heappop(heap)
        if k in closed:
            continue
        if k == t:
            break
        closed.add(k)
        gk = -ng
        kx, ky, kz = k
        for dx, dy, dz, c in nbrs:
            nx, ny, nz = kx + dx, ky + dy, kz + dz
            if not (lo[0] <= nx <= hi[0] and lo[1] <= ny <= hi[1] and lo[2] <= nz <= hi[2]):
                continue
            nk = (nx, ny, nz)
            if nk in occ or nk in closed:
                continue
            cand = gk + c
            old = g.get(nk)
            if old is None or cand < old:
                g[nk] = cand
                parent[nk] = k
                heapq.heappush(heap, (cand + h(nk), -cand, nk))
    else:
        raise NoPath(f"no path from {s} to {t}")
    keys = []
    k = t
    while k is not None:
        keys.append(k)
        k = parent[k]
    keys.reverse()
    return Path.from_waypoints([grid.center(k) for k in keys])


def _point_free(grid: OccupancyGrid, p) -> bool:
    return grid.bounds.contains(p) and grid.key_of(p) not in grid.occupied


def rrt_star(grid: OccupancyGrid, start, goal, cfg: PlannerConfig = PlannerConfig(), rng: Optional[SeededRng] = None) -> Path:
    """RRT* with goal bias; returns the cheapest goal-connected path found.

    Every iteration draws the same number of values regardless of budget, so
    a run with budget N is a prefix of a run with budget M > N.
    """
    rng = rng if rng is not None else SeededRng(0)
    start = tuple(float(v) for v in start)
    goal = tuple(float(v) for v in goal)
    if not _point_free(grid, start):
        raise StartOccupied(f"start {start} blocked")
    if not _point_free(grid, goal):
        raise GoalOccupied(f"goal {goal} blocked")

    b = grid.bounds
    lo = (b.x0, b.y0, b.z0)
    hi = (b.x1, b.y1, b.z1)
    cap = cfg.max_iterations + 1
    P = np.empty((cap, 3))
    P[0] = start
    pts = [start]
    cost = [0.0]
    parent = [-1]
    children: list[list[int]] = [[]]
    goal_links: list[int] = []
    n = 1
    step = cfg.step
    r_cap = 4.0 * step
    seg_free = grid.segment_free

    for _ in range(cfg.max_iterations):
        gb = rng.uniform()
        sx, sy, sz = rng.uniform(lo[0], hi[0]), rng.uniform(lo[1], hi[1]), rng.uniform(lo[2], hi[2])
        x = goal if gb < cfg.goal_bias else (sx, sy, sz)
        diff = P[:n] - x
        d2 = np.einsum("ij,ij->i", diff, diff)
        near_i = int(np.argmin(d2))
        dist = math.sqrt(float(d2[near_i]))
        if dist == 0.0:
            continue
        q = pts[near_i]
        if dist > step:
            f = step / dist
            x = (q[0] + (x[0] - q[0]) * f, q[1] + (x[1] - q[1]) * f, q[2] + (x[2] - q[2]) * f)
        if not _point_free(grid, x) or not seg_free(q, x):
            continue
        radius = min(cfg.gamma * (math.log(n + 1) / (n + 1)) ** (1.0 / 3.0), r_cap)
        diff = P[:n] - x
        dn = np.sqrt(np.einsum("ij,ij->i", diff, diff))
        near = np.nonzero(dn <= radius)[0].tolist()
        # Choose the cheapest collision-free parent among the near set.
        best_p, best_c = near_i, cost[near_i] + math.dist(q, x)
        cands = sorted((cost[i] + float(dn[i]), i) for i in near if i != near_i)
        for c, i in cands:
            if c >= best_c:
                break
            if seg_free(pts[i], x):
                best_p, best_c = i, c
                break
        new = n
        P[new] = x
        pts.append(x)
        cost.append(best_c)
        parent.append(best_p)
        children.append([])
        children[best_p].append(new)
        n += 1
        # Rewire neighbours through the new node.
        for i in near:
            if i == best_p:
                continue
            c = best_c + float(dn[i])
            if c < cost[i] and seg_free(x, pts[i]):
                children[parent[i]].remove(i)
                parent[i] = new
                children[new].append(i)
                delta = c - cost[i]
                stack = [i]
                while stack:
                    j = stack.pop()
                    cost[j] += delta
                    stack.extend(children[j])
        if math.dist(x, goal) <= step and seg_free(x, goal):
            goal_links.append(new)

    if not goal_links:
        raise NoPath("RRT* found no goal connection within budget")
    best = min(goal_links, key=lambda i: (cost[i] + math.dist(pts[i], goal), i))
    chain = []
    i = best
    while i != -1:
        chain.append(pts[i])
        i = parent[i]
    chain.reverse()
    chain.append(goal)
    return Path.from_waypoints(chain)


def _sum_exact(segs) -> Fraction:
    return sum((Fraction(s) for s in segs), Fraction(0))


def shortcut_smooth(path: Path, grid: OccupancyGrid, rng: SeededRng, passes: int = 60) -> Path:
    """Random shortcutting; never increases cost and never adds a collision."""
    wps = list(path.waypoints)
    for _ in range(passes):
        m = len(wps)
        if m < 3:
            break
        i = rng.randint(m - 2)
        j = i + 2 + rng.randint(m - i - 2)
        a, b = wps[i], wps[j]
        straight = math.dist(a, b)
        detour = [math.dist(p, q) for p, q in zip(wps[i:j], wps[i + 1 : j + 1])]
        if Fraction(straight) <= _sum_exact(detour) and grid.segment_free(a, b):
            wps = wps[: i + 1] + wps[j:]
    if len(wps) == len(path.waypoints):
        return path
    return Path.from_waypoints(wps)


def straight_line(start, goal) -> Path:
    return Path.from_waypoints([start, goal])


def plan(grid: OccupancyGrid, start, goal, cfg: PlannerConfig, rng: SeededRng) -> Path:
    if cfg.kind == "straight":
        return straight_line(start, goal)
    if cfg.kind == "astar":
        return astar(grid, start, goal, cfg)
    return rrt_star(grid, start, goal, cfg, rng)
