"""Uniform hashed voxel occupancy grid.

Voxel keys are origin-aligned: key ``k`` covers ``[k*res, (k+1)*res)`` on each
axis and its center is ``(k + 0.5) * res``. A voxel is occupied iff its center
lies inside an inserted shape.
"""

from __future__ import annotations

import math
from typing import Iterable, NamedTuple, Optional

from .geom import Vec3
from .world import Box, Shape

# Approximate CPython cost of one stored key: a 3-int tuple (64 B) plus its
# share of the hash-set table (~24 B at typical load).
BYTES_PER_VOXEL = 88


class OutOfBounds(ValueError):
    pass


class Hit(NamedTuple):
    voxel: tuple
    distance: float


class OccupancyGrid:
    def __init__(self, bounds: Box, resolution: float = 0.2):
        if not resolution > 0:
            raise ValueError("resolution must be positive")
        self.bounds = bounds
        self.resolution = float(resolution)
        self.occupied: set = set()
        self.shapes: list = []
        r = self.resolution
        # Keys whose centers lie inside the closed bounds.
        self.kmin = tuple(math.ceil(lo / r - 0.5) for lo in (bounds.x0, bounds.y0, bounds.z0))
        self.kmax = tuple(math.floor(hi / r - 0.5) for hi in (bounds.x1, bounds.y1, bounds.z1))

    # -- keys ---------------------------------------------------------------
    def key_of(self, p) -> tuple:
        r = self.resolution
        return (math.floor(p[0] / r), math.floor(p[1] / r), math.floor(p[2] / r))

    def center(self, key) -> Vec3:
        r = self.resolution
        return Vec3((key[0] + 0.5) * r, (key[1] + 0.5) * r, (key[2] + 0.5) * r)

    def key_in_bounds(self, key) -> bool:
        lo, hi = self.kmin, self.kmax
        return lo[0] <= key[0] <= hi[0] and lo[1] <= key[1] <= hi[1] and lo[2] <= key[2] <= hi[2]

    def occupied_at(self, p) -> bool:
        return self.key_of(p) in self.occupied

    def __len__(self) -> int:
        return len(self.occupied)

    # -- building -------------------------------------------------------------
    def candidate_keys(self, shape: Shape) -> Iterable[tuple]:
        box = shape.aabb()
        r = self.resolution
        ranges = [
            range(math.floor(lo / r) - 1, math.floor(hi / r) + 2)
            for lo, hi in ((box.x0, box.x1), (box.y0, box.y1), (box.z0, box.z1))
        ]
        for i in ranges[0]:
            for j in ranges[1]:
                for k in ranges[2]:
                    yield (i, j, k)

    def insert_obstacle(self, shape: Shape, clip: bool = False) -> "OccupancyGrid":
        """Mark every voxel whose center is inside ``shape``.

        Raises OutOfBounds unless the shape's bounding box lies within the grid
        bounds; with ``clip=True`` the shape is instead cut at the bounds.
        """
        box = shape.aabb()
        b = self.bounds
        if not clip and not (b.contains(box.lo) and b.contains(box.hi)):
            raise OutOfBounds(f"{shape!r} exceeds grid bounds")
        r = self.resolution
        occ = self.occupied
        for key in self.candidate_keys(shape):
            c = ((key[0] + 0.5) * r, (key[1] + 0.5) * r, (key[2] + 0.5) * r)
            if shape.contains(c) and self.key_in_bounds(key):
                occ.add(key)
        self.shapes.append(shape)
        return self

    @classmethod
    def from_shapes(cls, bounds: Box, resolution: float, shapes, inflation: float = 0.0) -> "OccupancyGrid":
        grid = cls(bounds, resolution)
        for s in shapes:
            if inflation > 0:
                grid.insert_obstacle(s.expanded(inflation), clip=True)
            else:
                grid.insert_obstacle(s)
        return grid

    # -- queries --------------------------------------------------------------
    def raycast(self, origin, direction, max_range: float = math.inf) -> Optional[Hit]:
        """First occupied voxel along the ray (3D DDA), or None on a miss.

        The distance reported is to the face through which the ray enters the
        voxel; a ray starting inside an occupied voxel hits at distance 0.
        """
        n = math.sqrt(direction[0] ** 2 + direction[1] ** 2 + direction[2] ** 2)
        if abs(n - 1.0) > 1e-9:
            raise ValueError("direction must be a unit vector")
        occ = self.occupied
        key = list(self.key_of(origin))
        if tuple(key) in occ:
            return Hit(tuple(key), 0.0)
        if not occ:
            return None
        r = self.resolution
        step = [0, 0, 0]
        t_max = [math.inf, math.inf, math.inf]
        t_delta = [math.inf, math.inf, math.inf]
        for a in range(3):
            d = direction[a]
            if d > 0.0:
                step[a] = 1
                t_max[a] = ((key[a] + 1) * r - origin[a]) / d
                t_delta[a] = r / d
            elif d < 0.0:
                step[a] = -1
                t_max[a] = (key[a] * r - origin[a]) / d
                t_delta[a] = -r / d
        lo, hi = self.kmin, self.kmax
        while True:
            if t_max[0] <= t_max[1]:
                a = 0 if t_max[0] <= t_max[2] else 2
            else:
                a = 1 if t_max[1] <= t_max[2] else 2
            t = t_max[a]
            if t > max_range:
                return None
            key[a] += step[a]
            t_max[a] += t_delta[a]
            for b in range(3):
                if (key[b] < lo[b] and step[b] <= 0) or (key[b] > hi[b] and step[b] >= 0):
                    return None
            k = (key[0], key[1], key[2])
            if k in occ:
                return Hit(k, max(t, 0.0))

    def segment_free(self, a, b) -> bool:
        """True when the straight segment a->b crosses no occupied voxel."""
        d = (b[0] - a[0], b[1] - a[1], b[2] - a[2])
        length = math.sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2])
        if length == 0.0:
            return self.key_of(a) not in self.occupied
        u = (d[0] / length, d[1] / length, d[2] / length)
        return self.raycast(a, u, length) is None

    def memory_report(self) -> dict:
        n = len(self.occupied)
        return {
            "voxels": n,
            "bytes_per_voxel": BYTES_PER_VOXEL,
            "bytes_estimate": n * BYTES_PER_VOXEL,
            "resolution": self.resolution,
        }


def insert_obstacle(grid: OccupancyGrid, shape: Shape) -> OccupancyGrid:
    return grid.insert_obstacle(shape)


def raycast(grid: OccupancyGrid, origin, direction, max_range: float = math.inf) -> Optional[Hit]:
    return grid.raycast(origin, direction, max_range)


def memory_report(grid: OccupancyGrid) -> dict:
    return grid.memory_report()
