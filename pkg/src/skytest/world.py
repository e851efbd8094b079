"""Static world description: bounds and solid obstacles."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

from .geom import Vec3


@dataclass(frozen=True)
class Box:
    """Axis-aligned box ``[x0,x1] x [y0,y1] x [z0,z1]`` (closed)."""

    x0: float
    y0: float
    z0: float
    x1: float
    y1: float
    z1: float

    def __post_init__(self):
        if not (self.x0 < self.x1 and self.y0 < self.y1 and self.z0 < self.z1):
            raise ValueError("box must have positive extent on every axis")

    @property
    def lo(self) -> Vec3:
        return Vec3(self.x0, self.y0, self.z0)

    @property
    def hi(self) -> Vec3:
        return Vec3(self.x1, self.y1, self.z1)

    def contains(self, p) -> bool:
        return (
            self.x0 <= p[0] <= self.x1
            and self.y0 <= p[1] <= self.y1
            and self.z0 <= p[2] <= self.z1
        )

    def distance(self, p) -> float:
        """Euclidean distance from ``p`` to the solid (0 inside)."""
        dx = max(self.x0 - p[0], 0.0, p[0] - self.x1)
        dy = max(self.y0 - p[1], 0.0, p[1] - self.y1)
        dz = max(self.z0 - p[2], 0.0, p[2] - self.z1)
        return math.sqrt(dx * dx + dy * dy + dz * dz)

    def aabb(self) -> "Box":
        return self

    def expanded(self, r: float) -> "Box":
        return Box(self.x0 - r, self.y0 - r, self.z0 - r, self.x1 + r, self.y1 + r, self.z1 + r)

    def surface_below(self, p) -> float | None:
        """Height of the top face if ``p`` lies over the footprint above it."""
        if self.x0 <= p[0] <= self.x1 and self.y0 <= p[1] <= self.y1 and p[2] >= self.z1:
            return self.z1
        return None

    def footprint_distance(self, x: float, y: float) -> float:
        dx = max(self.x0 - x, 0.0, x - self.x1)
        dy = max(self.y0 - y, 0.0, y - self.y1)
        return math.hypot(dx, dy)


@dataclass(frozen=True)
class Cylinder:
    """Vertical cylinder standing on z=0 with center (cx, cy)."""

    cx: float
    cy: float
    r: float
    h: float

    def __post_init__(self):
        if not (self.r > 0 and self.h > 0):
            raise ValueError("cylinder radius and height must be positive")

    def contains(self, p) -> bool:
        dx = p[0] - self.cx
        dy = p[1] - self.cy
        return dx * dx + dy * dy <= self.r * self.r and 0.0 <= p[2] <= self.h

    def distance(self, p) -> float:
        radial = max(math.hypot(p[0] - self.cx, p[1] - self.cy) - self.r, 0.0)
        dz = max(-p[2], 0.0, p[2] - self.h)
        return math.hypot(radial, dz)

    def aabb(self) -> Box:
        return Box(self.cx - self.r, self.cy - self.r, 0.0, self.cx + self.r, self.cy + self.r, self.h)

    def expanded(self, r: float) -> "Cylinder":
        # Bottom stays on the ground plane; only radius and height grow.
        return Cylinder(self.cx, self.cy, self.r + r, self.h + r)

    def surface_below(self, p) -> float | None:
        dx = p[0] - self.cx
        dy = p[1] - self.cy
        if dx * dx + dy * dy <= self.r * self.r and p[2] >= self.h:
            return self.h
        return None

    def footprint_distance(self, x: float, y: float) -> float:
        return max(math.hypot(x - self.cx, y - self.cy) - self.r, 0.0)


Shape = Union[Box, Cylinder]


@dataclass(frozen=True)
class WorldModel:
    bounds: Box
    obstacles: tuple = field(default_factory=tuple)

    def contains(self, p) -> bool:
        return self.bounds.contains(p)
