"""Declarative fault schedule, delayed command channel and latency statistics."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Union

from .geom import ZERO, SeededRng, Vec3, rng_next_gaussian
from .world import Box, Cylinder

WHOLE_RUN = (0.0, math.inf)


def _check_window(t0: float, t1: float) -> None:
    if not (t0 >= 0 and t0 < t1):
        raise ValueError(f"fault window must satisfy 0 <= t_start < t_end, got [{t0}, {t1}]")


@dataclass(frozen=True)
class GpsDropout:
    t_start: float
    t_end: float

    def __post_init__(self):
        _check_window(self.t_start, self.t_end)


@dataclass(frozen=True)
class GpsDrift:
    rate: float
    t_start: float
    t_end: float

    def __post_init__(self):
        _check_window(self.t_start, self.t_end)
        if self.rate < 0:
            raise ValueError("drift rate must be nonnegative")


@dataclass(frozen=True)
class Occlusion:
    marker_id: int
    fraction: float
    t_start: float
    t_end: float

    def __post_init__(self):
        _check_window(self.t_start, self.t_end)
        if not 0.0 <= self.fraction <= 1.0:
            raise ValueError("occlusion fraction must be in [0, 1]")


@dataclass(frozen=True)
class Lighting:
    factor: float
    t_start: float
    t_end: float

    def __post_init__(self):
        _check_window(self.t_start, self.t_end)
        if not 0.0 <= self.factor <= 1.0:
            raise ValueError("lighting factor must be in [0, 1]")


@dataclass(frozen=True)
class Wind:
    mean: Vec3
    gust_sigma: float
    t_start: float = WHOLE_RUN[0]
    t_end: float = WHOLE_RUN[1]

    def __post_init__(self):
        _check_window(self.t_start, self.t_end)
        if self.gust_sigma < 0:
            raise ValueError("gust sigma must be nonnegative")


@dataclass(frozen=True)
class CmdLatency:
    delay: float
    jitter: float
    t_start: float = WHOLE_RUN[0]
    t_end: float = WHOLE_RUN[1]

    def __post_init__(self):
        _check_window(self.t_start, self.t_end)
        if self.delay < 0 or self.jitter < 0:
            raise ValueError("delay and jitter must be nonnegative")


@dataclass(frozen=True)
class StaleObstacle:
    """Obstacle present in the world but missing from the planner's map."""

    shape: Union[Box, Cylinder]
    t_start: float = WHOLE_RUN[0]
    t_end: float = WHOLE_RUN[1]


FaultEvent = Union[GpsDropout, GpsDrift, Occlusion, Lighting, Wind, CmdLatency, StaleObstacle]


@dataclass(frozen=True)
class EffectiveConditions:
    gps_available: bool = True
    gps_drift_rate: Optional[float] = None
    occlusion: dict = field(default_factory=dict)
    lighting_factor: float = 1.0
    wind_mean: Vec3 = ZERO
    wind_gust_sigma: float = 0.0
    cmd_delay: float = 0.0
    cmd_jitter: float = 0.0

    def occlusion_for(self, marker_id: int) -> float:
        return self.occlusion.get(marker_id, 0.0)


NOMINAL = EffectiveConditions()


def faults_active(schedule, now: float) -> EffectiveConditions:
    """Evaluate the schedule at ``now``; same-kind overlaps combine worst-case."""
    if not schedule:
        return NOMINAL
    available = True
    drift = None
    occ: dict = {}
    light = 1.0
    wind_mean = ZERO
    gust = 0.0
    delay = 0.0
    jitter = 0.0
    for ev in schedule:
        if not (ev.t_start <= now <= ev.t_end):
            continue
        if isinstance(ev, GpsDropout):
            available = False
        elif isinstance(ev, GpsDrift):
            drift = ev.rate if drift is None else max(drift, ev.rate)
        elif isinstance(ev, Occlusion):
            occ[ev.marker_id] = max(occ.get(ev.marker_id, 0.0), ev.fraction)
        elif isinstance(ev, Lighting):
            light = min(light, ev.factor)
        elif isinstance(ev, Wind):
            if ev.mean.norm() > wind_mean.norm():
                wind_mean = ev.mean
            gust = max(gust, ev.gust_sigma)
        elif isinstance(ev, CmdLatency):
            delay = max(delay, ev.delay)
            jitter = max(jitter, ev.jitter)
    return EffectiveConditions(available, drift, occ, light, wind_mean, gust, delay, jitter)


def seconds_to_us(t: float) -> int:
    return int(round(t * 1_000_000))


class Delivery(NamedTuple):
    seq: int
    issue_us: int
    deliver_us: int
    cmd: object


class DelayedChannel:
    """FIFO command link with base delay plus half-normal jitter.

    Times are kept in integer microseconds. A command is due at
    ``issue + delay + |N(0, jitter)|``, pushed back if needed so it is never
    due before its predecessor.
    """

    def __init__(self, delay: float = 0.0, jitter: float = 0.0, rng: Optional[SeededRng] = None):
        if delay < 0 or jitter < 0:
            raise ValueError("delay and jitter must be nonnegative")
        self.delay = delay
        self.jitter = jitter
        self.rng = rng if rng is not None else SeededRng(0)
        self.queue: deque = deque()
        self.seq = 0
        self.last_due_us = 0

    def push(self, cmd, now: float, now_us: Optional[int] = None) -> Delivery:
        issue_us = seconds_to_us(now) if now_us is None else now_us
        extra = abs(rng_next_gaussian(self.rng, 0.0, self.jitter))
        due = issue_us + seconds_to_us(self.delay + extra)
        due = max(due, self.last_due_us)
        self.last_due_us = due
        item = Delivery(self.seq, issue_us, due, cmd)
        self.seq += 1
        self.queue.append(item)
        return item

    def poll(self, now: float, now_us: Optional[int] = None) -> list:
        t = seconds_to_us(now) if now_us is None else now_us
        out = []
        q = self.queue
        while q and q[0].deliver_us <= t:
            d = q.popleft()
            out.append(d._replace(deliver_us=t))
        return out

    def __len__(self) -> int:
        return len(self.queue)


def channel_push(chan: DelayedChannel, cmd, now: float) -> Delivery:
    return chan.push(cmd, now)


def channel_poll(chan: DelayedChannel, now: float) -> list:
    return chan.poll(now)


class UnpairedRecords(ValueError):
    pass


def nearest_rank(sorted_values, p: float):
    n = len(sorted_values)
    rank = max(1, math.ceil(p / 100.0 * n))
    return sorted_values[rank - 1]


def latency_stats(delays_us) -> dict:
    if not delays_us:
        raise UnpairedRecords("no paired issue/delivery records")
    v = sorted(delays_us)
    return {
        "count": len(v),
        "p50": nearest_rank(v, 50) / 1e6,
        "p95": nearest_rank(v, 95) / 1e6,
        "p99": nearest_rank(v, 99) / 1e6,
        "max": v[-1] / 1e6,
    }


def latency_pairs(records) -> list:
    """Match ``cmd.issue`` / ``cmd.deliver`` records by ``seq``.

    Commands still queued when a run ends have no delivery and are skipped;
    a delivery without an issue is an error.
    """
    issued = {}
    delays = []
    for rec in records:
        if rec.channel == "cmd.issue":
            issued[rec.fields["seq"]] = rec.time_us
        elif rec.channel == "cmd.deliver":
            seq = rec.fields["seq"]
            if seq not in issued:
                raise UnpairedRecords(f"delivery of seq {seq} has no issue record")
            delays.append(rec.time_us - issued.pop(seq))
    return delays


def measure_latency(log) -> dict:
    records = getattr(log, "records", log)
    return latency_stats(latency_pairs(records))
