"""Bit-exact run log (``.sklog``), reader, and regression diff.

Format, version 1, UTF-8 with LF line endings::

    SKYLOG 1 scenario=<name> seed=<u64> scnhash=<16 hex>
    t=<u64 microseconds> ch=<channel> <key>=<value> ...

Floats are written as ``f:`` plus the 16 lowercase hex digits of their IEEE-754
bit pattern; integers in decimal; anything else is a bare token. Within one
timestamp records follow the order of ``CHANNEL_ORDER``.
"""

from __future__ import annotations

import re
import struct
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

from .geom import fnv1a64

FORMAT_VERSION = 1

CHANNEL_ORDER = (
    "run",
    "truth.pose",
    "fault",
    "gps.fix",
    "range",
    "marker.obs",
    "marker.est",
    "phase",
    "cmd.issue",
    "cmd.deliver",
    "collision",
    "touchdown",
    "end",
)

_CHANNEL_RE = re.compile(r"^[a-z][a-z0-9_.]*$")
_KEY_RE = re.compile(r"^[a-z_][a-z0-9_]*$")
_TOKEN_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_.:\-]*$")
_INT_RE = re.compile(r"^-?[0-9]+$")
_HEX_RE = re.compile(r"^[0-9a-f]{16}$")
_NAME_RE = re.compile(r"^[^\s=]+$")

_pack = struct.Struct("<d").pack
_unpack_u = struct.Struct("<Q").unpack
_pack_u = struct.Struct("<Q").pack
_unpack = struct.Struct("<d").unpack


class CorruptLog(ValueError):
    def __init__(self, index: int, message: str):
        super().__init__(f"record {index}: {message}")
        self.index = index
        self.message = message


def float_to_hex(v: float) -> str:
    return "%016x" % _unpack_u(_pack(v))[0]


def hex_to_float(s: str) -> float:
    return _unpack(_pack_u(int(s, 16)))[0]


def encode_value(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return "f:" + float_to_hex(v)
    if isinstance(v, int):
        return str(v)
    s = str(v)
    if not _TOKEN_RE.match(s) or s.startswith("f:"):
        raise ValueError(f"cannot encode {s!r} as a bare token")
    return s


def decode_value(s: str):
    if s.startswith("f:"):
        h = s[2:]
        if not _HEX_RE.match(h):
            raise ValueError(f"bad float literal {s!r}")
        return hex_to_float(h)
    if _INT_RE.match(s):
        return int(s)
    if not _TOKEN_RE.match(s):
        raise ValueError(f"bad token {s!r}")
    return s


class TelemetryRecord(NamedTuple):
    time_us: int
    channel: str
    fields: dict

    def line(self) -> str:
        parts = [f"t={self.time_us}", f"ch={self.channel}"]
        parts.extend(f"{k}={encode_value(v)}" for k, v in self.fields.items())
        return " ".join(parts)


@dataclass(frozen=True)
class LogHeader:
    scenario: str
    seed: int
    scnhash: str
    version: int = FORMAT_VERSION

    def line(self) -> str:
        return f"SKYLOG {self.version} scenario={self.scenario} seed={self.seed} scnhash={self.scnhash}"


@dataclass
class TelemetryLog:
    header: LogHeader
    records: list = field(default_factory=list)

    def to_text(self) -> str:
        lines = [self.header.line()]
        lines.extend(r.line() for r in self.records)
        return "\n".join(lines) + "\n"

    def to_bytes(self) -> bytes:
        return self.to_text().encode("utf-8")

    def channel(self, name: str) -> list:
        return [r for r in self.records if r.channel == name]


class LogWriter:
    """Append-only record sink enforcing time order."""

    def __init__(self, header: LogHeader):
        if not _NAME_RE.match(header.scenario):
            raise ValueError("scenario name must be a single token without '='")
        self.log = TelemetryLog(header)
        self._last_t = 0

    def write_record(self, time_us: int, channel: str, **fields) -> TelemetryRecord:
        if time_us < self._last_t:
            raise ValueError("records must be appended in nondecreasing time")
        self._last_t = time_us
        rec = TelemetryRecord(time_us, channel, fields)
        self.log.records.append(rec)
        return rec


def write_log(log: TelemetryLog, path) -> None:
    with open(path, "wb") as fh:
        fh.write(log.to_bytes())


def _parse_header(line: str) -> LogHeader:
    parts = line.split(" ")
    if len(parts) != 5 or parts[0] != "SKYLOG":
        raise CorruptLog(-1, "bad header")
    try:
        version = int(parts[1])
    except ValueError:
        raise CorruptLog(-1, "bad header version") from None
    if version != FORMAT_VERSION:
        raise CorruptLog(-1, f"unsupported format version {version}")
    kv = {}
    for p in parts[2:]:
        k, sep, v = p.partition("=")
        if not sep:
            raise CorruptLog(-1, f"bad header field {p!r}")
        kv[k] = v
    if list(kv) != ["scenario", "seed", "scnhash"]:
        raise CorruptLog(-1, "header fields must be scenario, seed, scnhash")
    if not _INT_RE.match(kv["seed"]) or kv["seed"].startswith("-") or not _HEX_RE.match(kv["scnhash"]):
        raise CorruptLog(-1, "bad header seed or hash")
    return LogHeader(kv["scenario"], int(kv["seed"]), kv["scnhash"], version)


def parse_record(line: str, index: int) -> TelemetryRecord:
    parts = line.split(" ")
    if len(parts) < 2 or not parts[0].startswith("t=") or not parts[1].startswith("ch="):
        raise CorruptLog(index, "record must start with t=<us> ch=<name>")
    t = parts[0][2:]
    if not t.isdigit():
        raise CorruptLog(index, f"bad timestamp {t!r}")
    ch = parts[1][3:]
    if not _CHANNEL_RE.match(ch):
        raise CorruptLog(index, f"bad channel {ch!r}")
    fields = {}
    for p in parts[2:]:
        k, sep, v = p.partition("=")
        if not sep or not _KEY_RE.match(k) or k in fields:
            raise CorruptLog(index, f"bad field {p!r}")
        try:
            fields[k] = decode_value(v)
        except ValueError as exc:
            raise CorruptLog(index, str(exc)) from None
    return TelemetryRecord(int(t), ch, fields)


def parse_log(text: str) -> TelemetryLog:
    if not text:
        raise CorruptLog(-1, "empty log")
    lines = text.split("\n")
    complete = text.endswith("\n")
    if complete:
        lines.pop()
    header = _parse_header(lines[0])
    if len(lines) == 1 and not complete:
        raise CorruptLog(-1, "truncated header")
    log = TelemetryLog(header)
    last = 0
    body = lines[1:]
    for i, line in enumerate(body):
        if i == len(body) - 1 and not complete:
            raise CorruptLog(i, "truncated record (no trailing newline)")
        rec = parse_record(line, i)
        if rec.time_us < last:
            raise CorruptLog(i, "time goes backwards")
        last = rec.time_us
        log.records.append(rec)
    return log


def read_log(path) -> TelemetryLog:
    with open(path, "rb") as fh:
        data = fh.read()
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise CorruptLog(-1, f"not UTF-8: {exc}") from None
    return parse_log(text)


def render_pretty(log: TelemetryLog) -> str:
    """Human-readable view with decimal floats. Not round-trippable."""
    out = [log.header.line()]
    for r in log.records:
        vals = " ".join(f"{k}={v!r}" if isinstance(v, float) else f"{k}={v}" for k, v in r.fields.items())
        out.append(f"{r.time_us / 1e6:10.6f} {r.channel:<12} {vals}".rstrip())
    return "\n".join(out) + "\n"


# -- diff ---------------------------------------------------------------------


class Divergence(NamedTuple):
    kind: str  # header | missing_in_a | missing_in_b | fields | value
    time_us: int
    channel: str
    occurrence: int
    key: str
    a: object
    b: object
    index_a: int
    index_b: int

    def describe(self) -> str:
        where = f"t={self.time_us} ch={self.channel}#{self.occurrence}"
        if self.kind == "value":
            return f"{where} {self.key}: {self.a!r} != {self.b!r} (records {self.index_a}/{self.index_b})"
        return f"{where} {self.kind} {self.key} a={self.a!r} b={self.b!r}"


@dataclass
class DiffReport:
    divergences: list
    total: int

    @property
    def empty(self) -> bool:
        return self.total == 0

    def __bool__(self) -> bool:
        return not self.empty


def _aligned(records) -> dict:
    seen: dict = {}
    out = {}
    for i, r in enumerate(records):
        k = (r.time_us, r.channel)
        n = seen.get(k, 0)
        seen[k] = n + 1
        out[(r.time_us, r.channel, n)] = (i, r)
    return out


def _numeric(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def diff(log_a: TelemetryLog, log_b: TelemetryLog, tolerances: Optional[dict] = None, max_report: int = 20) -> DiffReport:
    """Align records on (time, channel, occurrence) and compare fields.

    Numeric fields pass when ``|a - b| <= tolerance[channel]`` (default 0,
    i.e. exact). Only the first ``max_report`` divergences are kept.
    """
    if log_a.header.version != log_b.header.version:
        raise ValueError("cannot diff logs of different format versions")
    tol = tolerances or {}
    found: list = []
    total = 0

    def add(d: Divergence):
        nonlocal total
        total += 1
        if len(found) < max_report:
            found.append(d)

    ha, hb = log_a.header, log_b.header
    for key in ("scenario", "seed", "scnhash"):
        va, vb = getattr(ha, key), getattr(hb, key)
        if va != vb:
            add(Divergence("header", 0, "header", 0, key, va, vb, -1, -1))

    A = _aligned(log_a.records)
    B = _aligned(log_b.records)
    keys = sorted(set(A) | set(B), key=lambda k: (k[0], A[k][0] if k in A else B[k][0]))
    for k in keys:
        t, ch, occ = k
        if k not in B:
            ia, ra = A[k]
            add(Divergence("missing_in_b", t, ch, occ, "", ra.fields, None, ia, -1))
            continue
        if k not in A:
            ib, rb = B[k]
            add(Divergence("missing_in_a", t, ch, occ, "", None, rb.fields, -1, ib))
            continue
        ia, ra = A[k]
        ib, rb = B[k]
        if list(ra.fields) != list(rb.fields):
            add(Divergence("fields", t, ch, occ, "", list(ra.fields), list(rb.fields), ia, ib))
            continue
        eps = tol.get(ch, 0.0)
        for name, va in ra.fields.items():
            vb = rb.fields[name]
            if _numeric(va) and _numeric(vb):
                same = va == vb if eps == 0 else abs(va - vb) <= eps
                if not same and isinstance(va, float) and va != va and vb != vb:
                    same = True  # NaN vs NaN
            else:
                same = va == vb
            if not same:
                add(Divergence("value", t, ch, occ, name, va, vb, ia, ib))
    return DiffReport(found, total)


def hash_hex(data: bytes) -> str:
    return "%016x" % fnv1a64(data)
