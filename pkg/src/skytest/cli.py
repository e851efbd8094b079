"""Command line entry point: ``skytest run|suite|replay|diff|gen``.

Exit codes: 0 ok, 1 gate/replay/diff failure, 2 usage or parse error,
3 corrupt input (unreadable log or bad bytes).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import worldgen
from .harness import PRESETS, ScenarioNotFound, UnknownMetric, aggregate, evaluate_gates, parse_gates, replay, run_scenario, run_suite
from .scenario import ParseError, ScenarioInvalid, parse_file
from .telemetry import CorruptLog, diff, read_log, render_pretty, write_log

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2
EXIT_CORRUPT = 3


def _err(msg: str) -> None:
    print(f"skytest: {msg}", file=sys.stderr)


def _load_scenario(path):
    try:
        return parse_file(path)
    except UnicodeDecodeError as exc:
        raise _Exit(EXIT_CORRUPT, f"{path}: not UTF-8 ({exc.reason})") from None
    except (ParseError, ScenarioInvalid) as exc:
        raise _Exit(EXIT_USAGE, f"{path}: {exc}") from None
    except OSError as exc:
        raise _Exit(EXIT_USAGE, f"{path}: {exc.strerror}") from None


class _Exit(Exception):
    def __init__(self, code: int, msg: str = ""):
        super().__init__(msg)
        self.code = code
        self.msg = msg


def cmd_run(args) -> int:
    scn = _load_scenario(args.scenario)
    metrics, log = run_scenario(scn, preset=args.preset, seed=args.seed, stage=args.stage)
    if args.out:
        write_log(log, args.out)
    if args.pretty:
        sys.stdout.write(render_pretty(log))
    print(json.dumps(metrics.to_dict(), sort_keys=True))
    return EXIT_OK


def cmd_suite(args) -> int:
    src = Path(args.directory)
    if not src.is_dir():
        raise _Exit(EXIT_USAGE, f"{src}: not a directory")
    gates = None
    if args.gates:
        try:
            gates = parse_gates(Path(args.gates).read_text(encoding="utf-8"))
        except ParseError as exc:
            raise _Exit(EXIT_USAGE, f"{args.gates}: {exc}") from None
        known = aggregate([])
        for g in gates:
            if g.metric not in known:
                raise _Exit(EXIT_USAGE, f"unknown metric {g.metric!r} in gate spec")
    report = run_suite(src, seeds=args.seeds, preset=args.preset, stage=args.stage)
    ok = True
    if gates is not None:
        try:
            ok, results = evaluate_gates(report, gates)
        except UnknownMetric as exc:
            raise _Exit(EXIT_USAGE, f"unknown metric {exc.args[0]!r} in gate spec") from None
        for r in results:
            print(r.line())
    for name, msg in report.errors:
        _err(f"{name}: {msg}")
    text = report.to_json()
    if args.report:
        Path(args.report).write_text(text, encoding="utf-8")
    else:
        agg = report.aggregates()
        print(json.dumps(agg, sort_keys=True))
    return EXIT_OK if ok else EXIT_FAIL


def cmd_replay(args) -> int:
    scn = _load_scenario(args.scenario) if args.scenario else None
    dirs = [Path(d) for d in args.search] if args.search else None
    try:
        ok, original, fresh = replay(args.log, scenario=scn, search_dirs=dirs)
    except ScenarioNotFound as exc:
        raise _Exit(EXIT_USAGE, str(exc)) from None
    if ok:
        print(f"replay ok: {len(original.records)} records identical")
        return EXIT_OK
    rep = diff(original, fresh)
    print(f"replay mismatch: {rep.total} divergences")
    for d in rep.divergences:
        print("  " + d.describe())
    return EXIT_FAIL


def _parse_tol(items) -> dict:
    out = {}
    for item in items or ():
        ch, sep, val = item.partition("=")
        try:
            if not sep or not ch:
                raise ValueError
            out[ch] = float(val)
        except ValueError:
            raise _Exit(EXIT_USAGE, f"bad --tol {item!r}; expected channel=value") from None
        if out[ch] < 0:
            raise _Exit(EXIT_USAGE, f"bad --tol {item!r}; tolerance must be >= 0")
    return out


def cmd_diff(args) -> int:
    tol = _parse_tol(args.tol)
    a, b = read_log(args.a), read_log(args.b)
    try:
        rep = diff(a, b, tol)
    except ValueError as exc:
        raise _Exit(EXIT_CORRUPT, str(exc)) from None
    if rep.empty:
        print("no divergences")
        return EXIT_OK
    print(f"{rep.total} divergences")
    for d in rep.divergences:
        print("  " + d.describe())
    return EXIT_FAIL


def cmd_gen(args) -> int:
    try:
        paths = worldgen.write_corpus(args.family, args.count, args.seed, args.out, density=args.density)
    except ValueError as exc:
        raise _Exit(EXIT_USAGE, str(exc)) from None
    for p in paths:
        print(p)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="skytest", description="Deterministic landing-mission test bench.")
    sub = ap.add_subparsers(dest="command", required=True)
    presets = sorted(PRESETS)

    p = sub.add_parser("run", help="run one scenario")
    p.add_argument("scenario")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--preset", choices=presets, default=None)
    p.add_argument("--stage", choices=("sil", "hilemu"), default=None)
    p.add_argument("--out", default=None, help="write the .sklog here")
    p.add_argument("--pretty", action="store_true", help="print the log with decimal floats")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("suite", help="run every .scn in a directory")
    p.add_argument("directory")
    p.add_argument("--seeds", type=int, default=1)
    p.add_argument("--preset", choices=presets, default=None)
    p.add_argument("--stage", choices=("sil", "hilemu"), default=None)
    p.add_argument("--report", default=None, help="write the JSON report here")
    p.add_argument("--gates", default=None, help="gate file, one '<metric> <op> <value>' per line")
    p.set_defaults(func=cmd_suite)

    p = sub.add_parser("replay", help="re-execute a log and verify byte equality")
    p.add_argument("log")
    p.add_argument("--scenario", default=None, help="scenario file (default: search by hash)")
    p.add_argument("--search", action="append", default=None, help="directory to search for the scenario")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("diff", help="compare two logs")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--tol", action="append", default=None, metavar="CH=VAL")
    p.set_defaults(func=cmd_diff)

    p = sub.add_parser("gen", help="generate a scenario corpus")
    p.add_argument("family", choices=worldgen.FAMILIES)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--density", type=float, default=None)
    p.set_defaults(func=cmd_gen)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "seeds", 1) < 1:
        _err("--seeds must be >= 1")
        return EXIT_USAGE
    if getattr(args, "seed", None) is not None and args.seed < 0:
        _err("--seed must be >= 0")
        return EXIT_USAGE
    try:
        return args.func(args)
    except _Exit as exc:
        if exc.msg:
            _err(exc.msg)
        return exc.code
    except CorruptLog as exc:
        _err(f"corrupt log: {exc}")
        return EXIT_CORRUPT
    except OSError as exc:
        _err(f"{exc.filename}: {exc.strerror}")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
