"""Deterministic software-in-the-loop test bench for marker-based drone landing."""

from .harness import PRESETS, RunMetrics, SuiteReport, evaluate_gates, replay, run_scenario, run_suite
from .scenario import ParseError, Scenario, canonicalize, parse, parse_file
from .telemetry import diff, read_log, write_log

__all__ = [
    "PRESETS",
    "ParseError",
    "RunMetrics",
    "Scenario",
    "SuiteReport",
    "canonicalize",
    "diff",
    "evaluate_gates",
    "parse",
    "parse_file",
    "read_log",
    "replay",
    "run_scenario",
    "run_suite",
    "write_log",
]

__version__ = "0.1.0"
