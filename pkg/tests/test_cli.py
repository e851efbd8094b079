import json
import subprocess
import sys

import pytest

from skytest.cli import EXIT_CORRUPT, EXIT_FAIL, EXIT_OK, EXIT_USAGE, main
from skytest.scenario import canonicalize
from skytest.telemetry import write_log


@pytest.fixture(scope="module")
def workdir(tmp_path_factory, calm_scenario, calm_run):
    d = tmp_path_factory.mktemp("cli")
    (d / "calm.scn").write_text(canonicalize(calm_scenario), encoding="utf-8")
    write_log(calm_run[1], d / "calm.sklog")
    return d


def test_run_prints_metrics_and_writes_log(workdir, capsys, calm_run):
    out = workdir / "run.sklog"
    assert main(["run", str(workdir / "calm.scn"), "--out", str(out)]) == EXIT_OK
    metrics = json.loads(capsys.readouterr().out)
    assert metrics["outcome"] == "Success"
    assert out.read_bytes() == calm_run[1].to_bytes()


def test_run_pretty(workdir, capsys):
    assert main(["run", str(workdir / "calm.scn"), "--pretty"]) == EXIT_OK
    out = capsys.readouterr().out
    assert out.startswith("SKYLOG") and "f:" not in out


def test_replay_ok_and_mismatch(workdir, capsys):
    assert main(["replay", str(workdir / "calm.sklog")]) == EXIT_OK
    assert "replay ok" in capsys.readouterr().out
    lines = (workdir / "calm.sklog").read_text(encoding="utf-8").split("\n")
    i = next(k for k, line in enumerate(lines) if " ch=range " in line)
    lines[i] = lines[i].split(" ", 1)[0] + " ch=range r=7"
    bad = workdir / "bad.sklog"
    bad.write_text("\n".join(lines), encoding="utf-8")
    assert main(["replay", str(bad), "--scenario", str(workdir / "calm.scn")]) == EXIT_FAIL
    assert "replay mismatch" in capsys.readouterr().out


def test_replay_without_scenario_is_usage_error(tmp_path, workdir):
    (tmp_path / "x.sklog").write_bytes((workdir / "calm.sklog").read_bytes())
    assert main(["replay", str(tmp_path / "x.sklog"), "--search", str(tmp_path)]) == EXIT_USAGE


def test_diff_codes(workdir, tmp_path, capsys):
    a = str(workdir / "calm.sklog")
    assert main(["diff", a, a]) == EXIT_OK
    assert "no divergences" in capsys.readouterr().out
    lines = (workdir / "calm.sklog").read_text(encoding="utf-8").split("\n")
    i = next(k for k, line in enumerate(lines) if " ch=range " in line)
    lines[i] = lines[i].split(" ", 1)[0] + " ch=range r=7"
    (tmp_path / "b.sklog").write_text("\n".join(lines), encoding="utf-8")
    assert main(["diff", a, str(tmp_path / "b.sklog")]) == EXIT_FAIL
    assert main(["diff", a, a, "--tol", "range"]) == EXIT_USAGE
    assert main(["diff", a, a, "--tol", "range=-1"]) == EXIT_USAGE


def test_corrupt_inputs(workdir, tmp_path):
    data = (workdir / "calm.sklog").read_bytes()
    (tmp_path / "cut.sklog").write_bytes(data[: len(data) // 2])
    assert main(["diff", str(tmp_path / "cut.sklog"), str(workdir / "calm.sklog")]) == EXIT_CORRUPT
    (tmp_path / "bin.scn").write_bytes(b"seed 1\n\xff\xfe\n")
    assert main(["run", str(tmp_path / "bin.scn")]) == EXIT_CORRUPT


def test_usage_errors(tmp_path):
    assert main(["run", str(tmp_path / "missing.scn")]) == EXIT_USAGE
    (tmp_path / "bad.scn").write_text("seed one\n", encoding="utf-8")
    assert main(["run", str(tmp_path / "bad.scn")]) == EXIT_USAGE
    assert main(["suite", str(tmp_path / "nodir")]) == EXIT_USAGE
    assert main(["suite", str(tmp_path), "--seeds", "0"]) == EXIT_USAGE
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == EXIT_USAGE


def test_suite_gates(workdir, tmp_path, capsys):
    gates = tmp_path / "g.txt"
    gates.write_text("success_rate >= 1\nmean_landing_error <= 0.05\n", encoding="utf-8")
    report = tmp_path / "r.json"
    assert main(["suite", str(workdir), "--gates", str(gates), "--report", str(report)]) == EXIT_OK
    assert "PASS success_rate" in capsys.readouterr().out
    assert json.loads(report.read_text(encoding="utf-8"))["aggregates"]["runs"] == 1
    gates.write_text("max_landing_error < 0\n", encoding="utf-8")
    assert main(["suite", str(workdir), "--gates", str(gates)]) == EXIT_FAIL
    gates.write_text("bogus <= 1\n", encoding="utf-8")
    assert main(["suite", str(workdir), "--gates", str(gates)]) == EXIT_USAGE


def test_empty_suite_ok(tmp_path, capsys):
    assert main(["suite", str(tmp_path)]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["runs"] == 0


def test_gen(tmp_path, capsys):
    assert main(["gen", "cluttered", "--count", "2", "--seed", "4", "--out", str(tmp_path)]) == EXIT_OK
    assert sorted(p.name for p in tmp_path.glob("*.scn")) == ["cluttered_000.scn", "cluttered_001.scn"]
    assert main(["gen", "calm", "--count", "0", "--seed", "4", "--out", str(tmp_path)]) == EXIT_USAGE


def test_module_entry_point(workdir):
    p = subprocess.run(
        [sys.executable, "-m", "skytest.cli", "diff", str(workdir / "calm.sklog"), str(workdir / "calm.sklog")],
        capture_output=True,
        text=True,
    )
    assert p.returncode == 0 and "no divergences" in p.stdout
