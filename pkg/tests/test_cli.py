from __future__ import annotations

import json
import shutil
import socket
import subprocess
import sys
from pathlib import Path

import pytest
from click.testing import CliRunner

from cxrtutor.cli import main

REPO = Path(__file__).parent.parent
ASSETS = REPO / "assets"
GOLDEN = Path(__file__).parent / "golden"
SCRIPTS = sorted((ASSETS / "scripts").glob("*.json"))


def run_replay(script: Path, tmp_path: Path, extra: list[str] | None = None):
    runner = CliRunner()
    return runner.invoke(
        main,
        [
            "replay",
            str(script),
            "--library",
            str(ASSETS / "cases"),
            "--sessions-dir",
            str(tmp_path / "sessions"),
        ]
        + (extra or []),
    )


@pytest.mark.parametrize("script", SCRIPTS, ids=lambda s: s.stem)
def test_replay_matches_golden(script, tmp_path):
    result = run_replay(script, tmp_path)
    assert result.exit_code == 0, result.output
    golden = (GOLDEN / f"{script.stem}.stdout").read_text()
    assert result.output == golden


def test_replay_byte_identical_across_runs(tmp_path):
    first = run_replay(SCRIPTS[0], tmp_path / "a")
    second = run_replay(SCRIPTS[0], tmp_path / "b")
    assert first.output == second.output


def test_replay_malformed_script_exits_2(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{nope")
    result = run_replay(bad, tmp_path)
    assert result.exit_code == 2


def test_replay_noncontiguous_indices_exits_2(tmp_path):
    script = json.loads(SCRIPTS[0].read_text())
    script["turns"][1]["turn_index"] = 7
    bad = tmp_path / "gap.json"
    bad.write_text(json.dumps(script))
    result = run_replay(bad, tmp_path)
    assert result.exit_code == 2


def test_replay_assertion_failure_exits_1(tmp_path):
    script = json.loads(SCRIPTS[0].read_text())
    script["expected"] = [{"turn": 0, "gate_passed": False}]
    bad = tmp_path / "wrong.json"
    bad.write_text(json.dumps(script))
    result = run_replay(bad, tmp_path)
    assert result.exit_code == 1


def _disable_config(tmp_path: Path, component: str) -> Path:
    path = tmp_path / f"{component}.conf"
    path.write_text(f"ablate.disable_{component} = true\n")
    return path


def _without_expectations(script: Path, tmp_path: Path) -> Path:
    """Script copy stripped of full-config assertions (for ablation runs)."""
    raw = json.loads(script.read_text())
    raw.pop("expected", None)
    out = tmp_path / script.name
    out.write_text(json.dumps(raw))
    return out


def test_disable_bkt_routes_never_fire(tmp_path):
    config = _disable_config(tmp_path, "bkt")
    script = _without_expectations(SCRIPTS[2], tmp_path)  # struggle script
    result = run_replay(script, tmp_path, extra=["--config", str(config)])
    assert result.exit_code == 0, result.output
    for line in result.output.splitlines():
        if line.startswith("{") and '"route_log"' in line:
            record = json.loads(line)
            assert "low_mastery_knowledge" not in record["route_log"]
            assert "low_mastery_reasoning" not in record["route_log"]
            assert all(
                entry["mastery"] == pytest.approx(0.2)
                for entry in record["mastery"].values()
            )


def test_disable_gaze_removes_gaze_sections(tmp_path):
    config = _disable_config(tmp_path, "gaze")
    script = _without_expectations(SCRIPTS[3], tmp_path)
    result = run_replay(script, tmp_path, extra=["--config", str(config)])
    assert result.exit_code == 0, result.output
    for line in result.output.splitlines():
        if line.startswith("{") and '"gaze_present"' in line:
            assert json.loads(line)["gaze_present"] is False


def test_ablate_full_dominates(tmp_path):
    runner = CliRunner()
    result = runner.invoke(
        main,
        [
            "ablate",
            str(ASSETS / "scripts"),
            "--library",
            str(ASSETS / "cases"),
            "--sessions-dir",
            str(tmp_path / "sessions"),
        ],
    )
    assert result.exit_code == 0, result.output
    table_line = next(
        line for line in result.output.splitlines() if line.startswith("{")
    )
    rows = {row["config"]: row for row in json.loads(table_line)["ablation_table"]}
    assert set(rows) == {"full", "-gaze", "-bkt", "-reasoning", "-knowledge"}
    full = rows["full"]["mean_turns_to_resolution"]
    assert full <= min(
        row["mean_turns_to_resolution"] for name, row in rows.items() if name != "full"
    )
    assert rows["full"]["resolution_rate"] == 1.0 or rows["full"]["resolution_rate"] >= max(
        row["resolution_rate"] for name, row in rows.items() if name != "full"
    )
    assert rows["-bkt"]["resolution_rate"] == 0.0


def test_ablate_empty_dir_exits_2(tmp_path):
    empty = tmp_path / "none"
    empty.mkdir()
    runner = CliRunner()
    result = runner.invoke(main, ["ablate", str(empty)])
    assert result.exit_code == 2


def test_ingest_valid_bundles(tmp_path):
    runner = CliRunner()
    dest = tmp_path / "library"
    result = runner.invoke(main, ["ingest", str(ASSETS / "cases"), str(dest)])
    assert result.exit_code == 0, result.output
    assert "ingested 3 bundle(s)" in result.output
    index = json.loads((dest / "index.json").read_text())
    assert len(index) == 3
    assert (dest / "cxr-opacity-001" / "case.json").exists()


def test_ingest_reports_invalid_bundle(tmp_path):
    src = tmp_path / "src"
    shutil.copytree(ASSETS / "cases", src)
    sidecar = src / "cxr-nodule-003" / "case.json"
    broken = json.loads(sidecar.read_text())
    broken["findings"][0]["boxes"][0] = [10, 10, 10, 50]
    sidecar.write_text(json.dumps(broken))
    runner = CliRunner()
    dest = tmp_path / "library"
    result = runner.invoke(main, ["ingest", str(src), str(dest)])
    assert result.exit_code == 1
    assert "ingested 2 bundle(s)" in result.output
    assert "cxr-nodule-003" in result.output


def test_replay_deterministic_across_processes(tmp_path):
    """Cross-process determinism: stub hashing is stable, not per-process."""
    outputs = []
    for run in ("a", "b"):
        proc = subprocess.run(
            [
                sys.executable,
                "-m",
                "cxrtutor.cli",
                "replay",
                str(SCRIPTS[4]),
                "--library",
                str(ASSETS / "cases"),
                "--sessions-dir",
                str(tmp_path / run),
            ],
            capture_output=True,
            text=True,
            cwd=REPO,
        )
        assert proc.returncode == 0, proc.stderr
        outputs.append(proc.stdout)
    assert outputs[0] == outputs[1]


def test_serve_busy_port_reports_error(tmp_path):
    foldaway = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    foldaway.bind(("127.0.0.1", 0))
    port = foldaway.getsockname()[1]
    foldaway.listen(1)
    try:
        proc = subprocess.run(
            [
                sys.executable,
                "-m",
                "cxrtutor.cli",
                "serve",
                "--port",
                str(port),
                "--library",
                str(ASSETS / "cases"),
            ],
            capture_output=True,
            text=True,
            timeout=30,
            cwd=REPO,
        )
    finally:
        foldaway.close()
    assert proc.returncode != 0
    combined = (proc.stdout + proc.stderr).lower()
    assert "error" in combined or "address already in use" in combined
