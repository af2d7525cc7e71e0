"""Command-line entry points: serve, ingest, replay, ablate.

Replay and ablate run scripted learners through the full pipeline on stub
backends with a fixed virtual clock, so their JSON reports are byte-stable
across runs and platforms.
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import click

from .bkt import mastery
from .bundles import load_case_bundle, write_case_bundle
from .config import EngineConfig, load_config
from .domain import StudentTurn
from .errors import CxrTutorError, MalformedSidecar
from .orchestrator import Engine
from .serialize import canonical_json, student_turn_from_dict
from .similarity import build_index

ABLATION_COMPONENTS = ("gaze", "bkt", "reasoning", "knowledge")
FIXED_CLOCK_EPOCH = 1_700_000_000.0


class FixedClock:
    """Frozen wall clock for reproducible reports."""

    def __init__(self, start: float = FIXED_CLOCK_EPOCH):
        self.now = start

    def __call__(self) -> float:
        return self.now


@dataclass
class ScriptedSession:
    case_id: str
    turns: list[StudentTurn]
    expected: list[dict] = field(default_factory=list)


@dataclass
class AblationConfig:
    disable: frozenset[str] = frozenset()

    @property
    def name(self) -> str:
        if not self.disable:
            return "full"
        return "-" + ",".join(sorted(self.disable))

    def apply(self, config: EngineConfig) -> EngineConfig:
        for component in self.disable:
            setattr(config, f"disable_{component}", True)
        return config


def load_script(path: Path) -> ScriptedSession:
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise MalformedSidecar(f"{path}: {exc}") from exc
    if not isinstance(raw, dict) or "case_id" not in raw or "turns" not in raw:
        raise MalformedSidecar(f"{path}: script needs case_id and turns")
    turns = [student_turn_from_dict(t) for t in raw["turns"]]
    indices = [t.turn_index for t in turns]
    if indices != list(range(len(turns))):
        raise MalformedSidecar(f"{path}: turn indices must be contiguous from 0")
    return ScriptedSession(
        case_id=raw["case_id"],
        turns=turns,
        expected=list(raw.get("expected", [])),
    )


def _engine_for(config: EngineConfig, live_backends: bool) -> Engine:
    if not live_backends:
        config.backends_text_mode = "stub"
        config.backends_vision_mode = "stub"
        config.knowledge_base_url = ""  # offline: deterministic fallback path
    return Engine(config, clock=FixedClock())


def _check_expectation(expect: dict, record: dict) -> list[str]:
    failures: list[str] = []
    if "gate_passed" in expect and record["gate_passed"] != expect["gate_passed"]:
        failures.append(
            f"turn {record['turn']}: gate_passed {record['gate_passed']} != {expect['gate_passed']}"
        )
    for route, wanted in expect.get("routes", {}).items():
        got = record["routes"].get(route, False)
        if got != wanted:
            failures.append(f"turn {record['turn']}: route {route} {got} != {wanted}")
    for entry in expect.get("route_log_contains", []):
        if entry not in record["route_log"]:
            failures.append(f"turn {record['turn']}: route_log missing {entry!r}")
    for skill, bound in expect.get("mastery_min", {}).items():
        got = record["mastery"].get(skill, {}).get("mastery", 0.0)
        if got < bound:
            failures.append(f"turn {record['turn']}: mastery[{skill}] {got:.4f} < {bound}")
    for skill, bound in expect.get("mastery_max", {}).items():
        got = record["mastery"].get(skill, {}).get("mastery", 1.0)
        if got > bound:
            failures.append(f"turn {record['turn']}: mastery[{skill}] {got:.4f} > {bound}")
    for label in expect.get("resolved", []):
        if label not in record["resolved"]:
            failures.append(f"turn {record['turn']}: {label!r} not resolved")
    if "completed" in expect and record["completed"] != expect["completed"]:
        failures.append(
            f"turn {record['turn']}: completed {record['completed']} != {expect['completed']}"
        )
    return failures


def run_script(engine: Engine, script: ScriptedSession, session_id: str) -> dict:
    """Run every scripted turn; returns the report payload."""
    session = engine.create_session(script.case_id, session_id=session_id)
    expectations = {e.get("turn"): e for e in script.expected}
    records: list[dict] = []
    failures: list[str] = []
    turns_to_resolution: int | None = None
    for turn in script.turns:
        if session.completed:
            break
        session, response = engine.process_turn(session, turn)
        record = {
            "turn": turn.turn_index,
            "gate_passed": bool(response.focus and response.focus.passed),
            "best_iou": response.focus.best_iou if response.focus else 0.0,
            "routes": {
                "socratic": response.socratic is not None,
                "knowledge": bool(response.knowledge),
                "reasoning": response.reasoning_text is not None,
                "similarity": bool(response.similar_cases),
            },
            "gaze_present": response.gaze is not None,
            "route_log": list(response.route_log),
            "mastery": {
                skill: {"mastery": m, "attempts": a}
                for skill, (m, a) in response.mastery.items()
            },
            "resolved": sorted(session.resolved_findings),
            "completed": session.completed,
            "message": response.message,
        }
        records.append(record)
        if session.completed and turns_to_resolution is None:
            turns_to_resolution = turn.turn_index + 1
        expect = expectations.get(turn.turn_index)
        if expect:
            failures.extend(_check_expectation(expect, record))
    return {
        "case_id": script.case_id,
        "turns_executed": len(records),
        "turns_to_resolution": turns_to_resolution,
        "completed": session.completed,
        "assertion_failures": failures,
        "records": records,
    }


@click.group()
def main():
    """Chest X-ray tutoring engine."""


@main.command()
@click.argument("script_path", type=click.Path(path_type=Path))
@click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path))
@click.option("--library", type=click.Path(path_type=Path), default=None)
@click.option("--live-backends", is_flag=True, default=False)
@click.option("--sessions-dir", type=click.Path(path_type=Path), default=None)
def replay(script_path: Path, config_path, library, live_backends, sessions_dir):
    """Run one scripted session; JSONL records then a summary table."""
    try:
        script = load_script(script_path)
        config = load_config(config_path)
        if library is not None:
            config.library_dir = library
        if sessions_dir is not None:
            config.sessions_dir = sessions_dir
        engine = _engine_for(config, live_backends)
        report = run_script(engine, script, session_id=f"replay-{script_path.stem}")
    except (CxrTutorError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)

    for record in report["records"]:
        click.echo(canonical_json(record))
    summary = {k: v for k, v in report.items() if k != "records"}
    click.echo(canonical_json({"summary": summary}))
    click.echo("turn  gate   routes(s/k/r/sim)  completed")
    for record in report["records"]:
        routes = record["routes"]
        click.echo(
            f"{record['turn']:>4}  {'pass' if record['gate_passed'] else 'FAIL'}   "
            f"{int(routes['socratic'])}/{int(routes['knowledge'])}/"
            f"{int(routes['reasoning'])}/{int(routes['similarity'])}              "
            f"{'yes' if record['completed'] else 'no'}"
        )
    if report["assertion_failures"]:
        for failure in report["assertion_failures"]:
            click.echo(f"ASSERTION FAILED: {failure}", err=True)
        sys.exit(1)


@main.command()
@click.argument("script_dir", type=click.Path(exists=True, path_type=Path))
@click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path))
@click.option("--library", type=click.Path(path_type=Path), default=None)
@click.option(
    "--disable",
    "disables",
    default=None,
    help="Comma-separated components for a single custom ablation run.",
)
@click.option("--sessions-dir", type=click.Path(path_type=Path), default=None)
def ablate(script_dir: Path, config_path, library, disables, sessions_dir):
    """Run the script suite under the full config and single-component
    ablations; emits a machine-readable comparison table."""
    scripts = sorted(Path(script_dir).glob("*.json"))
    if not scripts:
        click.echo("error: no scripts found", err=True)
        sys.exit(2)

    if disables is not None:
        chosen = frozenset(p.strip() for p in disables.split(",") if p.strip())
        unknown = chosen - set(ABLATION_COMPONENTS)
        if unknown:
            click.echo(f"error: unknown components {sorted(unknown)}", err=True)
            sys.exit(2)
        configs = [AblationConfig(), AblationConfig(chosen)]
    else:
        configs = [AblationConfig()] + [
            AblationConfig(frozenset({c})) for c in ABLATION_COMPONENTS
        ]

    rows = []
    for ablation in configs:
        total_turns = 0
        resolved_count = 0
        for script_path in scripts:
            try:
                script = load_script(script_path)
                config = load_config(config_path)
                if library is not None:
                    config.library_dir = library
                if sessions_dir is not None:
                    config.sessions_dir = sessions_dir
                ablation.apply(config)
                engine = _engine_for(config, live_backends=False)
                report = run_script(
                    engine,
                    script,
                    session_id=f"ablate-{ablation.name}-{script_path.stem}",
                )
            except (CxrTutorError, OSError) as exc:
                click.echo(f"error: {script_path}: {exc}", err=True)
                sys.exit(2)
            if report["completed"]:
                resolved_count += 1
                total_turns += report["turns_to_resolution"]
            else:
                total_turns += len(script.turns)  # capped at script length
        rows.append(
            {
                "config": ablation.name,
                "mean_turns_to_resolution": round(total_turns / len(scripts), 6),
                "resolution_rate": round(resolved_count / len(scripts), 6),
            }
        )

    click.echo(canonical_json({"ablation_table": rows}))
    click.echo(f"{'config':<14}{'mean turns':<14}{'resolution rate'}")
    for row in rows:
        click.echo(
            f"{row['config']:<14}{row['mean_turns_to_resolution']:<14}{row['resolution_rate']}"
        )


@main.command()
@click.argument("src_dir", type=click.Path(exists=True, path_type=Path))
@click.argument("library_dir", type=click.Path(path_type=Path))
def ingest(src_dir: Path, library_dir: Path):
    """Validate and copy case bundles; writes an index snapshot."""
    ingested = 0
    errors: list[str] = []
    bundles = []
    for entry in sorted(Path(src_dir).iterdir()):
        if not entry.is_dir() or not (entry / "case.json").exists():
            continue
        try:
            bundle = load_case_bundle(entry)
        except CxrTutorError as exc:
            errors.append(f"{entry.name}: {exc}")
            continue
        write_case_bundle(bundle, Path(library_dir) / bundle.case_id)
        bundles.append(bundle)
        ingested += 1

    index = build_index(bundles)
    snapshot = {
        case_id: {
            "labels": sorted(e.label_set),
            "centroids": {k: list(v) for k, v in sorted(e.centroids.items())},
            "support_devices": e.support_devices,
        }
        for case_id, e in index.entries.items()
    }
    Path(library_dir).mkdir(parents=True, exist_ok=True)
    (Path(library_dir) / "index.json").write_text(
        json.dumps(snapshot, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )

    click.echo(f"ingested {ingested} bundle(s)")
    if errors:
        for line in errors:
            click.echo(f"invalid: {line}", err=True)
        sys.exit(1)


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path))
@click.option("--port", type=int, default=None)
@click.option("--library", type=click.Path(path_type=Path), default=None)
@click.option("--ui", "ui_dir", type=click.Path(path_type=Path), default=None)
def serve(config_path, port, library, ui_dir):
    """Start the HTTP service."""
    import uvicorn

    from .server import create_app

    config = load_config(config_path)
    if library is not None:
        config.library_dir = library
    if port is not None:
        config.server_port = port
    try:
        engine = Engine(config)
    except CxrTutorError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    app = create_app(engine, static_dir=ui_dir)
    try:
        uvicorn.run(app, host="127.0.0.1", port=config.server_port, log_level="warning")
    except OSError as exc:
        click.echo(f"error: cannot bind port {config.server_port}: {exc}", err=True)
        sys.exit(2)


if __name__ == "__main__":
    main()
