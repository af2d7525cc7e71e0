"""JSON (de)serialization for every wire-visible type.

The event log and the determinism guarantees both hinge on canonical_json:
sorted keys, compact separators, and shortest-round-trip floats, so equal
states always produce byte-equal lines.
"""

from __future__ import annotations

import json
from typing import Any

from .agents import AssessmentResult, SocraticGuidance, TutorResponse
from .bkt import SkillState
from .domain import BoundingBox, Fixation, StudentTurn
from .focus import DirectionalHint, FocusResult
from .gaze import GazeMetrics
from .knowledge import KnowledgeSnippet
from .similarity import SimilarCase


def canonical_json(payload: Any) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


# -- domain -----------------------------------------------------------------


def box_to_dict(box: BoundingBox) -> dict:
    out: dict[str, Any] = {
        "x_min": box.x_min,
        "y_min": box.y_min,
        "x_max": box.x_max,
        "y_max": box.y_max,
    }
    if box.label is not None:
        out["label"] = box.label
    return out


def box_from_dict(raw: dict) -> BoundingBox:
    return BoundingBox(
        x_min=raw["x_min"],
        y_min=raw["y_min"],
        x_max=raw["x_max"],
        y_max=raw["y_max"],
        label=raw.get("label"),
    )


def fixation_to_dict(fix: Fixation) -> dict:
    return {"x": fix.x, "y": fix.y, "duration": fix.duration, "order_index": fix.order_index}


def fixation_from_dict(raw: dict) -> Fixation:
    return Fixation(
        x=raw["x"], y=raw["y"], duration=raw["duration"], order_index=raw["order_index"]
    )


def student_turn_to_dict(turn: StudentTurn) -> dict:
    return {
        "boxes": [box_to_dict(b) for b in turn.boxes],
        "fixations": [fixation_to_dict(f) for f in turn.fixations],
        "text": turn.text,
        "confidence": turn.confidence,
        "requests": sorted(turn.requests),
        "turn_index": turn.turn_index,
    }


def student_turn_from_dict(raw: dict) -> StudentTurn:
    return StudentTurn(
        boxes=tuple(box_from_dict(b) for b in raw.get("boxes", [])),
        fixations=tuple(fixation_from_dict(f) for f in raw.get("fixations", [])),
        text=raw.get("text", ""),
        confidence=raw.get("confidence", 0.5),
        requests=frozenset(raw.get("requests", [])),
        turn_index=raw.get("turn_index", 0),
    )


# -- focus / gaze -----------------------------------------------------------


def focus_to_dict(result: FocusResult) -> dict:
    out: dict[str, Any] = {
        "passed": result.passed,
        "matches": [list(m) for m in result.matches],
        "best_iou": result.best_iou,
        "guidance": None,
    }
    if result.guidance is not None:
        out["guidance"] = {
            "direction": result.guidance.direction,
            "magnitude": result.guidance.magnitude,
        }
    return out


def focus_from_dict(raw: dict) -> FocusResult:
    guidance = None
    if raw.get("guidance") is not None:
        guidance = DirectionalHint(
            direction=raw["guidance"]["direction"],
            magnitude=raw["guidance"]["magnitude"],
        )
    return FocusResult(
        passed=raw["passed"],
        matches=tuple((m[0], m[1], m[2]) for m in raw.get("matches", [])),
        best_iou=raw["best_iou"],
        guidance=guidance,
    )


def gaze_to_dict(metrics: GazeMetrics) -> dict:
    return {
        "coverage_ratio": metrics.coverage_ratio,
        "dwell_time_ratio": metrics.dwell_time_ratio,
        "sequence_score": metrics.sequence_score,
        "per_region_dwell": dict(sorted(metrics.per_region_dwell.items())),
        "observed_sequence": list(metrics.observed_sequence),
        "unvisited_regions": list(metrics.unvisited_regions),
    }


def gaze_from_dict(raw: dict) -> GazeMetrics:
    return GazeMetrics(
        coverage_ratio=raw["coverage_ratio"],
        dwell_time_ratio=raw["dwell_time_ratio"],
        sequence_score=raw["sequence_score"],
        per_region_dwell=dict(raw.get("per_region_dwell", {})),
        observed_sequence=tuple(raw.get("observed_sequence", [])),
        unvisited_regions=tuple(raw.get("unvisited_regions", [])),
    )


# -- agents -----------------------------------------------------------------


def assessment_to_dict(result: AssessmentResult) -> dict:
    return {
        "reinforcements": list(result.reinforcements),
        "corrections": [list(c) for c in result.corrections],
        "missing": list(result.missing),
        "impression": result.impression,
        "per_skill_correct": dict(sorted(result.per_skill_correct.items())),
    }


def assessment_from_dict(raw: dict) -> AssessmentResult:
    return AssessmentResult(
        reinforcements=tuple(raw.get("reinforcements", [])),
        corrections=tuple((c[0], c[1]) for c in raw.get("corrections", [])),
        missing=tuple(raw.get("missing", [])),
        impression=raw.get("impression", ""),
        per_skill_correct=dict(raw.get("per_skill_correct", {})),
    )


def socratic_to_dict(guidance: SocraticGuidance) -> dict:
    return {
        "prompts": list(guidance.prompts),
        "difficulty": guidance.difficulty,
        "intent": guidance.intent,
    }


def socratic_from_dict(raw: dict) -> SocraticGuidance:
    return SocraticGuidance(
        prompts=tuple(raw.get("prompts", [])),
        difficulty=raw.get("difficulty", "medium"),
        intent=raw.get("intent", ""),
    )


def snippet_to_dict(snippet: KnowledgeSnippet) -> dict:
    return {
        "topic": snippet.topic,
        "text": snippet.text,
        "source": snippet.source,
        "citation_id": snippet.citation_id,
        "retrieved_at": snippet.retrieved_at,
    }


def snippet_from_dict(raw: dict) -> KnowledgeSnippet:
    return KnowledgeSnippet(
        topic=raw["topic"],
        text=raw["text"],
        source=raw["source"],
        citation_id=raw.get("citation_id"),
        retrieved_at=raw.get("retrieved_at", 0.0),
    )


def similar_case_to_dict(case: SimilarCase) -> dict:
    return {
        "case_id": case.case_id,
        "score": case.score,
        "shared_labels": list(case.shared_labels),
        "overlay_path": case.overlay_path,
    }


def similar_case_from_dict(raw: dict) -> SimilarCase:
    return SimilarCase(
        case_id=raw["case_id"],
        score=raw["score"],
        shared_labels=tuple(raw.get("shared_labels", [])),
        overlay_path=raw.get("overlay_path", ""),
    )


def tutor_response_to_dict(response: TutorResponse) -> dict:
    return {
        "message": response.message,
        "assessment": None
        if response.assessment is None
        else assessment_to_dict(response.assessment),
        "socratic": None
        if response.socratic is None
        else socratic_to_dict(response.socratic),
        "knowledge": [snippet_to_dict(s) for s in response.knowledge],
        "gaze": None if response.gaze is None else gaze_to_dict(response.gaze),
        "mastery": {
            skill: {"mastery": m, "attempts": a}
            for skill, (m, a) in sorted(response.mastery.items())
        },
        "reasoning_text": response.reasoning_text,
        "similar_cases": [similar_case_to_dict(c) for c in response.similar_cases],
        "route_log": list(response.route_log),
        "reflection_mode": response.reflection_mode,
        "focus": None if response.focus is None else focus_to_dict(response.focus),
    }


def tutor_response_from_dict(raw: dict) -> TutorResponse:
    return TutorResponse(
        message=raw["message"],
        assessment=None
        if raw.get("assessment") is None
        else assessment_from_dict(raw["assessment"]),
        socratic=None if raw.get("socratic") is None else socratic_from_dict(raw["socratic"]),
        knowledge=tuple(snippet_from_dict(s) for s in raw.get("knowledge", [])),
        gaze=None if raw.get("gaze") is None else gaze_from_dict(raw["gaze"]),
        mastery={
            skill: (entry["mastery"], entry["attempts"])
            for skill, entry in raw.get("mastery", {}).items()
        },
        reasoning_text=raw.get("reasoning_text"),
        similar_cases=tuple(
            similar_case_from_dict(c) for c in raw.get("similar_cases", [])
        ),
        route_log=tuple(raw.get("route_log", [])),
        reflection_mode=raw.get("reflection_mode", False),
        focus=None if raw.get("focus") is None else focus_from_dict(raw["focus"]),
    )


# -- mastery ----------------------------------------------------------------


def skill_state_to_dict(state: SkillState) -> dict:
    return {
        "skill_id": state.skill_id,
        "prior": state.prior,
        "attempts": state.attempts,
        "last_posterior": state.last_posterior,
        "history": [list(entry) for entry in state.history],
    }


def skill_state_from_dict(raw: dict) -> SkillState:
    return SkillState(
        skill_id=raw["skill_id"],
        prior=raw["prior"],
        attempts=raw["attempts"],
        last_posterior=raw.get("last_posterior"),
        history=tuple(
            (entry[0], entry[1], entry[2], entry[3]) for entry in raw.get("history", [])
        ),
    )
