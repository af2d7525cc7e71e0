"""Assessment, Socratic coaching, and faculty-style response agents.

Each agent is a stateless prompt-assembly + reply-parsing layer over the
text backend. The wire format between prompts and parsers is line-tagged
sections (ASSESS_R/C/M/I, SOCRATIC, RESPOND) with pipe-separated fields;
either the deterministic stub or a live model can fill them.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

from .backends import (
    CASE_CATEGORIES_MARK,
    CORRECTIONS_MARK,
    MISSING_MARK,
    SECTIONS_MARK,
    STUDENT_TEXT_MARK,
    TASK_MARK,
    TextGenRequest,
)
from .domain import CaseBundle, StudentTurn, SYNTHETIC_SKILLS
from .errors import CxrTutorError, ParseFailure
from .focus import FocusResult
from .gaze import GazeMetrics
from .knowledge import KnowledgeSnippet
from .sanitizer import CategoryMap, SanitizedCaseSummary, default_category_map, detect_leaks
from .similarity import SimilarCase

logger = logging.getLogger(__name__)

DIFFICULTIES = ("easy", "medium", "hard")


@dataclass(frozen=True)
class AssessmentResult:
    reinforcements: tuple[str, ...]
    corrections: tuple[tuple[str, str], ...]
    missing: tuple[str, ...]
    impression: str
    per_skill_correct: dict[str, bool] = field(default_factory=dict)

    def correction_categories(self) -> set[str]:
        return {category for category, _ in self.corrections}


@dataclass(frozen=True)
class SocraticGuidance:
    prompts: tuple[str, ...]
    difficulty: str = "medium"
    intent: str = ""


@dataclass
class TutorResponse:
    message: str
    assessment: AssessmentResult | None
    socratic: SocraticGuidance | None = None
    knowledge: tuple[KnowledgeSnippet, ...] = ()
    gaze: GazeMetrics | None = None
    mastery: dict[str, tuple[float, int]] = field(default_factory=dict)
    reasoning_text: str | None = None
    similar_cases: tuple[SimilarCase, ...] = ()
    route_log: tuple[str, ...] = ()
    reflection_mode: bool = False
    focus: FocusResult | None = None


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    return resources.files("cxrtutor.templates").joinpath(f"{name}.txt").read_text("utf-8")


def _history_block(history: list[tuple[str, str]], window: int) -> str:
    lines = []
    for student_text, tutor_message in history[-window:]:
        lines.append(f"STUDENT: {student_text}")
        lines.append(f"TUTOR: {tutor_message}")
    return " / ".join(lines)


# ---------------------------------------------------------------------------
# assessment
# ---------------------------------------------------------------------------


def parse_assessment(text: str) -> tuple[list[str], list[tuple[str, str]], list[str], str]:
    reinforcements: list[str] = []
    corrections: list[tuple[str, str]] = []
    missing: list[str] = []
    impression: str | None = None
    for line in text.splitlines():
        line = line.strip()
        if line.startswith("ASSESS_R:"):
            reinforcements += [c.strip() for c in line[9:].split(";") if c.strip()]
        elif line.startswith("ASSESS_C:"):
            payload = line[9:].strip()
            category, _, issue = payload.partition("|")
            if category.strip():
                corrections.append((category.strip(), issue.strip()))
        elif line.startswith("ASSESS_M:"):
            missing += [c.strip() for c in line[9:].split(";") if c.strip()]
        elif line.startswith("ASSESS_I:"):
            impression = line[9:].strip()
    if impression is None:
        raise ParseFailure("reply lacks ASSESS_I line")
    return reinforcements, corrections, missing, impression


def _assess_user_message(
    turn: StudentTurn,
    summary: SanitizedCaseSummary,
    history: list[tuple[str, str]],
    window: int,
    strict: bool = False,
) -> str:
    lines = [
        f"{TASK_MARK} assess",
        f"{CASE_CATEGORIES_MARK} " + " ; ".join(summary.categories),
        f"[[FINDING_COUNT]] {summary.finding_count}",
        f"[[ANATOMY_HINTS]] " + " ; ".join(summary.anatomy_hints),
        f"{STUDENT_TEXT_MARK} {turn.text}",
        f"[[HISTORY]] {_history_block(history, window)}",
    ]
    if strict:
        lines.append("Your previous reply was unparseable. Emit ONLY the tagged lines.")
    return "\n".join(lines)


def derive_per_skill_correct(
    case: CaseBundle,
    reinforcements: list[str],
    corrections: list[tuple[str, str]],
    gate_matched_labels: set[str],
    categories: CategoryMap,
) -> dict[str, bool]:
    """Turn-level correctness rule for finding skills: no correction on the
    skill's category, and either reinforcement or a passed gate match."""
    corrected = {category for category, _ in corrections}
    reinforced = set(reinforcements)
    out: dict[str, bool] = {}
    for skill in case.skills:
        if skill in SYNTHETIC_SKILLS:
            continue
        category = categories.label_category(skill)
        ok = category not in corrected and (
            category in reinforced or skill in gate_matched_labels
        )
        out[skill] = ok
    return out


def assess(
    backend,
    turn: StudentTurn,
    case: CaseBundle,
    summary: SanitizedCaseSummary,
    history: list[tuple[str, str]],
    gate_matched_labels: set[str] | None = None,
    history_window: int = 6,
    categories: CategoryMap | None = None,
) -> AssessmentResult:
    """Grade the turn; one re-prompt on parse failure, then a conservative
    fallback (nothing reinforced, every finding skill incorrect)."""
    categories = categories or default_category_map()
    gate_matched_labels = gate_matched_labels or set()
    system = load_template("assess_system")
    vocabulary = set(summary.categories)

    parsed = None
    for attempt in range(2):
        message = _assess_user_message(
            turn, summary, history, history_window, strict=attempt > 0
        )
        reply = backend.text_generate(
            TextGenRequest(system_prompt=system, user_messages=(message,), tag="assess")
        )
        try:
            parsed = parse_assessment(reply.text)
            break
        except ParseFailure:
            logger.warning("assessment reply unparseable (attempt %d)", attempt + 1)

    if parsed is None:
        return AssessmentResult(
            reinforcements=(),
            corrections=(),
            missing=tuple(summary.categories),
            impression="unparseable",
            per_skill_correct={
                skill: False
                for skill in case.skills
                if skill not in SYNTHETIC_SKILLS
            },
        )

    reinforcements, corrections, missing, impression = parsed
    # never emit a category outside the sanctioned vocabulary
    reinforcements = [c for c in reinforcements if c in vocabulary]
    corrections = [(c, issue) for c, issue in corrections if c in vocabulary]
    missing = [c for c in missing if c in vocabulary]
    return AssessmentResult(
        reinforcements=tuple(reinforcements),
        corrections=tuple(corrections),
        missing=tuple(missing),
        impression=impression,
        per_skill_correct=derive_per_skill_correct(
            case, reinforcements, corrections, gate_matched_labels, categories
        ),
    )


# ---------------------------------------------------------------------------
# Socratic coaching
# ---------------------------------------------------------------------------


def parse_socratic(text: str) -> SocraticGuidance:
    prompts: list[str] = []
    difficulty = "medium"
    intent = ""
    for line in text.splitlines():
        line = line.strip()
        if not line.startswith("SOCRATIC:"):
            continue
        payload = line[len("SOCRATIC:"):].strip()
        parts = [p.strip() for p in payload.split("|")]
        if not parts or not parts[0]:
            continue
        prompts.append(parts[0])
        if len(prompts) == 1:
            if len(parts) > 1 and parts[1] in DIFFICULTIES:
                difficulty = parts[1]
            if len(parts) > 2:
                intent = parts[2]
    return SocraticGuidance(prompts=tuple(prompts), difficulty=difficulty, intent=intent)


def socratic(backend, assessment: AssessmentResult, summary: SanitizedCaseSummary) -> SocraticGuidance:
    """Open-ended coaching around the assessment's gaps; nothing to coach
    yields an empty guidance without a backend call."""
    if not assessment.missing and not assessment.corrections:
        return SocraticGuidance(prompts=())
    message = "\n".join(
        [
            f"{TASK_MARK} socratic",
            f"{CASE_CATEGORIES_MARK} " + " ; ".join(summary.categories),
            f"{MISSING_MARK} " + " ; ".join(assessment.missing),
            f"{CORRECTIONS_MARK} "
            + " ; ".join(category for category, _ in assessment.corrections),
        ]
    )
    reply = backend.text_generate(
        TextGenRequest(
            system_prompt=load_template("socratic_system"),
            user_messages=(message,),
            tag="socratic",
        )
    )
    return parse_socratic(reply.text)


# ---------------------------------------------------------------------------
# faculty-style response composition
# ---------------------------------------------------------------------------


@dataclass
class ResponseSections:
    """Leak-checked building blocks for the final tutor message."""

    impression: str = ""
    socratic_prompts: tuple[str, ...] = ()
    knowledge_texts: tuple[str, ...] = ()
    gaze_guidance: tuple[str, ...] = ()
    mastery_lines: tuple[str, ...] = ()
    reasoning_text: str = ""
    similar_count: int = 0
    gate_hint: str = ""

    def ordered_parts(self, reflection: bool) -> list[str]:
        parts: list[str] = []
        if self.gate_hint:
            parts.append(self.gate_hint)
        if self.impression:
            parts.append(self.impression)
        if not reflection:
            parts.extend(self.socratic_prompts)
        for text in self.knowledge_texts:
            parts.append(f"From the literature: {text}")
        parts.extend(self.gaze_guidance)
        if self.mastery_lines:
            parts.append("Progress: " + "; ".join(self.mastery_lines) + ".")
        if self.reasoning_text:
            # sections travel as single lines; flatten the skeleton
            parts.append("Guided reasoning: " + " ".join(self.reasoning_text.split()))
        if self.similar_count:
            parts.append(
                f"I queued {self.similar_count} similar practice case"
                + ("s" if self.similar_count != 1 else "")
                + " for you."
            )
        if reflection:
            parts.append(
                "This case is complete - well done. Carry the same systematic "
                "approach into your next case."
            )
        return parts


def parse_respond(text: str) -> str | None:
    for line in text.splitlines():
        line = line.strip()
        if line.startswith("RESPOND:"):
            payload = line[len("RESPOND:"):].strip()
            if payload:
                return payload
    return None


def fallback_message(sections: ResponseSections, reflection: bool) -> str:
    parts = sections.ordered_parts(reflection)
    if not parts:
        parts = ["Keep going - describe what you observe next."]
    return " ".join(parts)


def compose_response(
    backend,
    sections: ResponseSections,
    case: CaseBundle,
    student_uttered: set[str] | frozenset[str],
    reflection_mode: bool = False,
) -> str:
    """One natural-language message fusing all sections.

    The draft is leak-checked; a leaking draft is regenerated once with a
    stricter prompt, then replaced by the deterministic template, which is
    built from already-filtered lines and therefore always safe.
    """
    template = "respond_reflection_system" if reflection_mode else "respond_system"
    digest = " || ".join(sections.ordered_parts(reflection_mode))
    for attempt in range(2):
        lines = [f"{TASK_MARK} respond", f"{SECTIONS_MARK} {digest}"]
        if attempt:
            lines.append(
                "Your previous draft disclosed protected case details. "
                "Remove every specific value, name, and site."
            )
        try:
            reply = backend.text_generate(
                TextGenRequest(
                    system_prompt=load_template(template),
                    user_messages=("\n".join(lines),),
                    tag="respond",
                )
            )
        except CxrTutorError as exc:
            logger.warning("respond backend failed (%s); using template", exc)
            break
        message = parse_respond(reply.text)
        if message is None:
            continue
        if detect_leaks(message, case, student_uttered).clean:
            return message
        logger.warning("composed message leaked (attempt %d); retrying", attempt + 1)
    return fallback_message(sections, reflection_mode)
