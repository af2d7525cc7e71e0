"""Turn pipeline: focus gate, assessment + mastery, routing, routed agents,
faculty response, and event-log persistence.

The stage order is fixed. Backend failures degrade to absent sections and a
route_log annotation; a turn never aborts once the gate has run. Every turn
appends exactly one event record, and replaying the log reconstructs the
session state bit-identically.
"""

from __future__ import annotations

import json
import logging
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from .agents import (
    AssessmentResult,
    ResponseSections,
    SocraticGuidance,
    TutorResponse,
    assess,
    compose_response,
    socratic,
)
from .backends import VisionReasonRequest, make_text_backend, make_vision_backend
from .bkt import (
    BktObservation,
    BktParams,
    SkillState,
    bkt_update,
    fresh_state,
    mastery,
    mastery_overview,
)
from .bundles import load_case_library
from .config import EngineConfig
from .domain import CaseBundle, StudentTurn, SYNTHETIC_SKILLS
from .errors import (
    CorruptLog,
    CxrTutorError,
    InvariantViolation,
    OutOfBoundsFixation,
    SessionCompleted,
    TurnIndexMismatch,
    UnknownCase,
)
from .focus import hint_text, validate_focus
from .gaze import compute_gaze_metrics, gaze_guidance
from .knowledge import KnowledgeClient, topic_for_skill
from .sanitizer import (
    default_category_map,
    detect_leaks,
    sanitize_case,
    student_uttered_terms,
)
from .serialize import (
    canonical_json,
    skill_state_from_dict,
    skill_state_to_dict,
    student_turn_from_dict,
    student_turn_to_dict,
    tutor_response_from_dict,
    tutor_response_to_dict,
)
from .similarity import build_index, top_similar

logger = logging.getLogger(__name__)


@dataclass
class SessionState:
    session_id: str
    case_id: str
    turn_count: int = 0
    skills: dict[str, SkillState] = field(default_factory=dict)
    history: list[tuple[StudentTurn, TutorResponse]] = field(default_factory=list)
    resolved_findings: set[str] = field(default_factory=set)
    completed: bool = False
    consecutive_incorrect: dict[str, int] = field(default_factory=dict)

    def student_texts(self) -> list[str]:
        return [turn.text for turn, _ in self.history]


@dataclass(frozen=True)
class RouteSet:
    socratic: bool = False
    knowledge: bool = False
    reasoning: bool = False
    similarity: bool = False
    fired_rules: tuple[str, ...] = ()


def session_to_dict(session: SessionState) -> dict:
    return {
        "session_id": session.session_id,
        "case_id": session.case_id,
        "turn_count": session.turn_count,
        "skills": {
            skill: skill_state_to_dict(state)
            for skill, state in sorted(session.skills.items())
        },
        "history": [
            {
                "student_turn": student_turn_to_dict(turn),
                "tutor_response": tutor_response_to_dict(response),
            }
            for turn, response in session.history
        ],
        "resolved_findings": sorted(session.resolved_findings),
        "completed": session.completed,
        "consecutive_incorrect": dict(sorted(session.consecutive_incorrect.items())),
    }


class Engine:
    """Owns the case library, backends, routing thresholds, and sessions."""

    def __init__(
        self,
        config: EngineConfig,
        library: dict[str, CaseBundle] | None = None,
        text_backend=None,
        vision_backend=None,
        knowledge_client: KnowledgeClient | None = None,
        clock=time.time,
    ):
        self.config = config
        self.library = library if library is not None else load_case_library(config.library_dir)
        self.categories = default_category_map()
        self.clock = clock
        self.text_backend = text_backend or make_text_backend(config)
        self.vision_backend = vision_backend or make_vision_backend(config)
        self.knowledge = knowledge_client or KnowledgeClient(
            base_url=config.knowledge_base_url if not config.disable_knowledge else "",
            cache_path=config.knowledge_cache_path,
            text_backend=self.text_backend,
            max_results=config.knowledge_max_results,
            ttl_hours=config.knowledge_ttl_hours,
            rate_limit_ms=config.knowledge_rate_limit_ms,
            clock=clock,
        )
        self.index = build_index(list(self.library.values()))
        self.params = BktParams(
            p_init=config.bkt_p_init,
            p_learn=config.bkt_p_learn,
            p_guess=config.bkt_p_guess,
            p_slip=config.bkt_p_slip,
        )
        self._image_bytes: dict[str, bytes] = {}

    # -- session lifecycle ----------------------------------------------

    def create_session(self, case_id: str, session_id: str | None = None) -> SessionState:
        if case_id not in self.library:
            raise UnknownCase(case_id)
        case = self.library[case_id]
        session = SessionState(
            session_id=session_id or uuid.uuid4().hex,
            case_id=case_id,
            skills={skill: fresh_state(skill, self.params) for skill in case.skills},
            consecutive_incorrect={skill: 0 for skill in case.skills},
        )
        self._append_event(
            session.session_id,
            {"event": "session_created", "session_id": session.session_id, "case_id": case_id},
        )
        return session

    def _log_path(self, session_id: str) -> Path:
        return Path(self.config.sessions_dir) / f"{session_id}.log"

    def _append_event(self, session_id: str, record: dict):
        path = self._log_path(session_id)
        path.parent.mkdir(parents=True, exist_ok=True)
        line = canonical_json(record)
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(line + "\n")
            fh.flush()

    # -- stage helpers ----------------------------------------------------

    def _observe(
        self,
        session: SessionState,
        skill: str,
        correct: bool,
        turn: StudentTurn,
        gaze_available: bool,
    ):
        if self.config.disable_bkt or skill not in session.skills:
            return
        state = session.skills[skill]
        session.skills[skill] = bkt_update(
            state,
            BktObservation(
                skill_id=skill,
                correct=correct,
                confidence=turn.confidence,
                gaze_available=gaze_available,
                turn_index=turn.turn_index,
            ),
            self.params,
        )
        streak = session.consecutive_incorrect.get(skill, 0)
        session.consecutive_incorrect[skill] = 0 if correct else streak + 1

    def decide_routes(
        self,
        assessment: AssessmentResult,
        skills: dict[str, SkillState],
        turn: StudentTurn,
        session: SessionState,
        resolved_this_turn: tuple[str, ...] = (),
    ) -> RouteSet:
        cfg = self.config
        fired: list[str] = []

        socratic_on = bool(
            (assessment.corrections or assessment.missing) and not session.completed
        )
        if socratic_on:
            fired.append("socratic_gaps")

        knowledge_rules: list[str] = []
        if "knowledge" in turn.requests:
            knowledge_rules.append("knowledge_requested")
        if not cfg.disable_bkt and any(
            mastery(state) < cfg.routing_knowledge_mastery
            and state.attempts >= cfg.routing_knowledge_attempts
            for state in skills.values()
        ):
            knowledge_rules.append("low_mastery_knowledge")
        if resolved_this_turn:
            knowledge_rules.append("finding_resolved_knowledge")
        knowledge_on = bool(knowledge_rules)
        if cfg.disable_knowledge and knowledge_on:
            knowledge_on = False
            fired.append("knowledge_route_disabled")
        else:
            fired.extend(knowledge_rules)

        reasoning_rules: list[str] = []
        if "reasoning" in turn.requests:
            reasoning_rules.append("reasoning_requested")
        if not cfg.disable_bkt and any(
            mastery(state) < cfg.routing_reasoning_mastery
            and state.attempts >= cfg.routing_reasoning_attempts
            for state in skills.values()
        ):
            reasoning_rules.append("low_mastery_reasoning")
        reasoning_on = bool(reasoning_rules)
        if cfg.disable_reasoning and reasoning_on:
            reasoning_on = False
            fired.append("reasoning_route_disabled")
        else:
            fired.extend(reasoning_rules)

        similarity_rules: list[str] = []
        if "similar_cases" in turn.requests:
            similarity_rules.append("similar_cases_requested")
        if any(
            streak >= cfg.routing_struggle_streak
            for streak in session.consecutive_incorrect.values()
        ):
            similarity_rules.append("repeated_struggle_similarity")
        fired.extend(similarity_rules)

        return RouteSet(
            socratic=socratic_on,
            knowledge=knowledge_on,
            reasoning=reasoning_on,
            similarity=bool(similarity_rules),
            fired_rules=tuple(fired),
        )

    def check_resolution(
        self, session: SessionState, assessment: AssessmentResult, case: CaseBundle
    ) -> tuple[str, ...]:
        """Resolve findings whose category was reinforced at high mastery;
        flips the session to completed when all required findings resolve."""
        newly: list[str] = []
        reinforced = set(assessment.reinforcements)
        for finding in case.findings:
            if finding.label in session.resolved_findings:
                continue
            category = self.categories.label_category(finding.label)
            state = session.skills.get(finding.label)
            if state is None:
                continue
            if category in reinforced and mastery(state) >= self.config.routing_resolution_mastery:
                session.resolved_findings.add(finding.label)
                newly.append(finding.label)
        required = [f.label for f in case.findings if f.required_for_resolution]
        session.completed = bool(required) and all(
            label in session.resolved_findings for label in required
        )
        return tuple(newly)

    def _case_image_bytes(self, case: CaseBundle) -> bytes:
        if case.case_id not in self._image_bytes:
            self._image_bytes[case.case_id] = Path(case.image_path).read_bytes()
        return self._image_bytes[case.case_id]

    def _knowledge_topics(
        self,
        case: CaseBundle,
        routes_fired: tuple[str, ...],
        session: SessionState,
        resolved_this_turn: tuple[str, ...],
    ) -> list[str]:
        """Weak-skill topics first, then resolved-finding reinforcement,
        then a generic topic for bare explicit requests."""
        topics: list[str] = []

        def push(topic: str):
            if topic not in topics:
                topics.append(topic)

        if "low_mastery_knowledge" in routes_fired:
            for skill in sorted(session.skills):
                state = session.skills[skill]
                if (
                    mastery(state) < self.config.routing_knowledge_mastery
                    and state.attempts >= self.config.routing_knowledge_attempts
                ):
                    push(topic_for_skill(skill, case, self.categories))
        for label in resolved_this_turn:
            push(topic_for_skill(label, case, self.categories))
        if "knowledge_requested" in routes_fired and not topics:
            push("chest radiograph interpretation essentials")
        return topics

    # -- the pipeline ------------------------------------------------------

    def process_turn(
        self, session: SessionState, turn: StudentTurn
    ) -> tuple[SessionState, TutorResponse]:
        if session.completed:
            raise SessionCompleted(session.session_id)
        if turn.turn_index != session.turn_count:
            raise TurnIndexMismatch(
                f"expected turn {session.turn_count}, got {turn.turn_index}"
            )
        case = self.library[session.case_id]
        for box in turn.boxes:
            if not box.within(case.image_width, case.image_height):
                raise InvariantViolation("box outside image")
        for fixation in turn.fixations:
            if not (
                0 <= fixation.x < case.image_width and 0 <= fixation.y < case.image_height
            ):
                raise OutOfBoundsFixation(f"fixation ({fixation.x}, {fixation.y})")

        uttered = frozenset(student_uttered_terms(session.student_texts() + [turn.text]))
        summary = sanitize_case(case, self.categories)
        route_log: list[str] = []

        def clean(text: str) -> bool:
            return detect_leaks(text, case, uttered, self.categories).clean

        # stage 2 metrics are also reported on gate-failure turns
        gaze_metrics = None
        gaze_available = bool(turn.fixations) and not self.config.disable_gaze
        if gaze_available:
            gaze_metrics = compute_gaze_metrics(
                turn.fixations, case.effective_mask(), case.expected_sequence
            )
        gaze_lines = (
            tuple(
                line
                for line in gaze_guidance(
                    gaze_metrics, self.config.gaze_sequence_nudge_threshold
                )
                if clean(line)
            )
            if gaze_metrics is not None
            else ()
        )

        # stage 1: focus gate
        gate = validate_focus(
            turn.boxes,
            case.findings,
            self.config.focus_iou_threshold,
            case.image_width,
            case.image_height,
        )
        if not gate.passed:
            route_log.append("focus_gate_failed")
            self._observe(session, "localization", correct=False, turn=turn, gaze_available=gaze_available)
            sections = ResponseSections(
                gate_hint=hint_text(gate.guidance),
                gaze_guidance=gaze_lines,
            )
            message = " ".join(sections.ordered_parts(reflection=False))
            response = TutorResponse(
                message=message,
                assessment=None,
                gaze=gaze_metrics,
                mastery=mastery_overview(session.skills),
                route_log=tuple(route_log),
                reflection_mode=False,
                focus=gate,
            )
            self._finalize(session, turn, RouteSet(), response)
            return session, response

        # stage 3: assessment
        route_log.append("stage:assessment")
        matched = gate.matched_labels(self.config.focus_iou_threshold)
        try:
            assessment = assess(
                self.text_backend,
                turn,
                case,
                summary,
                history=[(t.text, r.message) for t, r in session.history],
                gate_matched_labels=matched,
                history_window=self.config.agents_history_window,
                categories=self.categories,
            )
        except CxrTutorError as exc:
            # grade nothing rather than fail the turn; skills stay untouched
            route_log.append(f"error:assess:{type(exc).__name__}")
            assessment = AssessmentResult(
                reinforcements=(),
                corrections=(),
                missing=tuple(summary.categories),
                impression="assessment unavailable this turn",
                per_skill_correct={},
            )

        # stage 4: mastery updates for every touched skill
        route_log.append("stage:mastery_update")
        for skill, correct in sorted(assessment.per_skill_correct.items()):
            self._observe(session, skill, correct, turn, gaze_available)
        self._observe(session, "localization", correct=True, turn=turn, gaze_available=gaze_available)
        if gaze_metrics is not None:
            systematic_ok = (
                gaze_metrics.sequence_score >= self.config.gaze_sequence_nudge_threshold
            )
            self._observe(session, "systematic-search", systematic_ok, turn, gaze_available)

        resolved_now = self.check_resolution(session, assessment, case)
        route_log.extend(f"resolved:{label}" for label in resolved_now)

        # stage 5: routing
        route_log.append("stage:routing")
        routes = self.decide_routes(assessment, session.skills, turn, session, resolved_now)
        route_log.extend(routes.fired_rules)

        # stage 6: routed agents (failures degrade to absent sections)
        route_log.append("stage:agents")
        socratic_guidance: SocraticGuidance | None = None
        if routes.socratic:
            try:
                raw = socratic(self.text_backend, assessment, summary)
                socratic_guidance = SocraticGuidance(
                    prompts=tuple(p for p in raw.prompts if clean(p)),
                    difficulty=raw.difficulty,
                    intent=raw.intent,
                )
            except CxrTutorError as exc:
                route_log.append(f"error:socratic:{type(exc).__name__}")

        snippets = ()
        if routes.knowledge:
            try:
                collected = []
                for topic in self._knowledge_topics(
                    case, routes.fired_rules, session, resolved_now
                ):
                    collected.extend(self.knowledge.fetch_snippets(topic))
                # drop anything that would disclose case specifics
                snippets = tuple(
                    s for s in collected if clean(s.text)
                )[: self.config.knowledge_max_results]
                if len(snippets) < len(collected):
                    route_log.append("knowledge_snippets_filtered")
            except CxrTutorError as exc:
                route_log.append(f"error:knowledge:{type(exc).__name__}")

        reasoning_text = None
        if routes.reasoning:
            try:
                reply = self.vision_backend.vision_reason(
                    VisionReasonRequest(
                        image=self._case_image_bytes(case),
                        context_text=(
                            "Student view so far: "
                            + (turn.text or "no written interpretation yet")
                        ),
                        tag="reasoning",
                    )
                )
                if clean(reply.text):
                    reasoning_text = reply.text
                else:
                    route_log.append("reasoning_text_filtered")
            except CxrTutorError as exc:
                route_log.append(f"error:reasoning:{type(exc).__name__}")

        similar_cases = ()
        if routes.similarity:
            try:
                similar_cases = tuple(
                    top_similar(
                        case.case_id,
                        self.index,
                        k=self.config.similarity_max_results,
                        weights=(
                            self.config.similarity_w_label,
                            self.config.similarity_w_spatial,
                            self.config.similarity_w_meta,
                        ),
                        overlays_dir=self.config.overlays_dir,
                    )
                )
            except CxrTutorError as exc:
                route_log.append(f"error:similarity:{type(exc).__name__}")

        # stage 7: faculty response
        route_log.append("stage:compose")
        mastery_map = mastery_overview(session.skills)
        mastery_lines = tuple(
            f"{self._display_skill(skill)} at {value:.2f} after {attempts} attempts"
            for skill, (value, attempts) in mastery_map.items()
            if attempts > 0
        )
        sections = ResponseSections(
            impression=assessment.impression if clean(assessment.impression) else "",
            socratic_prompts=socratic_guidance.prompts if socratic_guidance else (),
            knowledge_texts=tuple(s.text for s in snippets),
            gaze_guidance=gaze_lines,
            mastery_lines=mastery_lines,
            reasoning_text=reasoning_text or "",
            similar_count=len(similar_cases),
        )
        message = compose_response(
            self.text_backend,
            sections,
            case,
            uttered,
            reflection_mode=session.completed,
        )
        response = TutorResponse(
            message=message,
            assessment=assessment,
            socratic=socratic_guidance,
            knowledge=snippets,
            gaze=gaze_metrics,
            mastery=mastery_map,
            reasoning_text=reasoning_text,
            similar_cases=similar_cases,
            route_log=tuple(route_log),
            reflection_mode=session.completed,
            focus=gate,
        )
        self._finalize(session, turn, routes, response)
        return session, response

    def _display_skill(self, skill: str) -> str:
        if skill in SYNTHETIC_SKILLS:
            return skill
        return self.categories.label_category(skill)

    def _finalize(
        self,
        session: SessionState,
        turn: StudentTurn,
        routes: RouteSet,
        response: TutorResponse,
    ):
        session.history.append((turn, response))
        session.turn_count += 1
        self._append_event(
            session.session_id,
            {
                "event": "turn",
                "turn": turn.turn_index,
                "student_turn": student_turn_to_dict(turn),
                "route_set": {
                    "socratic": routes.socratic,
                    "knowledge": routes.knowledge,
                    "reasoning": routes.reasoning,
                    "similarity": routes.similarity,
                    "fired_rules": list(routes.fired_rules),
                },
                "tutor_response": tutor_response_to_dict(response),
                "skill_states_after": {
                    skill: skill_state_to_dict(state)
                    for skill, state in sorted(session.skills.items())
                },
                "resolved_after": sorted(session.resolved_findings),
                "completed_after": session.completed,
                "consecutive_incorrect_after": dict(
                    sorted(session.consecutive_incorrect.items())
                ),
            },
        )

    # -- replay ------------------------------------------------------------

    def load_session(self, session_id: str) -> SessionState:
        path = self._log_path(session_id)
        if not path.exists():
            raise UnknownCase(f"no event log for session {session_id}")
        session = replay(path.read_text(encoding="utf-8").splitlines())
        if not session.skills and session.case_id in self.library:
            case = self.library[session.case_id]
            session.skills = {s: fresh_state(s, self.params) for s in case.skills}
            session.consecutive_incorrect = {s: 0 for s in case.skills}
        return session


def replay(
    lines: list[str],
    session_id: str | None = None,
    case_id: str | None = None,
) -> SessionState:
    """Reconstruct a session purely from its event log."""
    session: SessionState | None = None
    if session_id is not None and case_id is not None:
        session = SessionState(session_id=session_id, case_id=case_id)
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            raise CorruptLog(lineno, "blank event line")
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorruptLog(lineno, f"unparseable event: {exc}") from exc
        event = record.get("event")
        if event == "session_created":
            session = SessionState(
                session_id=record["session_id"], case_id=record["case_id"]
            )
        elif event == "turn":
            if session is None:
                raise CorruptLog(lineno, "turn event before session_created")
            try:
                turn = student_turn_from_dict(record["student_turn"])
                response = tutor_response_from_dict(record["tutor_response"])
                session.skills = {
                    skill: skill_state_from_dict(raw)
                    for skill, raw in record["skill_states_after"].items()
                }
                session.resolved_findings = set(record["resolved_after"])
                session.completed = record["completed_after"]
                session.consecutive_incorrect = dict(
                    record["consecutive_incorrect_after"]
                )
            except (KeyError, TypeError, InvariantViolation) as exc:
                raise CorruptLog(lineno, f"malformed turn event: {exc}") from exc
            session.history.append((turn, response))
            session.turn_count = record["turn"] + 1
        else:
            raise CorruptLog(lineno, f"unknown event type {event!r}")
    if session is None:
        raise CorruptLog(0, "log contains no session_created event and no ids given")
    return session
