"""Per-skill Bayesian Knowledge Tracing.

Two-state HMM update from binary correctness with guess/slip noise. Only
correctness enters the posterior math; confidence and gaze availability are
recorded on the observation history for the routing layer.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .errors import InvariantViolation, SkillMismatch

DEFAULT_PARAMS = (0.2, 0.15, 0.2, 0.1)  # p_init, p_learn, p_guess, p_slip


@dataclass(frozen=True)
class BktParams:
    p_init: float = DEFAULT_PARAMS[0]
    p_learn: float = DEFAULT_PARAMS[1]
    p_guess: float = DEFAULT_PARAMS[2]
    p_slip: float = DEFAULT_PARAMS[3]

    def __post_init__(self):
        for name in ("p_init", "p_learn", "p_guess", "p_slip"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise InvariantViolation(f"{name} outside (0,1)")
        if self.p_guess + self.p_slip >= 1.0:
            raise InvariantViolation("p_guess + p_slip must be < 1")


@dataclass(frozen=True)
class BktObservation:
    skill_id: str
    correct: bool
    confidence: float = 0.5
    gaze_available: bool = False
    turn_index: int = 0

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise InvariantViolation("confidence outside [0,1]")


@dataclass(frozen=True)
class SkillState:
    skill_id: str
    prior: float  # P(L) carried into the next observation
    attempts: int = 0
    last_posterior: float | None = None
    history: tuple[tuple[int, bool, float, bool], ...] = ()

    def __post_init__(self):
        if not 0.0 <= self.prior <= 1.0:
            raise InvariantViolation("prior outside [0,1]")
        if self.attempts != len(self.history):
            raise InvariantViolation("attempts must equal history length")


def fresh_state(skill_id: str, params: BktParams) -> SkillState:
    return SkillState(skill_id=skill_id, prior=params.p_init)


def bkt_update(state: SkillState, obs: BktObservation, params: BktParams) -> SkillState:
    """One evidence step: posterior from correctness, then the learning step."""
    if state.skill_id != obs.skill_id:
        raise SkillMismatch(f"{state.skill_id!r} != {obs.skill_id!r}")
    prior = state.prior
    if obs.correct:
        evidence_known = (1.0 - params.p_slip) * prior
        evidence_unknown = params.p_guess * (1.0 - prior)
    else:
        evidence_known = params.p_slip * prior
        evidence_unknown = (1.0 - params.p_guess) * (1.0 - prior)
    total = evidence_known + evidence_unknown
    posterior = prior if total == 0.0 else evidence_known / total
    next_prior = posterior + (1.0 - posterior) * params.p_learn
    return replace(
        state,
        prior=next_prior,
        attempts=state.attempts + 1,
        last_posterior=posterior,
        history=state.history
        + ((obs.turn_index, obs.correct, obs.confidence, obs.gaze_available),),
    )


def mastery(state: SkillState) -> float:
    """Posterior mastery; before any observation this is the initial prior."""
    return state.last_posterior if state.last_posterior is not None else state.prior


def replay_state(skill_id: str, history, params: BktParams) -> SkillState:
    """Rebuild a state by re-running its history from p_init."""
    state = fresh_state(skill_id, params)
    for turn_index, correct, confidence, gaze_available in history:
        state = bkt_update(
            state,
            BktObservation(
                skill_id=skill_id,
                correct=correct,
                confidence=confidence,
                gaze_available=gaze_available,
                turn_index=turn_index,
            ),
            params,
        )
    return state


def mastery_overview(states: dict[str, SkillState]) -> dict[str, tuple[float, int]]:
    """skill_id -> (mastery, attempts), sorted by skill_id."""
    return {
        skill_id: (mastery(states[skill_id]), states[skill_id].attempts)
        for skill_id in sorted(states)
    }
