from __future__ import annotations

import random
import time

import pytest

from cxrtutor.bkt import (
    BktObservation,
    BktParams,
    SkillState,
    bkt_update,
    fresh_state,
    mastery,
    mastery_overview,
    replay_state,
)
from cxrtutor.errors import InvariantViolation, SkillMismatch


def obs(correct, skill="s", turn=0):
    return BktObservation(skill_id=skill, correct=correct, turn_index=turn)


def test_params_reject_degenerate_guess_slip():
    with pytest.raises(InvariantViolation):
        BktParams(p_guess=0.6, p_slip=0.5)


def test_correct_observation_worked_example():
    params = BktParams()
    state = fresh_state("s", params)
    updated = bkt_update(state, obs(True), params)
    assert updated.last_posterior == pytest.approx(9 / 17, abs=1e-12)
    assert updated.prior == pytest.approx(0.6, abs=1e-12)
    assert updated.attempts == 1


def test_incorrect_observation_worked_example():
    params = BktParams()
    state = fresh_state("s", params)
    updated = bkt_update(state, obs(False), params)
    assert updated.last_posterior == pytest.approx(1 / 33, abs=1e-9)
    assert updated.prior == pytest.approx(5.8 / 33, abs=1e-9)


def test_certain_prior_survives_incorrect():
    params = BktParams()
    state = SkillState(skill_id="s", prior=1.0)
    updated = bkt_update(state, obs(False), params)
    assert updated.last_posterior == 1.0
    assert updated.prior == 1.0


def test_skill_mismatch():
    params = BktParams()
    with pytest.raises(SkillMismatch):
        bkt_update(fresh_state("a", params), obs(True, skill="b"), params)


def test_mastery_pass_through():
    params = BktParams()
    state = fresh_state("s", params)
    assert mastery(state) == pytest.approx(0.2)
    state = bkt_update(state, obs(True), params)
    assert mastery(state) == pytest.approx(9 / 17)
    frozen = SkillState(
        skill_id="s", prior=0.9, attempts=1, last_posterior=0.83, history=((0, True, 0.5, False),)
    )
    assert mastery(frozen) == 0.83


def test_mastery_overview_sorted():
    params = BktParams()
    states = {
        "zeta": fresh_state("zeta", params),
        "alpha": fresh_state("alpha", params),
    }
    overview = mastery_overview(states)
    assert list(overview) == ["alpha", "zeta"]
    assert overview["alpha"] == (pytest.approx(0.2), 0)


def test_attempt_counter_tracks_history():
    params = BktParams()
    state = fresh_state("s", params)
    for i in range(3):
        state = bkt_update(state, obs(bool(i % 2), turn=i), params)
    assert state.attempts == 3
    assert len(state.history) == 3


def _random_params(rng):
    while True:
        p_guess = rng.uniform(0.01, 0.95)
        p_slip = rng.uniform(0.01, 0.95)
        if p_guess + p_slip < 1.0:
            return BktParams(
                p_init=rng.uniform(0.01, 0.99),
                p_learn=rng.uniform(0.01, 0.99),
                p_guess=p_guess,
                p_slip=p_slip,
            )


def test_property_suite_bounds_monotone_and_replay():
    rng = random.Random(20250101)
    start = time.monotonic()
    for _ in range(10_000):
        params = _random_params(rng)
        prior = rng.uniform(0.0, 1.0)
        state = SkillState(skill_id="s", prior=prior)
        correct = rng.random() < 0.5
        updated = bkt_update(state, obs(correct), params)
        assert 0.0 <= updated.last_posterior <= 1.0
        assert 0.0 <= updated.prior <= 1.0
        if correct:
            assert updated.last_posterior >= prior - 1e-12
        else:
            assert updated.last_posterior <= prior + 1e-12
        assert updated.prior >= updated.last_posterior - 1e-15
    elapsed = time.monotonic() - start
    assert elapsed < 5.0

    # replay determinism: bit-identical prior after rebuilding from history
    params = BktParams()
    state = fresh_state("s", params)
    for i in range(25):
        state = bkt_update(state, obs(rng.random() < 0.6, turn=i), params)
    replayed = replay_state("s", state.history, params)
    assert replayed.prior == state.prior  # exact float equality
    assert replayed == state
