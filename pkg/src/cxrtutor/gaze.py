"""Gaze analytics: region dwell, coverage, and viewing-sequence scoring.

Fixations are assigned by single-pixel lookup at their center. The observed
sequence is run-length collapsed before edit-distance comparison, otherwise
repeated fixations in one region would saturate the score at 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .domain import Fixation, LobeMask
from .errors import OutOfBoundsFixation


@dataclass(frozen=True)
class GazeMetrics:
    coverage_ratio: float
    dwell_time_ratio: float
    sequence_score: float
    per_region_dwell: dict[str, float] = field(default_factory=dict)
    observed_sequence: tuple[str, ...] = ()
    unvisited_regions: tuple[str, ...] = ()


def map_fixations(
    fixations: tuple[Fixation, ...] | list[Fixation], mask: LobeMask
) -> tuple[dict[str, float], tuple[str, ...]]:
    """Accumulate dwell per region and the collapsed visit sequence.

    Background pixels contribute no dwell and are omitted from the sequence.
    """
    dwell: dict[str, float] = {}
    sequence: list[str] = []
    for fix in sorted(fixations, key=lambda f: f.order_index):
        if not (0 <= int(fix.x) < mask.width and 0 <= int(fix.y) < mask.height):
            raise OutOfBoundsFixation(
                f"fixation ({fix.x}, {fix.y}) outside {mask.width}x{mask.height} raster"
            )
        region = mask.region_at(fix.x, fix.y)
        if region is None:
            continue
        dwell[region] = dwell.get(region, 0.0) + fix.duration
        if not sequence or sequence[-1] != region:
            sequence.append(region)
    return dwell, tuple(sequence)


def coverage_ratio(per_region_dwell: dict[str, float], region_count: int) -> float:
    if region_count < 1:
        raise ValueError("region_count must be >= 1")
    visited = sum(1 for d in per_region_dwell.values() if d > 0)
    return visited / region_count


def dwell_time_ratio(
    per_region_dwell: dict[str, float], fixations: tuple[Fixation, ...] | list[Fixation]
) -> float:
    total = sum(f.duration for f in fixations)
    if total <= 0:
        return 0.0
    # summation order differs between numerator and denominator; clamp the
    # at-most-one-ulp float overshoot
    return min(1.0, sum(per_region_dwell.values()) / total)


def levenshtein(a: tuple[str, ...] | list[str], b: tuple[str, ...] | list[str]) -> int:
    """Token-level edit distance with unit insert/delete/substitute costs."""
    if len(a) < len(b):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, token_a in enumerate(a, start=1):
        current = [i]
        for j, token_b in enumerate(b, start=1):
            cost = 0 if token_a == token_b else 1
            current.append(
                min(previous[j] + 1, current[j - 1] + 1, previous[j - 1] + cost)
            )
        previous = current
    return previous[-1]


def sequence_score(
    expected: tuple[str, ...] | list[str], observed: tuple[str, ...] | list[str]
) -> float:
    """1 - edit_distance / max(len); 0 for an empty observation."""
    if not expected:
        raise ValueError("expected sequence must be non-empty")
    if not observed:
        return 0.0
    return 1.0 - levenshtein(tuple(expected), tuple(observed)) / max(
        len(expected), len(observed)
    )


def compute_gaze_metrics(
    fixations: tuple[Fixation, ...] | list[Fixation],
    mask: LobeMask,
    expected_sequence: tuple[str, ...],
) -> GazeMetrics:
    dwell, observed = map_fixations(fixations, mask)
    unvisited = tuple(
        name for name in mask.region_names if dwell.get(name, 0.0) <= 0
    )
    return GazeMetrics(
        coverage_ratio=coverage_ratio(dwell, len(mask.region_names)),
        dwell_time_ratio=dwell_time_ratio(dwell, fixations),
        sequence_score=sequence_score(expected_sequence, observed),
        per_region_dwell=dwell,
        observed_sequence=observed,
        unvisited_regions=unvisited,
    )


def region_phrase(region_name: str) -> str:
    return region_name.replace("_", " ")


def gaze_guidance(metrics: GazeMetrics, nudge_threshold: float = 0.5) -> list[str]:
    """One nudge per unvisited region, plus a search-pattern nudge when the
    viewing order strays far from the expected sweep."""
    guidance = [
        f"consider the {region_phrase(region)} region"
        for region in metrics.unvisited_regions
    ]
    if metrics.sequence_score < nudge_threshold:
        guidance.append(
            "try a systematic search pattern: sweep each zone in a consistent order"
        )
    return guidance
