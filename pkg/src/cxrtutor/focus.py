"""Localization gate: IoU matching of student boxes against ground truth.

Matching is greedy one-to-one in descending IoU order (ties broken by box
indices), which on small instances equals exhaustive max-first matching.
Failed gates produce a compass hint instead of naming any finding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .domain import BoundingBox, GroundTruthFinding
from .errors import ZeroAreaBox, ZeroDistance

COMPASS = ("E", "SE", "S", "SW", "W", "NW", "N", "NE")
FAR_FRACTION = 0.25


@dataclass(frozen=True)
class DirectionalHint:
    direction: str  # one of COMPASS
    magnitude: str  # near | far


@dataclass(frozen=True)
class FocusResult:
    passed: bool
    matches: tuple[tuple[int, str, float], ...]  # (student_box_index, finding_label, iou)
    best_iou: float
    guidance: DirectionalHint | None

    def matched_labels(self, threshold: float) -> set[str]:
        """Finding labels matched at or above threshold."""
        return {label for _, label, iou in self.matches if iou >= threshold}


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two boxes; 0 when disjoint."""
    if a.area <= 0 or b.area <= 0:
        raise ZeroAreaBox("iou requires positive-area boxes")
    ix = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    iy = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def direction_between(
    from_centroid: tuple[float, float],
    to_centroid: tuple[float, float],
    image_diag: float,
) -> DirectionalHint:
    """Quantize the displacement into 8 compass sectors (y grows downward).

    Sector boundaries tie clockwise; magnitude is "far" beyond a quarter of
    the image diagonal.
    """
    dx = to_centroid[0] - from_centroid[0]
    dy = to_centroid[1] - from_centroid[1]
    distance = math.hypot(dx, dy)
    if distance == 0:
        raise ZeroDistance("coincident centroids")
    angle = math.degrees(math.atan2(dy, dx)) % 360.0
    sector = int(math.floor(angle / 45.0 + 0.5)) % 8
    magnitude = "far" if distance > FAR_FRACTION * image_diag else "near"
    return DirectionalHint(direction=COMPASS[sector], magnitude=magnitude)


def _greedy_match(
    student_boxes: tuple[BoundingBox, ...] | list[BoundingBox],
    gt_boxes: list[tuple[str, BoundingBox]],
) -> list[tuple[int, int, float]]:
    """One-to-one (student_idx, gt_idx, iou) pairs, overlapping pairs only."""
    candidates = []
    for si, sbox in enumerate(student_boxes):
        for gi, (_, gbox) in enumerate(gt_boxes):
            score = iou(sbox, gbox)
            if score > 0:
                candidates.append((si, gi, score))
    candidates.sort(key=lambda c: (-c[2], c[0], c[1]))
    used_s: set[int] = set()
    used_g: set[int] = set()
    matched = []
    for si, gi, score in candidates:
        if si in used_s or gi in used_g:
            continue
        used_s.add(si)
        used_g.add(gi)
        matched.append((si, gi, score))
    return matched


def validate_focus(
    student_boxes: tuple[BoundingBox, ...] | list[BoundingBox],
    findings: tuple[GroundTruthFinding, ...] | list[GroundTruthFinding],
    threshold: float,
    image_width: float,
    image_height: float,
) -> FocusResult:
    """Gate a turn's boxes; on failure compute a compass hint.

    Passes when any matched pair reaches the threshold. The hint runs from
    the best-overlapping student box (image center when no boxes) toward the
    nearest unmatched ground-truth centroid.
    """
    if not findings:
        raise ValueError("validate_focus requires at least one finding")
    if not 0.0 < threshold <= 1.0:
        raise ValueError("threshold must be in (0, 1]")

    gt_boxes = [(f.label, box) for f in findings for box in f.boxes]
    matched = _greedy_match(student_boxes, gt_boxes)
    matches = tuple((si, gt_boxes[gi][0], score) for si, gi, score in matched)
    best_iou = max((score for _, _, score in matches), default=0.0)
    passed = best_iou >= threshold
    if passed:
        return FocusResult(passed=True, matches=matches, best_iou=best_iou, guidance=None)

    diag = math.hypot(image_width, image_height)
    if student_boxes:
        if matched:
            origin_idx = matched[0][0]  # highest-IoU student box
        else:
            origin_idx = 0
        origin = student_boxes[origin_idx].center
    else:
        origin = (image_width / 2.0, image_height / 2.0)

    passing = {gi for _, gi, score in matched if score >= threshold}
    targets = [
        (math.dist(origin, box.center), gi, box.center)
        for gi, (_, box) in enumerate(gt_boxes)
        if gi not in passing
    ]
    targets.sort(key=lambda t: (t[0], t[1]))
    guidance = None
    for distance, _, center in targets:
        if distance > 0:
            guidance = direction_between(origin, center, diag)
            break
    if guidance is None:
        # Origin sits exactly on every target centroid (box is centered but
        # mis-sized); direction is meaningless, report adjacency only.
        guidance = DirectionalHint(direction="N", magnitude="near")
    return FocusResult(passed=False, matches=matches, best_iou=best_iou, guidance=guidance)


def hint_text(hint: DirectionalHint) -> str:
    """Learner-facing phrasing of a compass hint."""
    names = {
        "N": "upward",
        "NE": "up and to the right",
        "E": "to the right",
        "SE": "down and to the right",
        "S": "downward",
        "SW": "down and to the left",
        "W": "to the left",
        "NW": "up and to the left",
    }
    distance = "a fair distance" if hint.magnitude == "far" else "slightly"
    return f"Try shifting your attention {distance} {names[hint.direction]}."
