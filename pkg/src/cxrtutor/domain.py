"""Shared domain types for teaching cases and learner submissions.

All types are immutable values after construction and validate their own
invariants in ``__post_init__``, so an instance that exists is a valid one.
Coordinates are image pixels with y growing downward; "right_*" region names
follow radiographic convention (patient right = viewer left).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .errors import InvariantViolation

REQUEST_FLAGS = frozenset({"reasoning", "knowledge", "similar_cases"})

# Default systematic viewing order; also the fallback-grid region names.
DEFAULT_REGION_ORDER = (
    "right_upper",
    "left_upper",
    "right_mid",
    "left_mid",
    "right_lower",
    "left_lower",
)

SYNTHETIC_SKILLS = ("localization", "systematic-search")


@dataclass(frozen=True)
class BoundingBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float
    label: str | None = None

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise InvariantViolation("zero-area box")
        if min(self.x_min, self.y_min) < 0:
            raise InvariantViolation("negative box coordinate")

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)

    def within(self, width: float, height: float) -> bool:
        return self.x_max <= width and self.y_max <= height


@dataclass(frozen=True)
class Fixation:
    x: float
    y: float
    duration: float  # milliseconds
    order_index: int

    def __post_init__(self):
        if self.duration <= 0:
            raise InvariantViolation("non-positive fixation duration")
        if self.order_index < 0:
            raise InvariantViolation("negative fixation order index")


class LobeMask:
    """Raster label map: 0 = background, i in 1..K = region_names[i-1]."""

    def __init__(self, labels: np.ndarray, region_names: tuple[str, ...]):
        labels = np.asarray(labels, dtype=np.uint8)
        if labels.ndim != 2:
            raise InvariantViolation("mask raster must be 2-D")
        if len(set(region_names)) != len(region_names):
            raise InvariantViolation("duplicate region name")
        if labels.size and int(labels.max()) > len(region_names):
            raise InvariantViolation("raster value exceeds region count")
        self.labels = labels
        self.labels.setflags(write=False)
        self.region_names = tuple(region_names)

    @property
    def height(self) -> int:
        return int(self.labels.shape[0])

    @property
    def width(self) -> int:
        return int(self.labels.shape[1])

    def region_at(self, x: float, y: float) -> str | None:
        """Region name covering pixel (x, y), or None for background."""
        xi, yi = int(x), int(y)
        if not (0 <= xi < self.width and 0 <= yi < self.height):
            return None
        value = int(self.labels[yi, xi])
        return None if value == 0 else self.region_names[value - 1]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LobeMask):
            return NotImplemented
        return self.region_names == other.region_names and np.array_equal(
            self.labels, other.labels
        )

    def __repr__(self) -> str:
        return f"LobeMask({self.width}x{self.height}, regions={list(self.region_names)})"


@dataclass(frozen=True)
class GroundTruthFinding:
    label: str
    boxes: tuple[BoundingBox, ...]
    descriptors: tuple[tuple[str, str], ...] = ()
    required_for_resolution: bool = True

    def __post_init__(self):
        if not self.boxes:
            raise InvariantViolation("finding without boxes")


@dataclass(frozen=True)
class CaseBundle:
    case_id: str
    image_path: Path = field(compare=False)
    image_width: int = 0
    image_height: int = 0
    findings: tuple[GroundTruthFinding, ...] = ()
    lobe_mask: LobeMask | None = None
    expected_sequence: tuple[str, ...] = DEFAULT_REGION_ORDER
    metadata: dict[str, Any] = field(default_factory=dict)
    skills: tuple[str, ...] = ()

    def __post_init__(self):
        if self.image_width <= 0 or self.image_height <= 0:
            raise InvariantViolation("non-positive image dimensions")
        for finding in self.findings:
            for box in finding.boxes:
                if not box.within(self.image_width, self.image_height):
                    raise InvariantViolation("box outside image")
        region_names = (
            self.lobe_mask.region_names if self.lobe_mask is not None else DEFAULT_REGION_ORDER
        )
        for region in self.expected_sequence:
            if region not in region_names:
                raise InvariantViolation("unknown region")
        if not self.skills:
            object.__setattr__(self, "skills", default_skills(self.findings))

    @property
    def support_devices(self) -> bool:
        return bool(self.metadata.get("support_devices", False))

    def effective_mask(self) -> LobeMask:
        """The case's lobe mask, or the coarse fallback grid."""
        if self.lobe_mask is not None:
            return self.lobe_mask
        return fallback_zone_grid(self.image_width, self.image_height)

    def finding(self, label: str) -> GroundTruthFinding | None:
        for f in self.findings:
            if f.label == label:
                return f
        return None


def default_skills(findings: tuple[GroundTruthFinding, ...]) -> tuple[str, ...]:
    """Finding labels (first-seen order, deduped) plus the synthetic skills."""
    seen: list[str] = []
    for f in findings:
        if f.label not in seen:
            seen.append(f.label)
    return tuple(seen) + SYNTHETIC_SKILLS


@dataclass(frozen=True)
class StudentTurn:
    boxes: tuple[BoundingBox, ...] = ()
    fixations: tuple[Fixation, ...] = ()
    text: str = ""
    confidence: float = 0.5
    requests: frozenset[str] = frozenset()
    turn_index: int = 0

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise InvariantViolation("confidence outside [0,1]")
        if self.turn_index < 0:
            raise InvariantViolation("negative turn index")
        unknown = set(self.requests) - REQUEST_FLAGS
        if unknown:
            raise InvariantViolation(f"unknown request flag {sorted(unknown)!r}")
        indices = sorted(f.order_index for f in self.fixations)
        if indices != list(range(len(indices))):
            raise InvariantViolation("fixation order indices not contiguous")

    def ordered_fixations(self) -> tuple[Fixation, ...]:
        return tuple(sorted(self.fixations, key=lambda f: f.order_index))


def fallback_zone_grid(image_width: int, image_height: int) -> LobeMask:
    """Coarse 3x2 zone grid covering every pixel (no background).

    Rows split height into near-equal thirds, columns split width into
    halves; the viewer-left column holds the "right_*" zones.
    """
    if image_width <= 0 or image_height <= 0:
        raise InvariantViolation("non-positive grid dimensions")
    ys = np.arange(image_height)
    xs = np.arange(image_width)
    rows = np.minimum(2, (ys * 3) // image_height)
    cols = np.minimum(1, (xs * 2) // image_width)
    labels = (rows[:, None] * 2 + cols[None, :] + 1).astype(np.uint8)
    return LobeMask(labels, DEFAULT_REGION_ORDER)
