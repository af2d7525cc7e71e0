"""Case similarity retrieval with box-overlay rendering.

Scores combine label-set Jaccard overlap, centroid proximity of shared
labels, and support-device agreement under a configurable weight simplex.
Overlays are rendered lazily, once, with deterministic bytes.
"""

from __future__ import annotations

import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

from PIL import Image, ImageDraw

from .domain import CaseBundle
from .errors import DuplicateCaseId, ImageWriteError, UnknownCase, UnknownLabel

DEFAULT_WEIGHTS = (0.5, 0.3, 0.2)  # label, spatial, metadata
_SQRT2 = math.sqrt(2.0)
_STROKE = 3  # px


@dataclass(frozen=True)
class SimilarCase:
    case_id: str
    score: float
    shared_labels: tuple[str, ...]
    overlay_path: str  # relative to the configured overlay directory


@dataclass(frozen=True)
class CaseIndexEntry:
    case_id: str
    label_set: frozenset[str]
    centroids: dict[str, tuple[float, float]]  # normalized to [0,1]^2
    support_devices: bool


@dataclass
class CaseIndex:
    entries: dict[str, CaseIndexEntry] = field(default_factory=dict)
    bundles: dict[str, CaseBundle] = field(default_factory=dict)


def _entry_for(case: CaseBundle) -> CaseIndexEntry:
    sums: dict[str, tuple[float, float, float]] = {}  # label -> (w*x, w*y, w)
    for finding in case.findings:
        for box in finding.boxes:
            cx, cy = box.center
            wx, wy, w = sums.get(finding.label, (0.0, 0.0, 0.0))
            sums[finding.label] = (wx + box.area * cx, wy + box.area * cy, w + box.area)
    centroids = {
        label: (wx / w / case.image_width, wy / w / case.image_height)
        for label, (wx, wy, w) in sums.items()
    }
    return CaseIndexEntry(
        case_id=case.case_id,
        label_set=frozenset(centroids),
        centroids=centroids,
        support_devices=case.support_devices,
    )


def build_index(cases: list[CaseBundle] | tuple[CaseBundle, ...]) -> CaseIndex:
    index = CaseIndex()
    for case in cases:
        if case.case_id in index.entries:
            raise DuplicateCaseId(case.case_id)
        index.entries[case.case_id] = _entry_for(case)
        index.bundles[case.case_id] = case
    return index


def similarity(
    a: CaseIndexEntry,
    b: CaseIndexEntry,
    weights: tuple[float, float, float] = DEFAULT_WEIGHTS,
) -> float:
    w_label, w_spatial, w_meta = weights
    if min(weights) < 0 or abs(sum(weights) - 1.0) > 1e-9:
        raise ValueError("weights must be non-negative and sum to 1")

    union = a.label_set | b.label_set
    shared = a.label_set & b.label_set
    jaccard = 1.0 if not union else len(shared) / len(union)

    if shared:
        closeness = sum(
            1.0 - math.dist(a.centroids[label], b.centroids[label]) / _SQRT2
            for label in shared
        ) / len(shared)
    else:
        closeness = 0.0

    meta = 1.0 if a.support_devices == b.support_devices else 0.0
    return w_label * jaccard + w_spatial * closeness + w_meta * meta


def render_overlay(
    case: CaseBundle, finding_label: str, overlays_dir: str | Path
) -> Path:
    """Write (once) a copy of the case image with the finding's boxes
    stroked; returns the overlay path."""
    finding = case.finding(finding_label)
    if finding is None:
        raise UnknownLabel(f"{finding_label!r} not in case {case.case_id}")
    overlays_dir = Path(overlays_dir)
    safe_label = "".join(c if c.isalnum() else "_" for c in finding_label)
    out_path = overlays_dir / f"{case.case_id}__{safe_label}.png"
    if out_path.exists():
        return out_path
    try:
        overlays_dir.mkdir(parents=True, exist_ok=True)
        with Image.open(case.image_path) as img:
            canvas = img.convert("RGB")
        draw = ImageDraw.Draw(canvas)
        for box in finding.boxes:
            draw.rectangle(
                (box.x_min, box.y_min, box.x_max - 1, box.y_max - 1),
                outline=(255, 64, 32),
                width=_STROKE,
            )
        # unique temp then rename keeps concurrent renders safe
        fd, tmp_name = tempfile.mkstemp(suffix=".png", dir=overlays_dir)
        os.close(fd)
        canvas.save(tmp_name, format="PNG")
        os.replace(tmp_name, out_path)
    except OSError as exc:
        raise ImageWriteError(str(exc)) from exc
    return out_path


def rank_similar(
    query_case_id: str,
    index: CaseIndex,
    k: int,
    weights: tuple[float, float, float] = DEFAULT_WEIGHTS,
) -> list[tuple[float, str]]:
    """(score, case_id) for the k best other cases; ties break toward the
    smaller case_id."""
    if query_case_id not in index.entries:
        raise UnknownCase(query_case_id)
    if k < 1:
        raise ValueError("k must be >= 1")
    query = index.entries[query_case_id]
    scored = sorted(
        (
            (similarity(query, entry, weights), case_id)
            for case_id, entry in index.entries.items()
            if case_id != query_case_id
        ),
        key=lambda pair: (-pair[0], pair[1]),
    )
    return scored[:k]


def top_similar(
    query_case_id: str,
    index: CaseIndex,
    k: int = 3,
    weights: tuple[float, float, float] = DEFAULT_WEIGHTS,
    overlays_dir: str | Path = "overlays",
) -> list[SimilarCase]:
    """k best-scoring other cases, overlays rendered lazily on retrieval."""
    query = index.entries.get(query_case_id)
    results = []
    for score, case_id in rank_similar(query_case_id, index, k, weights):
        entry = index.entries[case_id]
        shared = tuple(sorted(query.label_set & entry.label_set))
        highlight = shared[0] if shared else min(entry.label_set, default=None)
        overlay_rel = ""
        if highlight is not None:
            overlay = render_overlay(index.bundles[case_id], highlight, overlays_dir)
            overlay_rel = overlay.name
        results.append(
            SimilarCase(
                case_id=case_id,
                score=score,
                shared_labels=shared,
                overlay_path=overlay_rel,
            )
        )
    return results
