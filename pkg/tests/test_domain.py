from __future__ import annotations

import numpy as np
import pytest

from cxrtutor.domain import (
    BoundingBox,
    Fixation,
    LobeMask,
    StudentTurn,
    default_skills,
    fallback_zone_grid,
)
from cxrtutor.errors import InvariantViolation


def test_bounding_box_rejects_zero_area():
    with pytest.raises(InvariantViolation, match="zero-area"):
        BoundingBox(10, 10, 10, 20)
    with pytest.raises(InvariantViolation, match="zero-area"):
        BoundingBox(10, 30, 20, 30)


def test_bounding_box_center_and_area():
    box = BoundingBox(0, 0, 10, 20)
    assert box.area == 200
    assert box.center == (5.0, 10.0)


def test_fixation_requires_positive_duration():
    with pytest.raises(InvariantViolation):
        Fixation(x=1, y=1, duration=0, order_index=0)


def test_student_turn_rejects_gapped_fixation_order():
    fixes = (
        Fixation(x=1, y=1, duration=10, order_index=0),
        Fixation(x=2, y=2, duration=10, order_index=2),
    )
    with pytest.raises(InvariantViolation, match="contiguous"):
        StudentTurn(fixations=fixes)


def test_student_turn_rejects_unknown_request_flag():
    with pytest.raises(InvariantViolation, match="request"):
        StudentTurn(requests=frozenset({"oracle"}))


def test_lobe_mask_rejects_out_of_range_values():
    labels = np.array([[0, 1], [2, 3]], dtype=np.uint8)
    with pytest.raises(InvariantViolation):
        LobeMask(labels, ("a", "b"))


def test_lobe_mask_region_lookup():
    labels = np.array([[0, 1], [2, 2]], dtype=np.uint8)
    mask = LobeMask(labels, ("top", "bottom"))
    assert mask.region_at(0, 0) is None
    assert mask.region_at(1, 0) == "top"
    assert mask.region_at(0, 1) == "bottom"


def test_fallback_grid_corners_600():
    mask = fallback_zone_grid(600, 600)
    assert mask.region_at(100, 100) == "right_upper"
    assert mask.region_at(400, 500) == "left_lower"


def test_fallback_grid_total_partition_tiny():
    mask = fallback_zone_grid(2, 3)
    assert int(mask.labels.min()) >= 1
    assert set(np.unique(mask.labels)) == {1, 2, 3, 4, 5, 6}


def test_fallback_grid_covers_every_pixel():
    for w, h in [(7, 11), (600, 400), (3, 3)]:
        mask = fallback_zone_grid(w, h)
        assert int(mask.labels.min()) >= 1
        assert mask.labels.shape == (h, w)


def test_fallback_grid_region_areas_near_equal():
    mask = fallback_zone_grid(101, 100)
    counts = np.bincount(mask.labels.ravel(), minlength=7)[1:]
    # each region is a row-third times a column-half; tolerance is one
    # pixel row/column worth of pixels
    ideal = 101 * 100 / 6
    row_slack = 101  # one pixel row
    col_slack = 100 / 3 + 1  # one pixel column within a band
    for count in counts:
        assert abs(count - ideal) <= max(row_slack, col_slack)


def test_default_skills_appends_synthetic():
    from cxrtutor.domain import GroundTruthFinding

    findings = (
        GroundTruthFinding(label="Nodule", boxes=(BoundingBox(0, 0, 5, 5),)),
        GroundTruthFinding(label="Nodule", boxes=(BoundingBox(10, 10, 15, 15),)),
    )
    assert default_skills(findings) == ("Nodule", "localization", "systematic-search")
