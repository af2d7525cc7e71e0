from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from cxrtutor.bundles import write_case_bundle
from cxrtutor.domain import (
    BoundingBox,
    CaseBundle,
    GroundTruthFinding,
    LobeMask,
)


def make_image(path: Path, width: int = 600, height: int = 600) -> Path:
    """Tiny synthetic radiograph-ish grayscale PNG."""
    ys, xs = np.mgrid[0:height, 0:width]
    pixels = ((xs * 7 + ys * 3) % 191 + 32).astype(np.uint8)
    Image.fromarray(pixels, mode="L").save(path)
    return path


def make_case(
    tmp_path: Path,
    case_id: str = "case001",
    width: int = 600,
    height: int = 600,
    findings: tuple[GroundTruthFinding, ...] | None = None,
    lobe_mask: LobeMask | None = None,
    metadata: dict | None = None,
) -> CaseBundle:
    image_path = make_image(tmp_path / f"{case_id}.png", width, height)
    if findings is None:
        findings = (
            GroundTruthFinding(
                label="Consolidation",
                boxes=(BoundingBox(100, 100, 220, 220),),
                descriptors=(("measurement", "12 mm"), ("laterality", "left basal")),
            ),
        )
    return CaseBundle(
        case_id=case_id,
        image_path=image_path,
        image_width=width,
        image_height=height,
        findings=findings,
        lobe_mask=lobe_mask,
        metadata=metadata if metadata is not None else {"support_devices": False},
    )


@pytest.fixture
def sample_case(tmp_path) -> CaseBundle:
    return make_case(tmp_path)


@pytest.fixture
def sample_bundle_dir(tmp_path) -> Path:
    src = tmp_path / "src_case"
    src.mkdir()
    case = make_case(src)
    return write_case_bundle(case, tmp_path / "bundle")
