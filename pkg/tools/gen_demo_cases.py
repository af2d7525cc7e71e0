"""Generate the shipped synthetic demo case library (assets/cases).

Deterministic: pure integer/float numpy expressions, no RNG. Run from the
repo root after changing anything here:

    python3 tools/gen_demo_cases.py
"""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
from PIL import Image

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from cxrtutor.bundles import write_case_bundle  # noqa: E402
from cxrtutor.domain import (  # noqa: E402
    BoundingBox,
    CaseBundle,
    GroundTruthFinding,
    LobeMask,
)

SIZE = 512
OUT = Path(__file__).resolve().parents[1] / "assets" / "cases"


def lung_fields(height: int, width: int) -> tuple[np.ndarray, np.ndarray]:
    """Boolean masks for the viewer-left and viewer-right lung ellipses."""
    ys, xs = np.mgrid[0:height, 0:width].astype(float)

    def ellipse(cx, cy, rx, ry):
        return ((xs - cx) / rx) ** 2 + ((ys - cy) / ry) ** 2 <= 1.0

    return ellipse(160, 256, 96, 200), ellipse(352, 256, 96, 200)


def render_image(boxes: list[BoundingBox]) -> np.ndarray:
    ys, xs = np.mgrid[0:SIZE, 0:SIZE].astype(float)
    base = 38.0 + 42.0 * (ys / SIZE)
    left, right = lung_fields(SIZE, SIZE)
    base[left | right] += 58.0
    # mediastinal band
    base[(xs > 236) & (xs < 276)] -= 18.0
    for box in boxes:
        cx, cy = box.center
        rx = max(8.0, (box.x_max - box.x_min) / 2)
        ry = max(8.0, (box.y_max - box.y_min) / 2)
        dist = ((xs - cx) / rx) ** 2 + ((ys - cy) / ry) ** 2
        base += np.clip(80.0 * (1.0 - dist), 0.0, 80.0)
    return np.clip(base, 0, 255).astype(np.uint8)


def lobe_mask() -> LobeMask:
    left, right = lung_fields(SIZE, SIZE)
    ys = np.arange(SIZE)
    rows = np.minimum(2, (ys * 3) // SIZE)[:, None]
    labels = np.zeros((SIZE, SIZE), dtype=np.uint8)
    labels[left] = (rows * 2 + 1 + np.zeros((SIZE, SIZE), dtype=np.int64))[left]
    labels[right] = (rows * 2 + 2 + np.zeros((SIZE, SIZE), dtype=np.int64))[right]
    return LobeMask(
        labels,
        (
            "right_upper",
            "left_upper",
            "right_mid",
            "left_mid",
            "right_lower",
            "left_lower",
        ),
    )


def build_case(case_id, findings, mask=None, metadata=None) -> CaseBundle:
    boxes = [box for f in findings for box in f.boxes]
    image = render_image(boxes)
    tmp = OUT / "_tmp"
    tmp.mkdir(parents=True, exist_ok=True)
    image_path = tmp / f"{case_id}.png"
    Image.fromarray(image, mode="L").save(image_path)
    return CaseBundle(
        case_id=case_id,
        image_path=image_path,
        image_width=SIZE,
        image_height=SIZE,
        findings=tuple(findings),
        lobe_mask=mask,
        metadata=metadata or {"support_devices": False},
    )


def main():
    cases = [
        build_case(
            "cxr-opacity-001",
            [
                GroundTruthFinding(
                    label="Consolidation",
                    boxes=(BoundingBox(100, 80, 220, 190),),
                    descriptors=(("measurement", "18 mm"), ("density", "dense")),
                )
            ],
            mask=lobe_mask(),
        ),
        build_case(
            "cxr-effusion-002",
            [
                GroundTruthFinding(
                    label="Pleural effusion",
                    boxes=(BoundingBox(300, 380, 470, 500),),
                    descriptors=(("laterality", "costophrenic"), ("measurement", "3 cm")),
                ),
                GroundTruthFinding(
                    label="Support devices",
                    boxes=(BoundingBox(220, 30, 300, 100),),
                    descriptors=(("device", "endotracheal tube"),),
                    required_for_resolution=False,
                ),
            ],
            metadata={"support_devices": True},
        ),
        build_case(
            "cxr-nodule-003",
            [
                GroundTruthFinding(
                    label="Nodule",
                    boxes=(BoundingBox(120, 220, 190, 290),),
                    descriptors=(("measurement", "9 mm"),),
                )
            ],
        ),
    ]
    for case in cases:
        dest = write_case_bundle(case, OUT / case.case_id)
        print(f"wrote {dest}")
    tmp = OUT / "_tmp"
    for leftover in tmp.glob("*"):
        leftover.unlink()
    tmp.rmdir()


if __name__ == "__main__":
    main()
