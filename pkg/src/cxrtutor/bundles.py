"""Case bundle ingestion: one directory per case.

Layout: ``case.json`` sidecar + raster image + optional palette-indexed
``lobe_mask.png`` (index i maps to ``region_names[i-1]``, 0 = background).
The sidecar mirrors CaseBundle field names in snake_case; boxes are
``[x_min, y_min, x_max, y_max]`` arrays, image referenced by relative path.
"""

from __future__ import annotations

import json
import shutil
from pathlib import Path
from typing import Any

import numpy as np
from PIL import Image

from .domain import (
    BoundingBox,
    CaseBundle,
    GroundTruthFinding,
    LobeMask,
)
from .errors import InvariantViolation, MalformedSidecar, MissingFile

SIDECAR_NAME = "case.json"

# Palette for viewing masks in image tools; indices are what matters.
_MASK_PALETTE = [
    (0, 0, 0),
    (230, 60, 60),
    (60, 130, 230),
    (60, 200, 120),
    (230, 180, 50),
    (170, 90, 220),
    (90, 210, 210),
    (240, 130, 190),
    (150, 150, 150),
]


def _require(sidecar: dict[str, Any], key: str, kind: type, where: str):
    if key not in sidecar:
        raise MalformedSidecar(f"{where}: missing field {key!r}")
    value = sidecar[key]
    if kind is float:
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise MalformedSidecar(f"{where}: field {key!r} must be a number")
        return float(value)
    if not isinstance(value, kind):
        raise MalformedSidecar(f"{where}: field {key!r} must be {kind.__name__}")
    return value


def _parse_box(raw: Any, where: str) -> BoundingBox:
    if not isinstance(raw, (list, tuple)) or len(raw) != 4:
        raise MalformedSidecar(f"{where}: box must be [x_min, y_min, x_max, y_max]")
    try:
        coords = [float(v) for v in raw]
    except (TypeError, ValueError) as exc:
        raise MalformedSidecar(f"{where}: non-numeric box coordinate") from exc
    return BoundingBox(*coords)


def _parse_finding(raw: Any, index: int) -> GroundTruthFinding:
    where = f"findings[{index}]"
    if not isinstance(raw, dict):
        raise MalformedSidecar(f"{where}: must be an object")
    label = _require(raw, "label", str, where)
    boxes_raw = _require(raw, "boxes", list, where)
    boxes = tuple(
        _parse_box(b, f"{where}.boxes[{i}]") for i, b in enumerate(boxes_raw)
    )
    descriptors: list[tuple[str, str]] = []
    for j, pair in enumerate(raw.get("descriptors", [])):
        if not isinstance(pair, (list, tuple)) or len(pair) != 2:
            raise MalformedSidecar(f"{where}.descriptors[{j}]: must be [key, value]")
        descriptors.append((str(pair[0]), str(pair[1])))
    return GroundTruthFinding(
        label=label,
        boxes=boxes,
        descriptors=tuple(descriptors),
        required_for_resolution=bool(raw.get("required_for_resolution", True)),
    )


def _load_mask(bundle_dir: Path, spec: Any) -> LobeMask:
    if not isinstance(spec, dict):
        raise MalformedSidecar("lobe_mask: must be {path, region_names}")
    rel = _require(spec, "path", str, "lobe_mask")
    names_raw = _require(spec, "region_names", list, "lobe_mask")
    names = tuple(str(n) for n in names_raw)
    mask_path = bundle_dir / rel
    if not mask_path.exists():
        raise MissingFile(f"lobe mask file not found: {mask_path}")
    with Image.open(mask_path) as img:
        labels = np.array(img)
    if labels.ndim != 2:
        raise MalformedSidecar("lobe_mask: raster must be single-channel indexed")
    return LobeMask(labels, names)


def load_case_bundle(path: str | Path) -> CaseBundle:
    """Load and validate one case directory; raises on any defect."""
    bundle_dir = Path(path)
    sidecar_path = bundle_dir / SIDECAR_NAME
    if not sidecar_path.exists():
        raise MissingFile(f"sidecar not found: {sidecar_path}")
    try:
        sidecar = json.loads(sidecar_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise MalformedSidecar(f"{sidecar_path}: invalid JSON ({exc})") from exc
    if not isinstance(sidecar, dict):
        raise MalformedSidecar(f"{sidecar_path}: top level must be an object")

    where = str(sidecar_path)
    case_id = _require(sidecar, "case_id", str, where)
    image_rel = _require(sidecar, "image_path", str, where)
    image_path = bundle_dir / image_rel
    if not image_path.exists():
        raise MissingFile(f"image file not found: {image_path}")
    width = int(_require(sidecar, "image_width", float, where))
    height = int(_require(sidecar, "image_height", float, where))

    findings_raw = _require(sidecar, "findings", list, where)
    findings = tuple(_parse_finding(f, i) for i, f in enumerate(findings_raw))

    lobe_mask = None
    if sidecar.get("lobe_mask") is not None:
        lobe_mask = _load_mask(bundle_dir, sidecar["lobe_mask"])
        if lobe_mask.width != width or lobe_mask.height != height:
            raise InvariantViolation("mask dimensions differ from image")

    kwargs: dict[str, Any] = {}
    if sidecar.get("expected_sequence") is not None:
        kwargs["expected_sequence"] = tuple(
            str(r) for r in sidecar["expected_sequence"]
        )
    if sidecar.get("skills") is not None:
        kwargs["skills"] = tuple(str(s) for s in sidecar["skills"])

    return CaseBundle(
        case_id=case_id,
        image_path=image_path,
        image_width=width,
        image_height=height,
        findings=findings,
        lobe_mask=lobe_mask,
        metadata=dict(sidecar.get("metadata", {})),
        skills=kwargs.pop("skills", ()),
        **kwargs,
    )


def write_case_bundle(bundle: CaseBundle, dest_dir: str | Path) -> Path:
    """Serialize a bundle into a directory in the documented format."""
    dest = Path(dest_dir)
    dest.mkdir(parents=True, exist_ok=True)
    image_name = Path(bundle.image_path).name
    dest_image = dest / image_name
    if Path(bundle.image_path).resolve() != dest_image.resolve():
        shutil.copyfile(bundle.image_path, dest_image)

    sidecar: dict[str, Any] = {
        "case_id": bundle.case_id,
        "image_path": image_name,
        "image_width": bundle.image_width,
        "image_height": bundle.image_height,
        "findings": [
            {
                "label": f.label,
                "boxes": [[b.x_min, b.y_min, b.x_max, b.y_max] for b in f.boxes],
                "descriptors": [list(d) for d in f.descriptors],
                "required_for_resolution": f.required_for_resolution,
            }
            for f in bundle.findings
        ],
        "expected_sequence": list(bundle.expected_sequence),
        "metadata": bundle.metadata,
        "skills": list(bundle.skills),
    }
    if bundle.lobe_mask is not None:
        mask_img = Image.fromarray(bundle.lobe_mask.labels, mode="P")
        palette: list[int] = []
        for rgb in _MASK_PALETTE:
            palette.extend(rgb)
        mask_img.putpalette(palette + [0] * (768 - len(palette)))
        mask_img.save(dest / "lobe_mask.png")
        sidecar["lobe_mask"] = {
            "path": "lobe_mask.png",
            "region_names": list(bundle.lobe_mask.region_names),
        }
    (dest / SIDECAR_NAME).write_text(
        json.dumps(sidecar, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return dest


def load_case_library(library_dir: str | Path) -> dict[str, CaseBundle]:
    """Load every bundle directory under library_dir, keyed by case_id."""
    library: dict[str, CaseBundle] = {}
    root = Path(library_dir)
    if not root.exists():
        return library
    for entry in sorted(root.iterdir()):
        if not entry.is_dir() or not (entry / SIDECAR_NAME).exists():
            continue
        bundle = load_case_bundle(entry)
        if bundle.case_id in library:
            raise InvariantViolation(f"duplicate case_id {bundle.case_id!r}")
        library[bundle.case_id] = bundle
    return library
