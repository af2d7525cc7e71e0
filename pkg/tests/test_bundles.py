from __future__ import annotations

import json

import pytest

from cxrtutor.bundles import load_case_bundle, load_case_library, write_case_bundle
from cxrtutor.domain import fallback_zone_grid
from cxrtutor.errors import InvariantViolation, MalformedSidecar, MissingFile

from .conftest import make_case


def test_round_trip_preserves_bundle(tmp_path):
    src = tmp_path / "src"
    src.mkdir()
    case = make_case(src, lobe_mask=fallback_zone_grid(600, 600))
    bundle_dir = write_case_bundle(case, tmp_path / "out")
    loaded = load_case_bundle(bundle_dir)
    assert loaded == case
    assert loaded.image_path.read_bytes() == case.image_path.read_bytes()


def test_round_trip_without_mask(tmp_path):
    src = tmp_path / "src"
    src.mkdir()
    case = make_case(src)
    loaded = load_case_bundle(write_case_bundle(case, tmp_path / "out"))
    assert loaded == case
    assert loaded.lobe_mask is None


def test_missing_sidecar(tmp_path):
    with pytest.raises(MissingFile):
        load_case_bundle(tmp_path)


def test_zero_area_box_rejected(tmp_path, sample_bundle_dir):
    sidecar = json.loads((sample_bundle_dir / "case.json").read_text())
    sidecar["findings"][0]["boxes"][0] = [50, 50, 50, 80]
    (sample_bundle_dir / "case.json").write_text(json.dumps(sidecar))
    with pytest.raises(InvariantViolation, match="zero-area box"):
        load_case_bundle(sample_bundle_dir)


def test_unknown_region_rejected(sample_bundle_dir):
    sidecar = json.loads((sample_bundle_dir / "case.json").read_text())
    sidecar["expected_sequence"] = ["right_upper", "nonexistent_zone"]
    (sample_bundle_dir / "case.json").write_text(json.dumps(sidecar))
    with pytest.raises(InvariantViolation, match="unknown region"):
        load_case_bundle(sample_bundle_dir)


def test_malformed_sidecar_names_field(sample_bundle_dir):
    sidecar = json.loads((sample_bundle_dir / "case.json").read_text())
    del sidecar["image_width"]
    (sample_bundle_dir / "case.json").write_text(json.dumps(sidecar))
    with pytest.raises(MalformedSidecar, match="image_width"):
        load_case_bundle(sample_bundle_dir)


def test_box_outside_image_rejected(sample_bundle_dir):
    sidecar = json.loads((sample_bundle_dir / "case.json").read_text())
    sidecar["findings"][0]["boxes"][0] = [0, 0, 9000, 50]
    (sample_bundle_dir / "case.json").write_text(json.dumps(sidecar))
    with pytest.raises(InvariantViolation, match="box outside image"):
        load_case_bundle(sample_bundle_dir)


def test_library_load_and_duplicate_detection(tmp_path):
    lib = tmp_path / "lib"
    for name in ("a", "b"):
        src = tmp_path / f"src_{name}"
        src.mkdir()
        case = make_case(src, case_id=f"case_{name}")
        write_case_bundle(case, lib / name)
    library = load_case_library(lib)
    assert sorted(library) == ["case_a", "case_b"]

    src = tmp_path / "src_dup"
    src.mkdir()
    write_case_bundle(make_case(src, case_id="case_a"), lib / "dup")
    with pytest.raises(InvariantViolation, match="duplicate"):
        load_case_library(lib)
