"""Interactive chest X-ray tutoring engine."""

from .bkt import BktObservation, BktParams, SkillState, bkt_update, mastery
from .bundles import load_case_bundle, load_case_library, write_case_bundle
from .config import EngineConfig, load_config
from .domain import (
    BoundingBox,
    CaseBundle,
    Fixation,
    GroundTruthFinding,
    LobeMask,
    StudentTurn,
    fallback_zone_grid,
)
from .focus import iou, validate_focus
from .gaze import compute_gaze_metrics, sequence_score
from .orchestrator import Engine, SessionState
from .sanitizer import detect_leaks, sanitize_case

__version__ = "0.1.0"

__all__ = [
    "BktObservation",
    "BktParams",
    "BoundingBox",
    "CaseBundle",
    "Engine",
    "EngineConfig",
    "Fixation",
    "GroundTruthFinding",
    "LobeMask",
    "SessionState",
    "SkillState",
    "StudentTurn",
    "bkt_update",
    "compute_gaze_metrics",
    "detect_leaks",
    "fallback_zone_grid",
    "iou",
    "load_case_bundle",
    "load_case_library",
    "load_config",
    "mastery",
    "sanitize_case",
    "sequence_score",
    "validate_focus",
    "write_case_bundle",
]
