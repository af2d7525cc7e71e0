"""Engine configuration.

All tunables live in one flat dataclass. On disk the format is one
``dotted.key = value`` pair per line; ``#`` starts a comment. Unknown keys
are rejected so typos fail loudly.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .errors import MalformedSidecar


@dataclass
class EngineConfig:
    # focus gate
    focus_iou_threshold: float = 0.6

    # gaze analytics
    gaze_sequence_nudge_threshold: float = 0.5

    # per-skill knowledge tracing defaults
    bkt_p_init: float = 0.2
    bkt_p_learn: float = 0.15
    bkt_p_guess: float = 0.2
    bkt_p_slip: float = 0.1

    # routing thresholds
    routing_knowledge_mastery: float = 0.3
    routing_knowledge_attempts: int = 3
    routing_reasoning_mastery: float = 0.2
    routing_reasoning_attempts: int = 5
    routing_resolution_mastery: float = 0.8
    routing_struggle_streak: int = 3

    # agent prompt assembly
    agents_history_window: int = 6

    # knowledge retrieval
    knowledge_max_results: int = 3
    knowledge_ttl_hours: float = 24.0
    knowledge_rate_limit_ms: float = 350.0
    knowledge_base_url: str = "https://eutils.ncbi.nlm.nih.gov/entrez/eutils"
    knowledge_api_key_env: str = "NCBI_API_KEY"

    # case similarity
    similarity_w_label: float = 0.5
    similarity_w_spatial: float = 0.3
    similarity_w_meta: float = 0.2
    similarity_max_results: int = 3

    # text/vision backends
    backends_text_mode: str = "stub"  # stub | remote
    backends_text_base_url: str = ""
    backends_text_api_key_env: str = "TEXT_BACKEND_API_KEY"
    backends_text_model: str = "gpt-4"
    backends_text_timeout_s: float = 30.0
    backends_vision_mode: str = "stub"
    backends_vision_base_url: str = ""
    backends_vision_timeout_s: float = 120.0
    backends_vision_max_image_bytes: int = 16 * 1024 * 1024

    # HTTP service
    server_port: int = 8000
    server_turn_timeout_s: float = 180.0
    server_leak_checks: bool = False

    # filesystem layout
    library_dir: Path = field(default_factory=lambda: Path("library"))
    sessions_dir: Path = field(default_factory=lambda: Path("sessions"))
    overlays_dir: Path = field(default_factory=lambda: Path("overlays"))
    knowledge_cache_path: Path = field(default_factory=lambda: Path("knowledge_cache.json"))

    # ablation switches (all on by default)
    disable_gaze: bool = False
    disable_bkt: bool = False
    disable_reasoning: bool = False
    disable_knowledge: bool = False


# dotted config-file key -> dataclass field
KEY_MAP = {
    "focus.iou_threshold": "focus_iou_threshold",
    "gaze.sequence_nudge_threshold": "gaze_sequence_nudge_threshold",
    "bkt.p_init": "bkt_p_init",
    "bkt.p_learn": "bkt_p_learn",
    "bkt.p_guess": "bkt_p_guess",
    "bkt.p_slip": "bkt_p_slip",
    "routing.knowledge_mastery": "routing_knowledge_mastery",
    "routing.knowledge_attempts": "routing_knowledge_attempts",
    "routing.reasoning_mastery": "routing_reasoning_mastery",
    "routing.reasoning_attempts": "routing_reasoning_attempts",
    "routing.resolution_mastery": "routing_resolution_mastery",
    "routing.struggle_streak": "routing_struggle_streak",
    "agents.history_window": "agents_history_window",
    "knowledge.max_results": "knowledge_max_results",
    "knowledge.ttl_hours": "knowledge_ttl_hours",
    "knowledge.rate_limit_ms": "knowledge_rate_limit_ms",
    "knowledge.base_url": "knowledge_base_url",
    "knowledge.api_key_env": "knowledge_api_key_env",
    "similarity.w_label": "similarity_w_label",
    "similarity.w_spatial": "similarity_w_spatial",
    "similarity.w_meta": "similarity_w_meta",
    "similarity.max_results": "similarity_max_results",
    "backends.text.mode": "backends_text_mode",
    "backends.text.base_url": "backends_text_base_url",
    "backends.text.api_key_env": "backends_text_api_key_env",
    "backends.text.model": "backends_text_model",
    "backends.text.timeout_s": "backends_text_timeout_s",
    "backends.vision.mode": "backends_vision_mode",
    "backends.vision.base_url": "backends_vision_base_url",
    "backends.vision.timeout_s": "backends_vision_timeout_s",
    "backends.vision.max_image_bytes": "backends_vision_max_image_bytes",
    "server.port": "server_port",
    "server.turn_timeout_s": "server_turn_timeout_s",
    "server.leak_checks": "server_leak_checks",
    "paths.library_dir": "library_dir",
    "paths.sessions_dir": "sessions_dir",
    "paths.overlays_dir": "overlays_dir",
    "paths.knowledge_cache": "knowledge_cache_path",
    "ablate.disable_gaze": "disable_gaze",
    "ablate.disable_bkt": "disable_bkt",
    "ablate.disable_reasoning": "disable_reasoning",
    "ablate.disable_knowledge": "disable_knowledge",
}

_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(EngineConfig)}


def _coerce(field_name: str, raw: str):
    current = getattr(EngineConfig(), field_name)
    if isinstance(current, bool):
        if raw.lower() in ("true", "1", "yes", "on"):
            return True
        if raw.lower() in ("false", "0", "no", "off"):
            return False
        raise ValueError(f"expected boolean, got {raw!r}")
    if isinstance(current, int):
        return int(raw)
    if isinstance(current, float):
        return float(raw)
    if isinstance(current, Path):
        return Path(raw)
    return raw


def load_config(path: str | Path | None = None, overrides: dict[str, str] | None = None) -> EngineConfig:
    """Build an EngineConfig from an optional file plus dotted-key overrides."""
    cfg = EngineConfig()
    pairs: list[tuple[str, str, str]] = []  # (where, key, value)
    if path is not None:
        text = Path(path).read_text(encoding="utf-8")
        for lineno, line in enumerate(text.splitlines(), start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise MalformedSidecar(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = stripped.partition("=")
            pairs.append((f"{path}:{lineno}", key.strip(), value.strip()))
    for key, value in (overrides or {}).items():
        pairs.append(("override", key, value))
    for where, key, value in pairs:
        if key not in KEY_MAP:
            raise MalformedSidecar(f"{where}: unknown config key {key!r}")
        field_name = KEY_MAP[key]
        try:
            setattr(cfg, field_name, _coerce(field_name, value))
        except ValueError as exc:
            raise MalformedSidecar(f"{where}: bad value for {key}: {exc}") from exc
    return cfg
