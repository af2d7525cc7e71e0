"""Text-generation and vision-reasoning backends.

Each interface ships one remote HTTP client and one deterministic stub. The
stubs are pure functions of the request: a stable FNV-1a 64-bit hash plus a
keyword rule table produce section-tagged canned text, so the agent parsers
and the whole pipeline can be exercised end to end without a live model.

Remote endpoint shapes (documented assumption, configurable base URLs):
  text:   POST {base}/chat/completions  {model, messages[], temperature,
          max_tokens} -> {choices: [{message: {content}}]}
  vision: POST {base}  {image_b64, prompt} -> {text}
"""

from __future__ import annotations

import base64
import json
import logging
import os
import time
from dataclasses import dataclass

import requests

from .config import EngineConfig
from .errors import (
    BackendHttpError,
    BackendMisconfigured,
    BackendTimeout,
    ImageTooLarge,
    InvariantViolation,
)

logger = logging.getLogger(__name__)

MAX_RETRIES = 2  # retries after the first attempt

# Debug-mode hook: when set, every outbound request passes through it before
# any backend sees it (test builds install a leakage auditor here; sanitizing
# is enforced upstream, this is the tripwire).
request_auditor = None


def _audit(request) -> None:
    if request_auditor is not None:
        request_auditor(request)


@dataclass(frozen=True)
class TextGenRequest:
    system_prompt: str
    user_messages: tuple[str, ...]
    temperature: float = 0.0
    max_tokens: int = 800
    tag: str = "untagged"

    def __post_init__(self):
        if not self.user_messages:
            raise InvariantViolation("user_messages must be non-empty")
        if self.temperature < 0:
            raise InvariantViolation("temperature must be >= 0")


@dataclass(frozen=True)
class VisionReasonRequest:
    image: bytes
    context_text: str
    tag: str = "untagged"

    def __post_init__(self):
        if not self.image:
            raise InvariantViolation("image must be non-empty")


@dataclass(frozen=True)
class BackendReply:
    text: str
    latency_ms: int
    backend_id: str
    from_cache: bool = False

    def __post_init__(self):
        if self.latency_ms < 0:
            raise InvariantViolation("latency_ms must be >= 0")


def fnv1a64(data: bytes) -> int:
    """FNV-1a 64-bit; stable across processes and platforms."""
    value = 0xCBF29CE484222325
    for byte in data:
        value ^= byte
        value = (value * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return value


def _hash_text_request(req: TextGenRequest) -> int:
    payload = "\x1f".join((req.system_prompt, *req.user_messages))
    return fnv1a64(payload.encode("utf-8"))


def _log_reply(reply: BackendReply, tag: str) -> BackendReply:
    logger.info(
        "backend=%s tag=%s latency_ms=%d cached=%s",
        reply.backend_id,
        tag,
        reply.latency_ms,
        reply.from_cache,
    )
    return reply


# ---------------------------------------------------------------------------
# deterministic stubs
# ---------------------------------------------------------------------------

# prompt sections the agents embed; the stub reads them back out
CASE_CATEGORIES_MARK = "[[CASE_CATEGORIES]]"
STUDENT_TEXT_MARK = "[[STUDENT_TEXT]]"
MISSING_MARK = "[[MISSING]]"
CORRECTIONS_MARK = "[[CORRECTIONS]]"
SECTIONS_MARK = "[[SECTIONS]]"
TASK_MARK = "[[TASK]]"
TOPIC_MARK = "[[TOPIC]]"

_RESPOND_OPENERS = (
    "Let's look at where you are.",
    "Good effort this turn.",
    "Here's how this turn went.",
)


def _extract(message: str, mark: str) -> str:
    for line in message.splitlines():
        if line.startswith(mark):
            return line[len(mark):].strip()
    return ""


def _split_list(raw: str) -> list[str]:
    return [part.strip() for part in raw.split(";") if part.strip()]


def _category_mentioned(category: str, student_text: str) -> bool:
    from .sanitizer import category_keywords, stemmed_tokens

    keywords = category_keywords(category)
    if not keywords:
        return False
    tokens = set(stemmed_tokens(student_text))
    return bool(keywords & tokens)


def _negated(category: str, student_text: str) -> bool:
    from .sanitizer import category_keywords, stemmed_tokens

    tokens = stemmed_tokens(student_text)
    keywords = category_keywords(category)
    negators = {"no", "without", "absent", "not"}
    return any(
        tok in keywords and i > 0 and tokens[i - 1] in negators
        for i, tok in enumerate(tokens)
    )


class StubTextBackend:
    """Rule-table text model; replies depend only on the request bytes."""

    backend_id = "stub-text"

    def text_generate(self, req: TextGenRequest) -> BackendReply:
        _audit(req)
        message = "\n".join(req.user_messages)
        task = _extract(message, TASK_MARK) or "respond"
        digest = _hash_text_request(req)
        if task == "assess":
            text = self._assess(message)
        elif task == "socratic":
            text = self._socratic(message)
        elif task == "knowledge_fallback":
            topic = _extract(message, TOPIC_MARK)
            text = (
                f"On {topic}: review the classic radiographic signs, then "
                "correlate with the clinical picture before committing."
            )
        else:
            text = self._respond(message, digest)
        return _log_reply(
            BackendReply(text=text, latency_ms=0, backend_id=self.backend_id),
            req.tag,
        )

    def _assess(self, message: str) -> str:
        categories = _split_list(_extract(message, CASE_CATEGORIES_MARK))
        student_text = _extract(message, STUDENT_TEXT_MARK)
        reinforced, corrected, missing = [], [], []
        for category in categories:
            if _negated(category, student_text):
                corrected.append(category)
            elif _category_mentioned(category, student_text):
                reinforced.append(category)
            else:
                missing.append(category)
        lines = []
        if reinforced:
            lines.append("ASSESS_R: " + " ; ".join(reinforced))
        for category in corrected:
            lines.append(f"ASSESS_C: {category} | reconsider - the evidence points the other way")
        if missing:
            lines.append("ASSESS_M: " + " ; ".join(missing))
        hit = len(reinforced)
        lines.append(
            f"ASSESS_I: addressed {hit} of {len(categories)} relevant aspects this turn"
        )
        return "\n".join(lines)

    def _socratic(self, message: str) -> str:
        missing = _split_list(_extract(message, MISSING_MARK))
        corrections = _split_list(_extract(message, CORRECTIONS_MARK))
        lines = []
        for category in missing:
            lines.append(
                f"SOCRATIC: What do you notice when you focus on the {category} aspects? | medium | probe-missing"
            )
        for category in corrections:
            lines.append(
                f"SOCRATIC: What evidence supports your read on the {category} aspect? | hard | challenge-correction"
            )
        if not lines:
            lines.append("SOCRATIC: What would you examine next? | easy | extend")
        return "\n".join(lines)

    def _respond(self, message: str, digest: int) -> str:
        sections = _extract(message, SECTIONS_MARK)
        opener = _RESPOND_OPENERS[digest % len(_RESPOND_OPENERS)]
        body = sections.replace(" || ", " ") if sections else "Keep working through the case."
        return f"RESPOND: {opener} {body}"


class StubVisionBackend:
    """Fixed-template reasoning skeleton parameterized by a context hash."""

    backend_id = "stub-vision"

    def __init__(self, max_image_bytes: int = 16 * 1024 * 1024):
        self.max_image_bytes = max_image_bytes

    def vision_reason(self, req: VisionReasonRequest) -> BackendReply:
        _audit(req)
        if len(req.image) > self.max_image_bytes:
            raise ImageTooLarge(f"image exceeds {self.max_image_bytes} bytes")
        digest = fnv1a64(req.context_text.encode("utf-8"))
        text = (
            f"Reasoning walkthrough [trace {digest:016x}]:\n"
            "1. Orient: confirm projection, rotation, and exposure quality.\n"
            "2. Survey: sweep each zone deliberately before fixating on any one area.\n"
            "3. Compare: check symmetry between the two sides at the same level.\n"
            "4. Characterize: for the area you flagged, describe shape, margin, and density in your own words.\n"
            "5. Integrate: ask which single explanation accounts for everything you described."
        )
        return _log_reply(
            BackendReply(text=text, latency_ms=0, backend_id=self.backend_id),
            req.tag,
        )


# ---------------------------------------------------------------------------
# remote clients
# ---------------------------------------------------------------------------


class RemoteTextBackend:
    """Chat-completions-style client with bounded retries."""

    backend_id = "remote-text"

    def __init__(
        self,
        base_url: str,
        model: str = "gpt-4",
        api_key: str | None = None,
        timeout_s: float = 30.0,
        session: requests.Session | None = None,
        sleeper=time.sleep,
    ):
        if not base_url:
            raise BackendMisconfigured("text backend base_url is empty")
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key = api_key
        self.timeout_s = timeout_s
        self.session = session or requests.Session()
        self.sleeper = sleeper

    def text_generate(self, req: TextGenRequest) -> BackendReply:
        _audit(req)
        messages = [{"role": "system", "content": req.system_prompt}]
        messages += [{"role": "user", "content": m} for m in req.user_messages]
        payload = {
            "model": self.model,
            "messages": messages,
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        body = _post_with_retries(
            self.session,
            f"{self.base_url}/chat/completions",
            payload,
            headers,
            self.timeout_s,
            self.sleeper,
        )
        started = time.monotonic()
        try:
            text = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendHttpError(502, f"malformed completion payload: {exc}") from exc
        latency_ms = int(body.get("_latency_ms", (time.monotonic() - started) * 1000))
        return _log_reply(
            BackendReply(text=text, latency_ms=latency_ms, backend_id=self.backend_id),
            req.tag,
        )


class RemoteVisionBackend:
    """Posts base64 image + prompt to a configured inference endpoint."""

    backend_id = "remote-vision"

    def __init__(
        self,
        base_url: str,
        timeout_s: float = 120.0,
        max_image_bytes: int = 16 * 1024 * 1024,
        session: requests.Session | None = None,
        sleeper=time.sleep,
    ):
        if not base_url:
            raise BackendMisconfigured("vision backend base_url is empty")
        self.base_url = base_url
        self.timeout_s = timeout_s
        self.max_image_bytes = max_image_bytes
        self.session = session or requests.Session()
        self.sleeper = sleeper

    def vision_reason(self, req: VisionReasonRequest) -> BackendReply:
        _audit(req)
        if len(req.image) > self.max_image_bytes:
            raise ImageTooLarge(f"image exceeds {self.max_image_bytes} bytes")
        payload = {
            "image_b64": base64.b64encode(req.image).decode("ascii"),
            "prompt": req.context_text,
        }
        body = _post_with_retries(
            self.session,
            self.base_url,
            payload,
            {"Content-Type": "application/json"},
            self.timeout_s,
            self.sleeper,
        )
        text = body.get("text")
        if not isinstance(text, str):
            raise BackendHttpError(502, "vision payload missing 'text'")
        return _log_reply(
            BackendReply(
                text=text,
                latency_ms=int(body.get("_latency_ms", 0)),
                backend_id=self.backend_id,
            ),
            req.tag,
        )


def _post_with_retries(session, url, payload, headers, timeout_s, sleeper) -> dict:
    last_error: Exception | None = None
    started = time.monotonic()
    for attempt in range(MAX_RETRIES + 1):
        if attempt:
            sleeper(0.5 * (2 ** (attempt - 1)))
        try:
            response = session.post(url, json=payload, headers=headers, timeout=timeout_s)
        except requests.Timeout as exc:
            raise BackendTimeout(f"{url} timed out after {timeout_s}s") from exc
        except requests.RequestException as exc:
            last_error = exc
            continue
        if response.status_code >= 500:
            last_error = BackendHttpError(response.status_code)
            continue
        if response.status_code >= 400:
            raise BackendHttpError(response.status_code)
        try:
            body = response.json()
        except json.JSONDecodeError as exc:
            raise BackendHttpError(502, "non-JSON backend response") from exc
        body["_latency_ms"] = int((time.monotonic() - started) * 1000)
        return body
    if isinstance(last_error, BackendHttpError):
        raise last_error
    raise BackendHttpError(599, f"backend unreachable: {last_error}")


def make_text_backend(config: EngineConfig):
    if config.backends_text_mode == "stub":
        return StubTextBackend()
    if config.backends_text_mode == "remote":
        return RemoteTextBackend(
            base_url=config.backends_text_base_url,
            model=config.backends_text_model,
            api_key=os.environ.get(config.backends_text_api_key_env),
            timeout_s=config.backends_text_timeout_s,
        )
    raise BackendMisconfigured(f"unknown text backend mode {config.backends_text_mode!r}")


def make_vision_backend(config: EngineConfig):
    if config.backends_vision_mode == "stub":
        return StubVisionBackend(max_image_bytes=config.backends_vision_max_image_bytes)
    if config.backends_vision_mode == "remote":
        return RemoteVisionBackend(
            base_url=config.backends_vision_base_url,
            timeout_s=config.backends_vision_timeout_s,
            max_image_bytes=config.backends_vision_max_image_bytes,
        )
    raise BackendMisconfigured(f"unknown vision backend mode {config.backends_vision_mode!r}")
