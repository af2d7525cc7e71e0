"""Literature snippets via the E-utilities two-step protocol.

esearch finds PMIDs for a topic, efetch pulls abstracts; results are cached
on disk by normalized topic with a TTL, upstream calls are spaced by a rate
limit, and an empty search falls back to a guarded generative summary.
"""

from __future__ import annotations

import json
import logging
import re
import time
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from pathlib import Path

import requests

from .backends import TASK_MARK, TOPIC_MARK, TextGenRequest
from .domain import CaseBundle
from .errors import FallbackUnavailable, UnknownSkill, UpstreamHttpError
from .sanitizer import CategoryMap, default_category_map

logger = logging.getLogger(__name__)

SNIPPET_LIMIT = 600  # characters

SYNTHETIC_TOPICS = {
    "localization": "chest radiograph search pattern",
    "systematic-search": "systematic chest radiograph review sequence",
}


@dataclass(frozen=True)
class KnowledgeSnippet:
    topic: str
    text: str
    source: str  # pubmed | fallback
    citation_id: str | None
    retrieved_at: float

    def __post_init__(self):
        if len(self.text) > SNIPPET_LIMIT:
            raise ValueError("snippet exceeds length limit")
        if (self.source == "pubmed") != (self.citation_id is not None):
            raise ValueError("citation_id present iff source is pubmed")


def normalize_topic(topic: str) -> str:
    return re.sub(r"\s+", " ", topic.strip().lower())


def truncate_at_sentence(text: str, limit: int = SNIPPET_LIMIT) -> str:
    text = re.sub(r"\s+", " ", text.strip())
    if len(text) <= limit:
        return text
    clipped = text[:limit]
    cut = max(clipped.rfind(". "), clipped.rfind("! "), clipped.rfind("? "))
    if cut > 0:
        return clipped[: cut + 1]
    return clipped.rsplit(" ", 1)[0]


def topic_for_skill(
    skill_id: str, case: CaseBundle, categories: CategoryMap | None = None
) -> str:
    """Deterministic query topic for a tracked skill, sanitized."""
    if skill_id in SYNTHETIC_TOPICS:
        return SYNTHETIC_TOPICS[skill_id]
    if skill_id not in case.skills:
        raise UnknownSkill(skill_id)
    categories = categories or default_category_map()
    return f"{categories.label_category(skill_id)} chest radiograph interpretation"


class KnowledgeClient:
    """E-utilities client with write-through disk cache and rate limiting.

    ``transport`` (a requests.Session-alike with .get) and the clock/sleeper
    are injectable so tests can record upstream traffic and run on a virtual
    clock.
    """

    def __init__(
        self,
        base_url: str,
        cache_path: str | Path,
        text_backend=None,
        api_key: str | None = None,
        max_results: int = 3,
        ttl_hours: float = 24.0,
        rate_limit_ms: float = 350.0,
        transport=None,
        clock=time.time,
        sleeper=time.sleep,
        timeout_s: float = 10.0,
    ):
        self.base_url = base_url.rstrip("/")
        self.cache_path = Path(cache_path)
        self.text_backend = text_backend
        self.api_key = api_key
        self.max_results = max_results
        self.ttl_s = ttl_hours * 3600.0
        self.rate_limit_s = rate_limit_ms / 1000.0
        self.transport = transport or requests.Session()
        self.clock = clock
        self.sleeper = sleeper
        self.timeout_s = timeout_s
        self._last_request_at: float | None = None
        self._cache = self._load_cache()

    # -- cache ---------------------------------------------------------

    def _load_cache(self) -> dict:
        if self.cache_path.exists():
            try:
                return json.loads(self.cache_path.read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError):
                logger.warning("knowledge cache unreadable; starting fresh")
        return {}

    def _store_cache(self, topic_key: str, snippets: list[KnowledgeSnippet]):
        self._cache[topic_key] = {
            "cached_at": self.clock(),
            "snippets": [vars(s) for s in snippets],
        }
        self.cache_path.parent.mkdir(parents=True, exist_ok=True)
        self.cache_path.write_text(
            json.dumps(self._cache, sort_keys=True), encoding="utf-8"
        )

    def _cache_lookup(self, topic_key: str, allow_stale: bool = False):
        entry = self._cache.get(topic_key)
        if entry is None:
            return None
        if not allow_stale and self.clock() - entry["cached_at"] > self.ttl_s:
            return None
        return [KnowledgeSnippet(**raw) for raw in entry["snippets"]]

    # -- upstream ------------------------------------------------------

    def _rate_limited_get(self, url: str, params: dict) -> requests.Response:
        if self.api_key:
            params = {**params, "api_key": self.api_key}
        last_error: Exception | None = None
        for attempt in range(3):
            if self._last_request_at is not None:
                wait = self.rate_limit_s - (self.clock() - self._last_request_at)
                if wait > 0:
                    self.sleeper(wait)
            try:
                response = self.transport.get(url, params=params, timeout=self.timeout_s)
            except requests.RequestException as exc:
                self._last_request_at = self.clock()
                last_error = exc
                continue
            self._last_request_at = self.clock()
            if response.status_code >= 500:
                last_error = UpstreamHttpError(f"{url} returned {response.status_code}")
                continue
            return response
        raise UpstreamHttpError(f"{url} unreachable: {last_error}")

    def _search_ids(self, topic: str) -> list[str]:
        if not self.base_url:
            raise UpstreamHttpError("knowledge retrieval offline (no base url)")
        response = self._rate_limited_get(
            f"{self.base_url}/esearch.fcgi",
            {"db": "pubmed", "term": topic, "retmax": self.max_results, "retmode": "json"},
        )
        if response.status_code != 200:
            raise UpstreamHttpError(f"esearch returned {response.status_code}")
        try:
            return list(response.json()["esearchresult"]["idlist"])
        except (KeyError, ValueError) as exc:
            raise UpstreamHttpError(f"malformed esearch payload: {exc}") from exc

    def _fetch_abstracts(self, pmids: list[str]) -> list[tuple[str, str]]:
        response = self._rate_limited_get(
            f"{self.base_url}/efetch.fcgi",
            {"db": "pubmed", "id": ",".join(pmids), "rettype": "abstract", "retmode": "xml"},
        )
        if response.status_code != 200:
            raise UpstreamHttpError(f"efetch returned {response.status_code}")
        try:
            root = ET.fromstring(response.text)
        except ET.ParseError as exc:
            raise UpstreamHttpError(f"unparseable efetch XML: {exc}") from exc
        out = []
        for article in root.findall(".//PubmedArticle"):
            pmid_el = article.find(".//PMID")
            if pmid_el is None or not pmid_el.text:
                continue
            parts = [
                "".join(el.itertext()).strip()
                for el in article.findall(".//AbstractText")
            ]
            abstract = " ".join(p for p in parts if p)
            if abstract:
                out.append((pmid_el.text, abstract))
        return out

    def _fallback(self, topic: str) -> list[KnowledgeSnippet]:
        if self.text_backend is None:
            raise FallbackUnavailable("no text backend configured")
        prompt = (
            f"{TASK_MARK} knowledge_fallback\n"
            f"{TOPIC_MARK} {topic}\n"
            "Write a short teaching note on the topic above for a radiology "
            "trainee. Use general principles only: no patient specifics, no "
            "exact measurements, no named locations."
        )
        reply = self.text_backend.text_generate(
            TextGenRequest(
                system_prompt="You produce concise, value-free teaching notes.",
                user_messages=(prompt,),
                tag="knowledge-fallback",
            )
        )
        return [
            KnowledgeSnippet(
                topic=topic,
                text=truncate_at_sentence(reply.text),
                source="fallback",
                citation_id=None,
                retrieved_at=self.clock(),
            )
        ]

    # -- public --------------------------------------------------------

    def fetch_snippets(self, topic: str, max_results: int | None = None) -> list[KnowledgeSnippet]:
        """Search + fetch with caching; generative fallback on empty search,
        stale cache on upstream failure, empty list when everything fails."""
        if not topic.strip():
            raise ValueError("topic must be non-empty")
        limit = max_results or self.max_results
        topic_key = normalize_topic(topic)
        cached = self._cache_lookup(topic_key)
        if cached is not None:
            return cached[:limit]

        try:
            pmids = self._search_ids(topic)
            if pmids:
                snippets = [
                    KnowledgeSnippet(
                        topic=topic,
                        text=truncate_at_sentence(abstract),
                        source="pubmed",
                        citation_id=pmid,
                        retrieved_at=self.clock(),
                    )
                    for pmid, abstract in self._fetch_abstracts(pmids[:limit])
                ]
            else:
                snippets = []
        except UpstreamHttpError as exc:
            stale = self._cache_lookup(topic_key, allow_stale=True)
            if stale is not None:
                logger.warning("upstream failed (%s); serving stale cache", exc)
                return stale[:limit]
            snippets = []

        if not snippets:
            try:
                snippets = self._fallback(topic)
            except FallbackUnavailable:
                logger.warning("knowledge retrieval empty for %r; no fallback", topic)
                return []

        self._store_cache(topic_key, snippets)
        return snippets[:limit]
