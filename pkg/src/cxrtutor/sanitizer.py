"""Answer-leakage defenses: category abstraction and outbound-text checks.

Three rules are enforced here. Ground truth reaches prompts only as coarse
categories; exact values (measurements, locations, descriptor wording,
finding labels) are never echoed unless the student said them first; and any
outbound text can be audited after the fact with ``detect_leaks``.

Matching is lexical: case-insensitive, punctuation-normalized, lightly
stemmed, with number+unit tokens normalized ("12mm" == "12 mm"). Paraphrase
leakage is a documented non-goal. Category phrases themselves are exempt —
they are the sanctioned vocabulary.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources

from .domain import CaseBundle
from .errors import MalformedSidecar

DEFAULT_DESCRIPTOR_CATEGORY = "finding characteristic"
DEFAULT_LABEL_CATEGORY = "radiographic finding"

_UNITS = ("mm", "cm", "%")
_TOKEN_RE = re.compile(r"\d+(?:\.\d+)?|[a-z]+|%")
# tokens that carry no identifying content inside category names
_CATEGORY_STOP_TOKENS = {"finding", "type", "characteristic"}


@dataclass(frozen=True)
class SanitizedCaseSummary:
    categories: tuple[str, ...]
    finding_count: int
    anatomy_hints: tuple[str, ...]


@dataclass(frozen=True)
class LeakReport:
    leaks: tuple[tuple[str, str], ...]  # (offending_substring, source)

    @property
    def clean(self) -> bool:
        return not self.leaks


class CategoryMap:
    """Descriptor-key and finding-label vocabulary loaded from the shipped
    (or a user-supplied) flat text table."""

    def __init__(self, descriptor_map: dict[str, str], label_map: dict[str, str]):
        self.descriptor_map = descriptor_map
        self.label_map = label_map

    @classmethod
    def from_text(cls, text: str) -> "CategoryMap":
        descriptors: dict[str, str] = {}
        labels: dict[str, str] = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if ":" not in stripped:
                raise MalformedSidecar(f"category map line {lineno}: expected 'key: category'")
            key, _, category = stripped.partition(":")
            key = key.strip().lower()
            category = category.strip()
            if key.startswith("descriptor."):
                descriptors[key[len("descriptor."):]] = category
            elif key.startswith("label."):
                labels[key[len("label."):]] = category
            else:
                raise MalformedSidecar(
                    f"category map line {lineno}: key must start with descriptor. or label."
                )
        return cls(descriptors, labels)

    @classmethod
    def load_default(cls) -> "CategoryMap":
        text = resources.files("cxrtutor.data").joinpath("category_map.txt").read_text("utf-8")
        return cls.from_text(text)

    def descriptor_category(self, key: str) -> str:
        return self.descriptor_map.get(key.strip().lower(), DEFAULT_DESCRIPTOR_CATEGORY)

    def label_category(self, label: str) -> str:
        return self.label_map.get(label.strip().lower(), DEFAULT_LABEL_CATEGORY)

    def all_categories(self) -> set[str]:
        return set(self.descriptor_map.values()) | set(self.label_map.values()) | {
            DEFAULT_DESCRIPTOR_CATEGORY,
            DEFAULT_LABEL_CATEGORY,
        }


_DEFAULT_MAP: CategoryMap | None = None


def default_category_map() -> CategoryMap:
    global _DEFAULT_MAP
    if _DEFAULT_MAP is None:
        _DEFAULT_MAP = CategoryMap.load_default()
    return _DEFAULT_MAP


def _stem(token: str) -> str:
    if token.endswith(("ses", "xes", "zes", "ches", "shes")):
        return token[:-2]
    if token.endswith("s") and not token.endswith("ss") and len(token) > 3:
        return token[:-1]
    return token


def tokenize(text: str) -> list[str]:
    """Lowercased, punctuation-free, digit/letter-split tokens."""
    lowered = text.lower()
    lowered = re.sub(r"(?<=\d)(?=[a-z%])", " ", lowered)  # 12mm -> 12 mm
    lowered = re.sub(r"(?<=[a-z])(?=\d)", " ", lowered)
    return _TOKEN_RE.findall(lowered)


def stemmed_tokens(text: str) -> list[str]:
    return [_stem(t) for t in tokenize(text)]


def normalize_phrase(text: str) -> str:
    return " ".join(stemmed_tokens(text))


def _ngrams(tokens: list[str], max_n: int = 4) -> set[str]:
    grams: set[str] = set()
    for n in range(1, max_n + 1):
        for i in range(len(tokens) - n + 1):
            grams.add(" ".join(tokens[i : i + n]))
    return grams


def student_uttered_terms(history: list[str]) -> set[str]:
    """Normalized token n-grams (1..4) over every student text so far.

    Number+unit pairs normalize to "<num> <unit>" via tokenization, so
    "about 12mm" yields the bigram "12 mm".
    """
    uttered: set[str] = set()
    for text in history:
        uttered |= _ngrams(stemmed_tokens(text))
    return uttered


_NUMBER_RE = re.compile(r"^\d+(?:\.\d+)?$")

_LOCATION_KEYS = {"laterality", "location", "lobe", "zone", "position", "region"}
_MEASUREMENT_KEYS = {"measurement", "size", "diameter", "width", "length"}


def _descriptor_source(key: str) -> str:
    key = key.strip().lower()
    if key in _MEASUREMENT_KEYS:
        return "measurement"
    if key in _LOCATION_KEYS:
        return "location"
    return "descriptor"


def case_leak_terms(
    case: CaseBundle, categories: CategoryMap | None = None
) -> list[tuple[tuple[str, ...], str, str]]:
    """(stemmed phrase, source, display) triples to police for one case."""
    categories = categories or default_category_map()
    exempt = {normalize_phrase(c) for c in categories.all_categories()}
    terms: list[tuple[tuple[str, ...], str, str]] = []
    seen: set[tuple[tuple[str, ...], str]] = set()

    def add(raw: str, source: str):
        phrase = tuple(stemmed_tokens(raw))
        if not phrase or " ".join(phrase) in exempt:
            return
        key = (phrase, source)
        if key not in seen:
            seen.add(key)
            terms.append((phrase, source, raw))

    for finding in case.findings:
        add(finding.label, "label")
        for key, value in finding.descriptors:
            add(value, _descriptor_source(key))
    return terms


def _find_phrase(haystack: list[str], phrase: tuple[str, ...]) -> bool:
    n = len(phrase)
    if n == 0 or n > len(haystack):
        return False
    return any(tuple(haystack[i : i + n]) == phrase for i in range(len(haystack) - n + 1))


def detect_leaks(
    text: str,
    case: CaseBundle,
    student_uttered: set[str] | frozenset[str] = frozenset(),
    categories: CategoryMap | None = None,
) -> LeakReport:
    """Audit outbound text against a case's ground truth.

    Flags number+unit tokens, descriptor values, finding labels, and
    location terms that the student has not already used.
    """
    tokens = stemmed_tokens(text)
    leaks: list[tuple[str, str]] = []
    seen: set[tuple[str, str]] = set()

    def flag(display: str, source: str):
        entry = (display, source)
        if entry not in seen:
            seen.add(entry)
            leaks.append(entry)

    # any measurement-looking token pair is a value disclosure
    for i in range(len(tokens) - 1):
        if _NUMBER_RE.match(tokens[i]) and tokens[i + 1] in _UNITS:
            phrase = f"{tokens[i]} {tokens[i + 1]}"
            if phrase not in student_uttered:
                flag(phrase, "measurement")

    for phrase, source, display in case_leak_terms(case, categories):
        if _find_phrase(tokens, phrase) and " ".join(phrase) not in student_uttered:
            flag(display, source)

    return LeakReport(leaks=tuple(leaks))


def redact(text: str, case: CaseBundle, student_uttered: set[str] | frozenset[str] = frozenset()) -> str | None:
    """Return text unchanged when clean, else None (callers drop the line)."""
    return text if detect_leaks(text, case, student_uttered).clean else None


def _vertical_hint(y_center: float, image_height: float) -> str:
    third = y_center / image_height * 3
    if third < 1:
        return "upper zone"
    if third < 2:
        return "mid zone"
    return "lower zone"


def sanitize_case(case: CaseBundle, categories: CategoryMap | None = None) -> SanitizedCaseSummary:
    """Coarse, disclosure-safe view of a case for prompts and API bodies."""
    categories = categories or default_category_map()
    ordered: list[str] = []
    for finding in case.findings:
        label_cat = categories.label_category(finding.label)
        if label_cat not in ordered:
            ordered.append(label_cat)
        for key, _ in finding.descriptors:
            desc_cat = categories.descriptor_category(key)
            if desc_cat not in ordered:
                ordered.append(desc_cat)
    if case.support_devices and "support devices" not in ordered:
        ordered.append("support devices")

    hints: list[str] = []
    for finding in case.findings:
        box = finding.boxes[0]
        hint = _vertical_hint(box.center[1], case.image_height)
        if hint not in hints:
            hints.append(hint)
    # a pathological descriptor value could coincide with a hint phrase;
    # drop any hint that would itself flag
    safe_hints = tuple(
        h for h in hints if detect_leaks(h, case, frozenset(), categories).clean
    )

    return SanitizedCaseSummary(
        categories=tuple(ordered),
        finding_count=len(case.findings),
        anatomy_hints=safe_hints,
    )


def category_keywords(category: str) -> set[str]:
    """Stemmed content tokens of a category name (used for keyword matching
    of student text against the sanctioned vocabulary)."""
    return {
        t for t in stemmed_tokens(category) if t not in _CATEGORY_STOP_TOKENS
    }
