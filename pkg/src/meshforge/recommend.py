"""Designer-prompt construction, suggestion parsing, and recommendation metrics.

Suggestion lines arrive from a vision-language backend as free text. The
primary grammar is one suggestion per line::

    <name> - <color>, <shape> - <location>

e.g. ``Potted Plant - Green, Square - Floor``. Because model output drifts,
a labeled variant (``Name: x, Color: y, Shape: z, Location: w``) is also
accepted, as are leading list bullets and numbering. Unparseable lines are
collected as issues, never raised: a bad line must not abort a menu.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field

__all__ = [
    "ObjectSuggestion",
    "SceneDescription",
    "RecommendationMetrics",
    "ParseIssue",
    "build_designer_prompt",
    "parse_suggestions",
    "format_suggestion",
    "filter_duplicates",
    "FilterResult",
    "shannon_entropy",
    "diversity_index",
    "novelty_score",
]

LOCATION_PROMPT = "write where am I (location name and a short description of the location)."
DESIGNER_PROMPT = (
    "As a designer, recommend 5 simple objects (name, color, shape, and suggest "
    "a location for each object within this space relative to the other objects "
    "in the picture) that would be suitable for this place but are currently not present."
)


@dataclass(frozen=True)
class ObjectSuggestion:
    name: str
    color: str = ""
    shape: str = ""
    location: str = ""

    def __post_init__(self):
        object.__setattr__(self, "name", self.name.strip())
        object.__setattr__(self, "color", self.color.strip())
        object.__setattr__(self, "shape", self.shape.strip())
        object.__setattr__(self, "location", self.location.strip())
        if not self.name:
            raise ValueError("suggestion name must be non-empty")

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "color": self.color,
            "shape": self.shape,
            "location": self.location,
        }


@dataclass(frozen=True)
class SceneDescription:
    location_name: str = ""
    summary: str = ""
    detected_labels: tuple[str, ...] = ()

    def __post_init__(self):
        seen = set()
        deduped = []
        for label in self.detected_labels:
            label = label.strip()
            key = label.lower()
            if label and key not in seen:
                seen.add(key)
                deduped.append(label)
        object.__setattr__(self, "detected_labels", tuple(deduped))


@dataclass(frozen=True)
class RecommendationMetrics:
    diversity_index: float
    novelty_score: float
    duplicate_rate: float

    def __post_init__(self):
        for name in ("diversity_index", "novelty_score", "duplicate_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be within [0, 1], got {v}")

    def as_dict(self) -> dict:
        return {
            "diversity_index": self.diversity_index,
            "novelty_score": self.novelty_score,
            "duplicate_rate": self.duplicate_rate,
        }


@dataclass(frozen=True)
class ParseIssue:
    line_number: int
    text: str
    reason: str


def build_designer_prompt(scene: SceneDescription | None = None) -> str:
    """The two-clause designer prompt, with detected labels appended if known."""
    parts = [LOCATION_PROMPT, DESIGNER_PROMPT]
    if scene is not None and scene.detected_labels:
        parts.append("Objects already present: " + ", ".join(scene.detected_labels) + ".")
    return "\n".join(parts)


_BULLET = re.compile(r"^\s*(?:[-*•]\s+|\d+[.)]\s*|\(\d+\)\s*)")
_LABELED = re.compile(r"^\s*name\s*:", re.IGNORECASE)


def _parse_primary(line: str) -> ObjectSuggestion | None:
    if "," not in line:
        return None
    left, _, right = line.partition(",")
    if " - " not in left or " - " not in right:
        return None
    name, _, color = left.rpartition(" - ")
    shape, _, location = right.strip().partition(" - ")
    name, color = name.strip(), color.strip()
    shape, location = shape.strip(), location.strip()
    if not (name and color and shape and location):
        return None
    return ObjectSuggestion(name=name, color=color, shape=shape, location=location)


def _parse_labeled(line: str) -> ObjectSuggestion | None:
    fields = {}
    for chunk in line.split(","):
        key, sep, value = chunk.partition(":")
        if not sep:
            return None
        key = key.strip().lower()
        if key not in ("name", "color", "shape", "location"):
            return None
        fields[key] = value.strip()
    if not fields.get("name"):
        return None
    return ObjectSuggestion(
        name=fields["name"],
        color=fields.get("color", ""),
        shape=fields.get("shape", ""),
        location=fields.get("location", ""),
    )


def parse_suggestions(raw: str) -> tuple[list[ObjectSuggestion], list[ParseIssue]]:
    """Parse backend suggestion text; bad lines become issues, never errors."""
    suggestions: list[ObjectSuggestion] = []
    issues: list[ParseIssue] = []
    if raw is None or not raw.strip():
        issues.append(ParseIssue(0, raw or "", "empty input"))
        return suggestions, issues
    for ln, raw_line in enumerate(raw.splitlines(), start=1):
        line = raw_line.strip()
        if not line:
            continue
        line = _BULLET.sub("", line, count=1).strip()
        if not line:
            issues.append(ParseIssue(ln, raw_line, "nothing after list prefix"))
            continue
        line = " ".join(line.split())
        try:
            parsed = _parse_labeled(line) if _LABELED.match(line) else _parse_primary(line)
        except ValueError:
            parsed = None
        if parsed is None:
            issues.append(
                ParseIssue(ln, raw_line, "expected 'name - color, shape - location'")
            )
        else:
            suggestions.append(parsed)
    return suggestions, issues


def format_suggestion(s: ObjectSuggestion) -> str:
    return f"{s.name} - {s.color}, {s.shape} - {s.location}"


@dataclass(frozen=True)
class FilterResult:
    kept: tuple[ObjectSuggestion, ...]
    dropped: tuple[ObjectSuggestion, ...]
    cache_available: tuple[str, ...]  # kept suggestion names already in the repo

    @property
    def duplicate_rate(self) -> float:
        total = len(self.kept) + len(self.dropped)
        return len(self.dropped) / total if total else 0.0


def filter_duplicates(
    suggestions: list[ObjectSuggestion],
    scene: SceneDescription | None = None,
    repo_labels: list[str] | tuple[str, ...] = (),
) -> FilterResult:
    """Drop suggestions already detected in the scene.

    Matching is exact-name and case-insensitive, which keeps the duplicate
    metric auditable. Repository matches are flagged cache-available but
    kept: a cached asset is a fast path, not a duplicate.
    """
    detected = {l.lower() for l in (scene.detected_labels if scene else ())}
    cached = {l.strip().lower() for l in repo_labels}
    kept, dropped, cache_available = [], [], []
    for s in suggestions:
        key = s.name.lower()
        if key in detected:
            dropped.append(s)
        else:
            kept.append(s)
            if key in cached:
                cache_available.append(s.name)
    return FilterResult(tuple(kept), tuple(dropped), tuple(cache_available))


def shannon_entropy(labels) -> float:
    """Raw entropy of the label multiset, in bits (log base 2)."""
    counts = Counter(labels)
    if not counts:
        raise ValueError("entropy of an empty multiset is undefined")
    total = sum(counts.values())
    h = 0.0
    for c in counts.values():
        p = c / total
        h -= p * math.log2(p)
    return h


def diversity_index(recommended_labels) -> float:
    """Entropy normalized by log2(distinct-count) into [0, 1].

    A single distinct label yields 0 by convention (no diversity).
    """
    counts = Counter(recommended_labels)
    if not counts:
        raise ValueError("diversity of an empty multiset is undefined")
    n = len(counts)
    if n == 1:
        return 0.0
    return shannon_entropy(recommended_labels) / math.log2(n)


def novelty_score(history, current) -> float:
    """Fraction of current labels not seen in any past label set."""
    current = set(current)
    if not current:
        return 0.0
    seen = set()
    for past in history:
        seen.update(past)
    new = len(current - seen)
    return new / len(current)
