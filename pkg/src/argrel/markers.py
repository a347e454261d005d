"""The 18 prominent discourse markers and word-boundary matching.

The list ships as a versioned embedded resource and can be overridden by a
one-marker-per-line file.  Matching is case-insensitive and token-based, so
"but" never matches inside "butter" and multiword markers like "due to" are
matched as contiguous token sequences.
"""

from __future__ import annotations

import re

MARKER_LIST_VERSION = 1

DEFAULT_MARKERS: tuple[str, ...] = (
    "because", "therefore", "however",
    "although", "though", "nevertheless",
    "nonetheless", "thus", "hence",
    "consequently", "for this reason", "due to",
    "in particular", "particularly", "specifically",
    "in fact", "actually", "but",
)

# Partition of the markers into indicator classes for the feature baseline.
MARKER_CLASSES: dict[str, tuple[str, ...]] = {
    "causal": ("because", "due to", "consequently", "for this reason",
               "therefore", "thus", "hence"),
    "contrast": ("however", "although", "though", "nevertheless",
                 "nonetheless", "but"),
    "elaboration": ("in particular", "particularly", "specifically",
                    "in fact", "actually"),
}

_WORD_RE = re.compile(r"[a-z0-9]+|[^a-z0-9\s]")


def _words(text: str) -> list[str]:
    return _WORD_RE.findall(text.lower())


def load_markers(path=None) -> tuple[str, ...]:
    """Default marker list, or one read from a one-marker-per-line file."""
    if path is None:
        return DEFAULT_MARKERS
    with open(path, encoding="utf-8") as fh:
        markers = tuple(line.strip().lower() for line in fh if line.strip())
    if not markers:
        raise ValueError(f"marker file {path} is empty")
    return markers


def match_markers(text: str, markers: tuple[str, ...] = DEFAULT_MARKERS) -> set[str]:
    """Markers present in text as whole-token (sequences of) words."""
    words = _words(text)
    matched = set()
    for marker in markers:
        parts = marker.split()
        k = len(parts)
        for i in range(len(words) - k + 1):
            if words[i:i + k] == parts:
                matched.add(marker)
                break
    return matched


def marker_class_presence(text: str) -> dict[str, bool]:
    """Which indicator classes (causal/contrast/elaboration) occur in text."""
    matched = match_markers(text)
    return {
        cls: any(m in matched for m in members)
        for cls, members in MARKER_CLASSES.items()
    }
