"""Phrase normalization: the identity rule for concept keys."""

from __future__ import annotations

import re

_EDGE_PUNCT = re.compile(r"^[\W_]+|[\W_]+$")


def normalize_phrase(text: str) -> str:
    """Casefold, collapse internal whitespace, strip edge punctuation.

    Pure and idempotent; the result is the canonical key under which a
    concept phrase is matched, deduplicated, and persisted.
    """
    collapsed = " ".join(text.casefold().split())
    return _EDGE_PUNCT.sub("", collapsed)
