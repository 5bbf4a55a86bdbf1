"""Frequency-cloud comparator: tokenize, drop stop words, count, reuse layout.

This is the conventional pipeline the participant-weighted cloud is judged
against. It deliberately keeps the failure mode it is known for: token
counts grow with verbosity, so one talkative speaker can dominate.
"""

from __future__ import annotations

import hashlib
import re
from collections import Counter
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import Transcript
from .errors import ValidationError
from .layout import CloudEntry, font_sizes

# Word runs keep internal apostrophes ("isn't") but break at any other
# punctuation, so "uh—uh," yields two tokens.
_WORD_RE = re.compile(r"[^\W_]+(?:['’][^\W_]+)*")

_STOPWORDS_RESOURCE = "stopwords_en.txt"


def tokenize(text: str) -> list[str]:
    """Lowercase word tokens; empty and pure-digit results are dropped."""
    return [t for t in _WORD_RE.findall(text.lower()) if not t.isdigit()]


@dataclass(frozen=True)
class TokenCounts:
    condition_id: str
    counts: dict[str, int]
    tokens_total: int


def load_stopwords(path: str | Path | None = None) -> frozenset[str]:
    """The bundled standard English list, or any one-word-per-line file."""
    text = _stopwords_text(path)
    return frozenset(w.strip() for w in text.splitlines() if w.strip())


def stopwords_fingerprint(path: str | Path | None = None) -> str:
    """Content hash of the stop-word list in use, for provenance records."""
    return hashlib.sha256(_stopwords_text(path).encode("utf-8")).hexdigest()


def _stopwords_text(path: str | Path | None) -> str:
    if path is not None:
        return Path(path).read_text(encoding="utf-8")
    return resources.files("conceptcloud").joinpath("data", _STOPWORDS_RESOURCE).read_text("utf-8")


def frequency_counts(
    transcripts: Sequence[Transcript],
    stopwords: Iterable[str],
    condition_id: str | None = None,
) -> TokenCounts:
    """Token counts over a condition's transcripts, stop words removed."""
    conditions = {t.condition_id for t in transcripts}
    if condition_id is None:
        if len(conditions) > 1:
            raise ValidationError(
                f"transcripts span multiple conditions {sorted(conditions)}; "
                "pass condition_id explicitly"
            )
        condition_id = next(iter(conditions)) if conditions else ""
    stopset = set(stopwords)
    counter: Counter[str] = Counter()
    for transcript in transcripts:
        counter.update(t for t in tokenize(transcript.text) if t not in stopset)
    counts = dict(sorted(counter.items()))
    return TokenCounts(
        condition_id=condition_id, counts=counts, tokens_total=sum(counts.values())
    )


def frequency_cloud(
    counts: TokenCounts,
    top_k: int = 20,
    min_pt: float = 12.0,
    max_pt: float = 48.0,
) -> list[CloudEntry]:
    """Top-k tokens by count, sized through the shared font pipeline."""
    if top_k < 1:
        raise ValidationError("top_k must be >= 1")
    return font_sizes(
        {token: float(n) for token, n in counts.counts.items()},
        min_pt=min_pt,
        max_pt=max_pt,
        top_k=top_k,
    )
