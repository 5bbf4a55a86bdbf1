"""Concept vocabularies: elicitation, seeding, pinning, and split/merge edits.

A vocabulary is the fixed list of short concept phrases one condition is
mapped against. Concept identity is the normalized key, not the raw text,
because model casing is unstable run to run. Vocabularies are immutable
values; every edit returns a new one and the version hash tracks content.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import Corpus, Transcript, transcripts_for
from .errors import GatewayError, ResponseFormatError, SchemaError, ValidationError
from .gateway import (
    Backend,
    CompletionRequest,
    Decoding,
    PromptTemplate,
    RunLog,
    UnderfullGroupError,
    complete,
    parse_bullet_list,
)
from .phrases import normalize_phrase

logger = logging.getLogger(__name__)

ELICITED = "elicited"
SEEDED = "seeded"
EDITED = "edited"
PROVENANCES = (ELICITED, SEEDED, EDITED)

MAX_PHRASE_WORDS = 8
DEFAULT_N = 20

_VOCAB_FIELDS = ("condition_id", "version", "concepts")
_CONCEPT_FIELDS = ("text", "pinned", "provenance")


@dataclass(frozen=True)
class ConceptPhrase:
    text: str
    pinned: bool = False
    provenance: str = ELICITED

    def __post_init__(self) -> None:
        if self.provenance not in PROVENANCES:
            raise ValidationError(f"unknown provenance '{self.provenance}'")
        if not self.key:
            raise ValidationError(f"concept phrase {self.text!r} normalizes to nothing")
        if len(self.text.split()) > MAX_PHRASE_WORDS:
            raise ValidationError(
                f"concept phrase {self.text!r} exceeds {MAX_PHRASE_WORDS} words"
            )

    @property
    def key(self) -> str:
        return normalize_phrase(self.text)


def vocabulary_version(concepts: Sequence[ConceptPhrase]) -> str:
    """Content hash over the ordered (text, pinned) list."""
    payload = json.dumps([[p.text, p.pinned] for p in concepts], ensure_ascii=False)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class ConceptVocabulary:
    condition_id: str
    concepts: tuple[ConceptPhrase, ...]

    def __post_init__(self) -> None:
        if not self.concepts:
            raise ValidationError("a vocabulary needs at least one concept")
        keys = [p.key for p in self.concepts]
        dupes = {k for k in keys if keys.count(k) > 1}
        if dupes:
            raise ValidationError(f"duplicate concept keys in vocabulary: {sorted(dupes)}")

    @property
    def version(self) -> str:
        return vocabulary_version(self.concepts)

    def keys(self) -> list[str]:
        return [p.key for p in self.concepts]

    def get(self, key: str) -> ConceptPhrase | None:
        for p in self.concepts:
            if p.key == key:
                return p
        return None

    def display_map(self) -> dict[str, str]:
        return {p.key: p.text for p in self.concepts}

    def __len__(self) -> int:
        return len(self.concepts)

    def __iter__(self):
        return iter(self.concepts)


class UnderfullVocabularyError(GatewayError):
    """Elicitation could not reach the requested size; carries the partial."""

    def __init__(self, vocabulary: ConceptVocabulary | None, message: str):
        super().__init__(message)
        self.vocabulary = vocabulary


# ---------------------------------------------------------------------------
# Elicitation
# ---------------------------------------------------------------------------


def build_elicitation_variables(
    corpus: Corpus,
    condition: str,
    n: int,
    transcripts: Sequence[Transcript] | None = None,
) -> dict[str, str]:
    """Template variables for one condition's elicitation call.

    ``transcripts`` overrides the default full-condition corpus, which is the
    hook for stratified or chunked submission.
    """
    chosen = list(transcripts) if transcripts is not None else transcripts_for(corpus, condition)
    block = "\n\n".join(t.text for t in chosen)
    return {
        "device_name": condition,
        "n_topics": str(n),
        "corpus": f"### {condition}\n\n{block}",
    }


def _pick_group(groups: dict[str, list[str]], condition: str) -> list[str]:
    for label, items in groups.items():
        if label.strip().casefold() == condition.casefold():
            return items
    if len(groups) == 1:
        return next(iter(groups.values()))
    raise ResponseFormatError(
        f"response groups {sorted(groups)} do not include condition '{condition}'"
    )


def _collapse(phrases: Iterable[str], skip_keys: Iterable[str]) -> list[ConceptPhrase]:
    """Validate and deduplicate raw phrases by normalized key, keeping order."""
    seen = set(skip_keys)
    kept: list[ConceptPhrase] = []
    for text in phrases:
        try:
            phrase = ConceptPhrase(text=text.strip())
        except ValidationError as exc:
            logger.warning("dropping invalid concept phrase: %s", exc)
            continue
        if phrase.key in seen:
            logger.info("collapsing duplicate concept phrase %r", text)
            continue
        seen.add(phrase.key)
        kept.append(phrase)
    return kept


def elicit_vocabulary(
    corpus: Corpus,
    condition: str,
    n: int,
    template: PromptTemplate,
    backend: Backend,
    *,
    existing: ConceptVocabulary | None = None,
    model_id: str = "llama-3.3-70b-instruct",
    decoding: Decoding = Decoding(),
    run_log: RunLog | None = None,
    transcripts: Sequence[Transcript] | None = None,
) -> ConceptVocabulary:
    """Ask the model for exactly ``n`` distinct concepts for one condition.

    Pinned concepts from ``existing`` always survive and occupy the front of
    the result; unpinned ones are replaced by the fresh elicitation. One
    re-request is made if the response parses short (or collapses short after
    deduplication); after that the partial vocabulary is surfaced as an error
    so the analyst can complete it by seeding.
    """
    if n < 1:
        raise ValidationError("n must be >= 1")
    if condition not in corpus.conditions:
        known = ", ".join(sorted(corpus.conditions))
        raise ValidationError(f"unknown condition '{condition}'; known conditions: {known}")

    pinned = [p for p in existing.concepts if p.pinned] if existing is not None else []
    needed = n - len(pinned)
    if needed <= 0:
        logger.info("pinned concepts already cover n=%d; skipping elicitation call", n)
        return ConceptVocabulary(condition, tuple(pinned))

    variables = build_elicitation_variables(corpus, condition, n, transcripts=transcripts)
    request = CompletionRequest(template, variables, model_id, decoding)

    collapsed: list[ConceptPhrase] = []
    format_error: ResponseFormatError | None = None
    for attempt in range(2):  # one re-prompt on short or malformed output
        raw, _ = complete(request, backend, run_log=run_log)
        try:
            groups = parse_bullet_list(raw, expected_n=n)
            items = _pick_group(groups, condition)
        except UnderfullGroupError as exc:
            items = _pick_group(exc.groups, condition)
        except ResponseFormatError as exc:
            format_error = exc
            logger.warning("elicitation response unusable (attempt %d): %s", attempt + 1, exc)
            continue
        candidate = _collapse(items, skip_keys=(p.key for p in pinned))
        if len(candidate) > len(collapsed):
            collapsed = candidate
        if len(collapsed) >= needed:
            break
        logger.warning(
            "elicitation yielded %d usable concepts for '%s' (need %d); re-requesting",
            len(collapsed), condition, needed,
        )

    if len(collapsed) < needed:
        merged = tuple(pinned) + tuple(collapsed)
        partial = ConceptVocabulary(condition, merged) if merged else None
        if partial is None and format_error is not None:
            raise format_error
        raise UnderfullVocabularyError(
            partial,
            f"elicitation produced {len(merged)} of {n} concepts for '{condition}'; "
            "seed the remainder or re-run",
        )
    return ConceptVocabulary(condition, tuple(pinned) + tuple(collapsed[:needed]))


def elicit_grouped(
    corpus: Corpus,
    conditions: Sequence[str],
    n: int,
    template: PromptTemplate,
    backend: Backend,
    *,
    model_id: str = "llama-3.3-70b-instruct",
    decoding: Decoding = Decoding(),
    run_log: RunLog | None = None,
) -> dict[str, ConceptVocabulary]:
    """Single grouped call covering several conditions at once.

    The response must carry one ``### <condition>`` group per condition.
    No pin merging here; use per-condition elicitation for that workflow.
    """
    if n < 1:
        raise ValidationError("n must be >= 1")
    blocks = []
    for condition in conditions:
        block = "\n\n".join(t.text for t in transcripts_for(corpus, condition))
        blocks.append(f"### {condition}\n\n{block}")
    variables = {
        "device_name": ", ".join(conditions),
        "n_topics": str(n),
        "corpus": "\n\n".join(blocks),
    }
    raw, _ = complete(CompletionRequest(template, variables, model_id, decoding), backend, run_log)
    try:
        groups = parse_bullet_list(raw, expected_n=n)
    except UnderfullGroupError as exc:
        groups = exc.groups
    vocabularies: dict[str, ConceptVocabulary] = {}
    for condition in conditions:
        items = _pick_group(groups, condition)
        collapsed = _collapse(items, skip_keys=())
        if len(collapsed) < n:
            partial = ConceptVocabulary(condition, tuple(collapsed)) if collapsed else None
            raise UnderfullVocabularyError(
                partial, f"grouped elicitation produced {len(collapsed)} of {n} for '{condition}'"
            )
        vocabularies[condition] = ConceptVocabulary(condition, tuple(collapsed[:n]))
    return vocabularies


# ---------------------------------------------------------------------------
# Analyst edits
# ---------------------------------------------------------------------------


def seed_concepts(
    vocab: ConceptVocabulary, phrases: Sequence[str], pin: bool = False
) -> ConceptVocabulary:
    """Append analyst-supplied phrases; duplicates are skipped with a notice."""
    working = list(vocab.concepts)
    keys = {p.key for p in working}
    for text in phrases:
        phrase = ConceptPhrase(text=text.strip(), pinned=pin, provenance=SEEDED)
        if phrase.key in keys:
            logger.warning("seed phrase %r duplicates an existing concept; skipped", text)
            continue
        keys.add(phrase.key)
        working.append(phrase)
    return ConceptVocabulary(vocab.condition_id, tuple(working))


def set_pinned(
    vocab: ConceptVocabulary, keys: Sequence[str], pinned: bool = True
) -> ConceptVocabulary:
    wanted = {normalize_phrase(k) for k in keys}
    known = set(vocab.keys())
    unknown = wanted - known
    if unknown:
        raise ValidationError(f"unknown concept key(s): {sorted(unknown)}")
    updated = tuple(
        replace(p, pinned=pinned) if p.key in wanted else p for p in vocab.concepts
    )
    return ConceptVocabulary(vocab.condition_id, updated)


@dataclass(frozen=True)
class Edit:
    remove: tuple[str, ...] = ()
    add: tuple[str, ...] = ()
    unpin: bool = False


def split_or_merge(vocab: ConceptVocabulary, edits: Sequence[Edit]) -> ConceptVocabulary:
    """Apply remove/add edits atomically; any invalid edit aborts the batch.

    Removing a pinned concept requires ``unpin=True`` on that edit. Tables
    built against the previous version become stale once this returns.
    """
    working = list(vocab.concepts)
    for edit in edits:
        by_key = {p.key: p for p in working}
        removals = []
        for raw_key in edit.remove:
            key = normalize_phrase(raw_key)
            if key not in by_key:
                raise ValidationError(f"cannot remove unknown concept key '{key}'")
            if by_key[key].pinned and not edit.unpin:
                raise ValidationError(
                    f"concept '{key}' is pinned; pass unpin=True to remove it"
                )
            removals.append(key)
        working = [p for p in working if p.key not in set(removals)]
        present = {p.key for p in working}
        for text in edit.add:
            phrase = ConceptPhrase(text=text.strip(), provenance=EDITED)
            if phrase.key in present:
                raise ValidationError(f"added phrase {text!r} duplicates an existing concept")
            present.add(phrase.key)
            working.append(phrase)
    return ConceptVocabulary(vocab.condition_id, tuple(working))


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def vocabulary_to_json(vocab: ConceptVocabulary) -> dict:
    return {
        "condition_id": vocab.condition_id,
        "version": vocab.version,
        "concepts": [
            {"text": p.text, "pinned": p.pinned, "provenance": p.provenance}
            for p in vocab.concepts
        ],
    }


def save_vocabulary(vocab: ConceptVocabulary, path: str | Path) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(json.dumps(vocabulary_to_json(vocab), indent=2, ensure_ascii=False) + "\n", "utf-8")
    return p


def load_vocabulary(path: str | Path) -> ConceptVocabulary:
    p = Path(path)
    if not p.is_file():
        raise ValidationError(f"vocabulary file not found: {p}")
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"malformed vocabulary file {p}: {exc}") from exc
    if not isinstance(data, dict):
        raise SchemaError(f"vocabulary file {p} must hold an object")
    unknown = [k for k in data if k not in _VOCAB_FIELDS]
    if unknown:
        raise SchemaError(f"vocabulary file {p} has unknown fields {unknown}")
    missing = [k for k in _VOCAB_FIELDS if k not in data]
    if missing:
        raise SchemaError(f"vocabulary file {p} is missing fields {missing}")
    concepts = []
    for i, entry in enumerate(data["concepts"]):
        bad = [k for k in entry if k not in _CONCEPT_FIELDS]
        if bad:
            raise SchemaError(f"concept #{i} in {p} has unknown fields {bad}")
        concepts.append(
            ConceptPhrase(
                text=entry["text"],
                pinned=bool(entry["pinned"]),
                provenance=entry["provenance"],
            )
        )
    vocab = ConceptVocabulary(data["condition_id"], tuple(concepts))
    if vocab.version != data["version"]:
        raise SchemaError(
            f"vocabulary file {p} version mismatch: stored {data['version'][:12]}…, "
            f"recomputed {vocab.version[:12]}… (hand-edited?)"
        )
    return vocab
