"""Transcript collections indexed by participant and condition.

Two on-disk formats are supported:

* ``directory``: one UTF-8 ``.txt`` file per transcript named
  ``<participant>__<condition>.txt`` (double underscore separates fields).
* ``jsonl``: one flat JSON object per line with exactly the string fields
  ``id``, ``participant_id``, ``condition_id``, ``text``.

Text is stored verbatim: no lowercasing, no stop-word removal. A corpus is
immutable after load and safe to share across workers.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import DataIntegrityError, ValidationError

logger = logging.getLogger(__name__)

DIRECTORY = "directory"
JSONL = "jsonl"
FORMATS = (DIRECTORY, JSONL)

_RECORD_FIELDS = ("id", "participant_id", "condition_id", "text")
_SEPARATOR = "__"


@dataclass(frozen=True)
class Transcript:
    id: str
    participant_id: str
    condition_id: str
    text: str
    source_ref: str = ""

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise DataIntegrityError(f"transcript '{self.id}' has empty text")
        for name in ("id", "participant_id", "condition_id"):
            if not getattr(self, name):
                raise DataIntegrityError(f"transcript field '{name}' is empty")


@dataclass(frozen=True)
class Corpus:
    transcripts: tuple[Transcript, ...]
    conditions: frozenset[str]

    def __len__(self) -> int:
        return len(self.transcripts)

    def participants(self) -> list[str]:
        return sorted({t.participant_id for t in self.transcripts})

    def get(self, transcript_id: str) -> Transcript | None:
        for t in self.transcripts:
            if t.id == transcript_id:
                return t
        return None


def build_corpus(transcripts: Iterable[Transcript]) -> Corpus:
    """Validate invariants and return an id-sorted corpus."""
    ordered = sorted(transcripts, key=lambda t: t.id)
    if not ordered:
        raise DataIntegrityError("no transcripts found")
    by_id: dict[str, Transcript] = {}
    by_pair: dict[tuple[str, str], Transcript] = {}
    for t in ordered:
        if t.id in by_id:
            raise DataIntegrityError(
                f"duplicate transcript id '{t.id}' "
                f"({by_id[t.id].source_ref or 'first record'} vs {t.source_ref or 'second record'})"
            )
        pair = (t.participant_id, t.condition_id)
        if pair in by_pair:
            raise DataIntegrityError(
                f"duplicate (participant, condition) pair {pair}: "
                f"records '{by_pair[pair].id}' and '{t.id}'"
            )
        by_id[t.id] = t
        by_pair[pair] = t
    return Corpus(tuple(ordered), frozenset(t.condition_id for t in ordered))


def load_corpus(root: str | Path, format: str = DIRECTORY) -> Corpus:
    if format not in FORMATS:
        raise ValidationError(f"unknown corpus format '{format}'; expected one of {FORMATS}")
    path = Path(root)
    if not path.exists():
        raise ValidationError(f"corpus path does not exist: {path}")
    if format == DIRECTORY:
        return build_corpus(_read_directory(path))
    return build_corpus(_read_jsonl(path))


def _read_directory(root: Path) -> list[Transcript]:
    if not root.is_dir():
        raise ValidationError(f"directory format requires a directory, got {root}")
    transcripts = []
    for file in sorted(root.glob("*.txt")):
        stem = file.stem
        if stem.count(_SEPARATOR) != 1:
            raise DataIntegrityError(
                f"malformed transcript filename '{file.name}': expected "
                f"<participant>{_SEPARATOR}<condition>.txt"
            )
        participant, condition = stem.split(_SEPARATOR)
        try:
            # newline="" keeps the text verbatim; no newline translation.
            with file.open("r", encoding="utf-8", newline="") as handle:
                text = handle.read()
        except UnicodeDecodeError as exc:
            raise DataIntegrityError(f"transcript file {file} is not valid UTF-8: {exc}") from exc
        transcripts.append(
            Transcript(
                id=stem,
                participant_id=participant,
                condition_id=condition,
                text=text,
                source_ref=str(file),
            )
        )
    return transcripts


def _read_jsonl(path: Path) -> list[Transcript]:
    if not path.is_file():
        raise ValidationError(f"jsonl format requires a file, got {path}")
    transcripts = []
    try:
        raw = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise DataIntegrityError(f"record file {path} is not valid UTF-8: {exc}") from exc
    # Records are separated by "\n" alone; splitlines() would also break on
    # NEL and friends, which json.dumps leaves unescaped inside strings.
    for lineno, line in enumerate(raw.split("\n"), start=1):
        if not line.strip():
            continue
        locator = f"{path}:{lineno}"
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataIntegrityError(f"malformed record at {locator}: {exc}") from exc
        if not isinstance(record, dict):
            raise DataIntegrityError(f"malformed record at {locator}: expected an object")
        missing = [f for f in _RECORD_FIELDS if f not in record]
        if missing:
            raise DataIntegrityError(f"record at {locator} is missing fields {missing}")
        unknown = [f for f in record if f not in _RECORD_FIELDS]
        if unknown:
            raise DataIntegrityError(f"record at {locator} has unknown fields {unknown}")
        if not all(isinstance(record[f], str) for f in _RECORD_FIELDS):
            raise DataIntegrityError(f"record at {locator}: all fields must be strings")
        transcripts.append(
            Transcript(
                id=record["id"],
                participant_id=record["participant_id"],
                condition_id=record["condition_id"],
                text=record["text"],
                source_ref=locator,
            )
        )
    return transcripts


def save_corpus(corpus: Corpus, dest: str | Path, format: str = DIRECTORY) -> Path:
    """Write a corpus back to disk in the given format."""
    path = Path(dest)
    if format == DIRECTORY:
        path.mkdir(parents=True, exist_ok=True)
        for t in corpus.transcripts:
            if _SEPARATOR in t.participant_id or _SEPARATOR in t.condition_id:
                raise ValidationError(
                    f"'{_SEPARATOR}' is reserved as the filename separator; "
                    f"cannot write transcript '{t.id}' as a directory entry"
                )
            target = path / f"{t.participant_id}{_SEPARATOR}{t.condition_id}.txt"
            with target.open("w", encoding="utf-8", newline="") as handle:
                handle.write(t.text)
    elif format == JSONL:
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = [
            json.dumps(
                {
                    "id": t.id,
                    "participant_id": t.participant_id,
                    "condition_id": t.condition_id,
                    "text": t.text,
                },
                ensure_ascii=False,
            )
            for t in corpus.transcripts
        ]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    else:
        raise ValidationError(f"unknown corpus format '{format}'; expected one of {FORMATS}")
    return path


def transcripts_for(corpus: Corpus, condition: str) -> list[Transcript]:
    """All transcripts for one condition, sorted by transcript id."""
    if condition not in corpus.conditions:
        known = ", ".join(sorted(corpus.conditions))
        raise ValidationError(f"unknown condition '{condition}'; known conditions: {known}")
    return [t for t in corpus.transcripts if t.condition_id == condition]


def condition_sizes(corpus: Corpus) -> dict[str, int]:
    sizes: dict[str, int] = {}
    for t in corpus.transcripts:
        sizes[t.condition_id] = sizes.get(t.condition_id, 0) + 1
    return dict(sorted(sizes.items()))
