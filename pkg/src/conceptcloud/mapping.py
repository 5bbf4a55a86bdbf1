"""Assignment tables: per-transcript concept presence judgments.

The table is a dense transcript-by-concept matrix; explicit zeros make
"judged absent" distinguishable from "never judged". A row is a pure
function of the parsed concept set, so verbose speakers cannot inflate it.
Human corrections overwrite cells, flip provenance, and append to an edit
journal that replays losslessly over the original model table.

On disk a table is a CSV (``transcript_id,<concept_key>,...`` with cells
``0``/``1``/``0*``/``1*``, asterisk marking human provenance) plus a JSON
sidecar holding tau, versions, soft scores, notes, and the journal.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

from .concepts import ConceptVocabulary
from .corpus import Corpus, Transcript, transcripts_for
from .errors import (
    GatewayError,
    SchemaError,
    StaleTableError,
    ValidationError,
)
from .gateway import (
    Backend,
    CompletionRequest,
    Decoding,
    PromptTemplate,
    RunLog,
    complete,
    parse_line_list,
    parse_score_list,
)

logger = logging.getLogger(__name__)

MODEL = "model"
HUMAN = "human"

BINARY = "binary"
SOFT = "soft"
MODES = (BINARY, SOFT)

MAX_MAPPED_TERMS = 20
SCHEMA_VERSION = 1

_CELL_SYNTAX = {"0": (0, MODEL), "1": (1, MODEL), "0*": (0, HUMAN), "1*": (1, HUMAN)}


@dataclass(frozen=True)
class AssignmentCell:
    value: int
    soft_score: float | None = None
    provenance: str = MODEL
    note: str | None = None

    def __post_init__(self) -> None:
        if self.value not in (0, 1):
            raise ValidationError(f"cell value must be 0 or 1, got {self.value!r}")
        if self.provenance not in (MODEL, HUMAN):
            raise ValidationError(f"unknown cell provenance '{self.provenance}'")
        if self.soft_score is not None and not 0.0 <= self.soft_score <= 1.0:
            raise ValidationError(f"soft score {self.soft_score} outside [0, 1]")
        if self.provenance == HUMAN and self.soft_score is not None:
            raise ValidationError("human overrides never carry a soft score")


@dataclass(frozen=True)
class JournalEntry:
    transcript_id: str
    concept_key: str
    old_value: int
    new_value: int
    note: str


@dataclass(frozen=True)
class AssignmentTable:
    condition_id: str
    vocabulary_version: str
    concept_keys: tuple[str, ...]
    rows: dict[str, dict[str, AssignmentCell]]
    tau: float
    run_id: str
    mode: str = BINARY
    incomplete: tuple[str, ...] = ()
    journal: tuple[JournalEntry, ...] = ()
    stale: bool = field(default=False, compare=False)

    def __post_init__(self) -> None:
        if not 0.0 < self.tau <= 1.0:
            raise ValidationError(f"tau must be in (0, 1], got {self.tau}")
        expected = set(self.concept_keys)
        for tid, row in self.rows.items():
            if set(row) != expected:
                raise ValidationError(
                    f"row '{tid}' is not dense over the vocabulary "
                    f"(has {len(row)} cells, expected {len(expected)})"
                )

    def transcript_ids(self) -> list[str]:
        return list(self.rows)

    def cell(self, transcript_id: str, concept_key: str) -> AssignmentCell:
        try:
            row = self.rows[transcript_id]
        except KeyError:
            raise ValidationError(f"unknown transcript id '{transcript_id}'") from None
        try:
            return row[concept_key]
        except KeyError:
            raise ValidationError(f"unknown concept key '{concept_key}'") from None


def check_staleness(table: AssignmentTable, vocab: ConceptVocabulary) -> AssignmentTable:
    """Return the table with its stale flag set from the current vocabulary."""
    return replace(table, stale=table.vocabulary_version != vocab.version)


# ---------------------------------------------------------------------------
# Mapping calls
# ---------------------------------------------------------------------------


def build_mapping_variables(
    transcript: Transcript, vocab: ConceptVocabulary
) -> dict[str, str]:
    keyword_list = "\n".join(f"- {p.text}" for p in vocab.concepts)
    return {
        "device_name": transcript.condition_id,
        "keyword_list": keyword_list,
        "transcript": transcript.text,
    }


def _binarize(score: float, tau: float) -> int:
    return 1 if score >= tau else 0


def map_transcript(
    transcript: Transcript,
    vocab: ConceptVocabulary,
    template: PromptTemplate,
    backend: Backend,
    mode: str = BINARY,
    tau: float = 0.5,
    *,
    model_id: str = "llama-3.3-70b-instruct",
    decoding: Decoding = Decoding(),
    run_log: RunLog | None = None,
) -> dict[str, AssignmentCell]:
    """Judge one transcript against the vocabulary; returns a dense row.

    Binary mode marks exactly the concepts the response names; soft mode
    expects per-concept scores and binarizes them at ``tau`` (an unscored
    concept counts as 0.0). Gateway failures propagate to the caller.
    """
    if mode not in MODES:
        raise ValidationError(f"mode must be one of {MODES}, got '{mode}'")
    if not 0.0 < tau <= 1.0:
        raise ValidationError(f"tau must be in (0, 1], got {tau}")
    if len(vocab) == 0:
        raise ValidationError("vocabulary is empty")

    variables = build_mapping_variables(transcript, vocab)
    request = CompletionRequest(template, variables, model_id, decoding)
    raw, _ = complete(request, backend, run_log=run_log)

    if mode == BINARY:
        present = set(parse_line_list(raw, vocab, max_items=MAX_MAPPED_TERMS))
        return {
            key: AssignmentCell(value=1 if key in present else 0) for key in vocab.keys()
        }
    scores = parse_score_list(raw, vocab)
    return {
        key: AssignmentCell(
            value=_binarize(scores.get(key, 0.0), tau), soft_score=scores.get(key, 0.0)
        )
        for key in vocab.keys()
    }


def map_condition(
    corpus: Corpus,
    condition: str,
    vocab: ConceptVocabulary,
    template: PromptTemplate,
    backend: Backend,
    mode: str = BINARY,
    tau: float = 0.5,
    *,
    run_id: str = "",
    model_id: str = "llama-3.3-70b-instruct",
    decoding: Decoding = Decoding(),
    run_log: RunLog | None = None,
) -> AssignmentTable:
    """Map every transcript of a condition; rows are keyed and ordered by id.

    A transcript whose gateway call fails is recorded as incomplete rather
    than silently zero-filled; aggregation refuses such tables by default.
    """
    if vocab.condition_id != condition:
        raise ValidationError(
            f"vocabulary belongs to '{vocab.condition_id}', not '{condition}'"
        )
    rows: dict[str, dict[str, AssignmentCell]] = {}
    incomplete: list[str] = []
    for transcript in transcripts_for(corpus, condition):
        try:
            rows[transcript.id] = map_transcript(
                transcript, vocab, template, backend, mode, tau,
                model_id=model_id, decoding=decoding, run_log=run_log,
            )
        except GatewayError as exc:
            logger.warning("transcript '%s' failed to map: %s", transcript.id, exc)
            incomplete.append(transcript.id)
    if incomplete:
        logger.warning(
            "%d of %d transcripts incomplete for '%s'",
            len(incomplete), len(incomplete) + len(rows), condition,
        )
    return AssignmentTable(
        condition_id=condition,
        vocabulary_version=vocab.version,
        concept_keys=tuple(vocab.keys()),
        rows=rows,
        tau=tau,
        run_id=run_id,
        mode=mode,
        incomplete=tuple(incomplete),
    )


# ---------------------------------------------------------------------------
# Corrections
# ---------------------------------------------------------------------------


def apply_correction(
    table: AssignmentTable,
    transcript_id: str,
    concept_key: str,
    new_value: int,
    note: str = "",
) -> AssignmentTable:
    """Overwrite one cell as a human judgment and journal the change.

    Writing the value already present still flips provenance to human and
    still appends a journal entry; the audit trail records intent, not diffs.
    """
    if table.stale:
        raise StaleTableError(
            "assignment table was built against an older vocabulary; re-run mapping"
        )
    if new_value not in (0, 1):
        raise ValidationError(f"correction value must be 0 or 1, got {new_value!r}")
    old = table.cell(transcript_id, concept_key)
    cell = AssignmentCell(value=new_value, provenance=HUMAN, note=note or None)
    rows = {tid: dict(row) for tid, row in table.rows.items()}
    rows[transcript_id][concept_key] = cell
    entry = JournalEntry(
        transcript_id=transcript_id,
        concept_key=concept_key,
        old_value=old.value,
        new_value=new_value,
        note=note,
    )
    return replace(table, rows=rows, journal=table.journal + (entry,))


def replay_journal(
    base: AssignmentTable, journal: Sequence[JournalEntry]
) -> AssignmentTable:
    """Apply a journal over a table; replay over the original model table
    reproduces the corrected table exactly."""
    table = base
    for entry in journal:
        table = apply_correction(
            table, entry.transcript_id, entry.concept_key, entry.new_value, entry.note
        )
    return table


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def sidecar_path(path: str | Path) -> Path:
    return Path(path).with_suffix(".meta.json")


def _cell_token(cell: AssignmentCell) -> str:
    return f"{cell.value}*" if cell.provenance == HUMAN else str(cell.value)


def save_table(table: AssignmentTable, path: str | Path) -> Path:
    """Write the CSV matrix and its JSON sidecar next to each other."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)

    with p.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["transcript_id", *table.concept_keys])
        for tid in sorted(table.rows):
            row = table.rows[tid]
            writer.writerow([tid, *(_cell_token(row[key]) for key in table.concept_keys)])

    soft_scores: dict[str, dict[str, float]] = {}
    notes: dict[str, dict[str, str]] = {}
    for tid in sorted(table.rows):
        for key in table.concept_keys:
            cell = table.rows[tid][key]
            if cell.soft_score is not None:
                soft_scores.setdefault(tid, {})[key] = cell.soft_score
            if cell.note is not None:
                notes.setdefault(tid, {})[key] = cell.note
    sidecar = {
        "schema_version": SCHEMA_VERSION,
        "condition_id": table.condition_id,
        "run_id": table.run_id,
        "mode": table.mode,
        "tau": table.tau,
        "vocabulary_version": table.vocabulary_version,
        "concept_keys": list(table.concept_keys),
        "incomplete": list(table.incomplete),
        "soft_scores": soft_scores,
        "notes": notes,
        "journal": [
            {
                "transcript_id": e.transcript_id,
                "concept_key": e.concept_key,
                "old_value": e.old_value,
                "new_value": e.new_value,
                "note": e.note,
            }
            for e in table.journal
        ],
    }
    sidecar_path(p).write_text(json.dumps(sidecar, indent=2, ensure_ascii=False) + "\n", "utf-8")
    return p


def load_table(path: str | Path) -> AssignmentTable:
    p = Path(path)
    if not p.is_file():
        raise ValidationError(f"assignment table not found: {p}")
    meta_path = sidecar_path(p)
    if not meta_path.is_file():
        raise SchemaError(f"missing table sidecar: {meta_path}")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    version = meta.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaError(
            f"table sidecar {meta_path} has schema_version {version!r}; this build "
            f"reads version {SCHEMA_VERSION} and cannot migrate newer files"
        )

    concept_keys = list(meta["concept_keys"])
    with p.open("r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if not header or header[0] != "transcript_id":
            raise SchemaError(f"table {p} must start with a 'transcript_id' header column")
        columns = header[1:]
        for got, expected in zip(columns, concept_keys):
            if got != expected:
                raise SchemaError(
                    f"table {p} column '{got}' does not match vocabulary order "
                    f"(expected '{expected}')"
                )
        if len(columns) > len(concept_keys):
            extra = columns[len(concept_keys):]
            raise SchemaError(f"table {p} has unknown column(s): {extra}")
        if len(columns) < len(concept_keys):
            missing = concept_keys[len(columns):]
            raise SchemaError(f"table {p} is missing column(s): {missing}")

        soft_scores = meta.get("soft_scores", {})
        notes = meta.get("notes", {})
        rows: dict[str, dict[str, AssignmentCell]] = {}
        for lineno, record in enumerate(reader, start=2):
            if not record:
                continue
            if len(record) != len(concept_keys) + 1:
                raise SchemaError(f"table {p} row at line {lineno} has wrong cell count")
            tid = record[0]
            row: dict[str, AssignmentCell] = {}
            for key, token in zip(concept_keys, record[1:]):
                if token not in _CELL_SYNTAX:
                    raise SchemaError(
                        f"table {p} line {lineno}: invalid cell '{token}' "
                        "(expected 0, 1, 0*, or 1*)"
                    )
                value, provenance = _CELL_SYNTAX[token]
                score = soft_scores.get(tid, {}).get(key)
                note = notes.get(tid, {}).get(key)
                row[key] = AssignmentCell(
                    value=value,
                    soft_score=score if provenance == MODEL else None,
                    provenance=provenance,
                    note=note,
                )
            rows[tid] = row

    journal = tuple(
        JournalEntry(
            transcript_id=e["transcript_id"],
            concept_key=e["concept_key"],
            old_value=int(e["old_value"]),
            new_value=int(e["new_value"]),
            note=e.get("note", ""),
        )
        for e in meta.get("journal", [])
    )
    return AssignmentTable(
        condition_id=meta["condition_id"],
        vocabulary_version=meta["vocabulary_version"],
        concept_keys=tuple(concept_keys),
        rows=rows,
        tau=meta["tau"],
        run_id=meta["run_id"],
        mode=meta.get("mode", BINARY),
        incomplete=tuple(meta.get("incomplete", [])),
        journal=journal,
    )


def table_to_json(table: AssignmentTable) -> dict:
    """JSON view served over the API; cells omit absent optionals."""
    rows = {}
    for tid in sorted(table.rows):
        cells = {}
        for key in table.concept_keys:
            cell = table.rows[tid][key]
            payload: dict = {"value": cell.value, "provenance": cell.provenance}
            if cell.soft_score is not None:
                payload["soft_score"] = cell.soft_score
            if cell.note is not None:
                payload["note"] = cell.note
            cells[key] = payload
        rows[tid] = cells
    return {
        "condition_id": table.condition_id,
        "run_id": table.run_id,
        "mode": table.mode,
        "tau": table.tau,
        "vocabulary_version": table.vocabulary_version,
        "concept_keys": list(table.concept_keys),
        "incomplete": list(table.incomplete),
        "rows": rows,
        "journal": [
            {
                "transcript_id": e.transcript_id,
                "concept_key": e.concept_key,
                "old_value": e.old_value,
                "new_value": e.new_value,
                "note": e.note,
            }
            for e in table.journal
        ],
    }
