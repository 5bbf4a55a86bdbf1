"""Pipeline orchestration shared by the CLI and the HTTP API.

Every stage reads and writes files under one run directory
(``<output_dir>/<run_id>/{vocab,tables,clouds,log}``), so any cloud can be
reconstructed from the persisted audit trail alone. All writes go through
write-then-rename; a crash never leaves a partial artifact behind.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from . import baseline, concepts, gateway, mapping, salience
from .config import ENV_API_KEY, ENV_BASE_URL, RunConfig, config_hash, save_config_snapshot
from .corpus import Corpus, load_corpus, transcripts_for
from .errors import StaleTableError, ValidationError
from .layout import Canvas, font_sizes, place, render_vector
from .salience import WITHIN_MARGIN

LATEST_POINTER = "LATEST"


@dataclass(frozen=True)
class RunPaths:
    root: Path
    run_id: str

    @property
    def vocab_dir(self) -> Path:
        return self.root / "vocab"

    @property
    def tables_dir(self) -> Path:
        return self.root / "tables"

    @property
    def clouds_dir(self) -> Path:
        return self.root / "clouds"

    @property
    def log_dir(self) -> Path:
        return self.root / "log"

    def vocab_file(self, condition: str) -> Path:
        return self.vocab_dir / f"{condition}.json"

    def table_file(self, condition: str) -> Path:
        return self.tables_dir / f"{condition}.csv"

    def cloud_file(self, condition: str) -> Path:
        return self.clouds_dir / f"{condition}.svg"

    def diff_file(self, a: str, b: str) -> Path:
        return self.clouds_dir / f"diff_{a}_vs_{b}.svg"

    def freq_file(self, condition: str) -> Path:
        return self.clouds_dir / f"freq_{condition}.svg"

    def run_log(self) -> gateway.RunLog:
        return gateway.RunLog(self.log_dir / "completions.jsonl")

    def ensure(self) -> "RunPaths":
        for d in (self.vocab_dir, self.tables_dir, self.clouds_dir, self.log_dir):
            d.mkdir(parents=True, exist_ok=True)
        return self


def new_run_id(config: RunConfig) -> str:
    stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%SZ")
    return f"{stamp}-{config_hash(config)[:10]}"


def resolve_run(
    config: RunConfig,
    run_id: str | None = None,
    allow_create: bool = False,
    new_run: bool = False,
) -> RunPaths:
    """Locate a run directory and keep the LATEST pointer current.

    Without ``run_id`` the latest run is reused; stages that may start a run
    (elicit) pass ``allow_create`` and mint a fresh id when there is none yet
    or when ``new_run`` forces one. Stages that only read refuse to invent a
    run directory.
    """
    out = Path(config.output_dir)
    pointer = out / LATEST_POINTER
    if run_id is None:
        if new_run or not pointer.is_file():
            if not allow_create:
                raise ValidationError(
                    f"no run found under {out}; run the elicit command first or pass --run-id"
                )
            run_id = new_run_id(config)
        else:
            run_id = pointer.read_text(encoding="utf-8").strip()
    paths = RunPaths(root=out / run_id, run_id=run_id)
    if not paths.root.exists():
        if not allow_create:
            raise ValidationError(f"run '{run_id}' does not exist under {out}")
        paths.ensure()
        save_config_snapshot(config, paths.root / "config.json")
    atomic_write(pointer, run_id + "\n")
    return paths


def atomic_write(path: str | Path, text: str) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=p.parent, prefix=f".{p.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as handle:
            handle.write(text)
        os.replace(tmp, p)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return p


def open_corpus(config: RunConfig) -> Corpus:
    return load_corpus(config.corpus_root, config.corpus_format)


def make_backend(config: RunConfig) -> gateway.Backend:
    if config.backend == "fixture":
        if not config.fixtures_path:
            raise ValidationError("fixture backend requires fixtures_path")
        return gateway.FixtureBackend.from_file(config.fixtures_path)
    base_url = config.base_url or os.environ.get(ENV_BASE_URL)
    if not base_url:
        raise ValidationError(f"live backend requires base_url or ${ENV_BASE_URL}")
    return gateway.LiveBackend(base_url=base_url, api_key=os.environ.get(ENV_API_KEY, ""))


def decoding_from(config: RunConfig) -> gateway.Decoding:
    return gateway.Decoding(
        temperature=config.temperature, max_output_tokens=config.max_output_tokens
    )


def template_for(config: RunConfig, kind: str) -> gateway.PromptTemplate:
    path = {
        "elicit": config.elicit_template,
        "mapping": config.mapping_template,
        "scoring": config.scoring_template,
    }[kind]
    if path is not None:
        role = gateway.ELICITATION if kind == "elicit" else gateway.MAPPING
        return gateway.load_template(path, role)
    return gateway.builtin_template(kind)


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------


def run_elicit(
    config: RunConfig,
    condition: str,
    paths: RunPaths,
    backend: gateway.Backend | None = None,
    n: int | None = None,
) -> concepts.ConceptVocabulary:
    """Elicit a vocabulary, merging pins from any existing vocabulary file."""
    corpus = open_corpus(config)
    backend = backend or make_backend(config)
    existing = None
    vocab_file = paths.vocab_file(condition)
    if vocab_file.is_file():
        existing = concepts.load_vocabulary(vocab_file)
    vocab = concepts.elicit_vocabulary(
        corpus,
        condition,
        n if n is not None else config.n_topics,
        template_for(config, "elicit"),
        backend,
        existing=existing,
        model_id=config.model_id,
        decoding=decoding_from(config),
        run_log=paths.run_log(),
    )
    atomic_write(vocab_file, json.dumps(concepts.vocabulary_to_json(vocab), indent=2,
                                        ensure_ascii=False) + "\n")
    return vocab


def run_map(
    config: RunConfig,
    condition: str,
    paths: RunPaths,
    backend: gateway.Backend | None = None,
    mode: str | None = None,
    tau: float | None = None,
) -> mapping.AssignmentTable:
    """Map every transcript of a condition against its saved vocabulary."""
    corpus = open_corpus(config)
    backend = backend or make_backend(config)
    vocab_file = paths.vocab_file(condition)
    if not vocab_file.is_file():
        raise ValidationError(
            f"no vocabulary for '{condition}' at {vocab_file}; run the elicit command first"
        )
    vocab = concepts.load_vocabulary(vocab_file)
    mode = mode or config.mode
    template_kind = "scoring" if mode == mapping.SOFT else "mapping"
    table = mapping.map_condition(
        corpus,
        condition,
        vocab,
        template_for(config, template_kind),
        backend,
        mode=mode,
        tau=tau if tau is not None else config.tau,
        run_id=paths.run_id,
        model_id=config.model_id,
        decoding=decoding_from(config),
        run_log=paths.run_log(),
    )
    _save_table_atomic(table, paths.table_file(condition))
    return table


def _save_table_atomic(table: mapping.AssignmentTable, path: Path) -> None:
    # save_table writes two files; build them in a scratch dir, then rename.
    path.parent.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory(dir=path.parent) as scratch:
        tmp_csv = Path(scratch) / path.name
        mapping.save_table(table, tmp_csv)
        os.replace(mapping.sidecar_path(tmp_csv), mapping.sidecar_path(path))
        os.replace(tmp_csv, path)
    _export_counts(table, path)


def _export_counts(table: mapping.AssignmentTable, table_path: Path) -> Path:
    """Keep the per-concept participant counts export next to the table."""
    breadth = salience.compute_breadth(table, force=True)
    counts_path = table_path.with_suffix(".counts.json")
    return atomic_write(
        counts_path,
        json.dumps(salience.breadth_to_json(breadth), indent=2, ensure_ascii=False) + "\n",
    )


def load_condition_state(
    paths: RunPaths, condition: str
) -> tuple[concepts.ConceptVocabulary, mapping.AssignmentTable]:
    """Load vocabulary and table together, with the stale flag set."""
    vocab_file = paths.vocab_file(condition)
    table_file = paths.table_file(condition)
    if not vocab_file.is_file():
        raise ValidationError(f"no vocabulary for '{condition}'; run the elicit command first")
    if not table_file.is_file():
        raise ValidationError(f"no assignment table for '{condition}'; run the map command first")
    vocab = concepts.load_vocabulary(vocab_file)
    table = mapping.check_staleness(mapping.load_table(table_file), vocab)
    return vocab, table


def apply_audit(
    paths: RunPaths,
    condition: str,
    transcript_id: str,
    concept_key: str,
    value: int,
    note: str = "",
) -> mapping.AssignmentTable:
    """One human correction, persisted atomically with its journal entry."""
    _, table = load_condition_state(paths, condition)
    corrected = mapping.apply_correction(table, transcript_id, concept_key, value, note)
    _save_table_atomic(corrected, paths.table_file(condition))
    return corrected


# ---------------------------------------------------------------------------
# Cloud rendering
# ---------------------------------------------------------------------------


def _participants_by_concept(
    corpus: Corpus, table: mapping.AssignmentTable
) -> dict[str, list[str]]:
    by_tid = {t.id: t.participant_id for t in corpus.transcripts}
    return {
        key: sorted(by_tid.get(tid, tid) for tid in tids)
        for key, tids in salience.contributors(table).items()
    }


def condition_cloud_svg(
    config: RunConfig,
    paths: RunPaths,
    condition: str,
    scale: str | None = None,
    seed: int | None = None,
    top_k: int | None = None,
    force: bool = False,
) -> str:
    """Participant-weighted cloud for one condition, from persisted artifacts."""
    corpus = open_corpus(config)
    vocab, table = load_condition_state(paths, condition)
    if table.stale and not force:
        raise StaleTableError(
            f"table for '{condition}' is stale against vocabulary {vocab.version[:12]}…; "
            "re-run mapping"
        )
    breadth = salience.compute_breadth(table, force=force)
    weights = salience.scale_weights(breadth, scale or config.scaling)
    entries = font_sizes(
        weights,
        min_pt=config.min_font_pt,
        max_pt=config.max_font_pt,
        top_k=top_k if top_k is not None else config.top_k,
        display=vocab.display_map(),
        breadth=breadth.counts,
        participants=_participants_by_concept(corpus, table),
    )
    layout = place(
        entries,
        Canvas(config.canvas_width, config.canvas_height),
        seed=seed if seed is not None else config.seed,
        padding=config.padding,
        label=condition,
    )
    return render_vector(layout)


def diff_cloud_svg(
    config: RunConfig,
    paths: RunPaths,
    condition_a: str,
    condition_b: str,
    margin: int | None = None,
    seed: int | None = None,
    separate: bool = False,
) -> str:
    """Contrast cloud: sized by |delta|, colored by sign, gray within margin.

    With ``separate`` the two dominant groups render as side-by-side panels
    (within-margin concepts are omitted, being different in neither).
    """
    vocab_a, table_a = load_condition_state(paths, condition_a)
    vocab_b, table_b = load_condition_state(paths, condition_b)
    diff = salience.diff_breadth(
        salience.compute_breadth(table_a),
        salience.compute_breadth(table_b),
        margin if margin is not None else config.diff_margin,
    )
    display = {**vocab_b.display_map(), **vocab_a.display_map()}
    weights = {key: float(abs(delta)) for key, delta in diff.deltas.items()}
    classes = {key: diff.classify(key) for key in diff.deltas}
    entries = font_sizes(
        weights,
        min_pt=config.min_font_pt,
        max_pt=config.max_font_pt,
        top_k=config.top_k,
        display=display,
        color_classes=classes,
    )
    canvas = Canvas(config.canvas_width, config.canvas_height)
    seed = seed if seed is not None else config.seed
    label = f"{condition_a}_vs_{condition_b}"
    legend = {
        "a_dominant": f"higher in {condition_a}",
        "b_dominant": f"higher in {condition_b}",
        WITHIN_MARGIN: "within margin",
    }
    if separate:
        layout = _two_panel_layout(entries, canvas, seed, config.padding, label)
    else:
        layout = place(entries, canvas, seed=seed, padding=config.padding, label=label)
    return render_vector(layout, diff_legend=True, legend_labels=legend)


def _two_panel_layout(entries, canvas: Canvas, seed: int, padding: float, label: str):
    """Side-by-side panels: one condition's surplus left, the other's right."""
    import dataclasses

    from .layout import CloudLayout

    half = Canvas(canvas.width / 2, canvas.height)
    left = place(
        [e for e in entries if e.color_class == "a_dominant"],
        half, seed=seed, padding=padding, label=label,
    )
    right = place(
        [e for e in entries if e.color_class == "b_dominant"],
        half, seed=seed + 1, padding=padding, label=label,
    )
    shifted = tuple(
        dataclasses.replace(box, x=box.x + canvas.width / 2) for box in right.boxes
    )
    return CloudLayout(
        label=f"{label}_panels",
        canvas=canvas,
        boxes=left.boxes + shifted,
        seed=seed,
        overflow=left.overflow + right.overflow,
    )


def frequency_cloud_svg(
    config: RunConfig,
    condition: str,
    top_k: int | None = None,
    seed: int | None = None,
) -> str:
    """The frequency-based comparator cloud for one condition."""
    corpus = open_corpus(config)
    counts = baseline.frequency_counts(
        transcripts_for(corpus, condition), baseline.load_stopwords()
    )
    entries = baseline.frequency_cloud(
        counts,
        top_k=top_k if top_k is not None else (config.top_k or 20),
        min_pt=config.min_font_pt,
        max_pt=config.max_font_pt,
    )
    layout = place(
        entries,
        Canvas(config.canvas_width, config.canvas_height),
        seed=seed if seed is not None else config.seed,
        padding=config.padding,
        label=f"freq_{condition}",
    )
    return render_vector(layout)
