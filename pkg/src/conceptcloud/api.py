"""HTTP API backing the audit UI.

The server holds no derived state of its own: every response is computed
from the files in the run directory, which stay the single source of truth
shared with the CLI. Reads are concurrent; mutations are serialized through
one lock and persisted before the response is sent.
"""

from __future__ import annotations

import threading
from pathlib import Path

from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from . import concepts, mapping, salience
from .config import RunConfig
from .corpus import condition_sizes, load_corpus
from .errors import CloudError, DataIntegrityError, GatewayError, ValidationError
from .workflows import (
    RunPaths,
    apply_audit,
    atomic_write,
    condition_cloud_svg,
    diff_cloud_svg,
    frequency_cloud_svg,
    load_condition_state,
    run_elicit,
    run_map,
)

import json

SVG_MEDIA_TYPE = "image/svg+xml"


class SeedBody(BaseModel):
    phrases: list[str]
    pin: bool = False


class PinBody(BaseModel):
    keys: list[str]
    pinned: bool = True


class EditBody(BaseModel):
    remove: list[str] = Field(default_factory=list)
    add: list[str] = Field(default_factory=list)
    unpin: bool = False


class EditsBody(BaseModel):
    edits: list[EditBody]


class CellBody(BaseModel):
    transcript_id: str
    concept_key: str
    value: int
    note: str = ""


def _status_for(exc: CloudError) -> int:
    if isinstance(exc, ValidationError):
        return 400
    if isinstance(exc, GatewayError):
        return 502
    if isinstance(exc, DataIntegrityError):
        return 409
    return 500


def create_app(config: RunConfig, paths: RunPaths, ui_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="conceptcloud", version="0.1.0")
    corpus = load_corpus(config.corpus_root, config.corpus_format)
    write_lock = threading.Lock()

    @app.exception_handler(CloudError)
    async def _cloud_error(request: Request, exc: CloudError) -> JSONResponse:
        return JSONResponse(status_code=_status_for(exc), content={"error": str(exc)})

    def _save_vocab(vocab: concepts.ConceptVocabulary, condition: str) -> dict:
        payload = concepts.vocabulary_to_json(vocab)
        atomic_write(
            paths.vocab_file(condition),
            json.dumps(payload, indent=2, ensure_ascii=False) + "\n",
        )
        return payload

    def _load_vocab(condition: str) -> concepts.ConceptVocabulary:
        vocab_file = paths.vocab_file(condition)
        if not vocab_file.is_file():
            raise ValidationError(f"no vocabulary for '{condition}'")
        return concepts.load_vocabulary(vocab_file)

    @app.get("/api/conditions")
    def get_conditions() -> list[dict]:
        return [
            {"condition_id": condition, "m": size}
            for condition, size in condition_sizes(corpus).items()
        ]

    @app.get("/api/vocab/{condition}")
    def get_vocab(condition: str) -> dict:
        return concepts.vocabulary_to_json(_load_vocab(condition))

    @app.post("/api/vocab/{condition}/pin")
    def post_pin(condition: str, body: PinBody) -> dict:
        with write_lock:
            vocab = concepts.set_pinned(_load_vocab(condition), body.keys, body.pinned)
            return _save_vocab(vocab, condition)

    @app.post("/api/vocab/{condition}/seed")
    def post_seed(condition: str, body: SeedBody) -> dict:
        with write_lock:
            vocab = concepts.seed_concepts(_load_vocab(condition), body.phrases, body.pin)
            return _save_vocab(vocab, condition)

    @app.post("/api/vocab/{condition}/edits")
    def post_edits(condition: str, body: EditsBody) -> dict:
        with write_lock:
            edits = [
                concepts.Edit(remove=tuple(e.remove), add=tuple(e.add), unpin=e.unpin)
                for e in body.edits
            ]
            vocab = concepts.split_or_merge(_load_vocab(condition), edits)
            return _save_vocab(vocab, condition)

    def _table_payload(condition: str) -> dict:
        _, table = load_condition_state(paths, condition)
        breadth = salience.compute_breadth(table, force=True)
        return {
            "table": mapping.table_to_json(table),
            "breadth": salience.breadth_to_json(breadth),
            "stale": table.stale,
        }

    @app.get("/api/table/{condition}")
    def get_table(condition: str) -> dict:
        return _table_payload(condition)

    @app.patch("/api/table/{condition}/cell")
    def patch_cell(condition: str, body: CellBody) -> dict:
        with write_lock:
            apply_audit(
                paths, condition, body.transcript_id, body.concept_key, body.value, body.note
            )
            return _table_payload(condition)

    @app.get("/api/cloud/{condition}")
    def get_cloud(
        condition: str,
        scale: str | None = None,
        seed: int | None = None,
        top_k: int | None = None,
    ) -> Response:
        svg = condition_cloud_svg(config, paths, condition, scale=scale, seed=seed, top_k=top_k)
        return Response(content=svg, media_type=SVG_MEDIA_TYPE)

    @app.get("/api/diff")
    def get_diff(
        a: str,
        b: str,
        margin: int | None = None,
        seed: int | None = None,
        separate: bool = False,
    ) -> Response:
        svg = diff_cloud_svg(config, paths, a, b, margin=margin, seed=seed, separate=separate)
        return Response(content=svg, media_type=SVG_MEDIA_TYPE)

    @app.get("/api/freq/{condition}")
    def get_freq(condition: str, top_k: int | None = None, seed: int | None = None) -> Response:
        svg = frequency_cloud_svg(config, condition, top_k=top_k, seed=seed)
        return Response(content=svg, media_type=SVG_MEDIA_TYPE)

    @app.get("/api/transcript/{transcript_id}")
    def get_transcript(transcript_id: str) -> dict:
        transcript = corpus.get(transcript_id)
        if transcript is None:
            return JSONResponse(status_code=404, content={"error": f"unknown transcript '{transcript_id}'"})
        return {
            "id": transcript.id,
            "participant_id": transcript.participant_id,
            "condition_id": transcript.condition_id,
            "text": transcript.text,
        }

    @app.post("/api/rerun/{stage}/{condition}")
    def post_rerun(stage: str, condition: str) -> dict:
        if stage not in ("elicit", "map"):
            raise ValidationError(f"unknown stage '{stage}'; expected elicit or map")
        with write_lock:
            if stage == "elicit":
                vocab = run_elicit(config, condition, paths)
                return concepts.vocabulary_to_json(vocab)
            run_map(config, condition, paths)
            return _table_payload(condition)

    if ui_dir and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
