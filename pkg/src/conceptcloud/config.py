"""Run configuration: one dataclass, JSON on disk, env for credentials."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path

from .errors import ValidationError

ENV_BASE_URL = "CONCEPTCLOUD_BASE_URL"
ENV_API_KEY = "CONCEPTCLOUD_API_KEY"


@dataclass(frozen=True)
class RunConfig:
    corpus_root: str
    corpus_format: str = "directory"
    conditions: tuple[str, ...] = ()  # empty means every condition in the corpus
    n_topics: int = 20
    mode: str = "binary"
    tau: float = 0.5
    scaling: str = "linear"
    canvas_width: float = 1280.0
    canvas_height: float = 720.0
    min_font_pt: float = 12.0
    max_font_pt: float = 48.0
    top_k: int | None = None
    seed: int = 0
    padding: float = 2.0
    diff_margin: int = 1
    backend: str = "fixture"
    fixtures_path: str | None = None
    base_url: str | None = None
    model_id: str = "llama-3.3-70b-instruct"
    temperature: float = 0.0
    max_output_tokens: int = 2048
    elicit_template: str | None = None
    mapping_template: str | None = None
    scoring_template: str | None = None
    output_dir: str = "runs"


_FIELDS = {f.name for f in dataclasses.fields(RunConfig)}


def load_config(path: str | Path) -> RunConfig:
    p = Path(path)
    if not p.is_file():
        raise ValidationError(f"config file not found: {p}")
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"malformed config {p}: {exc}") from exc
    if not isinstance(data, dict):
        raise ValidationError(f"config {p} must hold an object")
    unknown = sorted(set(data) - _FIELDS)
    if unknown:
        raise ValidationError(f"config {p} has unknown keys: {unknown}")
    if "conditions" in data:
        data["conditions"] = tuple(data["conditions"])
    if "corpus_root" not in data:
        raise ValidationError(f"config {p} is missing 'corpus_root'")
    return RunConfig(**data)


def validate_config(config: RunConfig) -> RunConfig:
    """Check enum values, ranges, and that referenced paths exist."""
    from .corpus import FORMATS
    from .mapping import MODES
    from .salience import SCALING_MODES

    if config.corpus_format not in FORMATS:
        raise ValidationError(f"corpus_format must be one of {FORMATS}")
    if not Path(config.corpus_root).exists():
        raise ValidationError(f"corpus_root does not exist: {config.corpus_root}")
    if config.n_topics < 1:
        raise ValidationError("n_topics must be >= 1")
    if config.mode not in MODES:
        raise ValidationError(f"mode must be one of {MODES}")
    if not 0.0 < config.tau <= 1.0:
        raise ValidationError(f"tau must be in (0, 1], got {config.tau}")
    if config.scaling not in SCALING_MODES:
        raise ValidationError(f"scaling must be one of {SCALING_MODES}")
    if config.canvas_width <= 0 or config.canvas_height <= 0:
        raise ValidationError("canvas dimensions must be positive")
    if not 0 < config.min_font_pt < config.max_font_pt:
        raise ValidationError("need 0 < min_font_pt < max_font_pt")
    if config.top_k is not None and config.top_k < 1:
        raise ValidationError("top_k must be >= 1")
    if config.padding < 0:
        raise ValidationError("padding must be >= 0")
    if config.diff_margin < 0:
        raise ValidationError("diff_margin must be >= 0")
    if config.backend not in ("live", "fixture"):
        raise ValidationError("backend must be 'live' or 'fixture'")
    if config.backend == "fixture":
        if not config.fixtures_path:
            raise ValidationError("fixture backend requires fixtures_path")
        if not Path(config.fixtures_path).is_file():
            raise ValidationError(f"fixtures_path does not exist: {config.fixtures_path}")
    if config.backend == "live" and not (config.base_url or os.environ.get(ENV_BASE_URL)):
        raise ValidationError(f"live backend requires base_url or ${ENV_BASE_URL}")
    for name in ("elicit_template", "mapping_template", "scoring_template"):
        value = getattr(config, name)
        if value is not None and not Path(value).is_file():
            raise ValidationError(f"{name} does not exist: {value}")
    return config


def config_to_json(config: RunConfig) -> dict:
    data = dataclasses.asdict(config)
    data["conditions"] = list(config.conditions)
    return data


def config_hash(config: RunConfig) -> str:
    payload = json.dumps(config_to_json(config), sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def save_config_snapshot(config: RunConfig, path: str | Path) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(
        json.dumps(config_to_json(config), indent=2, ensure_ascii=False, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    return p
