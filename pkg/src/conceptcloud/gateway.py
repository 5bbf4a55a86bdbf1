"""Provider-agnostic completion gateway.

Three interchangeable backends share one interface: a live chat-completions
endpoint, a record/replay fixture store keyed by request digest, and an
in-memory mock for tests. The digest is a pure function of the rendered
prompt plus decoding parameters, so any recorded exchange replays
byte-for-byte with zero network access.

The two response shapes the pipeline depends on are parsed here:
bullet lists grouped under ``### <label>`` headers (concept elicitation)
and bare term-per-line lists (concept mapping). Parsers are pure and
deliberately conservative; lines they cannot account for are dropped and
logged, never guessed at.
"""

from __future__ import annotations

import json
import hashlib
import logging
import string
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Mapping, Protocol

import httpx

from .errors import (
    FixtureMissError,
    ResponseFormatError,
    SchemaError,
    TransportError,
    ValidationError,
)
from .phrases import normalize_phrase

if TYPE_CHECKING:
    from .concepts import ConceptVocabulary

logger = logging.getLogger(__name__)

ELICITATION = "elicitation"
MAPPING = "mapping"
ROLES = (ELICITATION, MAPPING)

BULLET_MARKER = "- "
HEADER_MARKER = "### "

LIVE = "live"
FIXTURE = "fixture"
MOCK = "mock"


# ---------------------------------------------------------------------------
# Prompt templates
# ---------------------------------------------------------------------------


def _scan_placeholders(body: str) -> frozenset[str]:
    names = set()
    for _, field_name, format_spec, conversion in string.Formatter().parse(body):
        if field_name is None:
            continue
        if not field_name.isidentifier() or format_spec or conversion:
            raise ValidationError(
                f"template placeholder '{{{field_name}}}' must be a bare name"
            )
        names.add(field_name)
    return frozenset(names)


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    body: str
    role: str
    placeholders: frozenset[str] = field(init=False)

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ValidationError(f"template role must be one of {ROLES}, got '{self.role}'")
        object.__setattr__(self, "placeholders", _scan_placeholders(self.body))


def render_prompt(template: PromptTemplate, variables: Mapping[str, object]) -> str:
    """Expand all placeholders; unbound names are an error, extras are ignored."""
    missing = sorted(template.placeholders - set(variables))
    if missing:
        raise ValidationError(
            f"unbound placeholder(s) {', '.join(missing)} for template '{template.name}'"
        )
    return template.body.format(**dict(variables))


_BUILTIN_FILES = {
    "elicit": ("elicit.txt", ELICITATION),
    "mapping": ("mapping.txt", MAPPING),
    "scoring": ("scoring.txt", MAPPING),
}


def load_template(path: str | Path, role: str, name: str | None = None) -> PromptTemplate:
    p = Path(path)
    if not p.is_file():
        raise ValidationError(f"prompt template not found: {p}")
    return PromptTemplate(name=name or p.stem, body=p.read_text(encoding="utf-8"), role=role)


def builtin_template(kind: str) -> PromptTemplate:
    """One of the bundled templates: 'elicit', 'mapping', or 'scoring'."""
    try:
        filename, role = _BUILTIN_FILES[kind]
    except KeyError:
        raise ValidationError(f"unknown builtin template '{kind}'") from None
    body = resources.files("conceptcloud").joinpath("templates", filename).read_text("utf-8")
    return PromptTemplate(name=f"builtin-{kind}", body=body, role=role)


# ---------------------------------------------------------------------------
# Requests, records and digests
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Decoding:
    temperature: float = 0.0
    max_output_tokens: int = 2048

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValidationError("temperature must be >= 0")
        if self.max_output_tokens <= 0:
            raise ValidationError("max_output_tokens must be positive")


@dataclass(frozen=True)
class CompletionRequest:
    template: PromptTemplate
    variables: Mapping[str, object]
    model_id: str
    decoding: Decoding = Decoding()


@dataclass(frozen=True)
class RenderedRequest:
    prompt: str
    model_id: str
    decoding: Decoding
    digest: str


@dataclass(frozen=True)
class CompletionRecord:
    digest: str
    raw_response: str
    backend: str
    timestamp: str


def request_digest(prompt: str, model_id: str, decoding: Decoding) -> str:
    payload = json.dumps(
        {
            "prompt": prompt,
            "model_id": model_id,
            "temperature": decoding.temperature,
            "max_output_tokens": decoding.max_output_tokens,
        },
        sort_keys=True,
        ensure_ascii=False,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def rendered(request: CompletionRequest) -> RenderedRequest:
    prompt = render_prompt(request.template, request.variables)
    return RenderedRequest(
        prompt=prompt,
        model_id=request.model_id,
        decoding=request.decoding,
        digest=request_digest(prompt, request.model_id, request.decoding),
    )


def digest_for(request: CompletionRequest) -> str:
    return rendered(request).digest


# ---------------------------------------------------------------------------
# Backends
# ---------------------------------------------------------------------------


class Backend(Protocol):
    name: str

    def send(self, request: RenderedRequest) -> str: ...


class MockBackend:
    """Canned responses keyed by request digest; byte-identical across runs."""

    name = MOCK

    def __init__(self, responses: Mapping[str, str] | None = None, default: str | None = None):
        self.responses = dict(responses or {})
        self.default = default

    def script(self, request: CompletionRequest, response: str) -> str:
        """Register a response for the digest this request will produce."""
        digest = digest_for(request)
        self.responses[digest] = response
        return digest

    def send(self, request: RenderedRequest) -> str:
        if request.digest in self.responses:
            return self.responses[request.digest]
        if self.default is not None:
            return self.default
        raise FixtureMissError(f"mock backend has no response for digest {request.digest[:12]}…")


class FixtureBackend:
    """Replays recorded responses; a miss is a hard error, never a guess."""

    name = FIXTURE

    def __init__(self, responses: Mapping[str, str]):
        self.responses = dict(responses)

    @classmethod
    def from_file(cls, path: str | Path) -> "FixtureBackend":
        return cls(load_fixture_file(path))

    def send(self, request: RenderedRequest) -> str:
        try:
            return self.responses[request.digest]
        except KeyError:
            raise FixtureMissError(
                f"no recorded response for digest {request.digest}; "
                "re-record the fixture file against a live endpoint"
            ) from None


class RecordingBackend:
    """Wraps another backend and appends every exchange to a fixture file."""

    def __init__(self, inner: Backend, path: str | Path):
        self.inner = inner
        self.path = Path(path)
        self.name = inner.name

    def send(self, request: RenderedRequest) -> str:
        raw = self.inner.send(request)
        append_fixture(self.path, request.digest, raw)
        return raw


class LiveBackend:
    """Chat-completions-style HTTP endpoint; the endpoint itself is opaque."""

    name = LIVE

    def __init__(
        self,
        base_url: str,
        api_key: str = "",
        timeout: float = 120.0,
        transport: httpx.BaseTransport | None = None,
    ):
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._client = httpx.Client(
            base_url=base_url.rstrip("/"), headers=headers, timeout=timeout, transport=transport
        )

    def send(self, request: RenderedRequest) -> str:
        body = {
            "model": request.model_id,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.decoding.temperature,
            "max_tokens": request.decoding.max_output_tokens,
        }
        try:
            response = self._client.post("/chat/completions", json=body)
            response.raise_for_status()
        except httpx.HTTPError as exc:
            raise TransportError(f"completion endpoint failure: {exc}") from exc
        try:
            return response.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise TransportError(f"malformed completion payload: {exc}") from exc


def load_fixture_file(path: str | Path) -> dict[str, str]:
    p = Path(path)
    if not p.is_file():
        raise ValidationError(f"fixture file not found: {p}")
    responses: dict[str, str] = {}
    for lineno, line in enumerate(p.read_text(encoding="utf-8").split("\n"), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            responses[record["digest"]] = record["raw_response"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise SchemaError(f"malformed fixture record at {p}:{lineno}: {exc}") from exc
    return responses


def append_fixture(path: str | Path, digest: str, raw_response: str) -> None:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with p.open("a", encoding="utf-8") as handle:
        handle.write(json.dumps({"digest": digest, "raw_response": raw_response}, ensure_ascii=False))
        handle.write("\n")


# ---------------------------------------------------------------------------
# Run log and completion
# ---------------------------------------------------------------------------


class RunLog:
    """Append-only completion journal; one JSON record per line, single writer."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()

    def append(self, record: CompletionRecord) -> None:
        line = json.dumps(
            {
                "digest": record.digest,
                "raw_response": record.raw_response,
                "backend": record.backend,
                "timestamp": record.timestamp,
            },
            ensure_ascii=False,
        )
        with self._lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as handle:
                handle.write(line + "\n")

    def records(self) -> list[CompletionRecord]:
        if not self.path.exists():
            return []
        out = []
        for line in self.path.read_text(encoding="utf-8").split("\n"):
            if not line.strip():
                continue
            data = json.loads(line)
            out.append(
                CompletionRecord(
                    digest=data["digest"],
                    raw_response=data["raw_response"],
                    backend=data["backend"],
                    timestamp=data["timestamp"],
                )
            )
        return out


def _utcnow() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%fZ")


def complete(
    request: CompletionRequest,
    backend: Backend,
    run_log: RunLog | None = None,
    transport_retries: int = 2,
) -> tuple[str, CompletionRecord]:
    """Send one completion, retrying transport failures up to twice.

    The raw response is returned unmodified; on success a CompletionRecord is
    appended to the run log. Nothing is logged for failed attempts.
    """
    req = rendered(request)
    last_error: TransportError | None = None
    raw: str | None = None
    for attempt in range(transport_retries + 1):
        try:
            raw = backend.send(req)
            break
        except TransportError as exc:
            last_error = exc
            logger.warning(
                "transport failure (attempt %d/%d): %s", attempt + 1, transport_retries + 1, exc
            )
    if raw is None:
        assert last_error is not None
        raise last_error
    record = CompletionRecord(
        digest=req.digest, raw_response=raw, backend=backend.name, timestamp=_utcnow()
    )
    if run_log is not None:
        run_log.append(record)
    return raw, record


# ---------------------------------------------------------------------------
# Response parsers
# ---------------------------------------------------------------------------


class UnderfullGroupError(ResponseFormatError):
    """A bullet group came back short; carries the partial parse."""

    def __init__(self, groups: dict[str, list[str]], message: str):
        super().__init__(message)
        self.groups = groups


def parse_bullet_list(raw: str, expected_n: int | None = None) -> dict[str, list[str]]:
    """Extract ``- `` bullets, grouped by the ``### `` header above them.

    Returns an ordered mapping of header label to phrases (a headerless
    response yields the single key ``""``). Non-bullet commentary lines are
    ignored. With ``expected_n`` set, any short group raises
    UnderfullGroupError carrying everything that did parse.
    """
    groups: dict[str, list[str]] = {}
    current: str | None = None
    for line in raw.splitlines():
        stripped = line.strip()
        if stripped.startswith(HEADER_MARKER):
            current = stripped[len(HEADER_MARKER):].strip().strip("[]").strip()
            groups.setdefault(current, [])
        elif stripped.startswith(BULLET_MARKER):
            phrase = stripped[len(BULLET_MARKER):].strip()
            if phrase:
                groups.setdefault(current if current is not None else "", []).append(phrase)
    total = sum(len(items) for items in groups.values())
    if total == 0:
        raise ResponseFormatError("no bullet items found in response")
    if expected_n is not None:
        short = [label for label, items in groups.items() if len(items) < expected_n]
        if short:
            labels = ", ".join(repr(s) for s in short)
            raise UnderfullGroupError(
                groups, f"group(s) {labels} returned fewer than {expected_n} items"
            )
    return groups


def _vocabulary_keys(vocabulary: "ConceptVocabulary | Iterable[str]") -> list[str]:
    keys = list(vocabulary.keys()) if hasattr(vocabulary, "keys") else list(vocabulary)
    if not keys:
        raise ValidationError("vocabulary is empty")
    return keys


def parse_line_list(
    raw: str,
    vocabulary: "ConceptVocabulary | Iterable[str]",
    max_items: int = 20,
) -> list[str]:
    """Match response lines against the vocabulary by normalized key.

    Unmatched lines are dropped and logged; duplicates collapse to the first
    occurrence; at most ``max_items`` distinct matches are kept, in response
    order. The result is always a subset of the vocabulary, so an entirely
    unusable response simply yields the empty list.
    """
    keys = set(_vocabulary_keys(vocabulary))
    matched: list[str] = []
    seen: set[str] = set()
    for line in raw.splitlines():
        key = normalize_phrase(line)
        if not key:
            continue
        if key not in keys:
            logger.warning("dropping unmatched mapping line: %r", line.strip())
            continue
        if key in seen:
            continue
        if len(matched) >= max_items:
            logger.warning("mapping response exceeded %d terms; truncating", max_items)
            break
        seen.add(key)
        matched.append(key)
    return matched


def parse_score_list(
    raw: str,
    vocabulary: "ConceptVocabulary | Iterable[str]",
) -> dict[str, float]:
    """Parse ``term: score`` lines into per-concept scores clamped to [0, 1].

    Lines that fail to match the vocabulary or to parse as a number are
    dropped and logged; the first score wins for a repeated term.
    """
    keys = set(_vocabulary_keys(vocabulary))
    scores: dict[str, float] = {}
    for line in raw.splitlines():
        text = line.strip()
        if not text:
            continue
        term, sep, value = text.rpartition(":")
        if not sep:
            logger.warning("dropping scoreless line: %r", text)
            continue
        key = normalize_phrase(term)
        if key not in keys:
            logger.warning("dropping unmatched score line: %r", text)
            continue
        try:
            score = float(value.strip())
        except ValueError:
            logger.warning("dropping unparsable score in line: %r", text)
            continue
        if key not in scores:
            scores[key] = min(1.0, max(0.0, score))
    return scores
