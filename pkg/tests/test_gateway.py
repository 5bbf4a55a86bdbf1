import json

import httpx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conceptcloud import gateway
from conceptcloud.errors import (
    FixtureMissError,
    ResponseFormatError,
    TransportError,
    ValidationError,
)
from conceptcloud.gateway import (
    CompletionRequest,
    Decoding,
    FixtureBackend,
    LiveBackend,
    MockBackend,
    PromptTemplate,
    RecordingBackend,
    RunLog,
    UnderfullGroupError,
    complete,
    digest_for,
    parse_bullet_list,
    parse_line_list,
    parse_score_list,
    render_prompt,
    request_digest,
)

from conftest import MODEL_ID


# ---------------------------------------------------------------------------
# Templates and rendering
# ---------------------------------------------------------------------------


def test_render_mapping_template_embeds_variables():
    template = gateway.builtin_template("mapping")
    prompt = render_prompt(
        template,
        {
            "device_name": "insta",
            "keyword_list": "- Small and compact\n- Not distracting",
            "transcript": "it was fine",
        },
    )
    assert "insta" in prompt
    assert "- Small and compact\n- Not distracting" in prompt
    assert "{" not in prompt and "}" not in prompt


def test_render_without_placeholders_is_identity():
    template = PromptTemplate(name="plain", body="no holes here", role="mapping")
    assert render_prompt(template, {}) == "no holes here"


def test_render_missing_variable_names_it():
    template = gateway.builtin_template("mapping")
    with pytest.raises(ValidationError, match="keyword_list"):
        render_prompt(template, {"device_name": "insta", "transcript": "x"})


def test_template_rejects_format_specs():
    with pytest.raises(ValidationError, match="bare name"):
        PromptTemplate(name="bad", body="value {x:>4}", role="mapping")


def test_template_rejects_unknown_role():
    with pytest.raises(ValidationError, match="role"):
        PromptTemplate(name="bad", body="x", role="chat")


def test_extra_variables_are_ignored():
    template = PromptTemplate(name="t", body="hello {name}", role="mapping")
    assert render_prompt(template, {"name": "world", "unused": "x"}) == "hello world"


# ---------------------------------------------------------------------------
# Digests
# ---------------------------------------------------------------------------


def test_digest_pure_function_of_prompt_model_decoding():
    d = Decoding(temperature=0.0, max_output_tokens=100)
    base = request_digest("prompt", "model", d)
    assert base == request_digest("prompt", "model", d)
    assert base != request_digest("prompt2", "model", d)
    assert base != request_digest("prompt", "model2", d)
    assert base != request_digest("prompt", "model", Decoding(0.5, 100))
    assert base != request_digest("prompt", "model", Decoding(0.0, 99))


def test_decoding_validation():
    with pytest.raises(ValidationError):
        Decoding(temperature=-0.1)
    with pytest.raises(ValidationError):
        Decoding(max_output_tokens=0)


# ---------------------------------------------------------------------------
# Backends and complete()
# ---------------------------------------------------------------------------


def _simple_request(body="say {word}", word="hi"):
    template = PromptTemplate(name="t", body=body, role="mapping")
    return CompletionRequest(template, {"word": word}, MODEL_ID)


def test_mock_backend_byte_identical_across_runs(tmp_path):
    request = _simple_request()
    backend = MockBackend()
    backend.script(request, "canned output")
    log = RunLog(tmp_path / "log.jsonl")
    raw1, rec1 = complete(request, backend, run_log=log)
    raw2, rec2 = complete(request, backend, run_log=log)
    assert raw1 == raw2 == "canned output"
    assert rec1.digest == rec2.digest == digest_for(request)
    assert rec1.backend == "mock"
    assert len(log.records()) == 2


class FlakyBackend:
    name = "mock"

    def __init__(self, failures, response="ok"):
        self.failures = failures
        self.response = response
        self.calls = 0

    def send(self, request):
        self.calls += 1
        if self.calls <= self.failures:
            raise TransportError("boom")
        return self.response


def test_transport_retries_then_succeeds():
    backend = FlakyBackend(failures=2)
    raw, _ = complete(_simple_request(), backend)
    assert raw == "ok"
    assert backend.calls == 3


def test_transport_retries_exhausted_no_record(tmp_path):
    backend = FlakyBackend(failures=3)
    log = RunLog(tmp_path / "log.jsonl")
    with pytest.raises(TransportError):
        complete(_simple_request(), backend, run_log=log)
    assert log.records() == []


def test_live_backend_parses_chat_completion():
    def handler(http_request: httpx.Request) -> httpx.Response:
        payload = json.loads(http_request.content)
        assert payload["model"] == MODEL_ID
        assert payload["temperature"] == 0.0
        assert payload["messages"][0]["content"] == "say hi"
        assert http_request.headers["authorization"] == "Bearer sekrit"
        return httpx.Response(
            200, json={"choices": [{"message": {"content": "hello back"}}]}
        )

    backend = LiveBackend(
        "http://llm.internal/v1", api_key="sekrit", transport=httpx.MockTransport(handler)
    )
    raw, record = complete(_simple_request(), backend)
    assert raw == "hello back"
    assert record.backend == "live"


def test_live_backend_unreachable_is_transport_error(tmp_path):
    def handler(http_request):
        raise httpx.ConnectError("no route to host")

    backend = LiveBackend("http://gone.invalid", transport=httpx.MockTransport(handler))
    log = RunLog(tmp_path / "log.jsonl")
    with pytest.raises(TransportError):
        complete(_simple_request(), backend, run_log=log)
    assert log.records() == []


def test_live_backend_http_500_is_transport_error():
    backend = LiveBackend(
        "http://llm.internal",
        transport=httpx.MockTransport(lambda r: httpx.Response(500, text="oops")),
    )
    with pytest.raises(TransportError):
        complete(_simple_request(), backend, transport_retries=0)


def test_record_then_replay_equality(tmp_path):
    """Record once against a (mock) endpoint, then replay byte-for-byte."""
    request = _simple_request()
    live = MockBackend({digest_for(request): "### g\n- one\n- two"})
    fixture_path = tmp_path / "responses.jsonl"
    recorded_raw, _ = complete(request, RecordingBackend(live, fixture_path))

    replay = FixtureBackend.from_file(fixture_path)
    replayed_raw, record = complete(request, replay)
    assert replayed_raw == recorded_raw
    assert record.backend == "fixture"
    assert parse_bullet_list(replayed_raw) == parse_bullet_list(recorded_raw)


def test_fixture_miss_is_hard_error(tmp_path):
    backend = FixtureBackend({})
    with pytest.raises(FixtureMissError, match="re-record"):
        complete(_simple_request(), backend)


def test_fixture_file_schema_error(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text("not json\n", encoding="utf-8")
    from conceptcloud.errors import SchemaError

    with pytest.raises(SchemaError, match="bad.jsonl:1"):
        FixtureBackend.from_file(path)


# ---------------------------------------------------------------------------
# parse_bullet_list
# ---------------------------------------------------------------------------


def test_bullets_grouped_by_header():
    raw = "### insta\n" + "\n".join(f"- phrase {i}" for i in range(20))
    groups = parse_bullet_list(raw, expected_n=20)
    assert list(groups) == ["insta"]
    assert len(groups["insta"]) == 20
    assert groups["insta"][0] == "phrase 0"


def test_trailing_commentary_ignored():
    raw = (
        "Sure, here you go:\n"
        + "\n".join(f"- item {i}" for i in range(20))
        + "\nHope that helps!"
    )
    groups = parse_bullet_list(raw, expected_n=20)
    assert len(groups[""]) == 20


def test_empty_response_is_format_error():
    with pytest.raises(ResponseFormatError, match="no bullet items"):
        parse_bullet_list("")


def test_underfull_group_carries_partial_parse():
    raw = "### insta\n- one\n- two"
    with pytest.raises(UnderfullGroupError) as excinfo:
        parse_bullet_list(raw, expected_n=5)
    assert excinfo.value.groups == {"insta": ["one", "two"]}


def test_bracketed_header_labels_are_unwrapped():
    groups = parse_bullet_list("### [insta]\n- one")
    assert list(groups) == ["insta"]


def test_multiple_groups():
    raw = "### a\n- one\n### b\n- two\n- three"
    groups = parse_bullet_list(raw)
    assert groups == {"a": ["one"], "b": ["two", "three"]}


_PHRASE = st.text(
    alphabet="abcdefghij XYZ'", min_size=1, max_size=20
).filter(lambda s: s.strip() and not s.strip().startswith(("#", "-")))
_LABEL = st.text(alphabet="abcdefghij", min_size=1, max_size=8)


@settings(max_examples=60, deadline=None)
@given(st.dictionaries(_LABEL, st.lists(_PHRASE, min_size=1, max_size=6), min_size=1, max_size=3))
def test_parse_is_idempotent_on_reserialized_output(groups):
    raw = "\n".join(
        f"### {label}\n" + "\n".join(f"- {p}" for p in phrases)
        for label, phrases in groups.items()
    )
    parsed = parse_bullet_list(raw)
    reserialized = "\n".join(
        f"### {label}\n" + "\n".join(f"- {p}" for p in phrases)
        for label, phrases in parsed.items()
    )
    assert parse_bullet_list(reserialized) == parsed


# ---------------------------------------------------------------------------
# parse_line_list / parse_score_list
# ---------------------------------------------------------------------------

VOCAB_KEYS = [
    "not distracting",
    "easy to ignore",
    "convenient",
    "small and compact",
    "felt watched",
]


def test_line_list_matches_by_normalized_key():
    assert parse_line_list("Not distracting\nEasy to ignore", VOCAB_KEYS) == [
        "not distracting",
        "easy to ignore",
    ]


def test_line_list_collapses_duplicates():
    raw = "Convenient\nConvenient\nconvenient"
    assert parse_line_list(raw, VOCAB_KEYS) == ["convenient"]


def test_line_list_truncates_to_first_max_items_in_order():
    keys = [f"concept {i:02d}" for i in range(30)]
    raw = "\n".join(f"Concept {i:02d}" for i in range(25))
    result = parse_line_list(raw, keys, max_items=20)
    assert result == [f"concept {i:02d}" for i in range(20)]


def test_line_list_unmatched_yields_empty_not_error():
    assert parse_line_list("utter nonsense\nmore junk", VOCAB_KEYS) == []


def test_line_list_empty_vocabulary_rejected():
    with pytest.raises(ValidationError, match="empty"):
        parse_line_list("anything", [])


@settings(max_examples=120, deadline=None)
@given(st.text(max_size=400))
def test_line_list_subset_guarantee(raw):
    result = parse_line_list(raw, VOCAB_KEYS, max_items=20)
    assert set(result) <= set(VOCAB_KEYS)
    assert len(result) <= 20
    assert len(set(result)) == len(result)


def test_score_list_parses_clamps_and_drops():
    raw = (
        "Not distracting: 0.7\n"
        "Easy to ignore: 1.4\n"
        "convenient: -2\n"
        "felt watched: abc\n"
        "unknown thing: 0.5\n"
        "no separator line\n"
        "Not distracting: 0.1\n"
    )
    scores = parse_score_list(raw, VOCAB_KEYS)
    assert scores == {"not distracting": 0.7, "easy to ignore": 1.0, "convenient": 0.0}


# ---------------------------------------------------------------------------
# Run log
# ---------------------------------------------------------------------------


def test_run_log_roundtrip(tmp_path):
    log = RunLog(tmp_path / "log" / "completions.jsonl")
    record = gateway.CompletionRecord("d1", "resp", "mock", "2026-01-01T00:00:00Z")
    log.append(record)
    assert log.records() == [record]
