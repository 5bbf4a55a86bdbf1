import json
from pathlib import Path

import pytest

from conceptcloud import concepts, gateway, mapping
from conceptcloud.corpus import load_corpus

REPO = Path(__file__).resolve().parents[1]
FIXTURES = REPO / "fixtures"

MODEL_ID = "llama-3.3-70b-instruct"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def truth() -> dict:
    return json.loads((FIXTURES / "truth.json").read_text(encoding="utf-8"))


@pytest.fixture(scope="session")
def bundled_corpus():
    return load_corpus(FIXTURES / "corpus", "directory")


@pytest.fixture()
def write_corpus(tmp_path):
    """Factory writing a directory-format corpus from (participant, condition, text)."""

    def _write(entries, name="corpus"):
        root = tmp_path / name
        root.mkdir(exist_ok=True)
        for participant, condition, text in entries:
            (root / f"{participant}__{condition}.txt").write_text(text, encoding="utf-8")
        return root

    return _write


def make_vocab(condition, phrases, pinned=()):
    return concepts.ConceptVocabulary(
        condition,
        tuple(
            concepts.ConceptPhrase(p, pinned=(p in pinned)) for p in phrases
        ),
    )


def script_mapping(backend, transcripts, vocab, replies, template=None):
    """Register one mapping (or scoring) response per transcript id."""
    template = template or gateway.builtin_template("mapping")
    for t in transcripts:
        variables = mapping.build_mapping_variables(t, vocab)
        backend.script(
            gateway.CompletionRequest(template, variables, MODEL_ID), replies[t.id]
        )
    return backend


def script_elicit(backend, corpus, condition, n, response, template=None):
    template = template or gateway.builtin_template("elicit")
    variables = concepts.build_elicitation_variables(corpus, condition, n)
    backend.script(gateway.CompletionRequest(template, variables, MODEL_ID), response)
    return backend


# ---------------------------------------------------------------------------
# A small self-contained project (corpus + recorded responses + config) for
# CLI and API tests: 2 conditions x 3 participants, 3 concepts each.
# ---------------------------------------------------------------------------

MINI_PLAN = {
    "insta": {
        "vocabulary": ["Small and compact", "Not distracting", "Felt watched"],
        "present": {
            "p01": ["Small and compact", "Not distracting"],
            "p02": ["Not distracting"],
            "p03": ["Felt watched"],
        },
        "scores": {
            "p01": "Small and compact: 0.9\nNot distracting: 0.7\nFelt watched: 0.1",
            "p02": "Not distracting: 0.85",
            "p03": "Felt watched: 0.95\nSmall and compact: 0.4",
        },
    },
    "logitech": {
        "vocabulary": ["Bulky on the tripod", "Not distracting", "Crisp picture"],
        "present": {
            "p01": ["Bulky on the tripod"],
            "p02": ["Crisp picture", "Not distracting"],
            "p03": ["Bulky on the tripod"],
        },
        "scores": {
            "p01": "Bulky on the tripod: 1.0",
            "p02": "Crisp picture: 0.6\nNot distracting: 0.55",
            "p03": "Bulky on the tripod: 0.75",
        },
    },
}


class MiniProject:
    def __init__(self, root, config_path, corpus, responses_path):
        self.root = root
        self.config_path = config_path
        self.corpus = corpus
        self.responses_path = responses_path
        self.runs = root / "runs"

    def table_file(self, run_id, condition):
        return self.runs / run_id / "tables" / f"{condition}.csv"


@pytest.fixture()
def mini_project(tmp_path) -> MiniProject:
    corpus_dir = tmp_path / "corpus"
    corpus_dir.mkdir()
    for condition, plan in MINI_PLAN.items():
        for participant, phrases in plan["present"].items():
            mentions = " ".join(f"Um, like, {p.lower()}." for p in phrases) or "Nothing stood out."
            (corpus_dir / f"{participant}__{condition}.txt").write_text(
                f"Interviewer: thoughts on {condition}?\n{mentions}\n", encoding="utf-8"
            )
    corpus = load_corpus(corpus_dir, "directory")

    responses = tmp_path / "responses.jsonl"
    elicit_template = gateway.builtin_template("elicit")
    mapping_template = gateway.builtin_template("mapping")
    scoring_template = gateway.builtin_template("scoring")
    decoding = gateway.Decoding()

    def record(template, variables, raw):
        request = gateway.CompletionRequest(template, variables, MODEL_ID, decoding)
        gateway.append_fixture(responses, gateway.digest_for(request), raw)

    from conceptcloud.corpus import transcripts_for

    for condition, plan in MINI_PLAN.items():
        phrases = plan["vocabulary"]
        for n in (3, 2):  # n=2 variant lets tests re-elicit into a new version
            record(
                elicit_template,
                concepts.build_elicitation_variables(corpus, condition, n),
                f"### {condition}\n" + "\n".join(f"- {p}" for p in phrases[:n]),
            )
        vocab = concepts.ConceptVocabulary(
            condition, tuple(concepts.ConceptPhrase(p) for p in phrases)
        )
        for transcript in transcripts_for(corpus, condition):
            variables = mapping.build_mapping_variables(transcript, vocab)
            record(mapping_template, variables, "\n".join(plan["present"][transcript.participant_id]))
            record(scoring_template, variables, plan["scores"][transcript.participant_id])

    config_path = tmp_path / "config.json"
    config_path.write_text(
        json.dumps(
            {
                "corpus_root": str(corpus_dir),
                "corpus_format": "directory",
                "backend": "fixture",
                "fixtures_path": str(responses),
                "output_dir": str(tmp_path / "runs"),
                "n_topics": 3,
            }
        ),
        encoding="utf-8",
    )
    return MiniProject(tmp_path, config_path, corpus, responses)


def run_cli(*args) -> int:
    from conceptcloud import cli

    return cli.main([str(a) for a in args])
