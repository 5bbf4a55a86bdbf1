#!/usr/bin/env python3
"""Regenerate the bundled synthetic corpus and recorded backend responses.

Everything under fixtures/ is derived deterministically from one seed:
31 participants x 5 device conditions, a planted 20-concept vocabulary per
condition, per-transcript concept presence, and the fixture file whose
digests match the requests the pipeline will issue over this corpus with
the default templates and decoding. Re-running this script reproduces the
committed files byte for byte.

Usage: python3 scripts/make_fixtures.py [--out fixtures]
"""

from __future__ import annotations

import argparse
import json
import random
import shutil
import sys
from pathlib import Path

from conceptcloud import concepts, gateway, mapping
from conceptcloud.config import RunConfig
from conceptcloud.corpus import load_corpus, transcripts_for
from conceptcloud.phrases import normalize_phrase

SEED = 20250809
CONDITIONS = ["dual_phone", "insta", "logitech", "obsbot", "solo_phone"]
PARTICIPANTS = [f"p{i:02d}" for i in range(1, 32)]
N_TOPICS = 20

PHRASE_POOL = [
    "Small and compact",
    "Not distracting",
    "Easy to ignore",
    "Less noticeable",
    "Not too visible",
    "Fades into the background",
    "Simple and straightforward",
    "Convenient",
    "Reminds me of a Polaroid",
    "Compact and spacious",
    "Felt watched",
    "Image quality",
    "Easy to set up",
    "Blends into the desk",
    "Bulky on the tripod",
    "Crisp picture",
    "Glare from the lens",
    "Too many cables",
    "Quiet and unobtrusive",
    "Professional looking",
    "Made me self-conscious",
    "In the way",
    "Kind of distracting",
    "Hard to forget about",
    "Natural conversation",
    "Felt like a normal chat",
    "Awkward eye contact",
    "Angle felt strange",
    "Good sound pickup",
    "Sleek design",
    "Takes up desk space",
    "Wobbly mount",
    "Low profile",
    "Caught my eye constantly",
    "Easy to overlook",
    "Clinical and formal",
    "Friendly setup",
    "Felt high tech",
    "Old school charm",
    "Warm lighting",
]

SENTENCES = [
    "Um, honestly, the {device} setup felt {phrase} to me.",
    "I mean, it was like, {phrase}, you know?",
    "Yeah, {phrase} is how I would put it, like, most of the session.",
    "It was kind of, um, {phrase} once we got going.",
    "Like, the thing that stuck with me was {phrase}.",
]

FILLERS = [
    "Like, I did not really think about it after a while.",
    "You know, we just kept talking and, um, it went fine.",
    "Yeah, like, nothing else really jumped out at me.",
]


def build_texts(rng: random.Random) -> tuple[dict, dict]:
    """Plant per-condition vocabularies and per-transcript presence."""
    plan: dict[str, dict] = {}
    texts: dict[tuple[str, str], str] = {}
    for condition in CONDITIONS:
        vocab = rng.sample(PHRASE_POOL, N_TOPICS)
        rates = {phrase: rng.uniform(0.08, 0.85) for phrase in vocab}
        present: dict[str, list[str]] = {}
        for participant in PARTICIPANTS:
            present[participant] = [p for p in vocab if rng.random() < rates[p]]
        # Every concept must reach at least one participant so each cloud
        # renders the full vocabulary.
        for phrase in vocab:
            if not any(phrase in chosen for chosen in present.values()):
                lucky = rng.choice(PARTICIPANTS)
                present[lucky].append(phrase)
                present[lucky].sort(key=vocab.index)
        plan[condition] = {"vocabulary": vocab, "present": present}
        for participant in PARTICIPANTS:
            lines = [f"Interviewer: How did the {condition} setup feel today?"]
            for i, phrase in enumerate(present[participant]):
                template = SENTENCES[(i + len(participant)) % len(SENTENCES)]
                lines.append(template.format(device=condition, phrase=phrase.lower()))
            lines.append(FILLERS[len(present[participant]) % len(FILLERS)])
            texts[(participant, condition)] = "\n".join(lines) + "\n"
    return plan, texts


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="fixtures", type=Path)
    args = parser.parse_args(argv)

    keys = [normalize_phrase(p) for p in PHRASE_POOL]
    assert len(set(keys)) == len(keys), "phrase pool keys must be distinct"
    assert all(len(p.split()) <= 8 for p in PHRASE_POOL), "phrases must stay short"

    rng = random.Random(SEED)
    plan, texts = build_texts(rng)

    out: Path = args.out
    corpus_dir = out / "corpus"
    if corpus_dir.exists():
        shutil.rmtree(corpus_dir)
    corpus_dir.mkdir(parents=True)
    for (participant, condition), text in sorted(texts.items()):
        (corpus_dir / f"{participant}__{condition}.txt").write_text(text, encoding="utf-8")

    # Re-load through the production loader so prompt text matches exactly
    # what the pipeline will submit.
    corpus = load_corpus(corpus_dir, "directory")
    config = RunConfig(corpus_root=str(corpus_dir))
    decoding = gateway.Decoding(
        temperature=config.temperature, max_output_tokens=config.max_output_tokens
    )
    elicit_template = gateway.builtin_template("elicit")
    mapping_template = gateway.builtin_template("mapping")

    responses_path = out / "responses.jsonl"
    if responses_path.exists():
        responses_path.unlink()

    n_records = 0
    for condition in CONDITIONS:
        vocab_phrases = plan[condition]["vocabulary"]
        variables = concepts.build_elicitation_variables(corpus, condition, N_TOPICS)
        request = gateway.CompletionRequest(
            elicit_template, variables, config.model_id, decoding
        )
        body = "\n".join(f"- {p}" for p in vocab_phrases)
        raw = (
            "Here are the distinctive descriptors:\n\n"
            f"### {condition}\n{body}\n\n"
            "These capture the dominant reactions across participants.\n"
        )
        gateway.append_fixture(responses_path, gateway.digest_for(request), raw)
        n_records += 1

        vocab = concepts.ConceptVocabulary(
            condition, tuple(concepts.ConceptPhrase(p) for p in vocab_phrases)
        )
        for i, transcript in enumerate(transcripts_for(corpus, condition)):
            present = plan[condition]["present"][transcript.participant_id]
            reply_lines = list(present)
            if i % 7 == 3:
                reply_lines.append("(no other terms apply)")
            variables = mapping.build_mapping_variables(transcript, vocab)
            request = gateway.CompletionRequest(
                mapping_template, variables, config.model_id, decoding
            )
            gateway.append_fixture(
                responses_path, gateway.digest_for(request), "\n".join(reply_lines)
            )
            n_records += 1

    truth = {
        "seed": SEED,
        "conditions": {
            condition: {
                "vocabulary": plan[condition]["vocabulary"],
                "present": {
                    f"{participant}__{condition}": [
                        normalize_phrase(p) for p in plan[condition]["present"][participant]
                    ]
                    for participant in PARTICIPANTS
                },
                "breadth": {
                    normalize_phrase(phrase): sum(
                        phrase in plan[condition]["present"][participant]
                        for participant in PARTICIPANTS
                    )
                    for phrase in plan[condition]["vocabulary"]
                },
            }
            for condition in CONDITIONS
        },
    }
    (out / "truth.json").write_text(
        json.dumps(truth, indent=2, ensure_ascii=False, sort_keys=True) + "\n", encoding="utf-8"
    )

    (out / "run_config.json").write_text(
        json.dumps(
            {
                "corpus_root": "fixtures/corpus",
                "corpus_format": "directory",
                "backend": "fixture",
                "fixtures_path": "fixtures/responses.jsonl",
                "output_dir": "runs",
            },
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )

    print(f"wrote {len(texts)} transcripts, {n_records} recorded responses -> {out}/")
    return 0


if __name__ == "__main__":
    sys.exit(main())
