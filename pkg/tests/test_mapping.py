import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conceptcloud import mapping, salience
from conceptcloud.corpus import Corpus, Transcript, build_corpus, load_corpus
from conceptcloud.errors import (
    SchemaError,
    StaleTableError,
    ValidationError,
)
from conceptcloud.gateway import MockBackend, builtin_template
from conceptcloud.mapping import (
    AssignmentCell,
    AssignmentTable,
    apply_correction,
    check_staleness,
    load_table,
    map_condition,
    map_transcript,
    replay_journal,
    save_table,
)

from conftest import make_vocab, script_mapping

MAP_TEMPLATE = builtin_template("mapping")
SCORE_TEMPLATE = builtin_template("scoring")

VOCAB = make_vocab(
    "insta",
    ["Small and compact", "Not distracting", "Easy to ignore", "Convenient"],
)


def one_transcript(text="it was fine, honestly", tid="p01__insta"):
    participant, condition = tid.split("__")
    return Transcript(id=tid, participant_id=participant, condition_id=condition, text=text)


# ---------------------------------------------------------------------------
# map_transcript
# ---------------------------------------------------------------------------


def test_binary_row_marks_named_concepts():
    t = one_transcript()
    backend = script_mapping(MockBackend(), [t], VOCAB, {t.id: "Not distracting\nConvenient"})
    row = map_transcript(t, VOCAB, MAP_TEMPLATE, backend)
    assert row["not distracting"].value == 1
    assert row["convenient"].value == 1
    assert row["small and compact"].value == 0
    assert row["easy to ignore"].value == 0
    assert all(cell.provenance == "model" for cell in row.values())


def test_binary_empty_response_all_zeros():
    t = one_transcript()
    backend = script_mapping(MockBackend(), [t], VOCAB, {t.id: ""})
    row = map_transcript(t, VOCAB, MAP_TEMPLATE, backend)
    assert all(cell.value == 0 for cell in row.values())


def _soft_row(tau):
    t = one_transcript()
    reply = (
        "Small and compact: 0.7\n"
        "Not distracting: 0.4\n"
        "Easy to ignore: 0.0\n"
        "Convenient: 1.0"
    )
    backend = script_mapping(MockBackend(), [t], VOCAB, {t.id: reply}, template=SCORE_TEMPLATE)
    return map_transcript(t, VOCAB, SCORE_TEMPLATE, backend, mode="soft", tau=tau)


def test_soft_mode_binarizes_at_tau():
    row = _soft_row(tau=0.5)
    assert row["small and compact"].value == 1
    assert row["not distracting"].value == 0
    row_strict = _soft_row(tau=0.8)
    assert row_strict["small and compact"].value == 0
    assert row_strict["not distracting"].value == 0
    assert row_strict["convenient"].value == 1


def test_soft_cells_satisfy_threshold_invariant():
    for tau in (0.3, 0.5, 0.9):
        for cell in _soft_row(tau).values():
            assert cell.value == (1 if cell.soft_score >= tau else 0)


def test_unscored_concept_counts_as_zero():
    t = one_transcript()
    backend = script_mapping(
        MockBackend(), [t], VOCAB, {t.id: "Convenient: 0.9"}, template=SCORE_TEMPLATE
    )
    row = map_transcript(t, VOCAB, SCORE_TEMPLATE, backend, mode="soft", tau=0.5)
    assert row["small and compact"].soft_score == 0.0
    assert row["small and compact"].value == 0


def test_tau_and_mode_validation():
    t = one_transcript()
    with pytest.raises(ValidationError):
        map_transcript(t, VOCAB, MAP_TEMPLATE, MockBackend(), tau=0.0)
    with pytest.raises(ValidationError):
        map_transcript(t, VOCAB, MAP_TEMPLATE, MockBackend(), tau=1.5)
    with pytest.raises(ValidationError):
        map_transcript(t, VOCAB, MAP_TEMPLATE, MockBackend(), mode="fuzzy")


@settings(max_examples=60, deadline=None)
@given(
    st.dictionaries(
        st.sampled_from(VOCAB.keys()), st.floats(0, 1), min_size=4, max_size=4
    ),
    st.floats(0.05, 1.0),
    st.floats(0.05, 1.0),
)
def test_threshold_monotonicity(scores, tau1, tau2):
    lo, hi = sorted((tau1, tau2))
    row_lo = {k: (1 if s >= lo else 0) for k, s in scores.items()}
    row_hi = {k: (1 if s >= hi else 0) for k, s in scores.items()}
    assert all(row_hi[k] <= row_lo[k] for k in scores)


def test_length_invariance_same_reply_same_row():
    base = one_transcript(text="short answer")
    verbose = one_transcript(text="short answer " * 10, tid="p02__insta")
    backend = script_mapping(
        MockBackend(), [base, verbose], VOCAB,
        {base.id: "Convenient\nConvenient\nEasy to ignore",
         verbose.id: "Convenient\nEasy to ignore"},
    )
    row_a = map_transcript(base, VOCAB, MAP_TEMPLATE, backend)
    row_b = map_transcript(verbose, VOCAB, MAP_TEMPLATE, backend)
    assert row_a == row_b  # repeated mention cannot inflate the row


# ---------------------------------------------------------------------------
# map_condition
# ---------------------------------------------------------------------------


def three_transcripts():
    return [
        one_transcript("first", "p01__insta"),
        one_transcript("second", "p02__insta"),
        one_transcript("third", "p03__insta"),
    ]


def replies():
    return {
        "p01__insta": "Convenient",
        "p02__insta": "Convenient\nNot distracting",
        "p03__insta": "",
    }


def test_map_condition_rows_ordered_by_id(tmp_path):
    transcripts = three_transcripts()
    corpus = build_corpus(transcripts)
    backend = script_mapping(MockBackend(), transcripts, VOCAB, replies())
    table = map_condition(corpus, "insta", VOCAB, MAP_TEMPLATE, backend, run_id="r1")
    assert list(table.rows) == ["p01__insta", "p02__insta", "p03__insta"]
    assert table.vocabulary_version == VOCAB.version
    assert table.tau == 0.5 and table.run_id == "r1"


def test_map_condition_order_invariant_bytes(tmp_path):
    transcripts = three_transcripts()
    backend = script_mapping(MockBackend(), transcripts, VOCAB, replies())
    shuffled = list(transcripts)
    random.Random(3).shuffle(shuffled)
    # bypass the sorting factory to simulate arbitrary submission order
    corpus_a = Corpus(tuple(transcripts), frozenset({"insta"}))
    corpus_b = Corpus(tuple(shuffled), frozenset({"insta"}))
    path_a, path_b = tmp_path / "a.csv", tmp_path / "b.csv"
    save_table(map_condition(corpus_a, "insta", VOCAB, MAP_TEMPLATE, backend, run_id="x"), path_a)
    save_table(map_condition(corpus_b, "insta", VOCAB, MAP_TEMPLATE, backend, run_id="x"), path_b)
    assert path_a.read_bytes() == path_b.read_bytes()
    assert mapping.sidecar_path(path_a).read_bytes() == mapping.sidecar_path(path_b).read_bytes()


def test_failed_transcript_marked_incomplete_never_zeroed():
    transcripts = three_transcripts()
    corpus = build_corpus(transcripts)
    partial = {tid: text for tid, text in replies().items() if tid != "p02__insta"}
    backend = script_mapping(MockBackend(), [transcripts[0], transcripts[2]], VOCAB, partial)
    table = map_condition(corpus, "insta", VOCAB, MAP_TEMPLATE, backend)
    assert table.incomplete == ("p02__insta",)
    assert "p02__insta" not in table.rows
    with pytest.raises(Exception, match="incomplete"):
        salience.compute_breadth(table)
    forced = salience.compute_breadth(table, force=True)
    assert forced.forced and forced.m_total == 2


def test_map_condition_vocab_condition_mismatch():
    corpus = build_corpus(three_transcripts())
    other = make_vocab("logitech", ["Convenient"])
    with pytest.raises(ValidationError, match="belongs to"):
        map_condition(corpus, "insta", other, MAP_TEMPLATE, MockBackend())


def test_single_cell_table():
    t = one_transcript()
    vocab = make_vocab("insta", ["Convenient"])
    backend = script_mapping(MockBackend(), [t], vocab, {t.id: "convenient"})
    table = map_condition(build_corpus([t]), "insta", vocab, MAP_TEMPLATE, backend)
    assert table.rows[t.id]["convenient"].value == 1


# ---------------------------------------------------------------------------
# Corrections and journal
# ---------------------------------------------------------------------------


def built_table():
    transcripts = three_transcripts()
    corpus = build_corpus(transcripts)
    backend = script_mapping(MockBackend(), transcripts, VOCAB, replies())
    return map_condition(corpus, "insta", VOCAB, MAP_TEMPLATE, backend, run_id="r1")


def test_correction_flips_breadth_and_journals():
    table = built_table()
    before = salience.compute_breadth(table).counts["easy to ignore"]
    fixed = apply_correction(table, "p01__insta", "easy to ignore", 1, note="see line 42")
    after = salience.compute_breadth(fixed).counts["easy to ignore"]
    assert after == before + 1
    cell = fixed.rows["p01__insta"]["easy to ignore"]
    assert cell.provenance == "human" and cell.note == "see line 42"
    assert fixed.journal[-1].old_value == 0 and fixed.journal[-1].new_value == 1
    # untouched cells unchanged
    assert fixed.rows["p02__insta"] == table.rows["p02__insta"]


def test_correction_same_value_still_flips_provenance():
    table = built_table()
    fixed = apply_correction(table, "p01__insta", "convenient", 1)
    assert fixed.rows["p01__insta"]["convenient"].provenance == "human"
    assert len(fixed.journal) == 1


def test_correction_unknown_targets():
    table = built_table()
    with pytest.raises(ValidationError, match="unknown concept"):
        apply_correction(table, "p01__insta", "mystery", 1)
    with pytest.raises(ValidationError, match="unknown transcript"):
        apply_correction(table, "p99__insta", "convenient", 1)


def test_correction_on_stale_table_refused():
    table = built_table()
    grown = make_vocab("insta", [p.text for p in VOCAB] + ["Image quality"])
    stale = check_staleness(table, grown)
    assert stale.stale
    with pytest.raises(StaleTableError, match="re-run mapping"):
        apply_correction(stale, "p01__insta", "convenient", 1)


def test_journal_replay_reproduces_table():
    original = built_table()
    corrected = original
    rng = random.Random(11)
    for _ in range(6):
        tid = rng.choice(list(corrected.rows))
        key = rng.choice(list(VOCAB.keys()))
        corrected = apply_correction(corrected, tid, key, rng.randint(0, 1), note="sweep")
    replayed = replay_journal(original, corrected.journal)
    assert replayed == corrected


def test_human_cells_drop_soft_scores():
    t = one_transcript()
    reply = "Small and compact: 0.7\nNot distracting: 0.2\nEasy to ignore: 0\nConvenient: 1"
    backend = script_mapping(MockBackend(), [t], VOCAB, {t.id: reply}, template=SCORE_TEMPLATE)
    table = map_condition(
        build_corpus([t]), "insta", VOCAB, SCORE_TEMPLATE, backend, mode="soft"
    )
    fixed = apply_correction(table, t.id, "small and compact", 0)
    cell = fixed.rows[t.id]["small and compact"]
    assert cell.soft_score is None and cell.provenance == "human"


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def test_save_load_identity_including_everything(tmp_path):
    table = apply_correction(built_table(), "p03__insta", "convenient", 1, note="spot check")
    path = save_table(table, tmp_path / "insta.csv")
    loaded = load_table(path)
    assert loaded == table


def test_save_load_identity_soft_scores(tmp_path):
    t = one_transcript()
    reply = "Small and compact: 0.7\nNot distracting: 0.25\nEasy to ignore: 0\nConvenient: 1"
    backend = script_mapping(MockBackend(), [t], VOCAB, {t.id: reply}, template=SCORE_TEMPLATE)
    table = map_condition(
        build_corpus([t]), "insta", VOCAB, SCORE_TEMPLATE, backend, mode="soft", tau=0.8
    )
    loaded = load_table(save_table(table, tmp_path / "t.csv"))
    assert loaded == table
    assert loaded.tau == 0.8
    assert loaded.rows[t.id]["not distracting"].soft_score == 0.25


def test_empty_row_set_roundtrip(tmp_path):
    table = AssignmentTable(
        condition_id="insta",
        vocabulary_version=VOCAB.version,
        concept_keys=tuple(VOCAB.keys()),
        rows={},
        tau=0.5,
        run_id="r0",
    )
    loaded = load_table(save_table(table, tmp_path / "empty.csv"))
    assert loaded == table


def test_cell_syntax_in_csv(tmp_path):
    table = apply_correction(built_table(), "p01__insta", "convenient", 0, note="n")
    path = save_table(table, tmp_path / "t.csv")
    text = path.read_text()
    assert "0*" in text
    header = text.splitlines()[0]
    assert header.startswith("transcript_id,")
    assert header.split(",")[1:] == list(VOCAB.keys())


def test_load_rejects_unknown_column(tmp_path):
    path = save_table(built_table(), tmp_path / "t.csv")
    lines = path.read_text().splitlines()
    lines[0] += ",sneaky extra"
    lines[1:] = [line + ",0" for line in lines[1:]]
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(SchemaError, match="sneaky extra"):
        load_table(path)


def test_load_rejects_reordered_columns(tmp_path):
    path = save_table(built_table(), tmp_path / "t.csv")
    meta = json.loads(mapping.sidecar_path(path).read_text())
    meta["concept_keys"] = list(reversed(meta["concept_keys"]))
    mapping.sidecar_path(path).write_text(json.dumps(meta))
    with pytest.raises(SchemaError, match="does not match vocabulary order"):
        load_table(path)


def test_load_rejects_bad_cell_token(tmp_path):
    path = save_table(built_table(), tmp_path / "t.csv")
    text = path.read_text().replace("\n1,", "\n2,", 1)
    lines = text.splitlines()
    lines[1] = lines[1].replace(",1", ",2", 1)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(SchemaError, match="invalid cell"):
        load_table(path)


def test_load_rejects_newer_schema(tmp_path):
    path = save_table(built_table(), tmp_path / "t.csv")
    meta_path = mapping.sidecar_path(path)
    meta = json.loads(meta_path.read_text())
    meta["schema_version"] = 99
    meta_path.write_text(json.dumps(meta))
    with pytest.raises(SchemaError, match="cannot migrate"):
        load_table(path)


def test_load_missing_sidecar(tmp_path):
    path = save_table(built_table(), tmp_path / "t.csv")
    mapping.sidecar_path(path).unlink()
    with pytest.raises(SchemaError, match="sidecar"):
        load_table(path)


def test_cell_invariants():
    with pytest.raises(ValidationError):
        AssignmentCell(value=2)
    with pytest.raises(ValidationError):
        AssignmentCell(value=1, soft_score=1.2)
    with pytest.raises(ValidationError):
        AssignmentCell(value=1, provenance="human", soft_score=0.5)
