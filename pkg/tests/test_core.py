import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from goalsat.core import (
    PhaseId,
    StepId,
    Vocabulary,
    code_sort_key,
    find_json_object,
    first_index,
    last_index,
    resolve_phase,
    sorted_codes,
)
from goalsat.errors import AmbiguousName, VocabularyError

codes = st.sampled_from(["S22", "S23", "S24", "S25"])


def test_first_index():
    assert first_index(["S23", "S24", "S23"], "S23") == 0
    assert first_index(["S23", "S24", "S23"], "S25") is None
    assert first_index([], "S23") is None


def test_last_index():
    assert last_index(["S23", "S24", "S23"], "S23") == 2
    assert last_index(["S24"], "S24") == 0
    assert last_index([], "S24") is None


@given(st.lists(codes, max_size=12), codes)
def test_first_le_last(seq, code):
    f, l = first_index(seq, code), last_index(seq, code)
    assert (f is None) == (l is None) == (code not in seq)
    if f is not None:
        assert f <= l and seq[f] == seq[l] == code


def test_numeric_suffix_ordering():
    assert sorted_codes(["S10", "S2", "S1", "P3"]) == ["P3", "S1", "S2", "S10"]
    assert code_sort_key("S9") < code_sort_key("S10")


def test_step_identity_ignores_label():
    assert StepId("S23", "jejunal clamping") == StepId("S23")
    assert hash(StepId("S23", "x")) == hash(StepId("S23", "y"))
    with pytest.raises(VocabularyError):
        StepId("")


def test_resolve_phase_examples(p5rs):
    vocab = p5rs.vocabulary
    assert resolve_phase(vocab, "P5").code == "P5"
    assert resolve_phase(vocab, "nonexistent phase") is None
    # round-trip every name in the alias table, with case and padding noise
    p5 = vocab.phase("P5")
    assert "anastomosis test" in {n.lower() for n in p5.names()}
    for name in p5.names():
        assert resolve_phase(vocab, f"  {name.upper()} ").code == "P5"
    assert resolve_phase(vocab, "Anastomosis Test").code == "P5"


def test_resolve_phase_is_stable(demo):
    first = [resolve_phase(demo.vocabulary, n) for n in ("p5", "Leak Test", "JJ anastomosis", "nope")]
    again = [resolve_phase(demo.vocabulary, n) for n in ("p5", "Leak Test", "JJ anastomosis", "nope")]
    assert first == again


def test_ambiguous_phase_name():
    # two phases whose codes collide with each other's labels
    vocab = Vocabulary(steps=(), phases=(PhaseId("P1", "P2"), PhaseId("P2")))
    with pytest.raises(AmbiguousName):
        resolve_phase(vocab, "p2")


def test_duplicate_codes_and_aliases_rejected():
    with pytest.raises(VocabularyError):
        Vocabulary(steps=(StepId("S1"), StepId("S1")), phases=())
    with pytest.raises(VocabularyError):
        Vocabulary(steps=(), phases=(PhaseId("P1"), PhaseId("P1")))
    with pytest.raises(VocabularyError):
        Vocabulary(steps=(), phases=(PhaseId("P1", aliases=("Leak",)), PhaseId("P2", aliases=("leak",))))


def test_vocabulary_json_round_trip(demo):
    vocab = demo.vocabulary
    text = vocab.to_json()
    data = json.loads(text)
    assert set(data) == {"steps", "phases"}
    assert {"code", "label"} <= set(data["steps"][0])
    assert {"code", "label", "aliases"} <= set(data["phases"][0])
    assert Vocabulary.from_json(text) == vocab


def test_shipped_vocabulary_file_matches_demo(demo):
    from goalsat.rulespec import DATA_DIR

    shipped = Vocabulary.from_json((DATA_DIR / "multibypass_vocab.json").read_text())
    assert shipped == demo.vocabulary
    assert len(shipped.steps) == 45 and len(shipped.phases) == 11


def test_resolve_step(p5rs):
    vocab = p5rs.vocabulary
    assert vocab.resolve_step("Jejunal Clamping") == "S23"
    assert vocab.resolve_step("s23") == "S23"
    assert vocab.resolve_step("laser ablation") is None


def test_find_json_object():
    assert find_json_object('sure! {"valid": true} done') == {"valid": True}
    assert find_json_object("{broken {\"a\": 1}") == {"a": 1}
    assert find_json_object("no json here") is None
