import json
import random

import pytest
from hypothesis import given, strategies as st

from dialunify.knowledge import NO_KNOWLEDGE, PairsKnowledge, SchemaKnowledge, TextKnowledge
from dialunify.schema import (
    InvalidRecord,
    RecordFormatError,
    Split,
    TaskToken,
    TemplateConfig,
    Turn,
    UnifiedRecord,
    delinearize,
    dumps_record,
    linearize_dialogue,
    linearize_input,
    loads_record,
    validate_record,
)
from dialunify.text import normalize_text

from factories import random_record


def rec(task="chat", dialogue=None, knowledge=None, target="me too!", definition="Chat with the user.", **kw):
    if dialogue is None:
        dialogue = (Turn("user", "I like tea"), Turn("system", "nice"))
    if knowledge is None:
        knowledge = TextKnowledge("persona: likes tea")
    return UnifiedRecord(task, kw.pop("dataset", "pc"), kw.pop("split", "train"), dialogue, knowledge, definition, target, **kw)


records = st.randoms(use_true_random=False).map(random_record)


def test_minimal_chat_is_ok():
    assert validate_record(rec()).ok


def test_empty_target():
    assert "EmptyTarget" in validate_record(rec(target="")).codes()


def test_sum_with_schema_is_illegal():
    r = rec("sum", knowledge=SchemaKnowledge((("t", ("a",)),)), target="summary")
    v = validate_record(r)
    assert not v.ok
    assert "IllegalCombination" in v.codes()


def test_nlg_with_history_is_only_a_warning():
    r = rec("nlg", knowledge=PairsKnowledge((("inform.food", "thai"),)), target="They serve Thai food.")
    v = validate_record(r)
    assert v.ok
    assert [w.code for w in v.warnings] == ["IllegalCombination"]


def test_unknown_task_and_split():
    v = validate_record(rec("[weather]", split="holdout"))
    assert {"UnknownTask", "InvalidSplit"} <= set(v.codes())


def test_multi_sentence_definition():
    assert "MultiSentenceDefinition" in validate_record(rec(definition="Chat. Be nice.")).codes()
    assert validate_record(rec(definition="Answer e.g.the question about 3.5 stars.")).ok


def test_supervised_target_cannot_be_dialogue():
    turns = (Turn("user", "hi"), Turn("system", "hello"))
    v = validate_record(rec(dialogue=turns, target=linearize_dialogue(turns)))
    assert "TargetIsDialogue" in v.codes()


def test_task_token_rendering():
    assert len(TaskToken) == 17
    assert TaskToken.TXT2SQL.marker == "[txt2sql]"
    assert TaskToken.parse("[dst]") is TaskToken.DST
    assert not TaskToken.REO.supervised and TaskToken.SUM.supervised


def test_dst_linearization_example():
    r = UnifiedRecord(
        "dst",
        "mwoz",
        "train",
        (Turn("user", "cheap place please"), Turn("system", "which area?")),
        PairsKnowledge((("restaurant.area", "?"),)),
        "Track the dialogue state.",
        "restaurant.price = cheap",
    )
    assert linearize_input(r) == (
        "[dst] Track the dialogue state. [know] restaurant.area = ? "
        "[dial] user: cheap place please [sep] system: which area?"
    )


def test_sum_has_no_know_segment():
    r = rec("sum", knowledge=NO_KNOWLEDGE, target="they chat about tea")
    assert "[know]" not in linearize_input(r)


def test_nlg_empty_history_has_no_dial_segment():
    r = rec("nlg", dialogue=(), knowledge=PairsKnowledge((("inform.food", "thai"),)), target="Thai food it is.")
    out = linearize_input(r)
    assert "[dial]" not in out
    assert out.startswith("[nlg] ")


def test_template_options():
    r = rec()
    assert "Chat with the user." not in linearize_input(r, TemplateConfig(include_definition=False))
    assert linearize_input(r, TemplateConfig(max_turns=1)).endswith("[dial] system: nice")


def test_linearize_rejects_invalid():
    with pytest.raises(InvalidRecord):
        linearize_input(rec(target=""))


def test_markers_are_stripped_from_text():
    t = Turn("user", "a [sep] b [se[sep]p] c\nd")
    assert t.text == "a b [se p] c d"
    assert normalize_text("[kn[know]ow]") == "[kn ow]"


def test_other_speaker_rendered_by_name():
    assert Turn("Ross", "hey").render() == "Ross: hey"


def test_json_field_order_and_roundtrip():
    line = dumps_record(rec(meta={"id": 3}))
    assert list(json.loads(line)) == [
        "task", "dataset", "split", "dialogue", "knowledge", "task_definition", "target", "meta",
    ]
    assert loads_record(line) == rec(meta={"id": 3})


def test_loads_rejects_missing_fields():
    with pytest.raises(RecordFormatError):
        loads_record('{"task": "chat"}')
    with pytest.raises(RecordFormatError):
        loads_record("not json")


@given(records)
def test_generated_records_validate(r):
    assert validate_record(r).ok


@given(records)
def test_delinearize_inverts_linearize(r):
    parts = delinearize(linearize_input(r))
    assert parts.task == r.task.value
    assert parts.definition == r.task_definition
    assert len(parts.turns) == len(r.dialogue)
    assert parts.turns == tuple((t.speaker, t.text) for t in r.dialogue)


@given(records)
def test_supervised_input_never_equals_target(r):
    if r.task.supervised:
        assert linearize_input(r) != r.target


@given(records)
def test_json_roundtrip(r):
    assert loads_record(dumps_record(r)) == r
    assert dumps_record(loads_record(dumps_record(r))) == dumps_record(r)


@given(records, records)
def test_linearize_injective(a, b):
    key = lambda r: (r.task, r.task_definition, r.knowledge, r.dialogue)
    if key(a) != key(b) and a.knowledge.kind == b.knowledge.kind:
        assert linearize_input(a) != linearize_input(b)


@given(st.text(max_size=40))
def test_normalization_is_idempotent_and_marker_free(s):
    n = normalize_text(s)
    assert normalize_text(n) == n
    assert "\n" not in n
    for m in ("[know]", "[dial]", "[sep]"):
        assert m not in n
