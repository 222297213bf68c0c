import pytest
from hypothesis import given, strategies as st

from dialunify.knowledge import (
    NO_KNOWLEDGE,
    KnowledgeFormatError,
    PairsKnowledge,
    SchemaKnowledge,
    TextKnowledge,
    TriplesKnowledge,
    knowledge_from_json,
    knowledge_problems,
    knowledge_to_json,
    parse_knowledge,
    serialize_knowledge,
)

payload = (
    st.lists(
        st.sampled_from(list("ab cé=;|(),:[]\t\nxyz東") + ["[sep]", " = ", " ; ", " | ", " ) | ( "]),
        min_size=1,
        max_size=12,
    )
    .map("".join)
    .filter(lambda s: s.strip())
)


def test_none_serializes_to_empty():
    assert serialize_knowledge(NO_KNOWLEDGE) == ""


def test_pairs_format():
    k = PairsKnowledge((("hotel.price", "cheap"), ("hotel.area", "north")))
    assert serialize_knowledge(k) == "hotel.price = cheap ; hotel.area = north"


def test_schema_format():
    k = SchemaKnowledge((("singer", ("id", "name")), ("concert", ("id",))))
    assert serialize_knowledge(k) == "singer(id, name) | concert(id)"


def test_triples_format():
    k = TriplesKnowledge((("Messi", "plays for", "Inter Miami"),))
    assert serialize_knowledge(k) == "( Messi | plays for | Inter Miami )"


def test_ordering_is_preserved():
    k = PairsKnowledge((("z", "1"), ("a", "2")))
    assert serialize_knowledge(k).startswith("z = 1")


def test_unstructured_is_normalized():
    assert serialize_knowledge(TextKnowledge("  persona:\n likes   tea [sep] ")) == "persona: likes tea"


def test_separators_are_stripped_from_payloads():
    k = PairsKnowledge((("a = b", "c ; d"),))
    assert k.pairs == (("a b", "c d"),)


def test_problems():
    assert knowledge_problems(PairsKnowledge((("", "x"),)))
    assert knowledge_problems(PairsKnowledge(()))
    assert knowledge_problems(SchemaKnowledge((("t", ("a",)), ("t", ("b",)))))
    assert knowledge_problems(TriplesKnowledge((("a", "", "c"),)))
    assert knowledge_problems(TextKnowledge(" "))
    assert not knowledge_problems(TriplesKnowledge((("a", "b", "c"),)))


def test_triple_arity():
    with pytest.raises(KnowledgeFormatError):
        TriplesKnowledge((("a", "b"),))


def test_parse_rejects_garbage():
    with pytest.raises(KnowledgeFormatError):
        parse_knowledge("no separator here", "pairs")
    with pytest.raises(KnowledgeFormatError):
        parse_knowledge("a | b | c", "triples")
    with pytest.raises(KnowledgeFormatError):
        parse_knowledge("x", "nope")


@given(st.lists(st.tuples(payload, payload), min_size=1, max_size=5))
def test_pairs_roundtrip(pairs):
    k = PairsKnowledge(tuple(pairs))
    if knowledge_problems(k):
        return
    assert parse_knowledge(serialize_knowledge(k), "pairs") == k


@given(st.lists(st.tuples(payload, st.lists(payload, max_size=4)), min_size=1, max_size=4))
def test_schema_roundtrip(tables):
    k = SchemaKnowledge(tuple((n, tuple(c)) for n, c in tables))
    if knowledge_problems(k):
        return
    assert parse_knowledge(serialize_knowledge(k), "schema") == k


@given(st.lists(st.tuples(payload, payload, payload), min_size=1, max_size=4))
def test_triples_roundtrip(triples):
    k = TriplesKnowledge(tuple(triples))
    if knowledge_problems(k):
        return
    assert parse_knowledge(serialize_knowledge(k), "triples") == k


@given(payload)
def test_text_roundtrip_and_only_none_is_empty(text):
    k = TextKnowledge(text)
    if knowledge_problems(k):
        return
    assert serialize_knowledge(k) != ""
    assert parse_knowledge(serialize_knowledge(k), "text") == k


@given(st.lists(st.tuples(payload, payload), min_size=1, max_size=3), st.lists(st.tuples(payload, payload), min_size=1, max_size=3))
def test_pairs_injective(a, b):
    ka, kb = PairsKnowledge(tuple(a)), PairsKnowledge(tuple(b))
    if knowledge_problems(ka) or knowledge_problems(kb):
        return
    assert (serialize_knowledge(ka) == serialize_knowledge(kb)) == (ka == kb)


@pytest.mark.parametrize(
    "k",
    [
        NO_KNOWLEDGE,
        TextKnowledge("hi"),
        PairsKnowledge((("a", "b"),)),
        SchemaKnowledge((("t", ("c",)),)),
        TriplesKnowledge((("h", "r", "t"),)),
    ],
)
def test_json_roundtrip(k):
    assert knowledge_from_json(knowledge_to_json(k)) == k


def test_json_rejects_bad_payload():
    with pytest.raises(KnowledgeFormatError):
        knowledge_from_json({"kind": "pairs", "payload": [[1, 2]]})
    with pytest.raises(KnowledgeFormatError):
        knowledge_from_json({"kind": "schema", "payload": [{"name": "t"}]})
    with pytest.raises(KnowledgeFormatError):
        knowledge_from_json(["pairs"])
