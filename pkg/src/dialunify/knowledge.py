"""External knowledge attached to a dialogue, and its canonical text form.

Four categories exist: none, unstructured text, semi-structured key/value
pairs, and structured knowledge (either a database schema or a list of
graph triples). Every variant renders to a single line:

    pairs    hotel.price = cheap ; hotel.area = north
    schema   singer(id, name) | concert(id)
    triples  ( Messi | plays for | Inter Miami ) | ( Inter Miami | based in | Florida )

Payload strings are normalized on construction so that the separators
above can never occur inside a payload, which makes :func:`parse_knowledge`
an exact inverse of :func:`serialize_knowledge`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Union

from .text import drop_tokens, normalize_text

PAIR_SEP = " ; "
KEY_VALUE_SEP = " = "
ITEM_SEP = " | "

_PAIR_BANNED = frozenset({"=", ";"})
_TRIPLE_BANNED = frozenset({"|"})
_SCHEMA_BANNED_CHARS = str.maketrans({c: " " for c in "(),|"})


class KnowledgeFormatError(ValueError):
    pass


def normalize_pair_text(s: str) -> str:
    return drop_tokens(normalize_text(s), _PAIR_BANNED)


def _schema_ident(s: str) -> str:
    return normalize_text(normalize_text(s).translate(_SCHEMA_BANNED_CHARS))


def _triple_slot(s: str) -> str:
    return drop_tokens(normalize_text(s), _TRIPLE_BANNED)


@dataclass(frozen=True)
class NoKnowledge:
    kind = "none"
    category = "none"


@dataclass(frozen=True)
class TextKnowledge:
    text: str

    kind = "text"
    category = "unstructured"

    def __post_init__(self):
        object.__setattr__(self, "text", normalize_text(self.text))


@dataclass(frozen=True)
class PairsKnowledge:
    """Semi-structured description: ordered (key-path, value) pairs."""

    pairs: tuple[tuple[str, str], ...]

    kind = "pairs"
    category = "semi"

    def __post_init__(self):
        pairs = tuple((normalize_pair_text(k), normalize_pair_text(v)) for k, v in self.pairs)
        object.__setattr__(self, "pairs", pairs)


@dataclass(frozen=True)
class SchemaKnowledge:
    """Database schema: ordered tables, each with ordered column names."""

    tables: tuple[tuple[str, tuple[str, ...]], ...]

    kind = "schema"
    category = "structured"

    def __post_init__(self):
        tables = tuple(
            (_schema_ident(name), tuple(_schema_ident(c) for c in columns))
            for name, columns in self.tables
        )
        object.__setattr__(self, "tables", tables)


@dataclass(frozen=True)
class TriplesKnowledge:
    triples: tuple[tuple[str, str, str], ...]

    kind = "triples"
    category = "structured"

    def __post_init__(self):
        triples = []
        for triple in self.triples:
            if len(triple) != 3:
                raise KnowledgeFormatError(f"triple must have 3 slots, got {len(triple)}")
            triples.append(tuple(_triple_slot(s) for s in triple))
        object.__setattr__(self, "triples", tuple(triples))


KnowledgeForm = Union[NoKnowledge, TextKnowledge, PairsKnowledge, SchemaKnowledge, TriplesKnowledge]

NO_KNOWLEDGE = NoKnowledge()

KNOWLEDGE_KINDS = ("none", "text", "pairs", "schema", "triples")


def knowledge_problems(k: KnowledgeForm) -> list[str]:
    """List the type-invariant violations of ``k`` (empty when valid)."""
    problems = []
    if isinstance(k, NoKnowledge):
        return problems
    if isinstance(k, TextKnowledge):
        if not k.text:
            problems.append("unstructured knowledge text is empty")
    elif isinstance(k, PairsKnowledge):
        if not k.pairs:
            problems.append("semi-structured knowledge has no pairs")
        for i, (key, value) in enumerate(k.pairs):
            if not key:
                problems.append(f"pair {i} has an empty key-path")
            if not value:
                problems.append(f"pair {i} has an empty value")
    elif isinstance(k, SchemaKnowledge):
        if not k.tables:
            problems.append("schema has no tables")
        seen = set()
        for name, columns in k.tables:
            if not name:
                problems.append("schema table with empty name")
            if name in seen:
                problems.append(f"duplicate schema table {name!r}")
            seen.add(name)
            if any(not c for c in columns):
                problems.append(f"table {name!r} has an empty column name")
    elif isinstance(k, TriplesKnowledge):
        if not k.triples:
            problems.append("triple list is empty")
        for i, triple in enumerate(k.triples):
            if not all(triple):
                problems.append(f"triple {i} has an empty slot")
    else:
        problems.append(f"unknown knowledge form {type(k).__name__}")
    return problems


def serialize_knowledge(k: KnowledgeForm) -> str:
    if isinstance(k, NoKnowledge):
        return ""
    if isinstance(k, TextKnowledge):
        return k.text
    if isinstance(k, PairsKnowledge):
        return PAIR_SEP.join(key + KEY_VALUE_SEP + value for key, value in k.pairs)
    if isinstance(k, SchemaKnowledge):
        return ITEM_SEP.join(f"{name}({', '.join(cols)})" for name, cols in k.tables)
    if isinstance(k, TriplesKnowledge):
        return ITEM_SEP.join(f"( {h} | {r} | {t} )" for h, r, t in k.triples)
    raise TypeError(f"not a knowledge form: {k!r}")


def parse_knowledge(text: str, kind: str) -> KnowledgeForm:
    """Reference parser: invert :func:`serialize_knowledge` for a known kind."""
    if kind == "none":
        if text:
            raise KnowledgeFormatError("non-empty text for kind 'none'")
        return NO_KNOWLEDGE
    if kind == "text":
        return TextKnowledge(text)
    if kind == "pairs":
        pairs = []
        for item in text.split(PAIR_SEP):
            key, sep, value = item.partition(KEY_VALUE_SEP)
            if not sep:
                raise KnowledgeFormatError(f"pair without ' = ': {item!r}")
            pairs.append((key, value))
        return PairsKnowledge(tuple(pairs))
    if kind == "schema":
        tables = []
        for item in text.split(ITEM_SEP):
            name, paren, rest = item.partition("(")
            if not paren or not rest.endswith(")"):
                raise KnowledgeFormatError(f"malformed table {item!r}")
            inner = rest[:-1]
            tables.append((name, tuple(inner.split(", ")) if inner else ()))
        return SchemaKnowledge(tuple(tables))
    if kind == "triples":
        if not (text.startswith("( ") and text.endswith(" )")):
            raise KnowledgeFormatError("triples must be wrapped in '( ... )'")
        triples = []
        for item in text[2:-2].split(" ) | ( "):
            slots = item.split(ITEM_SEP)
            if len(slots) != 3:
                raise KnowledgeFormatError(f"malformed triple {item!r}")
            triples.append(tuple(slots))
        return TriplesKnowledge(tuple(triples))
    raise KnowledgeFormatError(f"unknown knowledge kind {kind!r}")


def knowledge_to_json(k: KnowledgeForm) -> dict[str, Any]:
    if isinstance(k, NoKnowledge):
        payload: Any = None
    elif isinstance(k, TextKnowledge):
        payload = k.text
    elif isinstance(k, PairsKnowledge):
        payload = [[key, value] for key, value in k.pairs]
    elif isinstance(k, SchemaKnowledge):
        payload = [{"name": name, "columns": list(cols)} for name, cols in k.tables]
    elif isinstance(k, TriplesKnowledge):
        payload = [list(t) for t in k.triples]
    else:
        raise TypeError(f"not a knowledge form: {k!r}")
    return {"kind": k.kind, "payload": payload}


def knowledge_from_json(obj: Any) -> KnowledgeForm:
    if not isinstance(obj, dict) or "kind" not in obj:
        raise KnowledgeFormatError("knowledge must be an object with 'kind' and 'payload'")
    kind = obj["kind"]
    payload = obj.get("payload")
    try:
        if kind == "none":
            return NO_KNOWLEDGE
        if kind == "text":
            if not isinstance(payload, str):
                raise KnowledgeFormatError("text payload must be a string")
            return TextKnowledge(payload)
        if kind == "pairs":
            return PairsKnowledge(tuple((_str(k), _str(v)) for k, v in payload))
        if kind == "schema":
            return SchemaKnowledge(
                tuple((_str(t["name"]), tuple(_str(c) for c in t["columns"])) for t in payload)
            )
        if kind == "triples":
            return TriplesKnowledge(tuple(tuple(_str(s) for s in t) for t in payload))
    except (TypeError, ValueError, KeyError) as exc:
        if isinstance(exc, KnowledgeFormatError):
            raise
        raise KnowledgeFormatError(f"bad {kind} payload: {exc}") from exc
    raise KnowledgeFormatError(f"unknown knowledge kind {kind!r}")


def _str(value: Any) -> str:
    if not isinstance(value, str):
        raise KnowledgeFormatError(f"expected a string, got {type(value).__name__}")
    return value
