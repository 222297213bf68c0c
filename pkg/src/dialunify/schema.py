"""Unified text-to-text record model.

Every dialogue-oriented task is reduced to one record shape: a task token,
a one-sentence task definition, the dialogue history, attached knowledge
and a target string. :func:`linearize_input` renders the model input as::

    [dst] Track the dialogue state. [know] restaurant.area = ? [dial] user: cheap place please [sep] system: which area?
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from functools import lru_cache
from enum import Enum
from typing import Any, Iterable, Optional, Union

from .knowledge import (
    NO_KNOWLEDGE,
    KnowledgeForm,
    KnowledgeFormatError,
    NoKnowledge,
    PairsKnowledge,
    SchemaKnowledge,
    TextKnowledge,
    TriplesKnowledge,
    knowledge_from_json,
    knowledge_problems,
    knowledge_to_json,
    serialize_knowledge,
)
from .text import DIAL_MARKER, KNOW_MARKER, SEP_MARKER, collapse_whitespace, normalize_text

__all__ = [
    "TaskToken",
    "Split",
    "Turn",
    "UnifiedRecord",
    "TemplateConfig",
    "Violation",
    "ValidationResult",
    "RecordFormatError",
    "InvalidRecord",
    "SUPERVISED_TASKS",
    "SSL_TASKS",
    "TASK_FORMATS",
    "validate_record",
    "linearize_input",
    "linearize_dialogue",
    "delinearize",
    "record_to_json",
    "record_from_json",
    "dumps_record",
    "loads_record",
    # re-exported knowledge forms
    "KnowledgeForm",
    "NoKnowledge",
    "TextKnowledge",
    "PairsKnowledge",
    "SchemaKnowledge",
    "TriplesKnowledge",
    "NO_KNOWLEDGE",
]


class TaskToken(str, Enum):
    REW = "rew"
    NLG = "nlg"
    SUM = "sum"
    FILL = "fill"
    INTENT = "intent"
    DST = "dst"
    COMM = "comm"
    EMO = "emo"
    DOCQA = "docqa"
    DIALQA = "dialqa"
    CHAT = "chat"
    KGDIAL = "kgdial"
    TXT2SQL = "txt2sql"
    SIM = "sim"
    TOD = "tod"
    REO = "reo"
    CLO = "clo"

    @property
    def marker(self) -> str:
        return f"[{self.value}]"

    @property
    def supervised(self) -> bool:
        return self not in SSL_TASKS

    @classmethod
    def parse(cls, value: Union[str, "TaskToken"]) -> "TaskToken":
        if isinstance(value, TaskToken):
            return value
        text = value.strip().lower()
        if text.startswith("[") and text.endswith("]"):
            text = text[1:-1]
        return cls(text)

    def __str__(self) -> str:
        return self.value


class Split(str, Enum):
    TRAIN = "train"
    DEV = "dev"
    TEST = "test"

    def __str__(self) -> str:
        return self.value


SSL_TASKS = frozenset({TaskToken.REO, TaskToken.CLO})
SUPERVISED_TASKS = tuple(t for t in TaskToken if t not in SSL_TASKS)
TASK_ORDER = {t: i for i, t in enumerate(TaskToken)}


# History shapes: "none" (empty), "single" (exactly one turn), "multi" (one or
# more turns; a first-turn prefix of a multi-turn dialogue is legal),
# "multi2" (at least two turns). Knowledge categories as in knowledge.py.
TASK_FORMATS: dict[TaskToken, tuple[str, str]] = {
    TaskToken.REW: ("multi", "none"),
    TaskToken.NLG: ("none", "semi"),
    TaskToken.SUM: ("multi", "none"),
    TaskToken.FILL: ("single", "semi"),
    TaskToken.INTENT: ("single", "semi"),
    TaskToken.DST: ("multi", "semi"),
    TaskToken.COMM: ("single", "unstructured"),
    TaskToken.EMO: ("single", "semi"),
    TaskToken.DOCQA: ("multi", "unstructured"),
    TaskToken.DIALQA: ("multi", "unstructured"),
    TaskToken.CHAT: ("multi", "unstructured"),
    TaskToken.KGDIAL: ("multi", "structured"),
    TaskToken.TXT2SQL: ("multi", "structured"),
    TaskToken.SIM: ("multi", "semi"),
    TaskToken.TOD: ("multi", "semi"),
    TaskToken.REO: ("multi2", "none"),
    TaskToken.CLO: ("multi", "semi"),
}


class RecordFormatError(ValueError):
    """Raised when a JSON object cannot be read as a unified record at all."""


class InvalidRecord(ValueError):
    def __init__(self, result: "ValidationResult"):
        self.result = result
        super().__init__("; ".join(str(v) for v in result.errors))


@lru_cache(maxsize=4096)
def _speaker(name: str) -> str:
    # ':' would make the "<speaker>: <text>" rendering ambiguous
    return normalize_text(name.replace(":", " "))


@dataclass(frozen=True)
class Turn:
    """One utterance. ``speaker`` is ``user``, ``system`` or any other name."""

    speaker: str
    text: str

    def __post_init__(self):
        object.__setattr__(self, "speaker", _speaker(self.speaker))
        object.__setattr__(self, "text", normalize_text(self.text))

    def render(self) -> str:
        return f"{self.speaker}: {self.text}"


@dataclass(frozen=True)
class UnifiedRecord:
    task: Union[TaskToken, str]
    dataset: str
    split: Union[Split, str]
    dialogue: tuple[Turn, ...]
    knowledge: KnowledgeForm
    task_definition: str
    target: str
    meta: dict[str, Any] = field(default_factory=dict, compare=True, hash=False)

    def __post_init__(self):
        task = self.task
        try:
            task = TaskToken.parse(task)
        except ValueError:
            pass  # kept raw; validate_record reports UnknownTask
        object.__setattr__(self, "task", task)
        split = self.split
        try:
            split = Split(split)
        except ValueError:
            pass
        object.__setattr__(self, "split", split)
        object.__setattr__(self, "dataset", collapse_whitespace(self.dataset))
        object.__setattr__(self, "dialogue", tuple(self.dialogue))
        object.__setattr__(self, "task_definition", normalize_text(self.task_definition))
        # targets may legitimately contain segment markers (reordering targets do)
        object.__setattr__(self, "target", normalize_text(self.target, strip_markers=False))


@dataclass(frozen=True)
class TemplateConfig:
    include_definition: bool = True
    max_turns: Optional[int] = None  # keep only the most recent turns


DEFAULT_TEMPLATE = TemplateConfig()


@dataclass(frozen=True)
class Violation:
    code: str
    detail: str
    severity: str = "error"

    def __str__(self) -> str:
        return f"{self.code}: {self.detail}"


@dataclass(frozen=True)
class ValidationResult:
    violations: tuple[Violation, ...] = ()

    @property
    def errors(self) -> list[Violation]:
        return [v for v in self.violations if v.severity == "error"]

    @property
    def warnings(self) -> list[Violation]:
        return [v for v in self.violations if v.severity == "warning"]

    @property
    def ok(self) -> bool:
        return not self.errors

    def codes(self) -> list[str]:
        return [v.code for v in self.violations]

    def __bool__(self) -> bool:
        return self.ok


_SENTENCE_BREAK = re.compile(r"[.!?][\"')\]]*\s+\S")


def linearize_dialogue(turns: Iterable[Turn]) -> str:
    return f" {SEP_MARKER} ".join(t.render() for t in turns)


def _history_shape(n: int) -> set[str]:
    if n == 0:
        return {"none"}
    if n == 1:
        return {"single", "multi"}
    return {"multi", "multi2"}


def validate_record(r: UnifiedRecord) -> ValidationResult:
    """Check type invariants and the (task, history, knowledge) format matrix."""
    out: list[Violation] = []
    if not isinstance(r.task, TaskToken):
        out.append(Violation("UnknownTask", f"unknown task token {r.task!r}"))
    if not isinstance(r.split, Split):
        out.append(Violation("InvalidSplit", f"split must be train/dev/test, got {r.split!r}"))
    if not r.dataset:
        out.append(Violation("EmptyDataset", "dataset name is empty"))
    if not r.target:
        out.append(Violation("EmptyTarget", "target is empty"))
    if not r.task_definition:
        out.append(Violation("EmptyDefinition", "task definition is empty"))
    elif _SENTENCE_BREAK.search(r.task_definition):
        out.append(Violation("MultiSentenceDefinition", "task definition must be a single sentence"))
    for i, turn in enumerate(r.dialogue):
        if not isinstance(turn, Turn):
            out.append(Violation("MalformedTurn", f"turn {i} is not a Turn"))
            continue
        if not turn.speaker:
            out.append(Violation("EmptySpeaker", f"turn {i} has no speaker"))
        if not turn.text:
            out.append(Violation("EmptyTurn", f"turn {i} has empty text"))
    for problem in knowledge_problems(r.knowledge):
        out.append(Violation("InvalidKnowledge", problem))

    if isinstance(r.task, TaskToken):
        history, knowledge = TASK_FORMATS[r.task]
        shape = _history_shape(len(r.dialogue))
        if history not in shape:
            n = len(r.dialogue)
            # an NLG input with a history is tolerated, only flagged
            severity = "warning" if r.task is TaskToken.NLG else "error"
            out.append(
                Violation(
                    "IllegalCombination",
                    f"[{r.task.value}] expects history '{history}', got {n} turn(s)",
                    severity,
                )
            )
        if r.knowledge.category != knowledge:
            out.append(
                Violation(
                    "IllegalCombination",
                    f"[{r.task.value}] expects knowledge '{knowledge}', got '{r.knowledge.category}'",
                )
            )
        if r.task is TaskToken.CLO and isinstance(r.knowledge, PairsKnowledge):
            if any(key != "entity" for key, _ in r.knowledge.pairs):
                out.append(Violation("IllegalCombination", "[clo] knowledge keys must all be 'entity'"))
        if r.task.supervised and r.dialogue and r.target == linearize_dialogue(r.dialogue):
            out.append(
                Violation("TargetIsDialogue", "supervised target equals the full linearized dialogue")
            )
    return ValidationResult(tuple(out))


def linearize_input(r: UnifiedRecord, cfg: TemplateConfig = DEFAULT_TEMPLATE) -> str:
    """Render ``<task> <definition> [know] <knowledge> [dial] <dialogue>``.

    The knowledge segment is omitted for ``none`` knowledge and the dialogue
    segment for an empty history. Raises :class:`InvalidRecord` when the
    record has error-level violations.
    """
    result = validate_record(r)
    if not result.ok:
        raise InvalidRecord(result)
    parts = [r.task.marker]
    if cfg.include_definition:
        parts.append(r.task_definition)
    if not isinstance(r.knowledge, NoKnowledge):
        parts.append(KNOW_MARKER)
        parts.append(serialize_knowledge(r.knowledge))
    turns = r.dialogue
    if cfg.max_turns is not None:
        turns = turns[len(turns) - cfg.max_turns :] if cfg.max_turns > 0 else ()
    if turns:
        parts.append(DIAL_MARKER)
        parts.append(linearize_dialogue(turns))
    return " ".join(parts)


@dataclass(frozen=True)
class LinearizedParts:
    task: str
    definition: str
    knowledge: Optional[str]
    turns: tuple[tuple[str, str], ...]


def delinearize(text: str) -> LinearizedParts:
    """Reference inverse of :func:`linearize_input` (segment level)."""
    head, _, rest = text.partition(" ")
    if not (head.startswith("[") and head.endswith("]")):
        raise RecordFormatError(f"input does not start with a task token: {text[:40]!r}")
    task = head[1:-1]
    know_at = rest.find(KNOW_MARKER)
    dial_at = rest.find(DIAL_MARKER)
    end_def = min(i for i in (know_at, dial_at, len(rest)) if i >= 0)
    definition = rest[:end_def].strip()
    knowledge = None
    if know_at >= 0:
        stop = dial_at if dial_at > know_at else len(rest)
        knowledge = rest[know_at + len(KNOW_MARKER) : stop].strip()
    turns: list[tuple[str, str]] = []
    if dial_at >= 0:
        for chunk in rest[dial_at + len(DIAL_MARKER) :].strip().split(f" {SEP_MARKER} "):
            speaker, sep, utterance = chunk.partition(": ")
            if not sep:
                raise RecordFormatError(f"turn without speaker: {chunk!r}")
            turns.append((speaker, utterance))
    return LinearizedParts(task, definition, knowledge, tuple(turns))


def record_to_json(r: UnifiedRecord) -> dict[str, Any]:
    return {
        "task": str(r.task),
        "dataset": r.dataset,
        "split": str(r.split),
        "dialogue": [{"speaker": t.speaker, "text": t.text} for t in r.dialogue],
        "knowledge": knowledge_to_json(r.knowledge),
        "task_definition": r.task_definition,
        "target": r.target,
        "meta": r.meta,
    }


_FIELDS = ("task", "dataset", "split", "dialogue", "knowledge", "task_definition", "target")


def record_from_json(obj: Any) -> UnifiedRecord:
    if not isinstance(obj, dict):
        raise RecordFormatError("record must be a JSON object")
    missing = [f for f in _FIELDS if f not in obj]
    if missing:
        raise RecordFormatError(f"missing field(s): {', '.join(missing)}")
    for name in ("task", "dataset", "split", "task_definition", "target"):
        if not isinstance(obj[name], str):
            raise RecordFormatError(f"field {name!r} must be a string")
    dialogue = obj["dialogue"]
    if not isinstance(dialogue, list):
        raise RecordFormatError("'dialogue' must be an array")
    turns = []
    for t in dialogue:
        if not isinstance(t, dict) or not isinstance(t.get("speaker"), str) or not isinstance(t.get("text"), str):
            raise RecordFormatError("each turn must be {speaker: str, text: str}")
        turns.append(Turn(t["speaker"], t["text"]))
    meta = obj.get("meta", {})
    if meta is None:
        meta = {}
    if not isinstance(meta, dict):
        raise RecordFormatError("'meta' must be an object")
    try:
        knowledge = knowledge_from_json(obj["knowledge"])
    except KnowledgeFormatError as exc:
        raise RecordFormatError(str(exc)) from exc
    return UnifiedRecord(
        task=obj["task"],
        dataset=obj["dataset"],
        split=obj["split"],
        dialogue=tuple(turns),
        knowledge=knowledge,
        task_definition=obj["task_definition"],
        target=obj["target"],
        meta=meta,
    )


def dumps_record(r: UnifiedRecord) -> str:
    """Canonical one-line JSON (no trailing newline)."""
    return json.dumps(record_to_json(r), ensure_ascii=False, separators=(",", ":"))


def loads_record(line: Union[str, bytes]) -> UnifiedRecord:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise RecordFormatError(f"invalid JSON: {exc.msg} at column {exc.colno}") from exc
    return record_from_json(obj)
