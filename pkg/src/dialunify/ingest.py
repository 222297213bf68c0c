"""Dataset adapters and corpus manifests.

Each adapter reads one JSON object per input line and maps it to a
:class:`~dialunify.schema.UnifiedRecord`. Input shapes:

``intent_label``        {"text", "label"}; label inventory from ``labels=[...]``
                        (or a per-line "candidates" list). Tasks: intent, emo.
``slot_spans``          {"text", "spans": [{"start", "end", "slot"}]}; slot
                        inventory from ``slots=[...]``. Task: fill.
``dst_multiwoz_like``   {"turns", "state": {slot: value}}; ontology from
                        ``ontology={slot: [values]}`` or a per-line "ontology". Task: dst.
``chitchat_turns``      {"turns", "response", "knowledge"|"persona"|"document"}.
                        Tasks: chat, docqa, dialqa, comm.
``summary_pair``        {"turns", "summary"|"target"}. Tasks: sum, rew.
``text2sql_spider_like`` {"turns"|"question", "schema", "query"}. Task: txt2sql.
``passthrough_unified`` an already-unified record line.

``turns`` is either a list of {"speaker", "text"} objects or a list of
strings, which are read as alternating user/system turns.
"""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Iterable, Iterator, Optional, Union

from .knowledge import PairsKnowledge, SchemaKnowledge, TextKnowledge, NO_KNOWLEDGE
from .schema import (
    TASK_ORDER,
    RecordFormatError,
    Split,
    TaskToken,
    Turn,
    UnifiedRecord,
    dumps_record,
    loads_record,
    record_from_json,
    validate_record,
)

logger = logging.getLogger(__name__)


class AdapterId(str, Enum):
    INTENT_LABEL = "intent_label"
    SLOT_SPANS = "slot_spans"
    DST_MULTIWOZ_LIKE = "dst_multiwoz_like"
    CHITCHAT_TURNS = "chitchat_turns"
    SUMMARY_PAIR = "summary_pair"
    TEXT2SQL_SPIDER_LIKE = "text2sql_spider_like"
    PASSTHROUGH_UNIFIED = "passthrough_unified"


# first entry of each family is the default task
ADAPTER_TASKS: dict[AdapterId, tuple[TaskToken, ...]] = {
    AdapterId.INTENT_LABEL: (TaskToken.INTENT, TaskToken.EMO),
    AdapterId.SLOT_SPANS: (TaskToken.FILL,),
    AdapterId.DST_MULTIWOZ_LIKE: (TaskToken.DST,),
    AdapterId.CHITCHAT_TURNS: (TaskToken.CHAT, TaskToken.DOCQA, TaskToken.DIALQA, TaskToken.COMM),
    AdapterId.SUMMARY_PAIR: (TaskToken.SUM, TaskToken.REW),
    AdapterId.TEXT2SQL_SPIDER_LIKE: (TaskToken.TXT2SQL,),
    AdapterId.PASSTHROUGH_UNIFIED: tuple(TaskToken),
}


class IngestError(Exception):
    pass


class MalformedLine(IngestError):
    def __init__(self, line_no: int, reason: str):
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"line {line_no}: {reason}")


class AdapterMismatch(IngestError):
    def __init__(self, line_no: int, reason: str):
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"line {line_no}: {reason}")


class RecordRejected(IngestError):
    def __init__(self, line_no: int, reason: str):
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"line {line_no}: {reason}")


class ManifestError(Exception):
    pass


class IoFailure(ManifestError):
    pass


class ValidationFailure(ManifestError):
    def __init__(self, file: str, line_no: int, reason: str):
        self.file = file
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"{file}:{line_no}: {reason}")


class _Mismatch(Exception):
    """Internal: adapter cannot read this object."""


@dataclass
class Diagnostic:
    line_no: int
    code: str
    reason: str


@dataclass
class IngestReport:
    read: int = 0
    emitted: int = 0
    rejected: int = 0
    diagnostics: list[Diagnostic] = field(default_factory=list)
    max_diagnostics: int = 10_000

    def reject(self, line_no: int, code: str, reason: str) -> None:
        self.rejected += 1
        if len(self.diagnostics) < self.max_diagnostics:
            self.diagnostics.append(Diagnostic(line_no, code, reason))

    def to_json(self) -> dict[str, Any]:
        return {
            "read": self.read,
            "emitted": self.emitted,
            "rejected": self.rejected,
            "diagnostics": [vars(d) for d in self.diagnostics],
        }


@dataclass(frozen=True)
class AdapterContext:
    task: TaskToken
    dataset: str
    split: str
    task_definition: str
    opts: dict[str, Any]


def _need(obj: dict, key: str, kind=str) -> Any:
    if key not in obj:
        raise _Mismatch(f"missing field {key!r}")
    value = obj[key]
    if not isinstance(value, kind):
        raise _Mismatch(f"field {key!r} has type {type(value).__name__}")
    return value


def _turns(raw: Any) -> tuple[Turn, ...]:
    if not isinstance(raw, list):
        raise _Mismatch("'turns' must be a list")
    turns = []
    for i, t in enumerate(raw):
        if isinstance(t, str):
            turns.append(Turn("user" if i % 2 == 0 else "system", t))
        elif isinstance(t, dict) and isinstance(t.get("text"), str):
            turns.append(Turn(str(t.get("speaker", "user")), t["text"]))
        else:
            raise _Mismatch(f"turn {i} is neither a string nor {{speaker, text}}")
    return tuple(turns)


def _record(ctx: AdapterContext, dialogue, knowledge, target, meta=None) -> UnifiedRecord:
    return UnifiedRecord(
        task=ctx.task,
        dataset=ctx.dataset,
        split=ctx.split,
        dialogue=dialogue,
        knowledge=knowledge,
        task_definition=ctx.task_definition,
        target=target,
        meta=meta or {},
    )


def _pairs_text(pairs: Iterable[tuple[str, str]]) -> str:
    text = " ; ".join(f"{k} = {v}" for k, v in pairs)
    return text or "none"


def _intent_label(obj: dict, ctx: AdapterContext) -> UnifiedRecord:
    text = _need(obj, "text")
    label = _need(obj, "label")
    inventory = ctx.opts.get("labels") or obj.get("candidates")
    if not inventory:
        raise _Mismatch("no label inventory (pass labels=[...] or a 'candidates' field)")
    key = "intent" if ctx.task is TaskToken.INTENT else "emotion"
    knowledge = PairsKnowledge(tuple((key, str(lab)) for lab in inventory))
    speaker = obj.get("speaker", "user")
    return _record(ctx, (Turn(str(speaker), text),), knowledge, label)


def _slot_spans(obj: dict, ctx: AdapterContext) -> UnifiedRecord:
    text = _need(obj, "text")
    spans = _need(obj, "spans", list)
    inventory = ctx.opts.get("slots") or obj.get("slots")
    if not inventory:
        raise _Mismatch("no slot inventory (pass slots=[...] or a 'slots' field)")
    found = []
    for span in spans:
        try:
            start, end, slot = int(span["start"]), int(span["end"]), str(span["slot"])
        except (KeyError, TypeError, ValueError):
            raise _Mismatch("span must be {start, end, slot}")
        if not 0 <= start < end <= len(text):
            raise _Mismatch(f"span [{start}, {end}) outside text of length {len(text)}")
        found.append((start, slot, text[start:end]))
    found.sort(key=lambda s: s[0])
    knowledge = PairsKnowledge(tuple(("slot", str(s)) for s in inventory))
    target = _pairs_text((slot, " ".join(surface.split())) for _, slot, surface in found)
    return _record(ctx, (Turn("user", text),), knowledge, target)


def _dst(obj: dict, ctx: AdapterContext) -> UnifiedRecord:
    turns = _turns(_need(obj, "turns", list))
    state = _need(obj, "state", (dict, list))
    items = state.items() if isinstance(state, dict) else state
    try:
        pairs = [(str(k), str(v)) for k, v in items]
    except (TypeError, ValueError):
        raise _Mismatch("'state' must map slot -> value")
    ontology = ctx.opts.get("ontology") or obj.get("ontology")
    if not ontology:
        raise _Mismatch("no ontology (pass ontology={slot: [values]} or an 'ontology' field)")
    if isinstance(ontology, dict):
        slots = [(str(s), ", ".join(map(str, vals)) if vals else "?") for s, vals in ontology.items()]
    else:
        slots = [(str(s), "?") for s in ontology]
    return _record(ctx, turns, PairsKnowledge(tuple(slots)), _pairs_text(pairs))


def _chitchat(obj: dict, ctx: AdapterContext) -> UnifiedRecord:
    turns = _turns(_need(obj, "turns", list))
    response = _need(obj, "response")
    for key in ("knowledge", "persona", "document"):
        if key in obj:
            raw = obj[key]
            if isinstance(raw, list):
                raw = " ".join(map(str, raw))
            if not isinstance(raw, str):
                raise _Mismatch(f"field {key!r} must be text")
            return _record(ctx, turns, TextKnowledge(raw), response)
    raise _Mismatch("missing knowledge text ('knowledge', 'persona' or 'document')")


def _summary(obj: dict, ctx: AdapterContext) -> UnifiedRecord:
    turns = _turns(_need(obj, "turns", list))
    key = "summary" if "summary" in obj else "target"
    return _record(ctx, turns, NO_KNOWLEDGE, _need(obj, key))


def _schema(raw: Any) -> SchemaKnowledge:
    if isinstance(raw, list):
        try:
            return SchemaKnowledge(tuple((str(t["name"]), tuple(map(str, t["columns"]))) for t in raw))
        except (KeyError, TypeError):
            raise _Mismatch("schema tables must be {name, columns}")
    if isinstance(raw, dict) and "table_names_original" in raw:
        names = [str(n) for n in raw["table_names_original"]]
        columns: list[list[str]] = [[] for _ in names]
        for table_id, col in raw.get("column_names_original", []):
            if table_id >= 0:  # -1 is the '*' pseudo column
                columns[table_id].append(str(col))
        return SchemaKnowledge(tuple((n, tuple(c)) for n, c in zip(names, columns)))
    raise _Mismatch("unrecognized schema layout")


def _text2sql(obj: dict, ctx: AdapterContext) -> UnifiedRecord:
    if "turns" in obj:
        turns = _turns(obj["turns"])
    else:
        turns = (Turn("user", _need(obj, "question")),)
    if "schema" not in obj:
        raise _Mismatch("missing field 'schema'")
    return _record(ctx, turns, _schema(obj["schema"]), _need(obj, "query"))


def _passthrough(obj: dict, ctx: AdapterContext) -> UnifiedRecord:
    try:
        return record_from_json(obj)
    except RecordFormatError as exc:
        raise _Mismatch(str(exc))


ADAPTERS: dict[AdapterId, Callable[[dict, AdapterContext], UnifiedRecord]] = {
    AdapterId.INTENT_LABEL: _intent_label,
    AdapterId.SLOT_SPANS: _slot_spans,
    AdapterId.DST_MULTIWOZ_LIKE: _dst,
    AdapterId.CHITCHAT_TURNS: _chitchat,
    AdapterId.SUMMARY_PAIR: _summary,
    AdapterId.TEXT2SQL_SPIDER_LIKE: _text2sql,
    AdapterId.PASSTHROUGH_UNIFIED: _passthrough,
}


def ingest(
    adapter: Union[AdapterId, str],
    source: Iterable[Union[bytes, str]],
    task_definition: str = "",
    *,
    dataset: str = "unknown",
    split: str = "train",
    task: Optional[Union[TaskToken, str]] = None,
    strict: bool = False,
    report: Optional[IngestReport] = None,
    **opts: Any,
) -> Iterator[UnifiedRecord]:
    """Yield validated records from ``source`` lines, in input order.

    Bad lines are counted in ``report`` and skipped; with ``strict`` the
    first bad line raises instead. Blank lines are ignored.
    """
    adapter = AdapterId(adapter)
    family = ADAPTER_TASKS[adapter]
    chosen = TaskToken.parse(task) if task is not None else family[0]
    if chosen not in family:
        raise ValueError(f"adapter {adapter.value} cannot produce [{chosen.value}] records")
    if adapter is not AdapterId.PASSTHROUGH_UNIFIED and not task_definition:
        raise ValueError("task_definition is required for this adapter")
    ctx = AdapterContext(chosen, dataset, split, task_definition, opts)
    convert = ADAPTERS[adapter]
    if report is None:
        report = IngestReport()

    for line_no, raw in enumerate(source, start=1):
        if isinstance(raw, bytes):
            try:
                raw = raw.decode("utf-8")
            except UnicodeDecodeError as exc:
                report.read += 1
                _fail(report, strict, MalformedLine(line_no, f"not UTF-8: {exc.reason}"), "MalformedLine")
                continue
        if not raw.strip():
            continue
        report.read += 1
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            _fail(report, strict, MalformedLine(line_no, f"{exc.msg} at column {exc.colno}"), "MalformedLine")
            continue
        if not isinstance(obj, dict):
            _fail(report, strict, AdapterMismatch(line_no, "line is not a JSON object"), "AdapterMismatch")
            continue
        try:
            record = convert(obj, ctx)
        except _Mismatch as exc:
            _fail(report, strict, AdapterMismatch(line_no, str(exc)), "AdapterMismatch")
            continue
        result = validate_record(record)
        if not result.ok:
            reason = "; ".join(str(v) for v in result.errors)
            _fail(report, strict, RecordRejected(line_no, reason), "ValidationFailure")
            continue
        report.emitted += 1
        yield record


def _fail(report: IngestReport, strict: bool, exc: IngestError, code: str) -> None:
    if strict:
        raise exc
    report.reject(exc.line_no, code, exc.reason)
    logger.debug("rejected %s", exc)


def ingest_file(
    adapter: Union[AdapterId, str],
    in_path: Union[str, Path],
    out_path: Union[str, Path],
    task_definition: str = "",
    **kwargs: Any,
) -> IngestReport:
    report = kwargs.pop("report", None) or IngestReport()
    with open(in_path, "rb") as src, open(out_path, "w", encoding="utf-8", newline="\n") as out:
        buf = []
        for record in ingest(adapter, src, task_definition, report=report, **kwargs):
            buf.append(dumps_record(record))
            if len(buf) >= 4096:
                out.write("\n".join(buf) + "\n")
                buf.clear()
        if buf:
            out.write("\n".join(buf) + "\n")
    return report


def read_records(path: Union[str, Path]) -> Iterator[tuple[int, UnifiedRecord]]:
    """Yield (line number, record) from a unified JSONL file; no validation."""
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if line.strip():
                yield line_no, loads_record(line)


def write_records(records: Iterable[UnifiedRecord], path: Union[str, Path]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as out:
        for r in records:
            out.write(dumps_record(r))
            out.write("\n")
            n += 1
    return n


@dataclass(frozen=True)
class ManifestEntry:
    task: TaskToken
    dataset: str
    split: str
    count: int
    path: str

    @property
    def key(self) -> tuple[TaskToken, str, str]:
        return (self.task, self.dataset, self.split)


@dataclass(frozen=True)
class CorpusManifest:
    entries: tuple[ManifestEntry, ...] = ()

    def __post_init__(self):
        entries = tuple(sorted(self.entries, key=_entry_order))
        keys = [e.key for e in entries]
        if len(set(keys)) != len(keys):
            dup = next(k for k, n in Counter(keys).items() if n > 1)
            raise ManifestError(f"duplicate manifest entry for {dup[0].value}/{dup[1]}/{dup[2]}")
        for e in entries:
            if e.count < 0:
                raise ManifestError(f"negative count for {e.key}")
        object.__setattr__(self, "entries", entries)

    @property
    def total(self) -> int:
        return sum(e.count for e in self.entries)

    def task_counts(self) -> dict[TaskToken, int]:
        counts: dict[TaskToken, int] = {}
        for e in self.entries:
            counts[e.task] = counts.get(e.task, 0) + e.count
        return counts

    def to_json(self) -> dict[str, Any]:
        return {
            "entries": [
                {"task": e.task.value, "dataset": e.dataset, "split": e.split, "count": e.count, "path": e.path}
                for e in self.entries
            ]
        }

    @classmethod
    def from_json(cls, obj: Any) -> "CorpusManifest":
        try:
            entries = tuple(
                ManifestEntry(TaskToken.parse(e["task"]), str(e["dataset"]), str(e["split"]), int(e["count"]), str(e["path"]))
                for e in obj["entries"]
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ManifestError(f"malformed manifest: {exc}") from exc
        return cls(entries)

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "CorpusManifest":
        try:
            obj = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise IoFailure(f"cannot read manifest {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ManifestError(f"manifest {path} is not JSON: {exc}") from exc
        return cls.from_json(obj)


def _entry_order(e: ManifestEntry):
    return (TASK_ORDER.get(e.task, len(TASK_ORDER)), e.dataset, e.split, e.path)


def count_records(path: Union[str, Path]) -> Counter:
    """Count valid records per (task, dataset, split); raise on the first bad line."""
    counts: Counter = Counter()
    path = str(path)
    try:
        f = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot open {path}: {exc}") from exc
    with f:
        try:
            for line_no, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    record = loads_record(line)
                except RecordFormatError as exc:
                    raise ValidationFailure(path, line_no, str(exc)) from exc
                result = validate_record(record)
                if not result.ok:
                    raise ValidationFailure(path, line_no, "; ".join(map(str, result.errors)))
                counts[(record.task, record.dataset, str(record.split))] += 1
        except UnicodeDecodeError as exc:
            raise IoFailure(f"{path} is not UTF-8: {exc}") from exc
    return counts


def build_manifest(paths: Iterable[Union[str, Path]]) -> CorpusManifest:
    entries = []
    for path in paths:
        for (task, dataset, split), n in count_records(path).items():
            entries.append(ManifestEntry(task, dataset, split, n, str(path)))
    return CorpusManifest(tuple(entries))
