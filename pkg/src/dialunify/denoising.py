"""Self-supervised denoising records built from supervised dialogues.

``reo`` records carry the turns in a shuffled order and target the dialogue
in its original order. ``clo`` records replace every entity mention by a
shared ``[mask]`` token, list the entity surfaces (shuffled) as knowledge,
and target the unmasked dialogue. Each generated record comes with a
:class:`SslProvenance` that lets :func:`verify_ssl` rebuild the target.
"""

from __future__ import annotations

import hashlib
import json
import random
import re
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Iterator, Optional, Sequence, Union

from .knowledge import NO_KNOWLEDGE, NoKnowledge, PairsKnowledge, normalize_pair_text
from .schema import (
    Split,
    TaskToken,
    Turn,
    UnifiedRecord,
    dumps_record,
    linearize_dialogue,
    loads_record,
)
from .text import MASK_TOKEN

REO_DEFINITION = "Put the shuffled dialogue turns back into their original order."
CLO_DEFINITION = "Rewrite the dialogue with every mask replaced by the matching entity."

_TOKEN = re.compile(r"\w+(?:['’.,:\-]\w+)*")
_NUMERIC = re.compile(r"\d+(?:[.,:]\d+)*")
_PRONOUN_I = frozenset({"I", "I'm", "I'd", "I'll", "I've", "I’m", "I’d", "I’ll", "I’ve"})
# "may" and "march" are left to the capitalization rule; as lowercase words they are verbs
LEXICON = frozenset(
    "monday tuesday wednesday thursday friday saturday sunday "
    "january february april june july august september october november december".split()
)


class SkipReason(str, Enum):
    TOO_FEW_TURNS = "TooFewTurns"
    NO_ENTITIES = "NoEntities"
    NOT_TRAIN = "NotTrainSplit"
    SSL_SOURCE = "SslSource"
    MASK_COLLISION = "MaskCollision"
    INVALID_SPAN = "InvalidSpan"


class Skip(Exception):
    """The record cannot yield a denoising example."""

    def __init__(self, reason: SkipReason, detail: str = ""):
        self.reason = reason
        self.detail = detail
        super().__init__(f"{reason.value}{': ' + detail if detail else ''}")


@dataclass(frozen=True)
class EntitySpan:
    start: int
    end: int
    surface: str


@dataclass(frozen=True)
class Alignment:
    turn_index: int
    span: EntitySpan
    knowledge_position: int


@dataclass(frozen=True)
class SslProvenance:
    variant: str  # "reo" or "clo"
    permutation: tuple[int, ...] = ()
    alignments: tuple[Alignment, ...] = ()

    def to_json(self) -> dict[str, Any]:
        if self.variant == "reo":
            return {"variant": "reo", "permutation": list(self.permutation)}
        return {
            "variant": "clo",
            "alignments": [
                [a.turn_index, a.span.start, a.span.end, a.span.surface, a.knowledge_position]
                for a in self.alignments
            ],
        }

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "SslProvenance":
        if obj["variant"] == "reo":
            return cls("reo", permutation=tuple(int(i) for i in obj["permutation"]))
        return cls(
            "clo",
            alignments=tuple(
                Alignment(int(t), EntitySpan(int(s), int(e), str(surf)), int(k))
                for t, s, e, surf, k in obj["alignments"]
            ),
        )


def _sentence_start(text: str, start: int) -> bool:
    before = text[:start].rstrip()
    return not before or before[-1] in ".!?"


def extract_entities(text: str) -> list[EntitySpan]:
    """Heuristic entity spans: capitalized runs, numbers, weekday/month names.

    A single capitalized word that opens a sentence is not an entity on its
    own. Overlaps resolve left to right, longest span first.
    """
    tokens = [(m.start(), m.end(), m.group()) for m in _TOKEN.finditer(text)]
    candidates: list[tuple[int, int]] = []

    run: list[tuple[int, int, str]] = []

    def close_run():
        if run and (len(run) >= 2 or not _sentence_start(text, run[0][0])):
            candidates.append((run[0][0], run[-1][1]))
        run.clear()

    for start, end, tok in tokens:
        if tok[0].isupper() and tok not in _PRONOUN_I:
            if run and not text[run[-1][1] : start].isspace():
                close_run()
            run.append((start, end, tok))
        else:
            close_run()
        if _NUMERIC.fullmatch(tok) or tok.lower() in LEXICON:
            candidates.append((start, end))
    close_run()

    candidates.sort(key=lambda c: (c[0], c[0] - c[1]))
    spans = []
    last_end = -1
    for start, end in candidates:
        if start >= last_end:
            spans.append(EntitySpan(start, end, text[start:end]))
            last_end = end
    return spans


def _check_source(r: UnifiedRecord) -> None:
    if r.split is not Split.TRAIN:
        raise Skip(SkipReason.NOT_TRAIN, f"split is {r.split}")
    if r.task in (TaskToken.REO, TaskToken.CLO):
        raise Skip(SkipReason.SSL_SOURCE, f"source is already [{r.task}]")


def make_reo(r: UnifiedRecord, rng: random.Random) -> tuple[UnifiedRecord, SslProvenance]:
    _check_source(r)
    n = len(r.dialogue)
    if n < 2:
        raise Skip(SkipReason.TOO_FEW_TURNS, f"{n} turn(s)")
    identity = list(range(n))
    perm = identity[:]
    while perm == identity:
        perm = identity[:]
        rng.shuffle(perm)
    record = UnifiedRecord(
        task=TaskToken.REO,
        dataset=r.dataset,
        split=Split.TRAIN,
        dialogue=tuple(r.dialogue[i] for i in perm),
        knowledge=NO_KNOWLEDGE,
        task_definition=REO_DEFINITION,
        target=linearize_dialogue(r.dialogue),
        meta={"source_task": str(r.task)},
    )
    return record, SslProvenance("reo", permutation=tuple(perm))


def _check_spans(text: str, spans: Sequence[EntitySpan]) -> None:
    last = 0
    for span in spans:
        if not (last <= span.start < span.end <= len(text)):
            raise ValueError(f"span {span} is out of order, overlapping or out of bounds")
        if text[span.start : span.end] != span.surface:
            raise ValueError(f"span {span} does not match text {text[span.start:span.end]!r}")
        last = span.end


def make_clo(
    r: UnifiedRecord,
    rng: random.Random,
    entities: Optional[Sequence[Sequence[EntitySpan]]] = None,
) -> tuple[UnifiedRecord, SslProvenance]:
    """Mask entity mentions; ``entities`` (one span list per turn) bypasses extraction."""
    _check_source(r)
    if not r.dialogue:
        raise Skip(SkipReason.TOO_FEW_TURNS, "no turns")
    if entities is not None and len(entities) != len(r.dialogue):
        raise ValueError("pre-annotated entities must give one span list per turn")

    masked_turns = []
    found: list[tuple[int, EntitySpan]] = []
    for ti, turn in enumerate(r.dialogue):
        if MASK_TOKEN in turn.text:
            raise Skip(SkipReason.MASK_COLLISION, f"turn {ti} already contains {MASK_TOKEN}")
        if entities is None:
            spans = extract_entities(turn.text)
        else:
            spans = list(entities[ti])
            _check_spans(turn.text, spans)
        pieces = []
        cursor = 0
        for span in spans:
            if normalize_pair_text(span.surface) != span.surface:
                raise Skip(SkipReason.INVALID_SPAN, f"entity {span.surface!r} holds a separator")
            pieces.append(turn.text[cursor : span.start])
            pieces.append(MASK_TOKEN)
            cursor = span.end
            found.append((ti, span))
        pieces.append(turn.text[cursor:])
        masked = "".join(pieces)
        masked_turn = Turn(turn.speaker, masked)
        if masked_turn.text != masked:
            raise Skip(SkipReason.INVALID_SPAN, f"masking turn {ti} breaks normalization")
        masked_turns.append(masked_turn)
    if not found:
        raise Skip(SkipReason.NO_ENTITIES)

    order = list(range(len(found)))
    rng.shuffle(order)
    position = {src: k for k, src in enumerate(order)}
    knowledge = PairsKnowledge(tuple(("entity", found[src][1].surface) for src in order))
    alignments = tuple(Alignment(ti, span, position[j]) for j, (ti, span) in enumerate(found))
    record = UnifiedRecord(
        task=TaskToken.CLO,
        dataset=r.dataset,
        split=Split.TRAIN,
        dialogue=tuple(masked_turns),
        knowledge=knowledge,
        task_definition=CLO_DEFINITION,
        target=linearize_dialogue(r.dialogue),
        meta={"source_task": str(r.task)},
    )
    return record, SslProvenance("clo", alignments=alignments)


def _verify_reo(record: UnifiedRecord, prov: SslProvenance) -> bool:
    perm = prov.permutation
    n = len(record.dialogue)
    if record.task is not TaskToken.REO or not isinstance(record.knowledge, NoKnowledge):
        return False
    if len(perm) != n or sorted(perm) != list(range(n)) or list(perm) == list(range(n)):
        return False
    original: list[Optional[Turn]] = [None] * n
    for j, src in enumerate(perm):
        original[src] = record.dialogue[j]
    return linearize_dialogue(original) == record.target


def _verify_clo(record: UnifiedRecord, prov: SslProvenance) -> bool:
    if record.task is not TaskToken.CLO or not isinstance(record.knowledge, PairsKnowledge):
        return False
    pairs = record.knowledge.pairs
    aligns = prov.alignments
    if len(pairs) != len(aligns) or any(k != "entity" for k, _ in pairs):
        return False
    if Counter(v for _, v in pairs) != Counter(a.span.surface for a in aligns):
        return False
    if sorted(a.knowledge_position for a in aligns) != list(range(len(aligns))):
        return False
    if MASK_TOKEN in record.target:
        return False
    by_turn: dict[int, list[Alignment]] = {}
    for a in aligns:
        by_turn.setdefault(a.turn_index, []).append(a)
    if any(t < 0 or t >= len(record.dialogue) for t in by_turn):
        return False
    rebuilt = []
    for ti, turn in enumerate(record.dialogue):
        pieces = turn.text.split(MASK_TOKEN)
        spans = sorted(by_turn.get(ti, []), key=lambda a: a.span.start)
        if len(pieces) - 1 != len(spans):
            return False
        text = pieces[0]
        for a, tail in zip(spans, pieces[1:]):
            if len(text) != a.span.start or a.span.end - a.span.start != len(a.span.surface):
                return False
            text += a.span.surface + tail
        rebuilt.append(Turn(turn.speaker, text))
    return linearize_dialogue(rebuilt) == record.target


def verify_ssl(record: UnifiedRecord, prov: SslProvenance) -> bool:
    """Rebuild the target from the noised record plus provenance."""
    try:
        if prov.variant == "reo":
            return _verify_reo(record, prov)
        if prov.variant == "clo":
            return _verify_clo(record, prov)
    except (TypeError, ValueError, IndexError, AttributeError):
        return False
    return False


def derive_seed(global_seed: int, dataset: str, ordinal: int) -> int:
    """Per-record seed, so sharded and serial runs draw identical noise."""
    digest = hashlib.blake2b(f"{global_seed}\x1f{dataset}\x1f{ordinal}".encode("utf-8"), digest_size=8)
    return int.from_bytes(digest.digest(), "big")


MAKERS = {"reo": make_reo, "clo": make_clo}


@dataclass(frozen=True)
class SslOutcome:
    ordinal: int
    record: Optional[UnifiedRecord] = None
    provenance: Optional[SslProvenance] = None
    skip: Optional[SkipReason] = None


def generate_one(kind: str, ordinal: int, record: UnifiedRecord, global_seed: int) -> SslOutcome:
    rng = random.Random(derive_seed(global_seed, record.dataset, ordinal))
    try:
        out, prov = MAKERS[kind](record, rng)
    except Skip as exc:
        return SslOutcome(ordinal, skip=exc.reason)
    return SslOutcome(ordinal, out, prov)


def generate(
    kind: str, records: Iterable[Union[UnifiedRecord, tuple[int, UnifiedRecord]]], global_seed: int = 0
) -> Iterator[SslOutcome]:
    """Yield one outcome per input record.

    ``records`` may carry explicit ordinals as (ordinal, record) pairs;
    otherwise records are numbered by position.
    """
    if kind not in MAKERS:
        raise ValueError(f"unknown denoising kind {kind!r}")
    for i, item in enumerate(records):
        ordinal, record = item if isinstance(item, tuple) else (i, item)
        yield generate_one(kind, ordinal, record, global_seed)


def _line_worker(args: tuple[str, int, str, int]) -> tuple[int, Optional[str], Optional[dict], Optional[str]]:
    kind, ordinal, line, global_seed = args
    outcome = generate_one(kind, ordinal, loads_record(line), global_seed)
    if outcome.skip is not None:
        return ordinal, None, None, outcome.skip.value
    return ordinal, dumps_record(outcome.record), outcome.provenance.to_json(), None


@dataclass
class SslReport:
    kind: str
    read: int = 0
    emitted: int = 0
    skipped: Counter = field(default_factory=Counter)

    def to_json(self) -> dict[str, Any]:
        total = self.read or 1
        return {
            "kind": self.kind,
            "read": self.read,
            "emitted": self.emitted,
            "skipped": dict(sorted(self.skipped.items())),
            "skipped_fraction": {k: v / total for k, v in sorted(self.skipped.items())},
        }


def generate_files(
    kind: str,
    in_paths: Sequence[str],
    out_path: str,
    provenance_path: Optional[str] = None,
    global_seed: int = 0,
    workers: int = 1,
) -> SslReport:
    """Corpus-level generation over unified JSONL files.

    Ordinals number non-blank input lines across ``in_paths`` in order. The
    provenance sidecar holds one line per emitted record:
    ``{"line": <output line>, "source": <input ordinal>, "variant": ..., ...}``.
    """
    report = SslReport(kind)

    def tasks():
        ordinal = 0
        for path in in_paths:
            with open(path, "r", encoding="utf-8") as f:
                for line in f:
                    if line.strip():
                        yield (kind, ordinal, line, global_seed)
                        ordinal += 1

    if workers > 1:
        from multiprocessing import Pool

        pool = Pool(workers)
        results = pool.imap(_line_worker, tasks(), chunksize=512)
    else:
        pool = None
        results = map(_line_worker, tasks())

    prov_f = open(provenance_path, "w", encoding="utf-8", newline="\n") if provenance_path else None
    try:
        with open(out_path, "w", encoding="utf-8", newline="\n") as out:
            for ordinal, line, prov, skip in results:
                report.read += 1
                if skip is not None:
                    report.skipped[skip] += 1
                    continue
                out.write(line)
                out.write("\n")
                if prov_f is not None:
                    entry = {"line": report.emitted, "source": ordinal, **prov}
                    prov_f.write(json.dumps(entry, ensure_ascii=False, separators=(",", ":")))
                    prov_f.write("\n")
                report.emitted += 1
    finally:
        if prov_f is not None:
            prov_f.close()
        if pool is not None:
            pool.close()
            pool.join()
    return report
