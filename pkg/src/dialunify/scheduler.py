"""Task-iterative batch scheduling.

An epoch is a sequence of rounds. In every round each task contributes one
block of ``step`` samples, in ``task_order``. The number of rounds is
``ceil(max_count / step)``, so the largest task is swept completely and
every task gets the same number of blocks. A task's samples are drawn from
a seeded shuffle of its ordinals; when the shuffle is used up the task is
reshuffled independently and drawing continues.
"""

from __future__ import annotations

import hashlib
import json
import math
import mmap
import zlib
from array import array
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterator, Optional, Sequence, TextIO, Union

import numpy as np

from .ingest import CorpusManifest, IoFailure, ManifestEntry
from .schema import TASK_ORDER, TaskToken, UnifiedRecord, loads_record

DEFAULT_STEP = 512

TaskName = Union[TaskToken, str]


class SchedulerError(Exception):
    pass


class EmptyTaskSet(SchedulerError):
    pass


class ManifestMismatch(SchedulerError):
    pass


class CheckpointMismatch(SchedulerError):
    pass


@dataclass(frozen=True)
class TaskDescriptor:
    token: TaskName
    count: int
    source: tuple[ManifestEntry, ...] = ()

    def __post_init__(self):
        if self.count <= 0:
            raise ValueError(f"task {self.token} must have a positive sample count")


@dataclass(frozen=True)
class SchedulerConfig:
    step: int = DEFAULT_STEP
    seed: int = 0
    epochs: int = 1
    task_order: Optional[tuple[TaskName, ...]] = None  # None: canonical token order

    def __post_init__(self):
        if self.step < 1:
            raise ValueError("step must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.task_order is not None:
            object.__setattr__(self, "task_order", tuple(self.task_order))


def _name(token: TaskName) -> str:
    return token.value if isinstance(token, TaskToken) else str(token)


def _order_key(token: TaskName):
    if isinstance(token, TaskToken):
        return (0, TASK_ORDER[token], "")
    return (1, 0, str(token))


def resolve_order(tasks: Sequence[TaskDescriptor], cfg: SchedulerConfig) -> list[TaskDescriptor]:
    by_name = {}
    for t in tasks:
        if _name(t.token) in by_name:
            raise ValueError(f"task {_name(t.token)} listed twice")
        by_name[_name(t.token)] = t
    if cfg.task_order is None:
        return sorted(tasks, key=lambda t: _order_key(t.token))
    names = [_name(t) for t in cfg.task_order]
    if sorted(names) != sorted(by_name) or len(set(names)) != len(names):
        raise ValueError("task_order must list every task exactly once")
    return [by_name[n] for n in names]


def _task_seed(seed: int, epoch: int, token: TaskName) -> np.random.SeedSequence:
    name = _name(token).encode("utf-8")
    return np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, epoch, zlib.crc32(name), len(name)])


def draw_ordinals(count: int, needed: int, seed_seq: np.random.SeedSequence) -> np.ndarray:
    """``needed`` draws from back-to-back independent shuffles of range(count)."""
    rng = np.random.Generator(np.random.PCG64(seed_seq))
    cycles = -(-needed // count)
    # one independently shuffled row per cycle
    table = np.tile(np.arange(count, dtype=np.int64), (cycles, 1))
    return rng.permuted(table, axis=1).reshape(-1)[:needed]


@dataclass(frozen=True)
class EpochSchedule:
    """Block plan for one epoch.

    ``ordinals[i]`` is an (rounds, step) array for ``tasks[i]``; block ``k``
    of the epoch belongs to task ``k % N`` and round ``k // N``.
    """

    epoch: int
    step: int
    tasks: tuple[TaskName, ...]
    ordinals: tuple[np.ndarray, ...]

    @property
    def rounds(self) -> int:
        return self.ordinals[0].shape[0] if self.ordinals else 0

    def __len__(self) -> int:
        return self.rounds * len(self.tasks)

    def block(self, k: int) -> tuple[TaskName, np.ndarray]:
        n = len(self.tasks)
        return self.tasks[k % n], self.ordinals[k % n][k // n]

    def blocks(self) -> Iterator[tuple[TaskName, list[int]]]:
        for k in range(len(self)):
            task, ords = self.block(k)
            yield task, ords.tolist()


def plan_epoch(tasks: Sequence[TaskDescriptor], cfg: SchedulerConfig, epoch_index: int = 0) -> EpochSchedule:
    if not tasks:
        raise EmptyTaskSet("cannot schedule an empty task set")
    ordered = resolve_order(tasks, cfg)
    rounds = -(-max(t.count for t in ordered) // cfg.step)
    needed = rounds * cfg.step
    ordinals = tuple(
        draw_ordinals(t.count, needed, _task_seed(cfg.seed, epoch_index, t.token)).reshape(rounds, cfg.step)
        for t in ordered
    )
    return EpochSchedule(epoch_index, cfg.step, tuple(t.token for t in ordered), ordinals)


def config_hash(tasks: Sequence[TaskDescriptor], cfg: SchedulerConfig) -> str:
    ordered = resolve_order(tasks, cfg)
    payload = {
        "step": cfg.step,
        "seed": cfg.seed,
        "epochs": cfg.epochs,
        "tasks": [[_name(t.token), t.count] for t in ordered],
    }
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


@dataclass(frozen=True)
class Checkpoint:
    """Position of the next block to emit."""

    epoch: int
    block: int
    seed: int
    config_hash: str

    def to_json(self) -> dict[str, Any]:
        return {"epoch": self.epoch, "block": self.block, "seed": self.seed, "config_hash": self.config_hash}

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(json.dumps(self.to_json()) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "Checkpoint":
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(int(obj["epoch"]), int(obj["block"]), int(obj["seed"]), str(obj["config_hash"]))


def iter_blocks(
    tasks: Sequence[TaskDescriptor],
    cfg: SchedulerConfig,
    start: Optional[Checkpoint] = None,
) -> Iterator[tuple[int, int, TaskName, np.ndarray]]:
    """Yield (epoch, block, task, ordinals) across all epochs from ``start``."""
    first_epoch, first_block = 0, 0
    if start is not None:
        if start.config_hash != config_hash(tasks, cfg) or start.seed != cfg.seed:
            raise CheckpointMismatch("checkpoint was written for a different configuration")
        first_epoch, first_block = start.epoch, start.block
    for epoch in range(first_epoch, cfg.epochs):
        plan = plan_epoch(tasks, cfg, epoch)
        for k in range(first_block if epoch == first_epoch else 0, len(plan)):
            task, ords = plan.block(k)
            yield epoch, k, task, ords


@dataclass(frozen=True)
class MiniBatch:
    epoch: int
    block: int
    task: TaskName
    records: tuple[UnifiedRecord, ...]


class CorpusIndex:
    """Random access to each task's records through line offsets.

    A task's ordinal space is the concatenation of its manifest entries
    (in manifest order), each entry's records in file order.
    """

    def __init__(self, manifest: CorpusManifest, base_dir: Optional[Union[str, Path]] = None):
        self.manifest = manifest
        self._maps: dict[str, mmap.mmap] = {}
        self._files = []
        # per task: list of (path, start offsets, end offsets)
        self._offsets: dict[TaskToken, tuple[list[str], array, array, array]] = {}
        by_path: dict[str, list[ManifestEntry]] = {}
        for e in manifest.entries:
            by_path.setdefault(e.path, []).append(e)
        found: dict[tuple, tuple[array, array]] = {}
        for path, entries in by_path.items():
            resolved = self._resolve(path, base_dir)
            wanted = {e.key for e in entries}
            for key, offs in self._scan(resolved, wanted).items():
                found[(path,) + key] = offs
        per_task: dict[TaskToken, list] = {}
        for e in manifest.entries:
            starts, ends = found.get((e.path,) + e.key, (array("q"), array("q")))
            if len(starts) != e.count:
                raise ManifestMismatch(
                    f"{e.path}: manifest says {e.count} [{e.task.value}] {e.dataset}/{e.split} records, file has {len(starts)}"
                )
            per_task.setdefault(e.task, []).append((e.path, starts, ends))
        self._parts = per_task

    def _resolve(self, path: str, base_dir) -> str:
        p = Path(path)
        if not p.is_absolute() and base_dir is not None and not p.exists():
            p = Path(base_dir) / p
        try:
            f = open(p, "rb")
        except OSError as exc:
            raise IoFailure(f"cannot open corpus file {path}: {exc}") from exc
        self._files.append(f)
        size = p.stat().st_size
        self._maps[path] = mmap.mmap(f.fileno(), 0, access=mmap.ACCESS_READ) if size else None
        return path

    def _scan(self, path: str, wanted: set) -> dict[tuple, tuple[array, array]]:
        mm = self._maps[path]
        out: dict[tuple, tuple[array, array]] = {}
        if mm is None:
            return out
        pos = 0
        size = len(mm)
        while pos < size:
            nl = mm.find(b"\n", pos)
            end = size if nl < 0 else nl
            line = mm[pos:end]
            if line.strip():
                obj = json.loads(line)
                key = (TaskToken.parse(obj["task"]), obj["dataset"], obj["split"])
                if key in wanted:
                    starts, ends = out.setdefault(key, (array("q"), array("q")))
                    starts.append(pos)
                    ends.append(end)
            pos = end + 1
        return out

    def tasks(self) -> list[TaskDescriptor]:
        counts = self.manifest.task_counts()
        return [
            TaskDescriptor(t, counts[t], tuple(e for e in self.manifest.entries if e.task is t))
            for t in self._parts
            if counts[t] > 0
        ]

    def raw(self, task: TaskToken, ordinals: Sequence[int]) -> list[bytes]:
        parts = self._parts[task]
        out = []
        for o in ordinals:
            for path, starts, ends in parts:
                if o < len(starts):
                    out.append(self._maps[path][starts[o] : ends[o]])
                    break
                o -= len(starts)
            else:
                raise IndexError(f"ordinal out of range for task {task.value}")
        return out

    def close(self) -> None:
        for mm in self._maps.values():
            if mm is not None:
                mm.close()
        for f in self._files:
            f.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def stream_batches(
    manifest: CorpusManifest,
    cfg: SchedulerConfig,
    start: Optional[Checkpoint] = None,
    base_dir: Optional[Union[str, Path]] = None,
) -> Iterator[MiniBatch]:
    with CorpusIndex(manifest, base_dir) as index:
        tasks = index.tasks()
        for epoch, k, task, ords in iter_blocks(tasks, cfg, start):
            records = tuple(loads_record(line) for line in index.raw(task, ords.tolist()))
            yield MiniBatch(epoch, k, task, records)


def write_stream(
    manifest: CorpusManifest,
    cfg: SchedulerConfig,
    out: TextIO,
    start: Optional[Checkpoint] = None,
    max_blocks: Optional[int] = None,
    base_dir: Optional[Union[str, Path]] = None,
) -> Checkpoint:
    """Write framed JSONL batches; return the checkpoint for the next block.

    Each frame is ``{"epoch":e,"block":k,"task":t,"records":[...]}`` with the
    records copied verbatim from the corpus files.
    """
    with CorpusIndex(manifest, base_dir) as index:
        tasks = index.tasks()
        digest = config_hash(tasks, cfg)
        nxt = start or Checkpoint(0, 0, cfg.seed, digest)
        written = 0
        for epoch, k, task, ords in iter_blocks(tasks, cfg, start):
            if max_blocks is not None and written >= max_blocks:
                break
            records = b",".join(index.raw(task, ords.tolist())).decode("utf-8")
            out.write(f'{{"epoch":{epoch},"block":{k},"task":"{_name(task)}","records":[{records}]}}\n')
            written += 1
            nxt = Checkpoint(epoch, k + 1, cfg.seed, digest)
        else:
            nxt = Checkpoint(cfg.epochs, 0, cfg.seed, digest)
        if nxt.epoch < cfg.epochs:
            rounds = math.ceil(max(t.count for t in tasks) / cfg.step)
            if nxt.block >= rounds * len(tasks):
                nxt = Checkpoint(nxt.epoch + 1, 0, cfg.seed, digest)
        return nxt
