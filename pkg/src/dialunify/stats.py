"""Per-task sample accounting over a corpus manifest."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Optional

from .ingest import CorpusManifest
from .schema import SSL_TASKS, TASK_ORDER, TaskToken


class EmptyManifest(ValueError):
    pass


@dataclass(frozen=True)
class TaskShare:
    task: TaskToken
    count: int
    proportion: float


@dataclass(frozen=True)
class CorpusStats:
    tasks: tuple[TaskShare, ...]
    total: int

    def to_json(self) -> dict[str, Any]:
        return {
            "total": self.total,
            "tasks": [{"task": s.task.value, "count": s.count, "proportion": s.proportion} for s in self.tasks],
        }

    def table(self) -> str:
        rows = [("task", "count", "proportion")]
        rows += [(f"[{s.task.value}]", f"{s.count:,}", f"{s.proportion:.4%}") for s in self.tasks]
        rows.append(("total", f"{self.total:,}", "100.0000%"))
        widths = [max(len(r[i]) for r in rows) for i in range(3)]
        lines = [f"{r[0]:<{widths[0]}}  {r[1]:>{widths[1]}}  {r[2]:>{widths[2]}}" for r in rows]
        lines.insert(1, "-" * len(lines[0]))
        return "\n".join(lines)


def corpus_stats(m: CorpusManifest, include_ssl: bool = True, split: Optional[str] = None) -> CorpusStats:
    """Counts and proportions per task, largest first; ties in token order."""
    counts: dict[TaskToken, int] = {}
    for e in m.entries:
        if not include_ssl and e.task in SSL_TASKS:
            continue
        if split is not None and e.split != split:
            continue
        counts[e.task] = counts.get(e.task, 0) + e.count
    total = sum(counts.values())
    if not counts or total == 0:
        raise EmptyManifest("manifest has no samples to account for")
    ordered = sorted(counts.items(), key=lambda kv: (-kv[1], TASK_ORDER[kv[0]]))
    return CorpusStats(tuple(TaskShare(t, c, c / total) for t, c in ordered), total)


@dataclass(frozen=True)
class TotalCheck:
    actual: int
    expected: int

    @property
    def ok(self) -> bool:
        return self.actual == self.expected

    def __bool__(self) -> bool:
        return self.ok


def check_total(m: CorpusManifest, expected: int) -> TotalCheck:
    return TotalCheck(m.total, expected)
