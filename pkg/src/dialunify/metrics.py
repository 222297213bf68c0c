"""Scoring functions for classification, slot filling, parsing, state tracking
and generation outputs.

Fractions are returned in [0, 1]; BLEU and the combined task-completion
score are on a 0-100 point scale.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Mapping, Sequence, Union

ROUGE_BETA = 1.2
BLEU_EPSILON = 0.1
BLEU_MAX_ORDER = 4


class MetricError(ValueError):
    pass


class LengthMismatch(MetricError):
    pass


class EmptyInput(MetricError):
    pass


class EmptyGold(MetricError):
    pass


class RangeViolation(MetricError):
    pass


@dataclass(frozen=True)
class ScoreReport:
    metric: str
    value: float
    support: int
    variant: dict[str, Any] = field(default_factory=dict)

    def to_json(self) -> dict[str, Any]:
        return {"metric": self.metric, "value": self.value, "support": self.support, "variant": self.variant}


def normalize_answer(text: str) -> str:
    """Lowercase and collapse whitespace."""
    return " ".join(text.lower().split())


def _aligned(preds: Sequence, golds: Sequence) -> None:
    if len(preds) != len(golds):
        raise LengthMismatch(f"{len(preds)} predictions vs {len(golds)} references")
    if not preds:
        raise EmptyInput("no examples to score")


def accuracy(preds: Sequence[str], golds: Sequence[str]) -> float:
    _aligned(preds, golds)
    hits = sum(normalize_answer(p) == normalize_answer(g) for p, g in zip(preds, golds))
    return hits / len(golds)


def exact_match(pred: str, gold: str, normalizer: Callable[[str], str] = normalize_answer) -> int:
    return int(normalizer(pred) == normalizer(gold))


def exact_match_corpus(
    preds: Sequence[str], golds: Sequence[str], normalizer: Callable[[str], str] = normalize_answer
) -> float:
    _aligned(preds, golds)
    return sum(exact_match(p, g, normalizer) for p, g in zip(preds, golds)) / len(golds)


SlotPairs = Iterable[tuple[str, str]]


def _pair_set(pairs: SlotPairs) -> set[tuple[str, str]]:
    return {(normalize_answer(s), normalize_answer(v)) for s, v in pairs}


def slot_f1(preds: Sequence[SlotPairs], golds: Sequence[SlotPairs]) -> float:
    """Micro-averaged F1 over exact (slot, value) matches.

    A corpus with no predicted and no gold pairs at all scores 1.0.
    """
    if len(preds) != len(golds):
        raise LengthMismatch(f"{len(preds)} predictions vs {len(golds)} references")
    tp = fp = fn = 0
    for p, g in zip(preds, golds):
        p, g = _pair_set(p), _pair_set(g)
        tp += len(p & g)
        fp += len(p - g)
        fn += len(g - p)
    if tp + fp + fn == 0:
        return 1.0
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2 * precision * recall / (precision + recall)


BeliefState = frozenset


def belief_state(state: Union[Mapping[str, str], SlotPairs]) -> frozenset:
    """Normalize a belief state to a frozenset of (domain-slot, value).

    Raises :class:`MetricError` if one slot is given two different values.
    """
    items = state.items() if isinstance(state, Mapping) else state
    seen: dict[str, str] = {}
    for slot, value in items:
        slot, value = normalize_answer(str(slot)), normalize_answer(str(value))
        if seen.get(slot, value) != value:
            raise MetricError(f"slot {slot!r} has two values: {seen[slot]!r}, {value!r}")
        seen[slot] = value
    return frozenset(seen.items())


def joint_goal_accuracy(preds: Sequence, golds: Sequence) -> float:
    """Fraction of turns whose predicted state equals the gold state exactly."""
    _aligned(preds, golds)
    hits = sum(belief_state(p) == belief_state(g) for p, g in zip(preds, golds))
    return hits / len(golds)


def lcs_length(a: Sequence, b: Sequence) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_l(pred: str, gold: str, beta: float = ROUGE_BETA) -> float:
    """Sentence-level ROUGE-L F-score over whitespace tokens."""
    ref = normalize_answer(gold).split()
    if not ref:
        raise EmptyGold("reference is empty")
    hyp = normalize_answer(pred).split()
    if not hyp:
        return 0.0
    lcs = lcs_length(hyp, ref)
    if lcs == 0:
        return 0.0
    p = lcs / len(hyp)
    r = lcs / len(ref)
    b2 = beta * beta
    return (1 + b2) * p * r / (r + b2 * p)


def rouge_l_corpus(preds: Sequence[str], golds: Sequence[str], beta: float = ROUGE_BETA) -> float:
    _aligned(preds, golds)
    return sum(rouge_l(p, g, beta) for p, g in zip(preds, golds)) / len(golds)


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu4(
    preds: Sequence[str],
    golds: Sequence[Union[str, Sequence[str]]],
    max_order: int = BLEU_MAX_ORDER,
    epsilon: float = BLEU_EPSILON,
) -> float:
    """Corpus BLEU on a 0-100 scale.

    Each gold entry is one reference or a list of references. Orders with no
    hypothesis n-grams in the whole corpus are left out of the geometric
    mean; an order with n-grams but zero matches counts ``epsilon`` matches.
    """
    _aligned(preds, golds)
    matches = [0] * max_order
    totals = [0] * max_order
    hyp_len = ref_len = 0
    for pred, gold in zip(preds, golds):
        refs = [gold] if isinstance(gold, str) else list(gold)
        if not refs:
            raise EmptyGold("example without references")
        hyp = normalize_answer(pred).split()
        ref_toks = [normalize_answer(r).split() for r in refs]
        hyp_len += len(hyp)
        # closest reference length, shorter wins ties
        ref_len += min((abs(len(r) - len(hyp)), len(r)) for r in ref_toks)[1]
        for n in range(1, max_order + 1):
            h = _ngrams(hyp, n)
            if not h:
                continue
            best: Counter = Counter()
            for r in ref_toks:
                best |= _ngrams(r, n)
            matches[n - 1] += sum(min(c, best[g]) for g, c in h.items())
            totals[n - 1] += sum(h.values())
    if hyp_len == 0:
        return 0.0
    logs = []
    for m, t in zip(matches, totals):
        if t == 0:
            continue
        logs.append(math.log((m if m > 0 else epsilon) / t))
    geo = math.exp(sum(logs) / len(logs))
    bp = 1.0 if hyp_len > ref_len else math.exp(1 - ref_len / hyp_len)
    return 100.0 * bp * geo


def combined_score(inform: float, success: float, bleu: float) -> float:
    """Task-completion summary: half the sum of Inform and Success, plus BLEU."""
    for name, value in (("inform", inform), ("success", success)):
        if not 0.0 <= value <= 100.0:
            raise RangeViolation(f"{name} must be a percentage in [0, 100], got {value}")
    return 0.5 * (inform + success) + bleu


METRIC_VARIANTS = {
    "acc": {"normalizer": "lower+whitespace"},
    "f1": {"average": "micro", "empty_corpus": 1.0},
    "em": {"normalizer": "lower+whitespace"},
    "jga": {"normalizer": "lower+whitespace"},
    "rouge_l": {"score": "f", "beta": ROUGE_BETA, "tokenizer": "whitespace", "aggregate": "mean"},
    "bleu4": {"max_order": BLEU_MAX_ORDER, "smoothing": "add-epsilon", "epsilon": BLEU_EPSILON, "scale": 100},
    "combined": {"formula": "0.5*(inform+success)+bleu"},
}


def score(metric: str, preds: Sequence, golds: Sequence) -> ScoreReport:
    """Score a corpus with one of the named metrics (not ``combined``)."""
    funcs = {
        "acc": accuracy,
        "f1": slot_f1,
        "em": exact_match_corpus,
        "jga": joint_goal_accuracy,
        "rouge_l": rouge_l_corpus,
        "bleu4": bleu4,
    }
    if metric not in funcs:
        raise MetricError(f"unknown metric {metric!r}")
    if not golds:
        raise EmptyInput("no examples to score")
    value = funcs[metric](preds, golds)
    return ScoreReport(metric, value, len(golds), dict(METRIC_VARIANTS[metric]))
