"""Seeded generators of valid unified records for property and acceptance tests."""

from __future__ import annotations

import random

from dialunify.knowledge import (
    NO_KNOWLEDGE,
    PairsKnowledge,
    SchemaKnowledge,
    TextKnowledge,
    TriplesKnowledge,
)
from dialunify.schema import TASK_FORMATS, Split, TaskToken, Turn, UnifiedRecord, linearize_dialogue

WORDS = [
    "book", "a", "table", "for", "two", "cheap", "north", "hotel", "train", "to",
    "café", "naïve", "Straße", "東京", "Ünïcode", "price", "area", "please", "thanks",
    "Paris", "Monday", "42", "3.5", "ok", "yes", "no", "what", "where",
]
NOISE = ["[sep]", "[know]", "[dial]", "[se[sep]p]", "=", ";", "|", "(", ")", ",", ":", "é", "?", "!"]
SPACES = [" ", " ", " ", "  ", "\t", "\n", "  "]
SPEAKERS = ["user", "system", "Ross", "agent 2", "Dr. Who"]


def random_text(rng: random.Random, noisy: bool = True, max_words: int = 8) -> str:
    n = rng.randint(1, max_words)
    tokens = [rng.choice(WORDS) for _ in range(n)]
    if noisy:
        for _ in range(rng.randint(0, 3)):
            tokens.insert(rng.randint(0, len(tokens)), rng.choice(NOISE))
    out = rng.choice(["", " "])
    for t in tokens:
        out += t + rng.choice(SPACES)
    return out


def random_definition(rng: random.Random) -> str:
    words = " ".join(rng.choice(WORDS[:20]) for _ in range(rng.randint(1, 6)))
    return words.capitalize() + "."


def random_turns(rng: random.Random, n: int) -> tuple[Turn, ...]:
    return tuple(Turn(rng.choice(SPEAKERS), random_text(rng)) for _ in range(n))


def random_knowledge(rng: random.Random, category: str, task: TaskToken):
    if category == "none":
        return NO_KNOWLEDGE
    if category == "unstructured":
        return TextKnowledge(random_text(rng))
    if category == "semi":
        pairs = []
        for _ in range(rng.randint(1, 4)):
            key = "entity" if task is TaskToken.CLO else rng.choice(WORDS) + "." + random_text(rng, max_words=2)
            pairs.append((key, random_text(rng, max_words=3)))
        return PairsKnowledge(tuple(pairs))
    if rng.random() < 0.5:
        names = rng.sample(WORDS, rng.randint(1, 4))
        tables = tuple(
            (name, tuple(random_text(rng, max_words=2) for _ in range(rng.randint(0, 3)))) for name in names
        )
        return SchemaKnowledge(tables)
    triples = tuple(
        tuple(random_text(rng, max_words=3) for _ in range(3)) for _ in range(rng.randint(1, 3))
    )
    return TriplesKnowledge(triples)


def n_turns(rng: random.Random, shape: str) -> int:
    return {"none": 0, "single": 1, "multi": rng.randint(1, 5), "multi2": rng.randint(2, 5)}[shape]


def random_record(rng: random.Random, task: TaskToken | None = None) -> UnifiedRecord:
    task = task or rng.choice(list(TaskToken))
    shape, category = TASK_FORMATS[task]
    dialogue = random_turns(rng, n_turns(rng, shape))
    target = random_text(rng)
    if task.supervised and dialogue and target.strip() == linearize_dialogue(dialogue):
        target = "different " + target
    return UnifiedRecord(
        task=task,
        dataset=rng.choice(["mwoz", "banking77", "persona chat", "spider", "dd"]),
        split=rng.choice(list(Split)),
        dialogue=dialogue,
        knowledge=random_knowledge(rng, category, task),
        task_definition=random_definition(rng),
        target=target,
        meta={"id": rng.randint(0, 10**6), "src": rng.choice(["a", "b", "ü"])},
    )


def random_dialogue_record(rng: random.Random, min_turns: int = 1) -> UnifiedRecord:
    """Train-split [chat] record with plausible entity-bearing turns."""
    templates = [
        "I want to fly to New York on Friday",
        "the table costs 42 dollars",
        "meet Anna Smith at 5",
        "can we go to Paris in June",
        "hello there",
        "my friend Bob Lee lives in Berlin",
        "the train leaves at 10:30 from Cambridge",
        "no thanks that is all",
    ]
    n = rng.randint(min_turns, 6)
    turns = tuple(
        Turn("user" if i % 2 == 0 else "system", rng.choice(templates) + " " + random_text(rng, noisy=False, max_words=3))
        for i in range(n)
    )
    return UnifiedRecord(
        task=TaskToken.CHAT,
        dataset=rng.choice(["persona", "dd"]),
        split=Split.TRAIN,
        dialogue=turns,
        knowledge=TextKnowledge("likes tea"),
        task_definition="Reply to the user.",
        target="sure " + random_text(rng, noisy=False, max_words=3),
    )
