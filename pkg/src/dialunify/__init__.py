"""Compile heterogeneous dialogue datasets into one text-to-text corpus."""

__version__ = "0.1.0"

from .knowledge import (
    NO_KNOWLEDGE,
    NoKnowledge,
    PairsKnowledge,
    SchemaKnowledge,
    TextKnowledge,
    TriplesKnowledge,
)
from .schema import (
    Split,
    TaskToken,
    TemplateConfig,
    Turn,
    UnifiedRecord,
    delinearize,
    linearize_input,
    validate_record,
)

__all__ = [
    "NO_KNOWLEDGE",
    "NoKnowledge",
    "PairsKnowledge",
    "SchemaKnowledge",
    "Split",
    "TaskToken",
    "TemplateConfig",
    "TextKnowledge",
    "TriplesKnowledge",
    "Turn",
    "UnifiedRecord",
    "delinearize",
    "linearize_input",
    "validate_record",
]
