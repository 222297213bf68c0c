"""Payload text normalization shared by every record field."""

from __future__ import annotations

import unicodedata

KNOW_MARKER = "[know]"
DIAL_MARKER = "[dial]"
SEP_MARKER = "[sep]"
MASK_TOKEN = "[mask]"

RESERVED_MARKERS = (KNOW_MARKER, DIAL_MARKER, SEP_MARKER)


def _strip_markers(text: str) -> str:
    # removing one marker can splice a new one together, e.g. "[se[sep]p]"
    while True:
        before = text
        for marker in RESERVED_MARKERS:
            if marker in text:
                text = text.replace(marker, " ")
        if text == before:
            return text


def collapse_whitespace(text: str) -> str:
    return " ".join(text.split())


def normalize_text(text: str, *, strip_markers: bool = True) -> str:
    """NFC-normalize, optionally drop segment markers, and collapse whitespace.

    The result never contains a raw newline and, with ``strip_markers``,
    never contains ``[know]``, ``[dial]`` or ``[sep]``.
    """
    if text.isascii():
        if not (strip_markers and "[" in text):
            return " ".join(text.split())
    else:
        text = unicodedata.normalize("NFC", text)
    if strip_markers and "[" in text:
        text = _strip_markers(text)
    text = " ".join(text.split())
    if not text.isascii() and not unicodedata.is_normalized("NFC", text):
        # marker removal can expose a combining sequence
        return normalize_text(unicodedata.normalize("NFC", text), strip_markers=strip_markers)
    return text


def drop_tokens(text: str, banned: frozenset[str]) -> str:
    """Remove whitespace-delimited tokens that equal a separator symbol."""
    parts = text.split(" ")
    if not banned.intersection(parts):
        return text
    return " ".join(p for p in parts if p not in banned)
