"""Text normalization shared by the keyword index, intent extraction and the toy embedder."""

from __future__ import annotations

import re

# Anything that is not a word character, whitespace or an apostrophe inside a word.
_PUNCT_RE = re.compile(r"[^\w\s]+", re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Lowercase, strip punctuation and split on whitespace.

    >>> tokenize("Coffee, Instagram!")
    ['coffee', 'instagram']
    """
    if not text:
        return []
    return _PUNCT_RE.sub(" ", text.lower().replace("'", "")).split()


def normalize(text: str) -> str:
    """Canonical single-spaced form of ``text``; used as a surface-form key."""
    return " ".join(tokenize(text))
