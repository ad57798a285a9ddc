"""Shared text normalisation used by entropy and similarity."""

from __future__ import annotations

import unicodedata


def normalize(text: str) -> str:
    """Lowercase and drop every Unicode punctuation character."""
    return "".join(
        ch for ch in text.lower() if not unicodedata.category(ch).startswith("P")
    )


def tokenize(text: str) -> list[str]:
    return normalize(text).split()
