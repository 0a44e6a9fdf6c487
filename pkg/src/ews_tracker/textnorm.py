"""Shared text normalization: the index tokenizer and the evidence-matching
normal form."""

from __future__ import annotations

import re

# Maximal runs of Unicode letters/digits; underscore is a separator.
_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)

_PUNCT_RE = re.compile(r"[^\w\s]|_", re.UNICODE)
_WS_RE = re.compile(r"\s+")


def tokenize(text: str) -> list[str]:
    """Lowercase and split on any non-alphanumeric run. No stemming, no
    stopwords; empty tokens are dropped."""
    return _TOKEN_RE.findall(text.lower())


def normalize_match_text(text: str) -> str:
    """Normal form for evidence matching: lowercase, punctuation to spaces,
    whitespace collapsed."""
    text = _PUNCT_RE.sub(" ", text.lower())
    return _WS_RE.sub(" ", text).strip()
