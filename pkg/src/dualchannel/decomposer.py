"""Tokenisation and the literal/implied split of a text."""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass

from .lexicon import SentimentLexicon


def _is_punct(ch: str) -> bool:
    # '#' and '@' stay attached so hashtags and mentions survive as one token
    return unicodedata.category(ch).startswith("P") and ch not in "#@"


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, peel leading/trailing punctuation.

    Each peeled punctuation character becomes its own token, so
    ``"Final exam!"`` gives ``["final", "exam", "!"]``.  Interior
    punctuation (``don't``, ``u.s.``) is left in place.
    """
    tokens: list[str] = []
    for chunk in text.lower().split():
        start, end = 0, len(chunk)
        while start < end and _is_punct(chunk[start]):
            start += 1
        while end > start and _is_punct(chunk[end - 1]):
            end -= 1
        tokens.extend(chunk[:start])
        if start < end:
            tokens.append(chunk[start:end])
        tokens.extend(chunk[end:])
    return tokens


@dataclass(frozen=True)
class DecomposedExample:
    w_t: tuple[str, ...]
    w_l: tuple[str, ...]
    w_d: tuple[str, ...]
    fallback_used: bool

    def to_json(self) -> dict:
        return {"tokens": list(self.w_t), "w_l": list(self.w_l),
                "w_d": list(self.w_d), "fallback_used": self.fallback_used}


def decompose(tokens, lex: SentimentLexicon) -> DecomposedExample:
    """Route sentiment words to the literal channel and the rest to the implied one.

    With no lexicon hit both channels get the whole text.
    """
    w_t = tuple(tokens)
    w_l = tuple(t for t in w_t if lex.polarity(t) is not None)
    if not w_l:
        return DecomposedExample(w_t, w_t, w_t, True)
    w_d = tuple(t for t in w_t if lex.polarity(t) is None)
    return DecomposedExample(w_t, w_l, w_d, False)


def decompose_text(text: str, lex: SentimentLexicon) -> DecomposedExample:
    return decompose(tokenize(text), lex)
