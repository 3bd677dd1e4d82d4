"""Approximate literal/implied sentiment labels from lexicon word counts."""

from __future__ import annotations

from dataclasses import dataclass

from .lexicon import Polarity, SentimentLexicon


@dataclass(frozen=True)
class WeakLabels:
    y_s: int
    y_l: Polarity | None
    y_d: Polarity | None

    @property
    def aux_mask(self) -> bool:
        return self.y_l is not None and self.y_d is not None

    def to_json(self) -> dict:
        return {"y_s": self.y_s,
                "y_l": self.y_l.value if self.y_l else None,
                "y_d": self.y_d.value if self.y_d else None,
                "aux_mask": self.aux_mask}


def count_polarities(tokens, lex: SentimentLexicon) -> tuple[int, int]:
    """Return ``(n_pos, n_neg)`` over the full token sequence."""
    n_pos = n_neg = 0
    for tok in tokens:
        pol = lex.polarity(tok)
        if pol is Polarity.POSITIVE:
            n_pos += 1
        elif pol is Polarity.NEGATIVE:
            n_neg += 1
    return n_pos, n_neg


def weak_labels(counts: tuple[int, int], y_s: int) -> WeakLabels:
    """Majority polarity is the literal label; sarcasm flips it for the implied one.

    Ties (including no sentiment words at all) yield no auxiliary labels,
    so such examples only train the sarcasm head.
    """
    if y_s not in (0, 1):
        raise ValueError(f"sarcasm label must be 0 or 1, got {y_s!r}")
    n_pos, n_neg = counts
    if n_pos == n_neg:
        return WeakLabels(y_s, None, None)
    literal = Polarity.POSITIVE if n_pos > n_neg else Polarity.NEGATIVE
    implied = literal.opposite() if y_s == 1 else literal
    return WeakLabels(y_s, literal, implied)
