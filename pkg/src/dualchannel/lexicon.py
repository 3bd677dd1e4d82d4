"""Sentiment lexicon loading and lookup.

Two on-disk formats are understood:

* MPQA subjectivity clues, one clue per line as space separated ``key=value``
  pairs, e.g.::

      type=weaksubj len=1 word1=abandoned pos1=adj stemmed1=n priorpolarity=negative

* a plain ``word<TAB>positive|negative`` table.

Only single-word clues with a positive or negative prior polarity are kept.
"""

from __future__ import annotations

import enum
import logging
import os
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Mapping

logger = logging.getLogger(__name__)


class Polarity(enum.Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"

    def opposite(self) -> "Polarity":
        return Polarity.NEGATIVE if self is Polarity.POSITIVE else Polarity.POSITIVE

    @property
    def index(self) -> int:
        """Class index used by the sentiment heads (negative=0, positive=1)."""
        return 1 if self is Polarity.POSITIVE else 0

    @classmethod
    def from_index(cls, index: int) -> "Polarity":
        return cls.POSITIVE if index == 1 else cls.NEGATIVE


_POLARITY_NAMES = {"positive": Polarity.POSITIVE, "negative": Polarity.NEGATIVE}


@dataclass(frozen=True)
class SentimentLexicon:
    """Immutable lowercase word -> polarity map."""

    entries: Mapping[str, Polarity] = field(default_factory=dict)
    source_path: str = ""
    skipped: int = 0

    def __post_init__(self):
        object.__setattr__(self, "entries", MappingProxyType(dict(self.entries)))

    def polarity(self, word: str) -> Polarity | None:
        return self.entries.get(word.lower())

    def __contains__(self, word: str) -> bool:
        return word.lower() in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def __reduce__(self):
        # the read-only mapping proxy cannot be pickled; rebuild from a plain dict
        return (type(self), (dict(self.entries), self.source_path, self.skipped))

    def to_dict(self) -> dict[str, str]:
        return {w: p.value for w, p in sorted(self.entries.items())}

    @classmethod
    def from_dict(cls, mapping: Mapping[str, str], source_path: str = "") -> "SentimentLexicon":
        return cls(_collect(((w, _POLARITY_NAMES[p]) for w, p in mapping.items()), source_path),
                   source_path)


def polarity(lex: SentimentLexicon, word: str) -> Polarity | None:
    return lex.polarity(word)


def _collect(pairs: Iterable[tuple[str, Polarity]], source: str) -> dict[str, Polarity]:
    entries: dict[str, Polarity] = {}
    for word, pol in pairs:
        word = word.lower()
        prev = entries.get(word)
        if prev is None:
            entries[word] = pol
        elif prev is not pol:
            logger.warning("%s: conflicting polarity for %r, keeping %s",
                           source, word, prev.value)
    return entries


def _read_lines(path: str | os.PathLike) -> list[str]:
    if not os.path.isfile(path):
        raise FileNotFoundError(f"lexicon file not found: {path}")
    with open(path, encoding="utf-8", errors="replace") as fh:
        return fh.read().splitlines()


def _parse_clue(line: str) -> dict[str, str] | None:
    fields = {}
    for part in line.split():
        key, sep, value = part.partition("=")
        if not sep:
            return None
        fields[key] = value
    if "word1" not in fields or "priorpolarity" not in fields:
        return None
    return fields


def load_mpqa(path: str | os.PathLike) -> SentimentLexicon:
    pairs = []
    malformed = 0
    for lineno, raw in enumerate(_read_lines(path), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        clue = _parse_clue(line)
        if clue is None:
            malformed += 1
            logger.warning("%s:%d: malformed clue line skipped", path, lineno)
            continue
        if clue.get("len", "1") != "1":
            continue
        pol = _POLARITY_NAMES.get(clue["priorpolarity"].lower())
        if pol is None:
            # neutral / both / weakneg etc.
            continue
        pairs.append((clue["word1"], pol))
    if malformed:
        logger.warning("%s: %d malformed line(s) skipped", path, malformed)
    return SentimentLexicon(_collect(pairs, str(path)), str(path), malformed)


def load_tsv(path: str | os.PathLike) -> SentimentLexicon:
    pairs = []
    malformed = 0
    for lineno, raw in enumerate(_read_lines(path), 1):
        if not raw.strip() or raw.startswith("#"):
            continue
        cols = raw.rstrip("\r\n").split("\t")
        if len(cols) != 2 or not cols[0].strip():
            malformed += 1
            logger.warning("%s:%d: malformed line skipped", path, lineno)
            continue
        pol = _POLARITY_NAMES.get(cols[1].strip().lower())
        if pol is None:
            malformed += 1
            logger.warning("%s:%d: unsupported polarity %r skipped", path, lineno, cols[1])
            continue
        pairs.append((cols[0].strip(), pol))
    if malformed:
        logger.warning("%s: %d line(s) skipped", path, malformed)
    return SentimentLexicon(_collect(pairs, str(path)), str(path), malformed)


def load_lexicon(path: str | os.PathLike) -> SentimentLexicon:
    """Load either format, sniffing for MPQA ``priorpolarity=`` fields."""
    lines = _read_lines(path)
    if any("priorpolarity=" in line for line in lines[:50]):
        return load_mpqa(path)
    return load_tsv(path)
