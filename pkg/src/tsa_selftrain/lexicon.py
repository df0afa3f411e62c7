"""Sentiment word lexicon with confidence-threshold gating.

The lexicon file is two-column TSV (`word<TAB>score`), UTF-8, one entry per
line, with '#'-prefixed comment lines ignored. Scores live in [-1, 1]; only
entries whose absolute score exceeds the threshold are retained.
"""

from __future__ import annotations

import string
from dataclasses import dataclass, field
from typing import Iterable

DEFAULT_THRESHOLD = 0.7

_STRIP = string.punctuation


class LexiconError(Exception):
    pass


@dataclass
class SentimentLexicon:
    """Case-folded word -> score map where every |score| > threshold."""

    entries: dict[str, float] = field(default_factory=dict)
    threshold: float = DEFAULT_THRESHOLD

    def __contains__(self, word: str) -> bool:
        return word.casefold().strip(_STRIP) in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def score(self, word: str) -> float | None:
        return self.entries.get(word.casefold().strip(_STRIP))

    def contains_sentiment_word(self, tokens: Iterable[str]) -> bool:
        """True iff any case-folded, punctuation-stripped token is an entry."""
        return any(tok.casefold().strip(_STRIP) in self.entries for tok in tokens)


def load_lexicon(path: str, threshold: float = DEFAULT_THRESHOLD) -> SentimentLexicon:
    """Load a TSV lexicon, keeping entries with |score| > threshold.

    Duplicate words keep the max-|score| entry. A non-numeric or
    out-of-range score is a fatal error naming the offending row.
    """
    if not 0 < threshold <= 1:
        raise LexiconError(f"threshold must be in (0, 1], got {threshold}")
    entries: dict[str, float] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise LexiconError(f"{path}:{lineno}: expected 'word<TAB>score'")
            word, raw_score = parts[0].strip(), parts[1].strip()
            try:
                score = float(raw_score)
            except ValueError:
                raise LexiconError(f"{path}:{lineno}: non-numeric score {raw_score!r}") from None
            if not -1.0 <= score <= 1.0:
                raise LexiconError(f"{path}:{lineno}: score {score} outside [-1, 1]")
            if abs(score) <= threshold:
                continue
            word = word.casefold()
            if word not in entries or abs(score) > abs(entries[word]):
                entries[word] = score
    if not entries:
        raise LexiconError(f"no lexicon entries survive threshold {threshold} in {path}")
    return SentimentLexicon(entries=entries, threshold=threshold)


def save_lexicon(lexicon: SentimentLexicon, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for word, score in sorted(lexicon.entries.items()):
            fh.write(f"{word}\t{score}\n")
