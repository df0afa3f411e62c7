"""IO tagging scheme: label encoding, sub-word merging, span decoding.

Tokens carry one of three labels: POS, NEG (inside a sentiment target) or
NONE. Maximal runs of the same sentiment label form one target span; there
are no begin/end markers, so two adjacent same-polarity targets are
unrepresentable and rejected at encode time.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .corpus import Sentence

log = logging.getLogger(__name__)


class Label(str, Enum):
    POS = "POS"
    NEG = "NEG"
    NONE = "NONE"


# Distribution vectors are ordered (p_pos, p_neg, p_none) throughout.
CLASS_ORDER = (Label.POS, Label.NEG, Label.NONE)
CLASS_INDEX = {label: i for i, label in enumerate(CLASS_ORDER)}

# Tie-break priority on exact probability ties: NONE > POS > NEG.
_TIE_PRIORITY = {Label.NONE: 2, Label.POS: 1, Label.NEG: 0}


class TaggingError(Exception):
    pass


@dataclass
class TokenDistribution:
    """Probabilities over the three token labels; sums to 1 within 1e-6."""

    p_pos: float
    p_neg: float
    p_none: float

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.p_pos, self.p_neg, self.p_none)

    def argmax(self) -> Label:
        return _argmax_row(self.as_tuple())

    def validate(self) -> None:
        total = self.p_pos + self.p_neg + self.p_none
        if abs(total - 1.0) > 1e-6:
            raise TaggingError(f"distribution sums to {total}, expected 1")

    @classmethod
    def one_hot(cls, label: Label) -> "TokenDistribution":
        probs = [0.0, 0.0, 0.0]
        probs[CLASS_INDEX[label]] = 1.0
        return cls(*probs)


def _argmax_row(row: Sequence[float]) -> Label:
    best = max(
        CLASS_ORDER,
        key=lambda lab: (row[CLASS_INDEX[lab]], _TIE_PRIORITY[lab]),
    )
    return best


@dataclass
class TargetSpan:
    """A predicted or gold sentiment target over [start, end) word tokens."""

    start: int
    end: int
    polarity: Label
    confidence: float = 1.0
    surface: str = ""

    def __post_init__(self):
        if self.polarity == Label.NONE:
            raise TaggingError("span polarity must be POS or NEG")
        if not 0 <= self.start < self.end:
            raise TaggingError(f"invalid span bounds [{self.start}, {self.end})")

    @property
    def key(self) -> tuple[int, int, Label]:
        return (self.start, self.end, self.polarity)


@dataclass
class LabeledSentence:
    """A sentence with gold target spans (confidence unused, set to 1)."""

    sentence: Sentence
    gold_spans: list[TargetSpan] = field(default_factory=list)
    provenance: str = "labeled"

    @property
    def tokens(self) -> list[str]:
        return self.sentence.tokens


@dataclass
class PieceAlignment:
    """Sub-word piece distributions plus their piece -> word mapping."""

    piece_distributions: list[TokenDistribution]
    piece_to_word: list[int]

    def validate(self, n_words: int | None = None) -> None:
        if len(self.piece_distributions) != len(self.piece_to_word):
            raise TaggingError("piece distributions and mapping lengths differ")
        if any(b < a for a, b in zip(self.piece_to_word, self.piece_to_word[1:])):
            raise TaggingError("piece_to_word must be non-decreasing")
        covered = set(self.piece_to_word)
        expected = max(self.piece_to_word) + 1 if self.piece_to_word else 0
        if n_words is not None:
            expected = n_words
        if covered != set(range(expected)):
            raise TaggingError("piece_to_word must cover every word index")


def encode_labels(labeled: LabeledSentence) -> list[Label]:
    """Per-token IO labels for a sentence's gold spans.

    Overlapping spans and adjacent same-polarity spans cannot be expressed
    with IO labels and raise TaggingError.
    """
    n = len(labeled.tokens)
    spans = sorted(labeled.gold_spans, key=lambda s: s.start)
    labels = [Label.NONE] * n
    prev = None
    for span in spans:
        if span.end > n:
            raise TaggingError(f"span [{span.start}, {span.end}) exceeds {n} tokens")
        if prev is not None:
            if span.start < prev.end:
                raise TaggingError(
                    f"overlapping spans [{prev.start},{prev.end}) and "
                    f"[{span.start},{span.end})"
                )
            if span.start == prev.end and span.polarity == prev.polarity:
                raise TaggingError(
                    "adjacent same-polarity spans are unrepresentable with IO labels"
                )
        for i in range(span.start, span.end):
            labels[i] = span.polarity
        prev = span
    return labels


def merge_word_pieces(alignment: PieceAlignment) -> list[TokenDistribution]:
    """Collapse piece-level distributions to one distribution per word.

    A word takes the distribution of its first piece whose argmax is a
    sentiment label; if no piece carries sentiment, it takes the first
    piece's distribution.
    """
    if not alignment.piece_to_word:
        return []
    alignment.validate()
    n_words = max(alignment.piece_to_word) + 1
    merged: list[TokenDistribution | None] = [None] * n_words
    decided: list[bool] = [False] * n_words
    for dist, word in zip(alignment.piece_distributions, alignment.piece_to_word):
        if merged[word] is None:
            merged[word] = dist
        if not decided[word] and dist.argmax() != Label.NONE:
            merged[word] = dist
            decided[word] = True
    return [d for d in merged if d is not None]


def _to_prob_array(
    distributions: Sequence[TokenDistribution] | np.ndarray,
) -> np.ndarray:
    if isinstance(distributions, np.ndarray):
        return distributions
    return np.array([d.as_tuple() for d in distributions], dtype=np.float64)


def decode_spans(
    distributions: Sequence[TokenDistribution] | np.ndarray,
    tokens: Sequence[str] | None = None,
) -> list[TargetSpan]:
    """Decode word-level distributions into target spans.

    Each word takes its argmax label (ties resolved NONE > POS > NEG);
    maximal runs of the same sentiment label become one span whose
    confidence is the minimum of that label's probability over the run.
    """
    probs = _to_prob_array(distributions)
    if probs.size == 0:
        return []
    labels = [_argmax_row(row) for row in probs]
    spans: list[TargetSpan] = []
    i = 0
    n = len(labels)
    while i < n:
        label = labels[i]
        if label == Label.NONE:
            i += 1
            continue
        j = i
        while j < n and labels[j] == label:
            j += 1
        confidence = float(probs[i:j, CLASS_INDEX[label]].min())
        surface = " ".join(tokens[i:j]) if tokens is not None else ""
        spans.append(TargetSpan(i, j, label, confidence, surface))
        i = j
    return spans


def argmax_labels(
    distributions: Sequence[TokenDistribution] | np.ndarray,
) -> list[Label]:
    """Per-token argmax labels under the NONE > POS > NEG tie-break."""
    return [_argmax_row(row) for row in _to_prob_array(distributions)]


def predict_spans(model, sentences: list[Sentence]) -> list[list[TargetSpan]]:
    """Decode a model's word-level distributions into spans per sentence.

    Works with any model exposing distributions(sentences); external models
    are expected to have merged piece-level output already.
    """
    return [
        decode_spans(dist, sentence.tokens)
        for dist, sentence in zip(model.distributions(sentences), sentences)
    ]


def token_label_counts(
    predicted: Sequence[Label], gold: Sequence[Label]
) -> tuple[int, int, int]:
    """Micro token-level (tp, fp, fn) with POS/NEG as the positive classes."""
    if len(predicted) != len(gold):
        raise TaggingError("predicted and gold label sequences differ in length")
    tp = fp = fn = 0
    for p, g in zip(predicted, gold):
        if p == g:
            if p != Label.NONE:
                tp += 1
        else:
            if p != Label.NONE:
                fp += 1
            if g != Label.NONE:
                fn += 1
    return tp, fp, fn


def char_span_to_token_span(
    start_char: int,
    end_char: int,
    token_offsets: Sequence[tuple[int, int]],
) -> tuple[int, int, bool] | None:
    """Convert a character-offset span to word-token indices.

    Boundaries falling mid-token are snapped outward to token boundaries;
    the returned flag says whether snapping happened. Returns None when the
    span overlaps no token.
    """
    start_tok = None
    end_tok = None
    for i, (ts, te) in enumerate(token_offsets):
        if te > start_char and ts < end_char:
            if start_tok is None:
                start_tok = i
            end_tok = i + 1
    if start_tok is None or end_tok is None:
        return None
    snapped = (
        token_offsets[start_tok][0] != start_char
        or token_offsets[end_tok - 1][1] != end_char
    )
    return start_tok, end_tok, snapped
