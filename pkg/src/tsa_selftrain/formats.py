"""Canonical newline-delimited JSON file formats.

Labeled records: {id, text, domain, targets: [{start_char, end_char,
polarity: "positive"|"negative", confidence?}], provenance?}. Gold char
offsets are converted to word-token spans at load time, snapping mid-token
boundaries outward with a counted warning. Sentence-pool records: {text,
tokens, domain, review_id, index}.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Iterable, Iterator

from .corpus import Sentence, tokenize_with_offsets
from .protocol import POLARITY_TO_WIRE, WIRE_TO_POLARITY
from .tagging import LabeledSentence, TargetSpan, char_span_to_token_span

log = logging.getLogger(__name__)


class FormatError(Exception):
    pass


@dataclass
class LoadStats:
    snapped_spans: int = 0
    dropped_spans: int = 0


def sentence_to_record(sentence: Sentence) -> dict:
    return {
        "text": sentence.text,
        "tokens": sentence.tokens,
        "domain": sentence.domain,
        "review_id": sentence.review_id,
        "index": sentence.index_in_review,
    }


def record_to_sentence(rec: dict, fallback_id: str = "") -> Sentence:
    text = rec["text"]
    toks = tokenize_with_offsets(text)
    tokens = rec.get("tokens") or [t for t, _, _ in toks]
    offsets = [(s, e) for _, s, e in toks] if len(toks) == len(tokens) else []
    review_id = rec.get("review_id") or rec.get("id") or fallback_id
    return Sentence(
        text=text,
        tokens=list(tokens),
        domain=rec.get("domain", "unassigned"),
        review_id=str(review_id),
        index_in_review=int(rec.get("index", 0)),
        token_offsets=offsets,
    )


def write_sentences(sentences: Iterable[Sentence], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for sentence in sentences:
            fh.write(json.dumps(sentence_to_record(sentence), sort_keys=True) + "\n")


def read_sentences(path: str) -> Iterator[Sentence]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield record_to_sentence(json.loads(line), fallback_id=f"line{lineno}")
            except (json.JSONDecodeError, KeyError) as exc:
                raise FormatError(f"{path}:{lineno}: bad sentence record: {exc}") from exc


def sentence_id(sentence: Sentence) -> str:
    return f"{sentence.review_id}:{sentence.index_in_review}"


def labeled_to_record(labeled: LabeledSentence, with_confidence: bool = False) -> dict:
    sentence = labeled.sentence
    targets = []
    for span in labeled.gold_spans:
        target: dict = {"polarity": POLARITY_TO_WIRE[span.polarity]}
        if sentence.token_offsets:
            target["start_char"] = sentence.token_offsets[span.start][0]
            target["end_char"] = sentence.token_offsets[span.end - 1][1]
        target["start"] = span.start
        target["end"] = span.end
        if with_confidence:
            target["confidence"] = span.confidence
        targets.append(target)
    return {
        "id": sentence_id(sentence),
        "text": sentence.text,
        "domain": sentence.domain,
        "review_id": sentence.review_id,
        "index": sentence.index_in_review,
        "targets": targets,
        "provenance": labeled.provenance,
    }


def record_to_labeled(
    rec: dict, stats: LoadStats | None = None, fallback_id: str = ""
) -> LabeledSentence:
    sentence = record_to_sentence(rec, fallback_id)
    spans = []
    for target in rec.get("targets", []):
        polarity = WIRE_TO_POLARITY.get(target.get("polarity"))
        if polarity is None:
            raise FormatError(f"unknown polarity {target.get('polarity')!r}")
        confidence = float(target.get("confidence", 1.0))
        if "start" in target and "end" in target:
            start, end = int(target["start"]), int(target["end"])
        else:
            converted = char_span_to_token_span(
                int(target["start_char"]), int(target["end_char"]), sentence.token_offsets
            )
            if converted is None:
                if stats is not None:
                    stats.dropped_spans += 1
                log.warning("dropping span overlapping no token in %r", sentence.text[:60])
                continue
            start, end, snapped = converted
            if snapped and stats is not None:
                stats.snapped_spans += 1
        surface = " ".join(sentence.tokens[start:end])
        spans.append(TargetSpan(start, end, polarity, confidence, surface))
    return LabeledSentence(
        sentence=sentence,
        gold_spans=spans,
        provenance=rec.get("provenance", "labeled"),
    )


def write_labeled(
    labeled: Iterable[LabeledSentence], path: str, with_confidence: bool = False
) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for item in labeled:
            fh.write(json.dumps(labeled_to_record(item, with_confidence), sort_keys=True) + "\n")


def read_labeled(path: str, stats: LoadStats | None = None) -> list[LabeledSentence]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(
                    record_to_labeled(json.loads(line), stats, fallback_id=f"line{lineno}")
                )
            except (json.JSONDecodeError, KeyError, ValueError, FormatError) as exc:
                raise FormatError(f"{path}:{lineno}: bad labeled record: {exc}") from exc
    return out


def labeled_as_gold(
    labeled: list[LabeledSentence],
) -> tuple[list[tuple[str, str, list[TargetSpan]]], dict[str, str]]:
    """(id, domain, spans) gold records plus id -> text, for evaluation."""
    gold = []
    texts = {}
    for item in labeled:
        gid = sentence_id(item.sentence)
        if gid in texts:
            raise FormatError(f"duplicate sentence identity {gid!r} in gold data")
        gold.append((gid, item.sentence.domain, item.gold_spans))
        texts[gid] = item.sentence.text
    return gold, texts


def predictions_as_map(
    predictions: list[LabeledSentence],
) -> dict[str, list[TargetSpan]]:
    out: dict[str, list[TargetSpan]] = {}
    for p in predictions:
        gid = sentence_id(p.sentence)
        if gid in out:
            raise FormatError(f"duplicate sentence identity {gid!r} in predictions")
        out[gid] = p.gold_spans
    return out
