"""Review corpus ingestion: loading, filtering, domain assignment, sentences.

Turns raw review records into the unlabeled sentence pool used by the
self-training loop. Reviews are dropped when rated not useful or when their
business has no categories; each surviving review gets one representative
domain (first match against an ordered domain list); sentences are kept when
they have 10-50 words and contain at least one sentiment-lexicon word.
"""

from __future__ import annotations

import json
import logging
import random
import re
import string
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .lexicon import SentimentLexicon

log = logging.getLogger(__name__)

UNASSIGNED = "unassigned"

MIN_SENTENCE_WORDS = 10
MAX_SENTENCE_WORDS = 50

_PUNCT = string.punctuation
_TOKEN_RE = re.compile(r"\S+")

# Words that end with a period without terminating a sentence.
ABBREVIATIONS = frozenset(
    """
    mr mrs ms dr prof sr jr st vs etc e.g i.e cf inc ltd co corp no dept
    approx est min max fig vol rev gen rep sen capt sgt col maj lt ave blvd
    rd apt ph.d b.a m.a b.sc m.sc u.s u.k a.m p.m
    jan feb mar apr jun jul aug sep sept oct nov dec
    mon tue tues wed thu thurs fri sat sun
    """.split()
)


@dataclass
class Review:
    """One raw review record with its business categories."""

    id: str
    text: str
    useful_count: int
    categories: list[str]


@dataclass
class Sentence:
    """One sentence of a review, carrying the review's assigned domain."""

    text: str
    tokens: list[str]
    domain: str
    review_id: str
    index_in_review: int
    # Character offsets of each token within `text`; parallel to `tokens`.
    token_offsets: list[tuple[int, int]] = field(default_factory=list)

    @property
    def identity(self) -> tuple[str, int]:
        return (self.review_id, self.index_in_review)

    @classmethod
    def from_tokens(
        cls,
        tokens: list[str],
        domain: str = UNASSIGNED,
        review_id: str = "",
        index_in_review: int = 0,
    ) -> "Sentence":
        """Build a sentence from a token list, synthesizing text and offsets."""
        text = " ".join(tokens)
        offsets = []
        pos = 0
        for tok in tokens:
            offsets.append((pos, pos + len(tok)))
            pos += len(tok) + 1
        return cls(text, list(tokens), domain, review_id, index_in_review, offsets)


@dataclass
class IngestCounters:
    """Counted warnings produced while loading and converting records."""

    malformed: int = 0
    missing_business: int = 0

    def total(self) -> int:
        return self.malformed + self.missing_business


class CorpusError(Exception):
    pass


def tokenize_with_offsets(text: str) -> list[tuple[str, int, int]]:
    """Split on whitespace, then strip leading/trailing punctuation.

    Returns (token, start_char, end_char) triples; tokens that are pure
    punctuation are dropped. Interior punctuation (e.g. "don't") is kept.
    """
    out = []
    for m in _TOKEN_RE.finditer(text):
        chunk = m.group()
        stripped = chunk.strip(_PUNCT)
        if not stripped:
            continue
        lead = len(chunk) - len(chunk.lstrip(_PUNCT))
        start = m.start() + lead
        out.append((stripped, start, start + len(stripped)))
    return out


def tokenize(text: str) -> list[str]:
    return [tok for tok, _, _ in tokenize_with_offsets(text)]


def _is_abbreviation(text: str, period_pos: int) -> bool:
    """True when the '.' at period_pos ends an abbreviation or an initial."""
    m = re.search(r"(\S+)$", text[:period_pos])
    if not m:
        return False
    word = m.group(1).lstrip(_PUNCT).lower()
    if not word:
        return False
    if word in ABBREVIATIONS:
        return True
    # Single-letter initials ("J. Smith") and dotted acronyms ("U.S.A.").
    if re.fullmatch(r"(?:[a-z]\.)*[a-z]", word):
        return True
    return False


def split_text(text: str) -> list[str]:
    """Split text into sentence segments on terminal punctuation.

    Rule-based: a run of [.!?] followed by whitespace (or end of text) ends a
    sentence, unless the run is a lone period attached to a known
    abbreviation. Closing quotes and brackets stay with their sentence.
    Concatenating the segments (modulo whitespace) reconstructs the text.
    """
    segments = []
    start = 0
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch in ".!?":
            run_start = i
            while i < n and text[i] in ".!?":
                i += 1
            run = text[run_start:i]
            while i < n and text[i] in "\"')]}»’”":
                i += 1
            at_break = i >= n or text[i].isspace()
            blocked = run == "." and _is_abbreviation(text, run_start)
            if at_break and not blocked:
                seg = text[start:i].strip()
                if seg:
                    segments.append(seg)
                start = i
        else:
            i += 1
    tail = text[start:].strip()
    if tail:
        segments.append(tail)
    return segments


def split_sentences(review: Review, domain: str = UNASSIGNED) -> list[Sentence]:
    """Split a review into Sentence records carrying the assigned domain.

    Segments without any word token (pure punctuation) are merged into the
    preceding sentence so no review text is lost.
    """
    merged: list[str] = []
    for seg in split_text(review.text):
        if merged and not tokenize(seg):
            merged[-1] = merged[-1] + " " + seg
        else:
            merged.append(seg)

    sentences = []
    for idx, seg in enumerate(merged):
        toks = tokenize_with_offsets(seg)
        if not toks:
            continue
        sentences.append(
            Sentence(
                text=seg,
                tokens=[t for t, _, _ in toks],
                domain=domain,
                review_id=review.id,
                index_in_review=idx,
                token_offsets=[(s, e) for _, s, e in toks],
            )
        )
    return sentences


def _parse_categories(raw: object) -> list[str]:
    # The upstream data ships categories either as an array or as one
    # comma-separated string.
    if raw is None:
        return []
    if isinstance(raw, str):
        return [c.strip() for c in raw.split(",") if c.strip()]
    if isinstance(raw, list):
        return [str(c).strip() for c in raw if str(c).strip()]
    raise ValueError(f"unsupported categories value: {raw!r}")


def _load_business_categories(path: str) -> dict[str, list[str]]:
    table: dict[str, list[str]] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                table[str(rec["business_id"])] = _parse_categories(rec.get("categories"))
            except (json.JSONDecodeError, KeyError, ValueError):
                continue
    return table


def load_reviews(
    path: str,
    business_path: str | None = None,
    counters: IngestCounters | None = None,
) -> Iterator[Review]:
    """Stream Review records from a JSONL file.

    In two-file mode (business_path given) categories are joined from the
    business file by business_id. Malformed records are skipped with a
    counted warning; an unreadable file is a fatal error.
    """
    counters = counters if counters is not None else IngestCounters()
    businesses = _load_business_categories(business_path) if business_path else None
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise CorpusError(f"cannot read reviews file {path}: {exc}") from exc

    with fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                text = rec["text"]
                if not isinstance(text, str) or not text.strip():
                    raise ValueError("empty text")
                useful = int(rec["useful"])
                if useful < 0:
                    raise ValueError("negative useful count")
                if businesses is not None:
                    business_id = str(rec["business_id"])
                    if business_id in businesses:
                        categories = businesses[business_id]
                    else:
                        counters.missing_business += 1
                        categories = []
                else:
                    categories = _parse_categories(rec.get("categories"))
                review_id = str(rec.get("review_id", f"r{lineno}"))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                counters.malformed += 1
                log.warning("skipping malformed review record at line %d: %s", lineno, exc)
                continue
            yield Review(review_id, text, useful, categories)


def filter_reviews(reviews: Iterable[Review]) -> Iterator[Review]:
    """Drop reviews rated not useful (useful=0) or with no categories."""
    for review in reviews:
        if review.useful_count == 0:
            continue
        if not review.categories:
            continue
        yield review


def assign_domain(review: Review, ordered_domains: list[str]) -> str:
    """First domain in the ordered list matching one of the review's categories.

    Matching is case-insensitive exact string equality; the list order
    encodes corpus popularity, so the first match is the representative
    domain. Returns UNASSIGNED when nothing matches.
    """
    if not ordered_domains:
        raise ValueError("ordered_domains must be non-empty")
    categories = {c.casefold() for c in review.categories}
    for domain in ordered_domains:
        if domain.casefold() in categories:
            return domain
    return UNASSIGNED


def filter_sentences(
    sentences: Iterable[Sentence], lexicon: SentimentLexicon
) -> Iterator[Sentence]:
    """Keep sentences with 10-50 words (inclusive) and >=1 lexicon word."""
    for sentence in sentences:
        if not MIN_SENTENCE_WORDS <= len(sentence.tokens) <= MAX_SENTENCE_WORDS:
            continue
        if not lexicon.contains_sentiment_word(sentence.tokens):
            continue
        yield sentence


def domain_histogram(sentences: Iterable[Sentence]) -> Counter:
    counts: Counter = Counter()
    for sentence in sentences:
        counts[sentence.domain] += 1
    return counts


def load_domain_list(path: str) -> list[str]:
    """Load the ordered domain list: one name per line, '#' comments."""
    domains = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            domains.append(line)
    if not domains:
        raise CorpusError(f"domain list {path} is empty")
    return domains


def build_sentence_pool(
    reviews: Iterable[Review],
    ordered_domains: list[str],
    lexicon: SentimentLexicon,
    max_sentences: int | None = None,
    seed: int = 0,
) -> list[Sentence]:
    """Run the full review -> sentence extraction.

    Filters reviews, assigns domains (dropping unassigned reviews), splits
    and filters sentences, then caps the pool at max_sentences by sampling
    whole reviews in seeded uniform order.
    """
    per_review: list[list[Sentence]] = []
    for review in filter_reviews(reviews):
        domain = assign_domain(review, ordered_domains)
        if domain == UNASSIGNED:
            continue
        kept = list(filter_sentences(split_sentences(review, domain), lexicon))
        if kept:
            per_review.append(kept)

    if max_sentences is None:
        return [s for group in per_review for s in group]

    rng = random.Random(seed)
    order = list(range(len(per_review)))
    rng.shuffle(order)
    pool: list[Sentence] = []
    for idx in order:
        group = per_review[idx]
        if len(pool) + len(group) > max_sentences:
            break
        pool.extend(group)
    return pool
