"""Deterministic synthetic multi-domain review corpora with planted targets.

Sentences follow two templates: the sentiment word directly precedes the
target ("... tasty veldron ..."), or the target appears early and the
sentiment word closes the sentence ("... veldron ... was tasty"). Target
words are domain-specific and carry a fixed polarity; sentiment and
background vocabularies are shared across domains, which is what lets a
model trained on two domains partially generalize and what self-training
can then amplify. A noise parameter swaps sentiment words for out-of-lexicon
variants to create recall headroom.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field

from .corpus import Sentence, tokenize_with_offsets
from .lexicon import SentimentLexicon
from .tagging import Label, LabeledSentence, TargetSpan

DEFAULT_DOMAINS = ["cafes", "phones", "hotels", "autos", "films", "parks"]

_CONSONANTS = "bcdfglmnprstvz"
_VOWELS = "aeiou"


class SynthError(Exception):
    pass


@dataclass
class SynthSpec:
    domains: list[str] = field(default_factory=lambda: list(DEFAULT_DOMAINS))
    labeled_domains: list[str] | None = None  # default: first two domains
    labeled_size: int = 500
    pool_size: int = 20000
    test_per_domain: int = 300
    targets_per_domain: int = 24
    sentiment_words_per_polarity: int = 30
    background_words: int = 120
    target_density: float = 0.5
    adjacent_fraction: float = 0.5
    noise: float = 0.3
    min_words: int = 10
    max_words: int = 16
    seed: int = 0
    # Explicit vocabularies override the generated ones.
    domain_targets: dict[str, list[str]] | None = None
    positive_words: dict[str, float] | None = None
    negative_words: dict[str, float] | None = None
    background: list[str] | None = None

    def __post_init__(self):
        if self.labeled_domains is None:
            self.labeled_domains = self.domains[:2]
        unknown = set(self.labeled_domains) - set(self.domains)
        if unknown:
            raise SynthError(f"labeled_domains not in domains: {sorted(unknown)}")
        for name, value in [
            ("labeled_size", self.labeled_size),
            ("pool_size", self.pool_size),
            ("test_per_domain", self.test_per_domain),
            ("targets_per_domain", self.targets_per_domain),
        ]:
            if value <= 0:
                raise SynthError(f"{name} must be positive, got {value}")
        if self.min_words < 6 or self.max_words < self.min_words:
            raise SynthError("need 6 <= min_words <= max_words")

    @classmethod
    def from_json(cls, path: str) -> "SynthSpec":
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        known = set(cls.__dataclass_fields__)
        bad = set(data) - known
        if bad:
            raise SynthError(f"unknown synth spec fields: {sorted(bad)}")
        return cls(**data)


@dataclass
class SynthCorpus:
    labeled: list[LabeledSentence]
    pool: list[Sentence]
    test_sets: dict[str, list[LabeledSentence]]
    lexicon: SentimentLexicon
    # target word -> polarity, for diagnostics
    target_polarity: dict[str, Label] = field(default_factory=dict)


def _nonsense_words(rng: random.Random, count: int, used: set[str]) -> list[str]:
    words = []
    while len(words) < count:
        n_syllables = rng.randint(2, 3)
        word = "".join(
            rng.choice(_CONSONANTS) + rng.choice(_VOWELS) for _ in range(n_syllables)
        )
        if rng.random() < 0.5:
            word += rng.choice(_CONSONANTS)
        if word in used:
            continue
        used.add(word)
        words.append(word)
    return words


def _check_disjoint(groups: dict[str, list[str]]) -> None:
    seen: dict[str, str] = {}
    for role, words in groups.items():
        for word in words:
            if word in seen:
                raise SynthError(f"vocabulary collision: {word!r} in {seen[word]} and {role}")
            seen[word] = role


@dataclass
class _Vocab:
    targets: dict[str, list[str]]  # domain -> target words
    target_polarity: dict[str, Label]
    positive: dict[str, float]
    negative: dict[str, float]
    background: list[str]


def _build_vocab(spec: SynthSpec) -> _Vocab:
    rng = random.Random(spec.seed)
    used: set[str] = set()

    if spec.domain_targets is not None:
        targets = {d: list(ws) for d, ws in spec.domain_targets.items()}
        if sorted(targets) != sorted(spec.domains):
            raise SynthError("domain_targets must cover exactly the configured domains")
    else:
        targets = {d: _nonsense_words(rng, spec.targets_per_domain, used) for d in spec.domains}

    if spec.positive_words is not None:
        positive = dict(spec.positive_words)
    else:
        positive = {
            w: round(rng.uniform(0.75, 0.98), 3)
            for w in _nonsense_words(rng, spec.sentiment_words_per_polarity, used)
        }
    if spec.negative_words is not None:
        negative = dict(spec.negative_words)
    else:
        negative = {
            w: round(-rng.uniform(0.75, 0.98), 3)
            for w in _nonsense_words(rng, spec.sentiment_words_per_polarity, used)
        }
    background = (
        list(spec.background)
        if spec.background is not None
        else _nonsense_words(rng, spec.background_words, used)
    )

    _check_disjoint(
        {
            **{f"targets[{d}]": ws for d, ws in targets.items()},
            "positive": list(positive),
            "negative": list(negative),
            "background": background,
        }
    )

    target_polarity = {}
    for words in targets.values():
        half = len(words) // 2
        for i, word in enumerate(words):
            target_polarity[word] = Label.POS if i < half else Label.NEG
    return _Vocab(targets, target_polarity, positive, negative, background)


def _flip(word: str) -> str:
    # Out-of-lexicon "synonym"; generated words never end in -ish.
    return word + "ish"


def _make_sentence(
    rng: random.Random,
    vocab: _Vocab,
    domain: str,
    spec: SynthSpec,
    review_id: str,
) -> tuple[Sentence, list[TargetSpan]]:
    length = rng.randint(spec.min_words, spec.max_words)
    bg = vocab.background
    has_target = rng.random() < spec.target_density

    if not has_target:
        words = [rng.choice(bg) for _ in range(length - 1)]
        polarity = Label.POS if rng.random() < 0.5 else Label.NEG
        pool = vocab.positive if polarity == Label.POS else vocab.negative
        words.append(rng.choice(sorted(pool)))
        span_at = None
        span_polarity = None
    else:
        target = rng.choice(vocab.targets[domain])
        span_polarity = vocab.target_polarity[target]
        pool = vocab.positive if span_polarity == Label.POS else vocab.negative
        sentiment = rng.choice(sorted(pool))
        if rng.random() < spec.noise:
            sentiment = _flip(sentiment)
        if rng.random() < spec.adjacent_fraction:
            # sentiment word immediately before the target
            k = rng.randint(1, length - 3)
            m = length - 2 - k
            words = (
                [rng.choice(bg) for _ in range(k)]
                + [sentiment, target]
                + [rng.choice(bg) for _ in range(m)]
            )
            span_at = k + 1
        else:
            # target early, sentiment word closes the sentence
            k = rng.randint(1, length - 4)
            j = length - k - 2
            words = (
                [rng.choice(bg) for _ in range(k)]
                + [target]
                + [rng.choice(bg) for _ in range(j)]
                + [sentiment]
            )
            span_at = k

    text = " ".join(words).capitalize() + "."
    toks = tokenize_with_offsets(text)
    sentence = Sentence(
        text=text,
        tokens=[t for t, _, _ in toks],
        domain=domain,
        review_id=review_id,
        index_in_review=0,
        token_offsets=[(s, e) for _, s, e in toks],
    )
    spans = []
    if span_at is not None:
        assert span_polarity is not None
        spans.append(
            TargetSpan(
                span_at,
                span_at + 1,
                span_polarity,
                confidence=1.0,
                surface=sentence.tokens[span_at],
            )
        )
    return sentence, spans


def _split_counts(total: int, parts: int) -> list[int]:
    base, extra = divmod(total, parts)
    return [base + (1 if i < extra else 0) for i in range(parts)]


def generate(spec: SynthSpec) -> SynthCorpus:
    """Generate the labeled set, unlabeled pool, and per-domain test sets."""
    vocab = _build_vocab(spec)

    labeled: list[LabeledSentence] = []
    assert spec.labeled_domains is not None
    rng = random.Random(spec.seed + 1)
    for domain, count in zip(
        spec.labeled_domains, _split_counts(spec.labeled_size, len(spec.labeled_domains))
    ):
        for i in range(count):
            sentence, spans = _make_sentence(rng, vocab, domain, spec, f"ld-{domain}-{i}")
            labeled.append(LabeledSentence(sentence, spans))

    pool: list[Sentence] = []
    rng = random.Random(spec.seed + 2)
    for domain, count in zip(spec.domains, _split_counts(spec.pool_size, len(spec.domains))):
        for i in range(count):
            sentence, _ = _make_sentence(rng, vocab, domain, spec, f"pool-{domain}-{i}")
            pool.append(sentence)

    test_sets: dict[str, list[LabeledSentence]] = {}
    rng = random.Random(spec.seed + 3)
    for domain in spec.domains:
        rows = []
        for i in range(spec.test_per_domain):
            sentence, spans = _make_sentence(rng, vocab, domain, spec, f"test-{domain}-{i}")
            rows.append(LabeledSentence(sentence, spans))
        test_sets[domain] = rows

    entries = dict(vocab.positive)
    entries.update(vocab.negative)
    lexicon = SentimentLexicon(entries=entries, threshold=0.7)
    return SynthCorpus(
        labeled=labeled,
        pool=pool,
        test_sets=test_sets,
        lexicon=lexicon,
        target_polarity=dict(vocab.target_polarity),
    )
