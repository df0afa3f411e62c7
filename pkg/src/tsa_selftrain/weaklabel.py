"""Weak-label selection: thresholds, non-target sampling, domain balancing.

Turns model predictions on the unlabeled pool into a weak-label training
set with two parts: sentences whose confident spans become weak gold labels,
and explicit no-target sentences. Boundary semantics are exact: spans are
kept when S > target_high (strict) and tolerated when S <= target_low
(inclusive); anything in between disqualifies its sentence.
"""

from __future__ import annotations

import math
import random
from collections import defaultdict
from dataclasses import dataclass, field

from .corpus import Sentence
from .seeding import derive_seed
from .tagging import LabeledSentence, TargetSpan

PROVENANCE_TARGET = "weak-target"
PROVENANCE_NONE = "weak-none"

Prediction = tuple[Sentence, list[TargetSpan]]


@dataclass
class SelectionConfig:
    target_high: float = 0.9
    target_low: float = 0.5
    non_target_fraction: float = 0.1
    per_domain_cap: int = 20000
    rng_seed: int = 0

    def __post_init__(self):
        if not 0 <= self.target_low < self.target_high <= 1:
            raise ValueError(
                f"need 0 <= target_low < target_high <= 1, got "
                f"({self.target_low}, {self.target_high})"
            )
        if not 0 < self.non_target_fraction <= 1:
            raise ValueError(f"non_target_fraction must be in (0, 1], got {self.non_target_fraction}")
        if self.per_domain_cap <= 0:
            raise ValueError(f"per_domain_cap must be positive, got {self.per_domain_cap}")

    def to_dict(self) -> dict:
        return {
            "target_high": self.target_high,
            "target_low": self.target_low,
            "non_target_fraction": self.non_target_fraction,
            "per_domain_cap": self.per_domain_cap,
            "rng_seed": self.rng_seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SelectionConfig":
        return cls(**{k: v for k, v in data.items() if k in cls.__dataclass_fields__})


@dataclass
class WeakLabeledSet:
    """Selected sentences: weak target labels plus explicit no-target ones."""

    target_part: list[Prediction] = field(default_factory=list)
    non_target_part: list[Sentence] = field(default_factory=list)

    def size(self) -> int:
        return len(self.target_part) + len(self.non_target_part)


def select_targets(predictions: list[Prediction], cfg: SelectionConfig) -> list[Prediction]:
    """Sentences with >=1 span above target_high and no span in between.

    Kept labels are exactly the spans above target_high; low-confidence
    spans on selected sentences are discarded.
    """
    selected = []
    for sentence, spans in predictions:
        high = [s for s in spans if s.confidence > cfg.target_high]
        if not high:
            continue
        if any(s.confidence > cfg.target_low for s in spans if s.confidence <= cfg.target_high):
            continue
        selected.append((sentence, high))
    return selected


def select_non_targets(predictions: list[Prediction], cfg: SelectionConfig) -> list[Sentence]:
    """Seeded 10%-style sample of sentences with no confident prediction.

    Draws ceil(non_target_fraction * N) sentences uniformly from the full
    prediction list, then keeps those with zero spans or all spans at or
    below target_low; every span on a kept sentence is discarded.
    """
    n = len(predictions)
    if n == 0:
        return []
    k = min(n, math.ceil(cfg.non_target_fraction * n))
    rng = random.Random(derive_seed(cfg.rng_seed, "non-target-sample"))
    sample_idx = sorted(rng.sample(range(n), k))
    kept = []
    for i in sample_idx:
        sentence, spans = predictions[i]
        if all(s.confidence <= cfg.target_low for s in spans):
            kept.append(sentence)
    return kept


def balance_domains(candidates: list, cfg: SelectionConfig, part: str) -> list:
    """Cap each domain at per_domain_cap by seeded sampling without replacement.

    Works on either part: items are (Sentence, spans) pairs or bare
    Sentences. Input order is preserved for the survivors.
    """
    by_domain: dict[str, list[int]] = defaultdict(list)
    for i, item in enumerate(candidates):
        sentence = item[0] if isinstance(item, tuple) else item
        by_domain[sentence.domain].append(i)

    keep: set[int] = set()
    for domain in sorted(by_domain):
        indices = by_domain[domain]
        if len(indices) <= cfg.per_domain_cap:
            keep.update(indices)
        else:
            rng = random.Random(derive_seed(cfg.rng_seed, "balance", part, domain))
            keep.update(rng.sample(indices, cfg.per_domain_cap))
    return [item for i, item in enumerate(candidates) if i in keep]


def build_weak_labeled_set(
    predictions: list[Prediction], cfg: SelectionConfig
) -> WeakLabeledSet:
    """Full selection recipe: thresholds, non-target sampling, balancing."""
    target_part = select_targets(predictions, cfg)
    target_ids = {sentence.identity for sentence, _ in target_part}
    non_target = [
        s for s in select_non_targets(predictions, cfg) if s.identity not in target_ids
    ]
    return WeakLabeledSet(
        target_part=balance_domains(target_part, cfg, "target"),
        non_target_part=balance_domains(non_target, cfg, "non-target"),
    )


def selection_stats(predictions: list[Prediction], weak: WeakLabeledSet, cfg: SelectionConfig) -> dict:
    """Per-domain candidate/kept counts for the selection report.

    Candidates are re-derived with the same seeded config, so the gap
    between candidates and kept is exactly what domain balancing trimmed.
    """
    per_domain: dict[str, dict[str, int]] = defaultdict(
        lambda: {
            "predicted": 0,
            "target_candidates": 0,
            "target_kept": 0,
            "non_target_candidates": 0,
            "non_target_kept": 0,
        }
    )
    for sentence, _ in predictions:
        per_domain[sentence.domain]["predicted"] += 1
    target_ids = {s.identity for s, _ in weak.target_part}
    for sentence, _ in select_targets(predictions, cfg):
        per_domain[sentence.domain]["target_candidates"] += 1
    for sentence in select_non_targets(predictions, cfg):
        if sentence.identity not in target_ids:
            per_domain[sentence.domain]["non_target_candidates"] += 1
    for sentence, _ in weak.target_part:
        per_domain[sentence.domain]["target_kept"] += 1
    for sentence in weak.non_target_part:
        per_domain[sentence.domain]["non_target_kept"] += 1
    return {
        "config": cfg.to_dict(),
        "total_predictions": len(predictions),
        "target_part": len(weak.target_part),
        "non_target_part": len(weak.non_target_part),
        "per_domain": {d: dict(v) for d, v in sorted(per_domain.items())},
    }


def weak_as_labeled(weak: WeakLabeledSet) -> list[LabeledSentence]:
    """Weak set as labeled records, keeping the selection confidences.

    This is the persisted form: the stored confidences let the selection
    invariants be re-checked on the artifact files.
    """
    rows = [
        LabeledSentence(sentence, list(spans), provenance=PROVENANCE_TARGET)
        for sentence, spans in weak.target_part
    ]
    rows.extend(
        LabeledSentence(sentence, [], provenance=PROVENANCE_NONE)
        for sentence in weak.non_target_part
    )
    return rows


def merge_training_set(
    labeled: list[LabeledSentence], weak: WeakLabeledSet
) -> list[LabeledSentence]:
    """Concatenate labeled data, weak target part, and weak non-target part.

    Weak spans become gold spans with confidence reset to 1; provenance
    flags distinguish the three sources in the merged set.
    """
    merged = list(labeled)
    for sentence, spans in weak.target_part:
        gold = [
            TargetSpan(s.start, s.end, s.polarity, confidence=1.0, surface=s.surface)
            for s in spans
        ]
        merged.append(LabeledSentence(sentence, gold, provenance=PROVENANCE_TARGET))
    for sentence in weak.non_target_part:
        merged.append(LabeledSentence(sentence, [], provenance=PROVENANCE_NONE))
    return merged
