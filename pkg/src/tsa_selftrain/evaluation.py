"""Exact-match evaluation: per-domain P/R/F1, seed aggregation, PR curves.

A prediction counts as correct only when its token boundaries and polarity
both equal a gold span's. Per-domain counts are micro-aggregated within a
domain, domains are macro-averaged per seed, and means/stds are taken over
seeds (population std).
"""

from __future__ import annotations

import json
import math
import random
from collections import defaultdict
from dataclasses import dataclass, field

from .seeding import derive_seed
from .tagging import TargetSpan

ERROR_CATEGORIES = [
    "invalid-target",
    "wrong-sentiment-or-span",
    "borderline-target",
    "correct-target",
]


class EvalError(Exception):
    pass


@dataclass
class MatchCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __add__(self, other: "MatchCounts") -> "MatchCounts":
        return MatchCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)


def exact_match(predicted: list[TargetSpan], gold: list[TargetSpan]) -> MatchCounts:
    """Greedy one-to-one matching on identical (start, end, polarity).

    With non-overlapping spans on each side this equals optimal matching.
    Unmatched predictions are FP; unmatched gold spans are FN.
    """
    unmatched = defaultdict(int)
    for span in gold:
        unmatched[span.key] += 1
    tp = 0
    for span in predicted:
        if unmatched[span.key] > 0:
            unmatched[span.key] -= 1
            tp += 1
    return MatchCounts(tp=tp, fp=len(predicted) - tp, fn=len(gold) - tp)


def prf(counts: MatchCounts) -> tuple[float, float, float]:
    """Precision, recall, F1 with the all-zeros convention on empty denominators."""
    p = counts.tp / (counts.tp + counts.fp) if counts.tp + counts.fp else 0.0
    r = counts.tp / (counts.tp + counts.fn) if counts.tp + counts.fn else 0.0
    f1 = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f1


GoldRecord = tuple[str, str, list[TargetSpan]]  # (id, domain, gold spans)


def evaluate_run(
    predictions: dict[str, list[TargetSpan]],
    gold: list[GoldRecord],
) -> dict[str, tuple[float, float, float]]:
    """Per-domain (P, R, F1) for one run, aligned by sentence identity."""
    gold_ids = {gid for gid, _, _ in gold}
    pred_ids = set(predictions)
    if gold_ids != pred_ids:
        missing = sorted(gold_ids - pred_ids)
        extra = sorted(pred_ids - gold_ids)
        raise EvalError(
            f"prediction/gold identity mismatch: missing={missing[:20]} extra={extra[:20]}"
        )
    per_domain: dict[str, MatchCounts] = defaultdict(MatchCounts)
    for gid, domain, gold_spans in gold:
        per_domain[domain] += exact_match(predictions[gid], gold_spans)
    return {domain: prf(counts) for domain, counts in sorted(per_domain.items())}


@dataclass
class MetricStats:
    mean: float
    std: float

    def to_dict(self) -> dict:
        return {"mean": self.mean, "std": self.std}


@dataclass
class EvalReport:
    dataset: str
    n_seeds: int
    per_domain: dict[str, dict[str, MetricStats]] = field(default_factory=dict)
    macro: dict[str, MetricStats] = field(default_factory=dict)
    per_seed: list[dict[str, tuple[float, float, float]]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "n_seeds": self.n_seeds,
            "per_domain": {
                d: {m: s.to_dict() for m, s in metrics.items()}
                for d, metrics in self.per_domain.items()
            },
            "macro": {m: s.to_dict() for m, s in self.macro.items()},
            "per_seed": [
                {d: list(v) for d, v in seed_result.items()} for seed_result in self.per_seed
            ],
        }


def _mean_std(values: list[float]) -> MetricStats:
    if max(values) == min(values):
        return MetricStats(mean=values[0], std=0.0)
    mean = sum(values) / len(values)
    var = sum((v - mean) ** 2 for v in values) / len(values)
    return MetricStats(mean=mean, std=math.sqrt(var))


def aggregate_seeds(
    per_seed: list[dict[str, tuple[float, float, float]]],
    dataset: str = "",
) -> EvalReport:
    """Aggregate per-seed per-domain results into mean/std and macro metrics.

    Macro metrics are computed per seed (unweighted mean over domains), then
    averaged over seeds, matching the per-run macro-averaging protocol.
    """
    if not per_seed:
        raise EvalError("no per-seed results to aggregate")
    domains = sorted(per_seed[0])
    for result in per_seed[1:]:
        if sorted(result) != domains:
            raise EvalError(
                f"inconsistent domain sets across seeds: {domains} vs {sorted(result)}"
            )
    report = EvalReport(dataset=dataset, n_seeds=len(per_seed), per_seed=per_seed)
    for domain in domains:
        report.per_domain[domain] = {
            metric: _mean_std([result[domain][mi] for result in per_seed])
            for mi, metric in enumerate(("precision", "recall", "f1"))
        }
    for mi, metric in enumerate(("precision", "recall", "f1")):
        macro_per_seed = [
            sum(result[d][mi] for d in domains) / len(domains) for result in per_seed
        ]
        report.macro[metric] = _mean_std(macro_per_seed)
    return report


def pr_curve(
    per_seed_predictions: list[dict[str, list[TargetSpan]]],
    gold: list[GoldRecord],
    thresholds: list[float],
) -> dict[str, list[tuple[float, float, float]]]:
    """Per-domain (threshold, precision, recall) points averaged over seeds.

    At each threshold t, only spans with confidence >= t are evaluated.
    """
    if any(b <= a for a, b in zip(thresholds, thresholds[1:])):
        raise EvalError("thresholds must be strictly increasing")
    domains = sorted({domain for _, domain, _ in gold})
    sums: dict[str, list[list[float]]] = {
        d: [[0.0, 0.0] for _ in thresholds] for d in domains
    }
    for predictions in per_seed_predictions:
        for ti, t in enumerate(thresholds):
            filtered = {
                gid: [s for s in spans if s.confidence >= t]
                for gid, spans in predictions.items()
            }
            result = evaluate_run(filtered, gold)
            for domain in domains:
                p, r, _ = result[domain]
                sums[domain][ti][0] += p
                sums[domain][ti][1] += r
    n = len(per_seed_predictions)
    return {
        d: [(t, sums[d][ti][0] / n, sums[d][ti][1] / n) for ti, t in enumerate(thresholds)]
        for d in domains
    }


def sample_errors(
    predictions: dict[str, list[TargetSpan]],
    gold: list[GoldRecord],
    texts: dict[str, str],
    n_per_domain: int,
    seed: int,
) -> dict:
    """Seeded per-domain sample of false-positive predictions for manual review.

    Emits min(n_per_domain, available) records per domain with the predicted
    span, any overlapping gold spans, and an empty category field; the four
    category options are listed in the document header.
    """
    if n_per_domain < 1:
        raise ValueError("n_per_domain must be >= 1")
    gold_by_id = {gid: (domain, spans) for gid, domain, spans in gold}
    fp_by_domain: dict[str, list[dict]] = defaultdict(list)
    for gid in sorted(predictions):
        if gid not in gold_by_id:
            continue
        domain, gold_spans = gold_by_id[gid]
        unmatched = defaultdict(int)
        for span in gold_spans:
            unmatched[span.key] += 1
        for span in predictions[gid]:
            if unmatched[span.key] > 0:
                unmatched[span.key] -= 1
                continue
            overlapping = [
                g for g in gold_spans if g.start < span.end and span.start < g.end
            ]
            fp_by_domain[domain].append(
                {
                    "id": gid,
                    "domain": domain,
                    "text": texts.get(gid, ""),
                    "prediction": _span_record(span),
                    "overlapping_gold": [_span_record(g) for g in overlapping],
                    "category": "",
                }
            )
    samples = []
    for domain in sorted(fp_by_domain):
        errors = fp_by_domain[domain]
        rng = random.Random(derive_seed(seed, "errors", domain))
        k = min(n_per_domain, len(errors))
        samples.extend(errors[i] for i in sorted(rng.sample(range(len(errors)), k)))
    return {"category_options": ERROR_CATEGORIES, "samples": samples}


def _span_record(span: TargetSpan) -> dict:
    return {
        "start": span.start,
        "end": span.end,
        "polarity": span.polarity.value,
        "confidence": span.confidence,
        "surface": span.surface,
    }


def render_report_table(report: EvalReport) -> str:
    """Aligned plain-text table: one row per domain plus the macro row."""
    rows = []
    header = ("Domain", "P", "R", "F1")
    for domain, metrics in report.per_domain.items():
        rows.append(
            (
                domain,
                _fmt(metrics["precision"]),
                _fmt(metrics["recall"]),
                _fmt(metrics["f1"]),
            )
        )
    rows.append(
        (
            "MACRO",
            _fmt(report.macro["precision"]),
            _fmt(report.macro["recall"]),
            _fmt(report.macro["f1"]),
        )
    )
    widths = [max(len(r[i]) for r in rows + [header]) for i in range(4)]
    lines = [
        f"Dataset: {report.dataset or '(unnamed)'}  seeds: {report.n_seeds}",
        "  ".join(h.ljust(w) for h, w in zip(header, widths)),
    ]
    lines.extend("  ".join(c.ljust(w) for c, w in zip(row, widths)) for row in rows)
    return "\n".join(lines) + "\n"


def _fmt(stats: MetricStats) -> str:
    return f"{100 * stats.mean:.1f} ± {100 * stats.std:.1f}"


def write_report(report: EvalReport, json_path: str, table_path: str) -> None:
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(table_path, "w", encoding="utf-8") as fh:
        fh.write(render_report_table(report))
