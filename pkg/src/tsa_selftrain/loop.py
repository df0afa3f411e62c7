"""Self-training orchestration: train, predict on the pool, select, retrain.

Iteration 0 trains on the labeled data alone; every later iteration
predicts on the full unlabeled pool with the previous model, selects and
balances weak labels, merges them with the labeled data, and retrains from
scratch. Each iteration's artifacts (model, weak-label set, selection
stats, dev trace) are persisted before the next begins, so an interrupted
run resumes from the last completed iteration and reproduces the same
bytes.
"""

from __future__ import annotations

import json
import logging
import math
import os
import random
from dataclasses import dataclass, field, replace

from .baseline import BaselineTagger, train_baseline
from .config import TrainConfig
from .corpus import Sentence
from .formats import write_labeled
from .lexicon import SentimentLexicon
from .protocol import ExternalTaggerModel, TaggerClient
from .seeding import derive_seed
from .tagging import (
    LabeledSentence,
    argmax_labels,
    encode_labels,
    predict_spans,
    token_label_counts,
)
from .weaklabel import (
    SelectionConfig,
    build_weak_labeled_set,
    merge_training_set,
    selection_stats,
    weak_as_labeled,
)

log = logging.getLogger(__name__)

_PREDICT_BATCH = 512


class LoopError(Exception):
    pass


@dataclass
class LoopConfig:
    iterations: int = 3
    selection: SelectionConfig = field(default_factory=SelectionConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    seed: int = 0
    artifact_dir: str = "artifacts"
    dev_from_labeled_only: bool = False

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError(f"iterations must be >= 0, got {self.iterations}")

    def to_dict(self) -> dict:
        # artifact_dir is implied by the directory the config is stored in;
        # keeping it out makes repeated runs byte-comparable.
        return {
            "iterations": self.iterations,
            "selection": self.selection.to_dict(),
            "train": self.train.to_dict(),
            "seed": self.seed,
            "dev_from_labeled_only": self.dev_from_labeled_only,
        }

    @classmethod
    def from_dict(cls, data: dict, artifact_dir: str = "artifacts") -> "LoopConfig":
        return cls(
            iterations=data.get("iterations", 3),
            selection=SelectionConfig.from_dict(data.get("selection", {})),
            train=TrainConfig.from_dict(data.get("train", {})),
            seed=data.get("seed", 0),
            artifact_dir=artifact_dir,
            dev_from_labeled_only=data.get("dev_from_labeled_only", False),
        )


@dataclass
class IterationArtifact:
    iteration: int
    model_dir: str
    weak_labels_path: str | None
    selection_stats_path: str | None
    dev_trace: list[float]
    train_size: int
    part_sizes: dict[str, int]


def split_dev(
    labeled: list[LabeledSentence], fraction: float, seed: int
) -> tuple[list[LabeledSentence], list[LabeledSentence]]:
    """Seeded uniform train/dev split at sentence level.

    Dev size is round-half-up(fraction * N), clamped so both parts stay
    non-empty; input order is preserved within each part.
    """
    if not 0 < fraction < 1:
        raise ValueError(f"fraction must be in (0, 1), got {fraction}")
    n = len(labeled)
    if n < 2:
        raise LoopError(f"need at least 2 sentences to split, got {n}")
    dev_n = min(max(int(math.floor(fraction * n + 0.5)), 1), n - 1)
    rng = random.Random(seed)
    dev_idx = set(rng.sample(range(n), dev_n))
    train = [s for i, s in enumerate(labeled) if i not in dev_idx]
    dev = [s for i, s in enumerate(labeled) if i in dev_idx]
    return train, dev


def token_f1(model, dev: list[LabeledSentence]) -> float:
    """Micro token-level F1 over dev, with POS/NEG as the positive classes."""
    if not dev:
        raise ValueError("dev set must be non-empty")
    sentences = [s.sentence for s in dev]
    tp = fp = fn = 0
    for dist, labeled in zip(model.distributions(sentences), dev):
        pred = argmax_labels(dist)
        gold = encode_labels(labeled)
        dtp, dfp, dfn = token_label_counts(pred, gold)
        tp, fp, fn = tp + dtp, fp + dfp, fn + dfn
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2 * precision * recall / (precision + recall)


def predict_pool(model, pool: list[Sentence]) -> list[tuple[Sentence, list]]:
    """Predict spans for the full pool in batches."""
    predictions = []
    for lo in range(0, len(pool), _PREDICT_BATCH):
        batch = pool[lo : lo + _PREDICT_BATCH]
        for sentence, spans in zip(batch, predict_spans(model, batch)):
            predictions.append((sentence, spans))
    return predictions


def _write_json(path: str, payload: object) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _iter_dir(artifact_dir: str, iteration: int) -> str:
    return os.path.join(artifact_dir, f"iter_{iteration:03d}")


def _manifest_path(artifact_dir: str, iteration: int) -> str:
    return os.path.join(_iter_dir(artifact_dir, iteration), "MANIFEST.json")


def run_self_training(
    labeled: list[LabeledSentence],
    pool: list[Sentence],
    cfg: LoopConfig,
    tagger_kind: str = "baseline",
    endpoint: str | None = None,
    lexicon: SentimentLexicon | None = None,
):
    """Run the full self-training cycle; returns the final model.

    Artifacts land under cfg.artifact_dir, one subdirectory per iteration,
    each with a MANIFEST.json written last as the completion marker.
    Completed iterations found on disk are reused (baseline tagger only),
    which makes interrupted runs resumable.
    """
    if not labeled:
        raise LoopError("labeled data must be non-empty")
    if tagger_kind not in ("baseline", "external"):
        raise LoopError(f"unknown tagger kind {tagger_kind!r}")

    os.makedirs(cfg.artifact_dir, exist_ok=True)
    config_path = os.path.join(cfg.artifact_dir, "run_config.json")
    if os.path.exists(config_path):
        with open(config_path, encoding="utf-8") as fh:
            existing = json.load(fh)
        if existing != cfg.to_dict():
            raise LoopError(
                f"artifact dir {cfg.artifact_dir} holds a run with a different config"
            )
    else:
        _write_json(config_path, cfg.to_dict())

    client: TaggerClient | None = None
    if tagger_kind == "external":
        if not endpoint:
            raise LoopError("external tagger requires an endpoint")
        client = TaggerClient.open(endpoint)

    try:
        model = None
        for iteration in range(cfg.iterations + 1):
            it_dir = _iter_dir(cfg.artifact_dir, iteration)
            manifest = _manifest_path(cfg.artifact_dir, iteration)
            if tagger_kind == "baseline" and os.path.exists(manifest):
                model = BaselineTagger.load(os.path.join(it_dir, "model"))
                log.info("iteration %d: reusing completed artifacts", iteration)
                continue
            os.makedirs(it_dir, exist_ok=True)

            weak = None
            weak_path = stats_path = None
            if iteration == 0:
                train_set = list(labeled)
            else:
                assert model is not None
                log.info("iteration %d: predicting on %d pool sentences", iteration, len(pool))
                predictions = predict_pool(model, pool)
                sel_cfg = replace(
                    cfg.selection,
                    rng_seed=derive_seed(cfg.selection.rng_seed, "iteration", iteration),
                )
                weak = build_weak_labeled_set(predictions, sel_cfg)
                weak_path = os.path.join(it_dir, "weak_labels.jsonl")
                stats_path = os.path.join(it_dir, "selection_stats.json")
                write_labeled(weak_as_labeled(weak), weak_path, with_confidence=True)
                _write_json(stats_path, selection_stats(predictions, weak, sel_cfg))
                train_set = merge_training_set(labeled, weak)

            dev_seed = derive_seed(cfg.seed, "dev", iteration)
            if cfg.dev_from_labeled_only and iteration > 0:
                ld_train, dev = split_dev(labeled, cfg.train.dev_fraction, dev_seed)
                train_part = ld_train + train_set[len(labeled) :]
            else:
                train_part, dev = split_dev(train_set, cfg.train.dev_fraction, dev_seed)

            train_seed = derive_seed(cfg.seed, "train", iteration)
            log.info(
                "iteration %d: training on %d sentences (%d dev)",
                iteration,
                len(train_part),
                len(dev),
            )
            model_dir = os.path.join(it_dir, "model")
            if tagger_kind == "baseline":
                model = train_baseline(train_part, dev, cfg.train, train_seed, lexicon)
                model.save(model_dir)
                dev_trace = model.dev_trace
            else:
                assert client is not None
                model_id = client.train(train_part, dev, cfg.train, train_seed)
                model = ExternalTaggerModel(client, model_id, train_seed)
                os.makedirs(model_dir, exist_ok=True)
                _write_json(
                    os.path.join(model_dir, "model_ref.json"),
                    {"kind": "external", "model_id": model_id, "endpoint": endpoint},
                )
                dev_trace = []

            part_sizes = {
                "labeled": len(labeled),
                "weak_target": len(weak.target_part) if weak else 0,
                "weak_non_target": len(weak.non_target_part) if weak else 0,
            }
            artifact = IterationArtifact(
                iteration=iteration,
                model_dir=model_dir,
                weak_labels_path=weak_path,
                selection_stats_path=stats_path,
                dev_trace=dev_trace,
                train_size=len(train_set),
                part_sizes=part_sizes,
            )
            _write_json(
                manifest,
                {
                    "iteration": artifact.iteration,
                    "model_dir": os.path.basename(model_dir),
                    "weak_labels": os.path.basename(weak_path) if weak_path else None,
                    "selection_stats": os.path.basename(stats_path) if stats_path else None,
                    "dev_trace": artifact.dev_trace,
                    "train_size": artifact.train_size,
                    "part_sizes": artifact.part_sizes,
                },
            )
        return model
    finally:
        if client is not None:
            client.close()
