"""Built-in baseline tagger: a per-token linear classifier on sparse features.

Features per token: surface word, case-folded word, sentiment-lexicon score
bucket, previous/next word, capitalization flag, 3-char suffix. Trained with
mini-batch gradient descent on cross-entropy with L2 regularization; outputs
are softmax probabilities compatible with decode_spans. Dependency-free and
deterministic given the seed, so loop artifacts are byte-reproducible.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .config import TrainConfig
from .corpus import Sentence
from .lexicon import SentimentLexicon
from .tagging import CLASS_INDEX, CLASS_ORDER, Label, LabeledSentence, encode_labels

# Step size for the sparse linear model; the TrainConfig learning_rate is
# transformer-scale and far too small for indicator features.
LEARNING_RATE = 20.0
L2_PENALTY = 1e-5
EARLY_STOP_PATIENCE = 2
# Word dropout: with this probability a token's identity features (surface,
# case-folded form, suffix, own lexicon bucket) are all hidden for one
# update, forcing the context features that carry across domains to learn;
# otherwise the perfectly predictive word-identity features absorb all
# gradient. A light independent feature dropout is applied on top.
WORD_DROPOUT = 0.3
FEATURE_DROPOUT = 0.1

_BOS = "<s>"
_EOS = "</s>"


def _lexicon_bucket(score: float) -> str:
    sign = "+" if score > 0 else "-"
    return f"{sign}hi" if abs(score) > 0.9 else sign


# Prefixes of features that identify the token itself (vs its context);
# these are the ones hidden together under word dropout.
_IDENTITY_PREFIXES = ("w=", "lw=", "suf=", "lex0=")


def token_features(
    tokens: list[str], i: int, buckets: dict[str, str] | None
) -> list[str]:
    tok = tokens[i]
    low = tok.casefold()
    prev = tokens[i - 1].casefold() if i > 0 else _BOS
    nxt = tokens[i + 1].casefold() if i + 1 < len(tokens) else _EOS
    feats = [
        f"w={tok}",
        f"lw={low}",
        f"w-1={prev}",
        f"w+1={nxt}",
        f"suf={low[-3:]}",
    ]
    if tok[:1].isupper():
        feats.append("cap")
    if buckets:
        # Lexicon score buckets for the token and its neighbors; the
        # neighbor buckets generalize across sentiment words the training
        # data never showed.
        for offset, word in (("0", low), ("-1", prev), ("+1", nxt)):
            bucket = buckets.get(word)
            if bucket is not None:
                feats.append(f"lex{offset}={bucket}")
    return feats


def _is_identity_feature(feat: str) -> bool:
    return feat.startswith(_IDENTITY_PREFIXES)


@dataclass
class _TokenMatrix:
    """Flattened feature ids for a token sequence dataset."""

    feat_ids: np.ndarray  # int64, flat
    tok_ptr: np.ndarray  # int64, len T+1
    labels: np.ndarray  # int64, len T
    sent_ptr: np.ndarray  # int64, len S+1 (token offsets per sentence)


class BaselineTagger:
    """Trained linear per-token classifier with softmax outputs."""

    kind = "baseline"

    def __init__(
        self,
        vocab: dict[str, int],
        weights: np.ndarray,
        training_seed: int,
        lexicon_buckets: dict[str, str] | None = None,
        dev_trace: list[float] | None = None,
    ):
        # weights has shape (n_features + 1, 3); the last row is the bias.
        self.vocab = vocab
        self.weights = weights
        self.training_seed = training_seed
        self.lexicon_buckets = lexicon_buckets or {}
        self.dev_trace = dev_trace or []

    def _featurize(self, sentences: list[Sentence]) -> _TokenMatrix:
        return _featurize(
            [s.tokens for s in sentences], None, self.vocab, self.lexicon_buckets, frozen=True
        )

    def distributions(self, sentences: list[Sentence]) -> list[np.ndarray]:
        """Word-level (n_tokens, 3) probability arrays, one per sentence."""
        mat = self._featurize(sentences)
        probs = _token_probs(self.weights, mat)
        return [
            probs[mat.sent_ptr[i] : mat.sent_ptr[i + 1]]
            for i in range(len(sentences))
        ]

    def save(self, model_dir: str) -> None:
        os.makedirs(model_dir, exist_ok=True)
        meta = {
            "kind": self.kind,
            "training_seed": self.training_seed,
            "classes": [label.value for label in CLASS_ORDER],
            "n_features": len(self.vocab),
            "dev_trace": self.dev_trace,
        }
        with open(os.path.join(model_dir, "meta.json"), "w", encoding="utf-8") as fh:
            json.dump(meta, fh, sort_keys=True, indent=2)
            fh.write("\n")
        with open(os.path.join(model_dir, "vocab.json"), "w", encoding="utf-8") as fh:
            json.dump(self.vocab, fh)
        with open(os.path.join(model_dir, "lexicon.json"), "w", encoding="utf-8") as fh:
            json.dump(self.lexicon_buckets, fh, sort_keys=True)
        np.save(os.path.join(model_dir, "weights.npy"), self.weights)

    @classmethod
    def load(cls, model_dir: str) -> "BaselineTagger":
        with open(os.path.join(model_dir, "meta.json"), encoding="utf-8") as fh:
            meta = json.load(fh)
        with open(os.path.join(model_dir, "vocab.json"), encoding="utf-8") as fh:
            vocab = json.load(fh)
        with open(os.path.join(model_dir, "lexicon.json"), encoding="utf-8") as fh:
            buckets = json.load(fh)
        weights = np.load(os.path.join(model_dir, "weights.npy"))
        return cls(
            vocab=vocab,
            weights=weights,
            training_seed=meta["training_seed"],
            lexicon_buckets=buckets,
            dev_trace=meta.get("dev_trace", []),
        )


def _featurize(
    token_lists: list[list[str]],
    label_lists: list[list[Label]] | None,
    vocab: dict[str, int],
    buckets: dict[str, str],
    frozen: bool,
) -> _TokenMatrix:
    feat_ids: list[int] = []
    tok_ptr = [0]
    labels: list[int] = []
    sent_ptr = [0]
    for si, tokens in enumerate(token_lists):
        for i in range(len(tokens)):
            for feat in token_features(tokens, i, buckets):
                idx = vocab.get(feat)
                if idx is None:
                    if frozen:
                        continue
                    idx = len(vocab)
                    vocab[feat] = idx
                feat_ids.append(idx)
            tok_ptr.append(len(feat_ids))
            if label_lists is not None:
                labels.append(CLASS_INDEX[label_lists[si][i]])
        sent_ptr.append(len(tok_ptr) - 1)
    return _TokenMatrix(
        feat_ids=np.asarray(feat_ids, dtype=np.int64),
        tok_ptr=np.asarray(tok_ptr, dtype=np.int64),
        labels=np.asarray(labels, dtype=np.int64),
        sent_ptr=np.asarray(sent_ptr, dtype=np.int64),
    )


def _gather(mat: _TokenMatrix, token_idx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Flat feature ids for the given tokens plus each id's batch row."""
    starts = mat.tok_ptr[token_idx]
    lens = mat.tok_ptr[token_idx + 1] - starts
    total = int(lens.sum())
    base = np.repeat(starts, lens)
    within = np.arange(total, dtype=np.int64) - np.repeat(np.cumsum(lens) - lens, lens)
    feat = mat.feat_ids[base + within]
    rows = np.repeat(np.arange(len(token_idx), dtype=np.int64), lens)
    return feat, rows


def _scores_for(weights: np.ndarray, mat: _TokenMatrix, token_idx: np.ndarray) -> np.ndarray:
    feat, rows = _gather(mat, token_idx)
    scores = np.tile(weights[-1], (len(token_idx), 1))
    np.add.at(scores, rows, weights[feat])
    return scores


def _softmax(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def _token_probs(weights: np.ndarray, mat: _TokenMatrix) -> np.ndarray:
    n_tokens = len(mat.tok_ptr) - 1
    if n_tokens == 0:
        return np.zeros((0, 3))
    return _softmax(_scores_for(weights, mat, np.arange(n_tokens, dtype=np.int64)))


def _dev_token_f1(weights: np.ndarray, mat: _TokenMatrix) -> float:
    probs = _token_probs(weights, mat)
    pred = probs.argmax(axis=1)
    # argmax ties are vanishingly rare on trained weights; the decode-time
    # NONE > POS > NEG rule is enforced in tagging.decode_spans.
    tp = int(np.sum((pred == mat.labels) & (mat.labels != CLASS_INDEX[Label.NONE])))
    fp = int(np.sum((pred != mat.labels) & (pred != CLASS_INDEX[Label.NONE])))
    fn = int(np.sum((pred != mat.labels) & (mat.labels != CLASS_INDEX[Label.NONE])))
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2 * precision * recall / (precision + recall)


def train_baseline(
    train: list[LabeledSentence],
    dev: list[LabeledSentence],
    config: TrainConfig,
    seed: int,
    lexicon: SentimentLexicon | None = None,
) -> BaselineTagger:
    """Train the linear tagger with early stopping on dev token-F1.

    Stops when the improvement over the best dev F1 stays below min_delta
    for two consecutive epochs, restoring the best epoch's parameters; with
    an empty dev set the full max_epochs run and the final weights are kept.
    """
    if not train:
        raise ValueError("train set must be non-empty")
    buckets = (
        {word: _lexicon_bucket(score) for word, score in lexicon.entries.items()}
        if lexicon is not None
        else {}
    )
    vocab: dict[str, int] = {}
    train_mat = _featurize(
        [s.tokens for s in train],
        [encode_labels(s) for s in train],
        vocab,
        buckets,
        frozen=False,
    )
    dev_mat = (
        _featurize(
            [s.tokens for s in dev],
            [encode_labels(s) for s in dev],
            vocab,
            buckets,
            frozen=True,
        )
        if dev
        else None
    )

    rng = np.random.default_rng(seed)
    weights = np.zeros((len(vocab) + 1, 3), dtype=np.float64)
    n_tokens = len(train_mat.tok_ptr) - 1
    identity = np.fromiter(
        (_is_identity_feature(f) for f in vocab), dtype=bool, count=len(vocab)
    )

    best_weights = weights.copy()
    best_f1 = -1.0
    stale_epochs = 0
    dev_trace: list[float] = []

    for _epoch in range(config.max_epochs):
        perm = rng.permutation(n_tokens)
        for lo in range(0, n_tokens, config.batch_size):
            batch = perm[lo : lo + config.batch_size]
            feat, rows = _gather(train_mat, batch)
            if WORD_DROPOUT > 0 or FEATURE_DROPOUT > 0:
                word_u = rng.random(len(batch))
                hidden = identity[feat] & (word_u[rows] < WORD_DROPOUT)
                keep = ~hidden & (rng.random(len(feat)) >= FEATURE_DROPOUT)
                feat, rows = feat[keep], rows[keep]
            scores = np.tile(weights[-1], (len(batch), 1))
            np.add.at(scores, rows, weights[feat])
            probs = _softmax(scores)
            grad = probs
            grad[np.arange(len(batch)), train_mat.labels[batch]] -= 1.0
            grad /= len(batch)
            weights[feat] *= 1.0 - LEARNING_RATE * L2_PENALTY
            np.add.at(weights, feat, -LEARNING_RATE * grad[rows])
            weights[-1] -= LEARNING_RATE * grad.sum(axis=0)

        if dev_mat is None:
            continue
        f1 = _dev_token_f1(weights, dev_mat)
        dev_trace.append(f1)
        improvement = f1 - best_f1
        if f1 > best_f1:
            best_f1 = f1
            best_weights = weights.copy()
        if improvement < config.min_delta:
            stale_epochs += 1
            if stale_epochs >= EARLY_STOP_PATIENCE:
                break
        else:
            stale_epochs = 0

    final = best_weights if dev_mat is not None else weights
    return BaselineTagger(
        vocab=vocab,
        weights=final,
        training_seed=seed,
        lexicon_buckets=buckets,
        dev_trace=dev_trace,
    )
