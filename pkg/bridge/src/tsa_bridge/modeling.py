"""Token-classification model construction, fine-tuning, and inference.

Labels are ordered (POS, NEG, NONE) and every emitted probability row is
(p_pos, p_neg, p_none), matching the wire protocol. Word alignment comes
from the tokenizer's native word-index mapping; words the tokenizer drops
(or that fall past the context window) are mapped to a NONE one-hot piece
so every word index stays covered.
"""

from __future__ import annotations

import copy
import logging
import os

import numpy as np
import torch
from tokenizers import Tokenizer, models, normalizers, pre_tokenizers, trainers
from transformers import AutoModelForTokenClassification, AutoTokenizer, BertConfig

log = logging.getLogger(__name__)

LABELS = ("POS", "NEG", "NONE")
NONE_INDEX = 2
NONE_ONE_HOT = [0.0, 0.0, 1.0]
IGNORE_LABEL = -100

TINY_RANDOM = "tiny-random"
EARLY_STOP_PATIENCE = 2


class WordPieceWordTokenizer:
    """WordPiece tokenizer trained on the fly from the training sentences.

    Keeps the bridge usable offline: no pretrained vocabulary is required.
    """

    def __init__(self, tokenizer: Tokenizer):
        self.tokenizer = tokenizer
        self.pad_id = tokenizer.token_to_id("[PAD]")

    @classmethod
    def train_from_sentences(cls, token_lists: list[list[str]], vocab_size: int = 4000):
        tokenizer = Tokenizer(models.WordPiece(unk_token="[UNK]"))
        tokenizer.normalizer = normalizers.Lowercase()
        tokenizer.pre_tokenizer = pre_tokenizers.WhitespaceSplit()
        trainer = trainers.WordPieceTrainer(
            vocab_size=vocab_size,
            special_tokens=["[PAD]", "[UNK]", "[CLS]", "[SEP]"],
            show_progress=False,
        )
        tokenizer.train_from_iterator((" ".join(ts) for ts in token_lists), trainer)
        return cls(tokenizer)

    def vocab_size(self) -> int:
        return self.tokenizer.get_vocab_size()

    def encode_words(self, words: list[str]) -> tuple[list[int], list[int]]:
        enc = self.tokenizer.encode(words, is_pretokenized=True)
        word_ids = [w for w in enc.word_ids if w is not None]
        ids = [i for i, w in zip(enc.ids, enc.word_ids) if w is not None]
        return ids, word_ids

    def save(self, path: str) -> None:
        self.tokenizer.save(os.path.join(path, "tokenizer.json"))

    @classmethod
    def load(cls, path: str) -> "WordPieceWordTokenizer":
        return cls(Tokenizer.from_file(os.path.join(path, "tokenizer.json")))


class PretrainedWordTokenizer:
    """Adapter over a HuggingFace fast tokenizer loaded from a name or path."""

    def __init__(self, tokenizer):
        self.tokenizer = tokenizer
        self.pad_id = tokenizer.pad_token_id or 0

    @classmethod
    def load(cls, name_or_path: str) -> "PretrainedWordTokenizer":
        return cls(AutoTokenizer.from_pretrained(name_or_path, use_fast=True))

    def encode_words(self, words: list[str]) -> tuple[list[int], list[int]]:
        enc = self.tokenizer(words, is_split_into_words=True, add_special_tokens=False)
        word_ids = enc.word_ids()
        ids = [i for i, w in zip(enc["input_ids"], word_ids) if w is not None]
        return ids, [w for w in word_ids if w is not None]

    def save(self, path: str) -> None:
        self.tokenizer.save_pretrained(path)


def _tiny_config(vocab_size: int) -> BertConfig:
    return BertConfig(
        vocab_size=vocab_size,
        hidden_size=64,
        num_hidden_layers=2,
        num_attention_heads=2,
        intermediate_size=128,
        max_position_embeddings=128,
        num_labels=len(LABELS),
        id2label={i: lab for i, lab in enumerate(LABELS)},
        label2id={lab: i for i, lab in enumerate(LABELS)},
        pad_token_id=0,
    )


class BridgeModel:
    """One fine-tuned token classifier plus its word tokenizer."""

    def __init__(self, model, word_tokenizer, device: str):
        self.model = model
        self.word_tokenizer = word_tokenizer
        self.device = device
        self.max_positions = getattr(model.config, "max_position_embeddings", 512)

    # ---- construction ----

    @classmethod
    def build(cls, model_name: str, token_lists: list[list[str]], device: str) -> "BridgeModel":
        if model_name == TINY_RANDOM:
            word_tokenizer = WordPieceWordTokenizer.train_from_sentences(token_lists)
            model = AutoModelForTokenClassification.from_config(
                _tiny_config(word_tokenizer.vocab_size())
            )
        else:
            word_tokenizer = PretrainedWordTokenizer.load(model_name)
            model = AutoModelForTokenClassification.from_pretrained(
                model_name,
                num_labels=len(LABELS),
                id2label={i: lab for i, lab in enumerate(LABELS)},
                label2id={lab: i for i, lab in enumerate(LABELS)},
            )
        model.to(device)
        return cls(model, word_tokenizer, device)

    # ---- training ----

    def _encode_labeled(self, record: dict) -> tuple[list[int], list[int]]:
        tokens = record["tokens"]
        word_labels = [NONE_INDEX] * len(tokens)
        for target in record.get("targets", []):
            label = 0 if target["polarity"] == "positive" else 1
            for i in range(int(target["start"]), int(target["end"])):
                word_labels[i] = label
        ids, word_ids = self.word_tokenizer.encode_words(tokens)
        ids = ids[: self.max_positions]
        word_ids = word_ids[: self.max_positions]
        labels = [word_labels[w] for w in word_ids]
        return ids, labels

    def _batches(self, encoded, batch_size, rng: np.random.Generator | None):
        order = np.arange(len(encoded))
        if rng is not None:
            order = rng.permutation(len(encoded))
        pad = self.word_tokenizer.pad_id
        for lo in range(0, len(encoded), batch_size):
            chunk = [encoded[i] for i in order[lo : lo + batch_size]]
            width = max(len(ids) for ids, _ in chunk)
            input_ids = torch.full((len(chunk), width), pad, dtype=torch.long)
            attention = torch.zeros((len(chunk), width), dtype=torch.long)
            labels = torch.full((len(chunk), width), IGNORE_LABEL, dtype=torch.long)
            for r, (ids, labs) in enumerate(chunk):
                input_ids[r, : len(ids)] = torch.tensor(ids, dtype=torch.long)
                attention[r, : len(ids)] = 1
                labels[r, : len(labs)] = torch.tensor(labs, dtype=torch.long)
            yield (
                input_ids.to(self.device),
                attention.to(self.device),
                labels.to(self.device),
            )

    @torch.no_grad()
    def _token_f1(self, encoded, batch_size) -> float:
        self.model.eval()
        tp = fp = fn = 0
        for input_ids, attention, labels in self._batches(encoded, batch_size, None):
            logits = self.model(input_ids=input_ids, attention_mask=attention).logits
            pred = logits.argmax(dim=-1)
            mask = labels != IGNORE_LABEL
            correct = (pred == labels) & mask
            tp += int((correct & (labels != NONE_INDEX)).sum())
            fp += int(((~correct) & mask & (pred != NONE_INDEX)).sum())
            fn += int(((~correct) & mask & (labels != NONE_INDEX)).sum())
        if tp == 0:
            return 0.0
        precision = tp / (tp + fp)
        recall = tp / (tp + fn)
        return 2 * precision * recall / (precision + recall)

    def train(self, train_records: list[dict], dev_records: list[dict], config: dict, seed: int) -> list[float]:
        """Fine-tune with cross-entropy and early stopping on dev token-F1."""
        torch.manual_seed(seed)
        rng = np.random.default_rng(seed)
        train_enc = [self._encode_labeled(r) for r in train_records]
        dev_enc = [self._encode_labeled(r) for r in dev_records]
        optimizer = torch.optim.Adam(
            self.model.parameters(),
            lr=float(config.get("learning_rate", 3e-5)),
            eps=float(config.get("adam_epsilon", 1e-8)),
        )
        batch_size = int(config.get("batch_size", 32))
        max_epochs = int(config.get("max_epochs", 15))
        min_delta = float(config.get("min_delta", 0.005))

        best_f1 = -1.0
        best_state = copy.deepcopy(self.model.state_dict())
        stale = 0
        trace: list[float] = []
        for _epoch in range(max_epochs):
            self.model.train()
            for input_ids, attention, labels in self._batches(train_enc, batch_size, rng):
                optimizer.zero_grad()
                out = self.model(
                    input_ids=input_ids, attention_mask=attention, labels=labels
                )
                out.loss.backward()
                optimizer.step()
            if not dev_enc:
                continue
            f1 = self._token_f1(dev_enc, batch_size)
            trace.append(f1)
            improvement = f1 - best_f1
            if f1 > best_f1:
                best_f1 = f1
                best_state = copy.deepcopy(self.model.state_dict())
            if improvement < min_delta:
                stale += 1
                if stale >= EARLY_STOP_PATIENCE:
                    break
            else:
                stale = 0
        if dev_enc:
            self.model.load_state_dict(best_state)
        self.model.eval()
        return trace

    # ---- inference ----

    @torch.no_grad()
    def predict_pieces(self, token_lists: list[list[str]]) -> list[dict]:
        """Piece-level softmax rows plus piece_to_word, one entry per sentence.

        Every word index appears at least once: words without pieces (or
        truncated past the context window) get a NONE one-hot piece.
        """
        self.model.eval()
        entries = []
        for tokens in token_lists:
            ids, word_ids = self.word_tokenizer.encode_words(tokens)
            if len(ids) > self.max_positions:
                log.warning(
                    "truncating sentence of %d pieces to %d", len(ids), self.max_positions
                )
                ids = ids[: self.max_positions]
                word_ids = word_ids[: self.max_positions]
            probs_by_word: dict[int, list[list[float]]] = {}
            if ids:
                input_ids = torch.tensor([ids], dtype=torch.long, device=self.device)
                logits = self.model(input_ids=input_ids).logits[0]
                probs = torch.softmax(logits, dim=-1).cpu().numpy()
                for row, word in zip(probs, word_ids):
                    probs_by_word.setdefault(word, []).append(
                        [float(row[0]), float(row[1]), float(row[2])]
                    )
            pieces: list[list[float]] = []
            piece_to_word: list[int] = []
            for w in range(len(tokens)):
                rows = probs_by_word.get(w, [list(NONE_ONE_HOT)])
                for row in rows:
                    pieces.append(row)
                    piece_to_word.append(w)
            entries.append({"pieces": pieces, "piece_to_word": piece_to_word})
        return entries

    # ---- persistence ----

    def save(self, path: str) -> None:
        os.makedirs(path, exist_ok=True)
        self.model.save_pretrained(path)
        self.word_tokenizer.save(path)

    @classmethod
    def load(cls, path: str, device: str) -> "BridgeModel":
        model = AutoModelForTokenClassification.from_pretrained(path)
        if os.path.exists(os.path.join(path, "tokenizer.json")):
            word_tokenizer = WordPieceWordTokenizer.load(path)
        else:
            word_tokenizer = PretrainedWordTokenizer.load(path)
        model.to(device)
        model.eval()
        return cls(model, word_tokenizer, device)
