"""Reference tagger server for protocol tests and offline experiments.

Speaks the external-tagger wire protocol over stdio (default) or TCP.
The default "memorize" mode learns per-token label frequencies from the
train request and predicts smoothed unigram probabilities, which is enough
for end-to-end protocol round trips. Other modes:

  uniform  -- every token gets (1/3, 1/3, 1/3)
  example  -- six-token sentences get the (O,O,O,O,P,P) pattern, else NONE

Run: python -m tsa_selftrain.mock_tagger [--mode M] [--piece-level]
     [--listen PORT] [--protocol-version N] [--fail-predict]
"""

from __future__ import annotations

import argparse
import json
import socket
import sys

PROTOCOL_VERSION = 1
_SMOOTHING = 0.5


class MockTagger:
    def __init__(self, mode: str, piece_level: bool, protocol_version: int, fail_predict: bool):
        self.mode = mode
        self.piece_level = piece_level
        self.protocol_version = protocol_version
        self.fail_predict = fail_predict
        self.models: dict[str, dict[str, list[float]]] = {}

    # ---- request handling ----

    def handle(self, message: dict) -> dict:
        op = message.get("op")
        if op == "hello":
            if message.get("version") != self.protocol_version:
                return _error("handshake", f"unsupported protocol version {message.get('version')!r}")
            return {"op": "hello", "version": self.protocol_version, "piece_level": self.piece_level}
        if op == "train":
            return self._train(message)
        if op == "predict":
            return self._predict(message)
        return _error("parse", f"unknown op {op!r}")

    def _train(self, message: dict) -> dict:
        try:
            records = message["train"]
            counts: dict[str, list[float]] = {}
            for rec in records:
                tokens = rec["tokens"]
                labels = ["NONE"] * len(tokens)
                for target in rec.get("targets", []):
                    lab = "POS" if target["polarity"] == "positive" else "NEG"
                    for i in range(int(target["start"]), int(target["end"])):
                        labels[i] = lab
                for tok, lab in zip(tokens, labels):
                    row = counts.setdefault(tok.casefold(), [0.0, 0.0, 0.0])
                    row[{"POS": 0, "NEG": 1, "NONE": 2}[lab]] += 1.0
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            return _error("train", f"malformed train request: {exc}")
        model_id = f"mock-{len(self.models) + 1}"
        self.models[model_id] = counts
        return {"op": "trained", "model_id": model_id}

    def _token_probs(self, counts: dict[str, list[float]], token: str) -> list[float]:
        row = counts.get(token.casefold())
        if row is None:
            return [0.05, 0.05, 0.9]
        # Smooth toward NONE so unseen contexts stay conservative.
        smoothed = [row[0] + _SMOOTHING, row[1] + _SMOOTHING, row[2] + 2 * _SMOOTHING]
        total = sum(smoothed)
        return [v / total for v in smoothed]

    def _sentence_probs(self, tokens: list[str], counts: dict[str, list[float]] | None) -> list[list[float]]:
        if self.mode == "uniform":
            return [[1 / 3, 1 / 3, 1 / 3] for _ in tokens]
        if self.mode == "example":
            if len(tokens) == 6:
                pattern = ["O", "O", "O", "O", "P", "P"]
                return [
                    [0.9, 0.05, 0.05] if p == "P" else [0.05, 0.05, 0.9]
                    for p in pattern
                ]
            return [[0.05, 0.05, 0.9] for _ in tokens]
        assert counts is not None
        return [self._token_probs(counts, tok) for tok in tokens]

    def _predict(self, message: dict) -> dict:
        if self.fail_predict:
            return _error("predict", "predict disabled by --fail-predict")
        counts = None
        if self.mode == "memorize":
            model_id = message.get("model_id")
            counts = self.models.get(str(model_id))
            if counts is None:
                return _error("predict", f"unknown model_id {model_id!r}")
        entries = []
        try:
            for sent in message["sentences"]:
                probs = self._sentence_probs(sent["tokens"], counts)
                entries.append(self._format_entry(sent["tokens"], probs))
        except (KeyError, TypeError) as exc:
            return _error("predict", f"malformed predict request: {exc}")
        return {"op": "predictions", "sentences": entries}

    def _format_entry(self, tokens: list[str], probs: list[list[float]]) -> dict:
        if not self.piece_level:
            return {"distributions": probs}
        pieces = []
        piece_to_word = []
        for i, (tok, row) in enumerate(zip(tokens, probs)):
            # Words of length >= 4 split into two pieces sharing the word's
            # distribution, exercising the client-side merge.
            n_pieces = 2 if len(tok) >= 4 else 1
            for _ in range(n_pieces):
                pieces.append(row)
                piece_to_word.append(i)
        return {"pieces": pieces, "piece_to_word": piece_to_word}


def _error(stage: str, message: str) -> dict:
    return {"op": "error", "stage": stage, "message": message}


def _serve_lines(tagger: MockTagger, reader, writer) -> None:
    for line in reader:
        line = line.strip()
        if not line:
            continue
        try:
            message = json.loads(line)
        except json.JSONDecodeError:
            reply = _error("parse", "request is not valid JSON")
        else:
            reply = tagger.handle(message)
        writer.write(json.dumps(reply) + "\n")
        writer.flush()


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--mode", choices=["memorize", "uniform", "example"], default="memorize")
    parser.add_argument("--piece-level", action="store_true")
    parser.add_argument("--listen", type=int, default=None, help="serve one TCP connection on this port")
    parser.add_argument("--protocol-version", type=int, default=PROTOCOL_VERSION)
    parser.add_argument("--fail-predict", action="store_true")
    args = parser.parse_args(argv)

    tagger = MockTagger(args.mode, args.piece_level, args.protocol_version, args.fail_predict)
    if args.listen is not None:
        server = socket.create_server(("127.0.0.1", args.listen))
        conn, _ = server.accept()
        with conn:
            reader = conn.makefile("r", encoding="utf-8")
            writer = conn.makefile("w", encoding="utf-8")
            _serve_lines(tagger, reader, writer)
        server.close()
    else:
        _serve_lines(tagger, sys.stdin, sys.stdout)
    return 0


if __name__ == "__main__":
    sys.exit(main())
