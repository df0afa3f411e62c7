"""Wire protocol client for external taggers.

Messages are newline-delimited JSON over the standard streams of a spawned
process, or over a TCP socket when the endpoint looks like host:port.
Distribution vectors are ordered (p_pos, p_neg, p_none). Span polarities on
the wire use the file-format strings "positive"/"negative", with span
boundaries as word-token indices.

  client -> server                          server -> client
  {op:hello, version:1}                     {op:hello, version:1, piece_level:bool}
  {op:train, config, train, dev, seed}      {op:trained, model_id}
  {op:predict, model_id, sentences}         {op:predictions, sentences:[...]}
  (any failure)                             {op:error, stage, message}

Each predictions entry is either {"distributions": [[...], ...]} (word
level) or {"pieces": [[...], ...], "piece_to_word": [...]} (piece level,
merged client-side).
"""

from __future__ import annotations

import json
import logging
import re
import shlex
import socket
import subprocess
from typing import Sequence

import numpy as np

from .config import TrainConfig
from .corpus import Sentence
from .tagging import (
    Label,
    LabeledSentence,
    PieceAlignment,
    TokenDistribution,
    merge_word_pieces,
)

log = logging.getLogger(__name__)

PROTOCOL_VERSION = 1

_TCP_RE = re.compile(r"^(?P<host>[\w.\-]+):(?P<port>\d+)$")

POLARITY_TO_WIRE = {Label.POS: "positive", Label.NEG: "negative"}
WIRE_TO_POLARITY = {"positive": Label.POS, "negative": Label.NEG}


class ProtocolError(Exception):
    """Raised with the protocol stage that failed."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}")
        self.stage = stage


def labeled_to_wire(labeled: LabeledSentence) -> dict:
    return {
        "tokens": labeled.tokens,
        "targets": [
            {
                "start": span.start,
                "end": span.end,
                "polarity": POLARITY_TO_WIRE[span.polarity],
            }
            for span in labeled.gold_spans
        ],
        "domain": labeled.sentence.domain,
    }


class _StdioTransport:
    def __init__(self, command: list[str]):
        self.proc = subprocess.Popen(
            command,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            bufsize=1,
        )

    def send(self, message: dict) -> None:
        assert self.proc.stdin is not None
        self.proc.stdin.write(json.dumps(message) + "\n")
        self.proc.stdin.flush()

    def receive(self) -> str:
        assert self.proc.stdout is not None
        line = self.proc.stdout.readline()
        if not line:
            raise ProtocolError("transport", "external tagger closed its output stream")
        return line

    def close(self) -> None:
        if self.proc.stdin:
            self.proc.stdin.close()
        self.proc.wait(timeout=10)


class _TcpTransport:
    def __init__(self, host: str, port: int):
        self.sock = socket.create_connection((host, port), timeout=60)
        self.reader = self.sock.makefile("r", encoding="utf-8")
        self.writer = self.sock.makefile("w", encoding="utf-8")

    def send(self, message: dict) -> None:
        self.writer.write(json.dumps(message) + "\n")
        self.writer.flush()

    def receive(self) -> str:
        line = self.reader.readline()
        if not line:
            raise ProtocolError("transport", "external tagger closed the connection")
        return line

    def close(self) -> None:
        self.reader.close()
        self.writer.close()
        self.sock.close()


class TaggerClient:
    """A session with one external tagger process or socket."""

    def __init__(self, transport):
        self._transport = transport
        self.piece_level = False

    @classmethod
    def open(cls, endpoint: str) -> "TaggerClient":
        """Spawn a process command or connect to host:port, then handshake."""
        m = _TCP_RE.match(endpoint.strip())
        if m:
            transport = _TcpTransport(m.group("host"), int(m.group("port")))
        else:
            transport = _StdioTransport(shlex.split(endpoint))
        client = cls(transport)
        client.handshake()
        return client

    def _roundtrip(self, message: dict, stage: str) -> dict:
        self._transport.send(message)
        raw = self._transport.receive()
        try:
            reply = json.loads(raw)
        except json.JSONDecodeError:
            raise ProtocolError(stage, f"malformed response: {raw[:200]!r}") from None
        if not isinstance(reply, dict) or "op" not in reply:
            raise ProtocolError(stage, f"malformed response: {raw[:200]!r}")
        if reply["op"] == "error":
            raise ProtocolError(reply.get("stage", stage), reply.get("message", "unknown error"))
        return reply

    def handshake(self) -> None:
        reply = self._roundtrip({"op": "hello", "version": PROTOCOL_VERSION}, "handshake")
        if reply["op"] != "hello" or reply.get("version") != PROTOCOL_VERSION:
            raise ProtocolError(
                "handshake", f"protocol version mismatch: {reply.get('version')!r}"
            )
        self.piece_level = bool(reply.get("piece_level", False))

    def train(
        self,
        train: list[LabeledSentence],
        dev: list[LabeledSentence],
        config: TrainConfig,
        seed: int,
    ) -> str:
        reply = self._roundtrip(
            {
                "op": "train",
                "config": config.to_dict(),
                "train": [labeled_to_wire(s) for s in train],
                "dev": [labeled_to_wire(s) for s in dev],
                "seed": seed,
            },
            "train",
        )
        if reply["op"] != "trained" or "model_id" not in reply:
            raise ProtocolError("train", f"unexpected reply op {reply['op']!r}")
        return str(reply["model_id"])

    def predict(self, model_id: str, sentences: list[Sentence]) -> list[np.ndarray]:
        """Word-level (n_tokens, 3) arrays, merging piece-level replies."""
        reply = self._roundtrip(
            {
                "op": "predict",
                "model_id": model_id,
                "sentences": [{"tokens": s.tokens} for s in sentences],
            },
            "predict",
        )
        if reply["op"] != "predictions":
            raise ProtocolError("predict", f"unexpected reply op {reply['op']!r}")
        entries = reply.get("sentences")
        if not isinstance(entries, list) or len(entries) != len(sentences):
            raise ProtocolError("predict", "prediction count does not match request")
        return [
            _entry_to_word_distributions(entry, len(sentence.tokens))
            for entry, sentence in zip(entries, sentences)
        ]

    def close(self) -> None:
        self._transport.close()

    def __enter__(self) -> "TaggerClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def _as_distributions(rows: Sequence[Sequence[float]], where: str) -> list[TokenDistribution]:
    out = []
    for row in rows:
        if len(row) != 3:
            raise ProtocolError("predict", f"{where}: expected 3 probabilities, got {len(row)}")
        dist = TokenDistribution(float(row[0]), float(row[1]), float(row[2]))
        dist.validate()
        out.append(dist)
    return out


def _entry_to_word_distributions(entry: dict, n_words: int) -> np.ndarray:
    if "pieces" in entry:
        alignment = PieceAlignment(
            piece_distributions=_as_distributions(entry["pieces"], "pieces"),
            piece_to_word=[int(i) for i in entry.get("piece_to_word", [])],
        )
        alignment.validate(n_words)
        merged = merge_word_pieces(alignment)
    elif "distributions" in entry:
        merged = _as_distributions(entry["distributions"], "distributions")
        if len(merged) != n_words:
            raise ProtocolError(
                "predict", f"expected {n_words} word distributions, got {len(merged)}"
            )
    else:
        raise ProtocolError("predict", f"malformed prediction entry: {sorted(entry)!r}")
    return np.array([d.as_tuple() for d in merged], dtype=np.float64)


class ExternalTaggerModel:
    """TaggerModel handle proxying predictions over the wire protocol."""

    kind = "external"

    def __init__(self, client: TaggerClient, model_id: str, training_seed: int = 0):
        self.client = client
        self.model_id = model_id
        self.training_seed = training_seed

    def distributions(self, sentences: list[Sentence]) -> list[np.ndarray]:
        return self.client.predict(self.model_id, sentences)


def external_tagger(endpoint: str) -> TaggerClient:
    """Open a handshaken client for an external tagger endpoint."""
    return TaggerClient.open(endpoint)
