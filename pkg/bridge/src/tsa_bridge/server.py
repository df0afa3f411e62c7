"""Protocol session: newline-delimited JSON request/reply over stdio or TCP.

One session handles requests strictly sequentially. Failures answer with
{op:"error", stage, message} and the session stays alive.
"""

from __future__ import annotations

import json
import logging
import os
import socket
import sys
from dataclasses import dataclass, field

from .modeling import TINY_RANDOM, BridgeModel

log = logging.getLogger(__name__)

PROTOCOL_VERSION = 1


@dataclass
class BridgeConfig:
    model_name: str = TINY_RANDOM
    device: str = "cpu"
    save_dir: str | None = None
    # Default fine-tuning hyperparameters; per-request configs override.
    train_defaults: dict = field(
        default_factory=lambda: {
            "learning_rate": 3e-5,
            "adam_epsilon": 1e-8,
            "batch_size": 32,
            "max_epochs": 15,
            "min_delta": 0.005,
        }
    )


class BridgeSession:
    def __init__(self, config: BridgeConfig):
        self.config = config
        self.models: dict[str, BridgeModel] = {}
        self._counter = 0

    def handle(self, message: dict) -> dict:
        op = message.get("op")
        if op == "hello":
            return self._hello(message)
        if op == "train":
            return self._train(message)
        if op == "predict":
            return self._predict(message)
        return _error("parse", f"unknown op {op!r}")

    def _hello(self, message: dict) -> dict:
        if message.get("version") != PROTOCOL_VERSION:
            return _error(
                "handshake", f"unsupported protocol version {message.get('version')!r}"
            )
        return {"op": "hello", "version": PROTOCOL_VERSION, "piece_level": True}

    def _train(self, message: dict) -> dict:
        try:
            train_records = message["train"]
            dev_records = message.get("dev", [])
            seed = int(message.get("seed", 0))
            config = dict(self.config.train_defaults)
            config.update(message.get("config", {}))
            if not train_records:
                return _error("train", "train set is empty")
            token_lists = [r["tokens"] for r in train_records + dev_records]
            model = BridgeModel.build(self.config.model_name, token_lists, self.config.device)
            trace = model.train(train_records, dev_records, config, seed)
        except (KeyError, TypeError, ValueError) as exc:
            return _error("train", f"malformed train request: {exc}")
        except (RuntimeError, OSError) as exc:
            # covers device OOM and model-load failures; session stays alive
            return _error("train", str(exc))
        self._counter += 1
        model_id = f"m{self._counter}"
        self.models[model_id] = model
        if self.config.save_dir:
            target = os.path.join(self.config.save_dir, model_id)
            model.save(target)
            model_id = target
            self.models[model_id] = model
        log.info("trained %s (%d epochs traced)", model_id, len(trace))
        return {"op": "trained", "model_id": model_id}

    def _resolve(self, model_id: str) -> BridgeModel | None:
        if model_id in self.models:
            return self.models[model_id]
        if os.path.isdir(str(model_id)):
            model = BridgeModel.load(str(model_id), self.config.device)
            self.models[model_id] = model
            return model
        return None

    def _predict(self, message: dict) -> dict:
        model = self._resolve(str(message.get("model_id")))
        if model is None:
            return _error("predict", f"unknown model_id {message.get('model_id')!r}")
        try:
            token_lists = [s["tokens"] for s in message["sentences"]]
            entries = model.predict_pieces(token_lists)
        except (KeyError, TypeError, ValueError) as exc:
            return _error("predict", f"malformed predict request: {exc}")
        except RuntimeError as exc:
            return _error("predict", str(exc))
        return {"op": "predictions", "sentences": entries}


def _error(stage: str, message: str) -> dict:
    return {"op": "error", "stage": stage, "message": message}


def serve_lines(session: BridgeSession, reader, writer) -> None:
    for line in reader:
        line = line.strip()
        if not line:
            continue
        try:
            message = json.loads(line)
        except json.JSONDecodeError:
            reply = _error("parse", "request is not valid JSON")
        else:
            try:
                reply = session.handle(message)
            except Exception as exc:  # keep the session alive on any bug
                log.exception("request failed")
                reply = _error("internal", str(exc))
        writer.write(json.dumps(reply) + "\n")
        writer.flush()


def serve(config: BridgeConfig, listen_port: int | None = None) -> None:
    session = BridgeSession(config)
    if listen_port is not None:
        server = socket.create_server(("127.0.0.1", listen_port))
        log.info("listening on 127.0.0.1:%d", listen_port)
        conn, _ = server.accept()
        with conn:
            reader = conn.makefile("r", encoding="utf-8")
            writer = conn.makefile("w", encoding="utf-8")
            serve_lines(session, reader, writer)
        server.close()
    else:
        serve_lines(session, sys.stdin, sys.stdout)
