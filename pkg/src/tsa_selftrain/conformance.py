"""Protocol conformance suite for external tagger servers.

Runs the same checks against any endpoint speaking the tagger wire
protocol: handshake, a train/predict round trip on 50 sentences,
well-formedness of returned distributions and alignments, and error-path
behavior (bad version, unknown model, malformed op) without killing the
session. The bundled mock tagger and the transformer bridge are both
expected to pass it unchanged.
"""

from __future__ import annotations

import json

import numpy as np

from .config import TrainConfig
from .protocol import PROTOCOL_VERSION, ProtocolError, TaggerClient
from .synthkit import SynthSpec, generate
from .tagging import decode_spans


class ConformanceFailure(AssertionError):
    pass


def _check(condition: bool, name: str, detail: str = "") -> None:
    if not condition:
        raise ConformanceFailure(f"conformance check failed: {name} {detail}".strip())


def conformance_corpus(n_sentences: int = 50):
    """Small deterministic labeled set for round-trip checks."""
    spec = SynthSpec(
        domains=["alpha", "beta"],
        labeled_domains=["alpha", "beta"],
        labeled_size=n_sentences,
        pool_size=4,
        test_per_domain=1,
        targets_per_domain=8,
        sentiment_words_per_polarity=8,
        background_words=30,
        noise=0.0,
        seed=7,
    )
    return generate(spec).labeled


def run_conformance_suite(endpoint: str, n_sentences: int = 50) -> list[str]:
    """Run every check against the endpoint; returns the passed check names.

    Raises ConformanceFailure (or ProtocolError) on the first violation.
    """
    passed = []
    labeled = conformance_corpus(n_sentences)
    train, dev = labeled[: n_sentences - 10], labeled[n_sentences - 10 :]

    # 1. handshake
    client = TaggerClient.open(endpoint)
    passed.append("handshake")

    try:
        # 2. wrong protocol version yields an error and the session survives
        try:
            client._roundtrip({"op": "hello", "version": PROTOCOL_VERSION + 41}, "handshake")
        except ProtocolError:
            pass
        else:
            raise ConformanceFailure("conformance check failed: bad-version accepted")
        client.handshake()
        passed.append("bad-version-rejected")

        # 3. malformed op yields an error, session survives
        try:
            client._roundtrip({"op": "frobnicate"}, "parse")
        except ProtocolError:
            pass
        else:
            raise ConformanceFailure("conformance check failed: unknown op accepted")
        client.handshake()
        passed.append("unknown-op-rejected")

        # 4. train round trip
        model_id = client.train(train, dev, TrainConfig(), seed=13)
        _check(bool(model_id), "train-returns-model-id")
        passed.append("train")

        # 5. predict round trip: shapes, simplex, decodability
        sentences = [s.sentence for s in train]
        distributions = client.predict(model_id, sentences)
        _check(len(distributions) == len(sentences), "predict-count")
        for dist, sentence in zip(distributions, sentences):
            _check(
                dist.shape == (len(sentence.tokens), 3),
                "predict-shape",
                f"{dist.shape} vs {len(sentence.tokens)} tokens",
            )
            _check(
                bool(np.all(np.abs(dist.sum(axis=1) - 1.0) < 1e-5)),
                "predict-simplex",
            )
            decode_spans(dist, sentence.tokens)
        passed.append("predict")

        # 6. unknown model id yields an error, session survives
        try:
            client.predict("no-such-model", sentences[:1])
        except ProtocolError:
            pass
        else:
            raise ConformanceFailure("conformance check failed: unknown model accepted")
        client.handshake()
        passed.append("unknown-model-rejected")

        # 7. prediction is repeatable within a session
        again = client.predict(model_id, sentences[:5])
        for a, b in zip(distributions[:5], again):
            _check(bool(np.allclose(a, b, atol=1e-6)), "predict-deterministic")
        passed.append("predict-deterministic")
    finally:
        client.close()
    return passed


def main(argv: list[str] | None = None) -> int:
    import argparse

    parser = argparse.ArgumentParser(description="Run the tagger protocol conformance suite.")
    parser.add_argument("endpoint", help="process command or host:port")
    parser.add_argument("--sentences", type=int, default=50)
    args = parser.parse_args(argv)
    passed = run_conformance_suite(args.endpoint, args.sentences)
    print(json.dumps({"passed": passed}))
    return 0


if __name__ == "__main__":
    import sys

    sys.exit(main())
