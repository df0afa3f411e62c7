"""Wire protocol client against the mock tagger: round trips and error paths."""

import socket
import subprocess
import sys
import threading
import time

import numpy as np
import pytest

from tsa_selftrain.conformance import conformance_corpus, run_conformance_suite
from tsa_selftrain.config import TrainConfig
from tsa_selftrain.corpus import Sentence
from tsa_selftrain.protocol import ExternalTaggerModel, ProtocolError, TaggerClient
from tsa_selftrain.tagging import Label, predict_spans

MOCK = f"{sys.executable} -m tsa_selftrain.mock_tagger"


def open_mock(extra=""):
    return TaggerClient.open(f"{MOCK} {extra}".strip())


class TestHandshake:
    def test_handshake_succeeds(self):
        client = open_mock()
        assert client.piece_level is False
        client.close()

    def test_piece_level_flag_reported(self):
        client = open_mock("--piece-level")
        assert client.piece_level is True
        client.close()

    def test_version_mismatch_raises(self):
        with pytest.raises(ProtocolError, match="handshake"):
            open_mock("--protocol-version 2")


class TestTrainPredict:
    def test_round_trip_recovers_training_labels(self):
        labeled = conformance_corpus(40)
        train, dev = labeled[:30], labeled[30:]
        with open_mock() as client:
            model_id = client.train(train, dev, TrainConfig(), seed=1)
            model = ExternalTaggerModel(client, model_id)
            sentences = [s.sentence for s in train]
            predicted = predict_spans(model, sentences)
            hits = sum(
                any(p.key == g.key for p in spans)
                for spans, row in zip(predicted, train)
                for g in row.gold_spans
            )
            total = sum(len(row.gold_spans) for row in train)
            assert hits / total > 0.9

    def test_piece_level_merge_path(self):
        labeled = conformance_corpus(40)
        with open_mock("--piece-level") as client:
            model_id = client.train(labeled[:30], labeled[30:], TrainConfig(), seed=1)
            sentences = [s.sentence for s in labeled[:5]]
            distributions = client.predict(model_id, sentences)
            for dist, sentence in zip(distributions, sentences):
                assert dist.shape == (len(sentence.tokens), 3)
                assert np.allclose(dist.sum(axis=1), 1.0, atol=1e-6)

    def test_unknown_model_id_is_error_but_session_survives(self):
        with open_mock() as client:
            with pytest.raises(ProtocolError, match="predict"):
                client.predict("bogus", [Sentence.from_tokens(["a", "b"])])
            client.handshake()

    def test_error_names_the_stage(self):
        labeled = conformance_corpus(20)
        with open_mock("--fail-predict") as client:
            model_id = client.train(labeled[:15], labeled[15:], TrainConfig(), seed=1)
            with pytest.raises(ProtocolError) as excinfo:
                client.predict(model_id, [Sentence.from_tokens(["a", "b"])])
            assert excinfo.value.stage == "predict"


class TestUniformAndExampleModes:
    def test_uniform_distributions_decode_to_no_spans(self):
        with open_mock("--mode uniform") as client:
            model = ExternalTaggerModel(client, "any")
            sentence = Sentence.from_tokens(["the", "food", "was", "fine"])
            (spans,) = predict_spans(model, [sentence])
            assert spans == []

    def test_worked_example_through_protocol(self):
        with open_mock("--mode example") as client:
            model = ExternalTaggerModel(client, "any")
            sentence = Sentence.from_tokens("Here is a nice electric car".split())
            (spans,) = predict_spans(model, [sentence])
            assert len(spans) == 1
            span = spans[0]
            assert (span.start, span.end, span.polarity) == (4, 6, Label.POS)
            assert span.surface == "electric car"


class TestTcpTransport:
    def test_round_trip_over_socket(self):
        with socket.socket() as probe:
            probe.bind(("127.0.0.1", 0))
            port = probe.getsockname()[1]
        proc = subprocess.Popen(
            f"{MOCK} --mode example --listen {port}".split(),
            stdout=subprocess.DEVNULL,
        )
        try:
            client = None
            for _ in range(50):
                try:
                    client = TaggerClient.open(f"127.0.0.1:{port}")
                    break
                except (ConnectionRefusedError, OSError):
                    time.sleep(0.1)
            assert client is not None, "could not connect to TCP mock"
            model = ExternalTaggerModel(client, "any")
            sentence = Sentence.from_tokens("Here is a nice electric car".split())
            (spans,) = predict_spans(model, [sentence])
            assert spans[0].surface == "electric car"
            client.close()
        finally:
            proc.terminate()
            proc.wait(timeout=5)


class TestConformanceSuite:
    def test_mock_passes_word_level(self):
        passed = run_conformance_suite(MOCK)
        assert "handshake" in passed and "predict" in passed

    def test_mock_passes_piece_level(self):
        passed = run_conformance_suite(f"{MOCK} --piece-level")
        assert "predict" in passed
