"""The bridge must pass the same protocol conformance suite as the mock."""

import sys

import numpy as np
import pytest

from tsa_selftrain.conformance import conformance_corpus, run_conformance_suite
from tsa_selftrain.config import TrainConfig
from tsa_selftrain.protocol import ExternalTaggerModel, TaggerClient
from tsa_selftrain.tagging import predict_spans

BRIDGE = f"{sys.executable} -m tsa_bridge.cli serve --model tiny-random --device cpu"


class TestBridgeConformance:
    def test_passes_full_suite(self):
        passed = run_conformance_suite(BRIDGE, n_sentences=50)
        assert passed == [
            "handshake",
            "bad-version-rejected",
            "unknown-op-rejected",
            "train",
            "predict",
            "unknown-model-rejected",
            "predict-deterministic",
        ]


@pytest.fixture(scope="module")
def session():
    labeled = conformance_corpus(40)
    client = TaggerClient.open(BRIDGE)
    model_id = client.train(
        labeled[:30], labeled[30:], TrainConfig(max_epochs=2), seed=3
    )
    yield client, model_id, labeled
    client.close()


class TestBridgeAlignmentInvariants:
    def test_piece_level_announced(self, session):
        client, _, _ = session
        assert client.piece_level is True

    def test_raw_entries_cover_every_word_and_sum_to_one(self, session):
        client, model_id, labeled = session
        sentences = [s.sentence for s in labeled[:10]]
        reply = client._roundtrip(
            {
                "op": "predict",
                "model_id": model_id,
                "sentences": [{"tokens": s.tokens} for s in sentences],
            },
            "predict",
        )
        for entry, sentence in zip(reply["sentences"], sentences):
            piece_to_word = entry["piece_to_word"]
            assert sorted(set(piece_to_word)) == list(range(len(sentence.tokens)))
            assert piece_to_word == sorted(piece_to_word)
            rows = np.array(entry["pieces"])
            assert rows.shape[0] == len(piece_to_word)
            assert np.allclose(rows.sum(axis=1), 1.0, atol=1e-5)

    def test_merged_predictions_are_word_level(self, session):
        client, model_id, labeled = session
        sentences = [s.sentence for s in labeled[:5]]
        model = ExternalTaggerModel(client, model_id)
        for dist, sentence in zip(model.distributions(sentences), sentences):
            assert dist.shape == (len(sentence.tokens), 3)
        # decodes without error end to end
        predict_spans(model, sentences)


class TestBridgeLearnsLexicalSignal:
    def test_high_lr_fine_tune_recovers_training_spans(self):
        labeled = conformance_corpus(60)
        train, dev = labeled[:48], labeled[48:]
        # the randomly initialized tiny model needs ~25 epochs to leave the
        # all-NONE plateau; a negative min_delta disables early stopping
        config = TrainConfig(learning_rate=1e-3, max_epochs=40, min_delta=-1.0)
        with TaggerClient.open(BRIDGE) as client:
            model_id = client.train(train, dev, config, seed=11)
            model = ExternalTaggerModel(client, model_id)
            predicted = predict_spans(model, [s.sentence for s in train])
            gold_total = sum(len(row.gold_spans) for row in train)
            hits = sum(
                any(p.key == g.key for p in spans)
                for spans, row in zip(predicted, train)
                for g in row.gold_spans
            )
            assert hits / gold_total > 0.5
