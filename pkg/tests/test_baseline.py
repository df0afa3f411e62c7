"""Baseline tagger: learning, determinism, early stopping, persistence."""

import numpy as np
import pytest

from tsa_selftrain.baseline import BaselineTagger, train_baseline
from tsa_selftrain.config import TrainConfig
from tsa_selftrain.corpus import Sentence
from tsa_selftrain.loop import split_dev, token_f1
from tsa_selftrain.synthkit import SynthSpec, generate
from tsa_selftrain.tagging import Label, LabeledSentence, TargetSpan, predict_spans


def small_corpus(seed=3, labeled_size=200):
    spec = SynthSpec(
        domains=["alpha", "beta"],
        labeled_domains=["alpha", "beta"],
        labeled_size=labeled_size,
        pool_size=10,
        test_per_domain=40,
        targets_per_domain=10,
        sentiment_words_per_polarity=10,
        background_words=40,
        noise=0.0,
        seed=seed,
    )
    return spec, generate(spec)


class TestTrainBaseline:
    def test_learns_planted_signal_above_majority_baseline(self):
        _, corpus = small_corpus()
        train, dev = split_dev(corpus.labeled, 0.2, 1)
        model = train_baseline(train, dev, TrainConfig(), seed=2, lexicon=corpus.lexicon)
        # all-NONE majority predictions score 0 token-F1
        assert token_f1(model, dev) > 0.5

    def test_identical_seed_gives_byte_identical_parameters(self, tmp_path):
        _, corpus = small_corpus()
        train, dev = split_dev(corpus.labeled, 0.2, 1)
        a = train_baseline(train, dev, TrainConfig(), seed=7, lexicon=corpus.lexicon)
        b = train_baseline(train, dev, TrainConfig(), seed=7, lexicon=corpus.lexicon)
        assert a.weights.tobytes() == b.weights.tobytes()
        assert a.vocab == b.vocab
        a.save(str(tmp_path / "a"))
        b.save(str(tmp_path / "b"))
        for name in ("weights.npy", "vocab.json", "meta.json", "lexicon.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_different_seed_gives_different_parameters(self):
        _, corpus = small_corpus()
        train, dev = split_dev(corpus.labeled, 0.2, 1)
        a = train_baseline(train, dev, TrainConfig(), seed=7)
        b = train_baseline(train, dev, TrainConfig(), seed=8)
        assert a.weights.tobytes() != b.weights.tobytes()

    def test_plateau_stops_before_max_epochs(self):
        # duplicated trivial data drives dev F1 to its ceiling immediately
        sentence = Sentence.from_tokens(["great", "fomatu", "here"], "d", "r", 0)
        rows = [
            LabeledSentence(sentence, [TargetSpan(1, 2, Label.POS)])
            for _ in range(64)
        ]
        model = train_baseline(rows, rows[:16], TrainConfig(max_epochs=15), seed=1)
        assert len(model.dev_trace) < 15

    def test_empty_train_rejected(self):
        with pytest.raises(ValueError):
            train_baseline([], [], TrainConfig(), seed=0)

    def test_empty_dev_runs_fixed_epochs(self):
        _, corpus = small_corpus(labeled_size=60)
        model = train_baseline(
            corpus.labeled, [], TrainConfig(max_epochs=3), seed=4, lexicon=corpus.lexicon
        )
        assert model.dev_trace == []

    def test_noise_free_seen_domain_span_f1_above_point_nine(self):
        from tsa_selftrain.evaluation import MatchCounts, exact_match, prf

        spec, corpus = small_corpus(seed=6, labeled_size=300)
        train, dev = split_dev(corpus.labeled, 0.2, 1)
        model = train_baseline(train, dev, TrainConfig(), seed=2, lexicon=corpus.lexicon)
        counts = MatchCounts()
        for domain in spec.labeled_domains:
            rows = corpus.test_sets[domain]
            for spans, row in zip(
                predict_spans(model, [r.sentence for r in rows]), rows
            ):
                counts += exact_match(spans, row.gold_spans)
        _, _, f1 = prf(counts)
        assert f1 > 0.9

    def test_model_recovers_planted_span_on_training_sentence(self):
        _, corpus = small_corpus()
        train, dev = split_dev(corpus.labeled, 0.2, 1)
        model = train_baseline(train, dev, TrainConfig(), seed=2, lexicon=corpus.lexicon)
        with_span = next(s for s in train if s.gold_spans)
        (predicted,) = predict_spans(model, [with_span.sentence])
        gold = with_span.gold_spans[0]
        assert any(
            (p.start, p.end, p.polarity) == (gold.start, gold.end, gold.polarity)
            for p in predicted
        )


class TestPredictDeterminism:
    def test_same_input_same_spans(self):
        _, corpus = small_corpus()
        train, dev = split_dev(corpus.labeled, 0.2, 1)
        model = train_baseline(train, dev, TrainConfig(), seed=2)
        sentences = [r.sentence for r in corpus.test_sets["alpha"]]
        first = predict_spans(model, sentences)
        second = predict_spans(model, sentences)
        assert [
            [(s.start, s.end, s.polarity, s.confidence) for s in row] for row in first
        ] == [[(s.start, s.end, s.polarity, s.confidence) for s in row] for row in second]

    def test_empty_sentence_list(self):
        _, corpus = small_corpus(labeled_size=40)
        model = train_baseline(corpus.labeled, [], TrainConfig(max_epochs=1), seed=0)
        assert predict_spans(model, []) == []


class TestSaveLoad:
    def test_roundtrip_predictions_identical(self, tmp_path):
        _, corpus = small_corpus()
        train, dev = split_dev(corpus.labeled, 0.2, 1)
        model = train_baseline(train, dev, TrainConfig(), seed=2, lexicon=corpus.lexicon)
        model.save(str(tmp_path / "m"))
        loaded = BaselineTagger.load(str(tmp_path / "m"))
        sentences = [r.sentence for r in corpus.test_sets["beta"][:20]]
        for a, b in zip(model.distributions(sentences), loaded.distributions(sentences)):
            assert np.array_equal(a, b)
        assert loaded.training_seed == model.training_seed
