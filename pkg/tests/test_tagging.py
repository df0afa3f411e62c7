"""IO label encoding, sub-word merging, span decoding, and round trips."""

import random

import numpy as np
import pytest

from tsa_selftrain.corpus import Sentence
from tsa_selftrain.tagging import (
    Label,
    LabeledSentence,
    PieceAlignment,
    TaggingError,
    TargetSpan,
    TokenDistribution,
    argmax_labels,
    char_span_to_token_span,
    decode_spans,
    encode_labels,
    merge_word_pieces,
    token_label_counts,
)

P, N, O = Label.POS, Label.NEG, Label.NONE


def labeled(tokens, spans):
    sentence = Sentence.from_tokens(list(tokens), "d", "r", 0)
    return LabeledSentence(sentence, [TargetSpan(s, e, pol) for s, e, pol in spans])


def one_hot(labels):
    return [TokenDistribution.one_hot(lab) for lab in labels]


def dist(p_pos, p_neg, p_none):
    return TokenDistribution(p_pos, p_neg, p_none)


class TestEncodeLabels:
    def test_worked_example(self):
        # "Here is a nice electric car" with the positive target "electric car"
        row = labeled("Here is a nice electric car".split(), [(4, 6, P)])
        assert encode_labels(row) == [O, O, O, O, P, P]

    def test_no_spans_all_none(self):
        row = labeled(["a", "b", "c"], [])
        assert encode_labels(row) == [O, O, O]

    def test_adjacent_same_polarity_rejected(self):
        row = labeled(["a", "b", "c"], [(1, 2, P), (2, 3, P)])
        with pytest.raises(TaggingError, match="adjacent"):
            encode_labels(row)

    def test_adjacent_different_polarity_allowed(self):
        row = labeled(["a", "b", "c"], [(1, 2, P), (2, 3, N)])
        assert encode_labels(row) == [O, P, N]

    def test_overlapping_rejected(self):
        row = labeled(["a", "b", "c", "d"], [(0, 2, P), (1, 3, N)])
        with pytest.raises(TaggingError, match="overlap"):
            encode_labels(row)

    def test_span_beyond_sentence_rejected(self):
        row = labeled(["a", "b"], [(1, 3, P)])
        with pytest.raises(TaggingError):
            encode_labels(row)


class TestDecodeSpans:
    def test_worked_example(self):
        tokens = "Here is a nice electric car".split()
        spans = decode_spans(one_hot([O, O, O, O, P, P]), tokens)
        assert len(spans) == 1
        assert (spans[0].start, spans[0].end, spans[0].polarity) == (4, 6, P)
        assert spans[0].surface == "electric car"
        assert spans[0].confidence == 1.0

    def test_all_none_decodes_empty(self):
        assert decode_spans(one_hot([O, O, O])) == []

    def test_alternating_singletons_with_min_confidence(self):
        rows = [dist(0.8, 0.15, 0.05), dist(0.2, 0.7, 0.1), dist(0.9, 0.05, 0.05)]
        spans = decode_spans(rows)
        assert [(s.start, s.end, s.polarity) for s in spans] == [
            (0, 1, P),
            (1, 2, N),
            (2, 3, P),
        ]
        assert [pytest.approx(s.confidence) for s in spans] == [0.8, 0.7, 0.9]

    def test_run_confidence_is_min(self):
        rows = [dist(0.95, 0.04, 0.01), dist(0.6, 0.3, 0.1)]
        (span,) = decode_spans(rows)
        assert span.confidence == pytest.approx(0.6)

    def test_uniform_ties_resolve_to_none(self):
        rows = [dist(1 / 3, 1 / 3, 1 / 3)] * 4
        assert decode_spans(rows) == []

    def test_pos_neg_tie_resolves_to_pos(self):
        assert argmax_labels([dist(0.45, 0.45, 0.1)]) == [P]

    def test_empty_input(self):
        assert decode_spans([]) == []

    def test_accepts_ndarray(self):
        arr = np.array([[0.1, 0.1, 0.8], [0.9, 0.05, 0.05]])
        (span,) = decode_spans(arr)
        assert (span.start, span.end, span.polarity) == (1, 2, P)


def brute_force_runs(labels):
    """Independent run-grouping oracle: scan and cut at label changes."""
    runs = []
    for i, lab in enumerate(labels):
        if lab == O:
            continue
        if runs and runs[-1][2] == lab and runs[-1][1] == i:
            runs[-1][1] = i + 1
        else:
            runs.append([i, i + 1, lab])
    return [(s, e, lab) for s, e, lab in runs]


class TestDecodeAgainstOracle:
    def test_random_distributions_match_run_grouping_oracle(self):
        rng = random.Random(97)
        for _ in range(500):
            n = rng.randint(0, 12)
            rows = []
            for _ in range(n):
                raw = [rng.random() for _ in range(3)]
                total = sum(raw)
                rows.append(dist(*[v / total for v in raw]))
            spans = decode_spans(rows)
            labels = argmax_labels(rows)
            assert [(s.start, s.end, s.polarity) for s in spans] == brute_force_runs(labels)
            # spans are sorted, non-overlapping, and min-aggregated
            for a, b in zip(spans, spans[1:]):
                assert a.end <= b.start
            for span in spans:
                idx = 0 if span.polarity == P else 1
                member = [rows[i].as_tuple()[idx] for i in range(span.start, span.end)]
                assert span.confidence == pytest.approx(min(member))
                assert all(span.confidence <= m for m in member)


def random_layout(rng, n_tokens):
    """Random non-overlapping, non-adjacent span layout."""
    spans = []
    i = 0
    while i < n_tokens:
        if rng.random() < 0.35:
            length = min(rng.randint(1, 3), n_tokens - i)
            spans.append((i, i + length, rng.choice([P, N])))
            i += length + 1  # gap keeps spans non-adjacent
        else:
            i += 1
    return spans


class TestRoundTrip:
    def test_encode_decode_identity_over_random_layouts(self):
        rng = random.Random(4242)
        for _ in range(1000):
            n = rng.randint(1, 24)
            layout = random_layout(rng, n)
            row = labeled([f"t{i}" for i in range(n)], layout)
            decoded = decode_spans(one_hot(encode_labels(row)))
            assert [(s.start, s.end, s.polarity) for s in decoded] == layout
            assert all(s.confidence == 1.0 for s in decoded)


class TestMergeWordPieces:
    def test_first_sentiment_piece_wins_over_leading_none(self):
        pieces = [dist(0.1, 0.1, 0.8), dist(0.7, 0.2, 0.1)]
        merged = merge_word_pieces(PieceAlignment(pieces, [0, 0]))
        assert merged == [pieces[1]]

    def test_single_piece_identity(self):
        pieces = [dist(0.5, 0.2, 0.3)]
        assert merge_word_pieces(PieceAlignment(pieces, [0])) == pieces

    def test_first_sentiment_piece_wins_between_two_sentiments(self):
        pieces = [dist(0.7, 0.1, 0.2), dist(0.1, 0.8, 0.1)]
        merged = merge_word_pieces(PieceAlignment(pieces, [0, 0]))
        assert merged == [pieces[0]]

    def test_all_none_takes_first_piece(self):
        pieces = [dist(0.1, 0.1, 0.8), dist(0.2, 0.1, 0.7)]
        merged = merge_word_pieces(PieceAlignment(pieces, [0, 0]))
        assert merged == [pieces[0]]

    def test_identity_when_one_piece_per_word(self):
        rng = random.Random(8)
        for _ in range(200):
            n = rng.randint(1, 10)
            pieces = []
            for _ in range(n):
                raw = [rng.random() for _ in range(3)]
                total = sum(raw)
                pieces.append(dist(*[v / total for v in raw]))
            merged = merge_word_pieces(PieceAlignment(pieces, list(range(n))))
            assert merged == pieces

    def test_empty_alignment(self):
        assert merge_word_pieces(PieceAlignment([], [])) == []

    def test_gap_in_word_coverage_rejected(self):
        pieces = [dist(0.1, 0.1, 0.8)] * 2
        with pytest.raises(TaggingError):
            merge_word_pieces(PieceAlignment(pieces, [0, 2]))

    def test_decreasing_mapping_rejected(self):
        pieces = [dist(0.1, 0.1, 0.8)] * 2
        with pytest.raises(TaggingError):
            merge_word_pieces(PieceAlignment(pieces, [1, 0]))


class TestTokenLabelCounts:
    def test_hand_counted_case(self):
        gold = [P, P, O, N, N, O, O, O, O, O]
        pred = [P, P, O, O, O, P, O, O, O, O]
        assert token_label_counts(pred, gold) == (2, 1, 2)

    def test_length_mismatch_rejected(self):
        with pytest.raises(TaggingError):
            token_label_counts([P], [P, O])


class TestCharSpanConversion:
    def test_exact_boundaries_no_snap(self):
        offsets = [(0, 4), (5, 9), (10, 14)]
        assert char_span_to_token_span(5, 9, offsets) == (1, 2, False)

    def test_mid_token_snaps_outward(self):
        offsets = [(0, 4), (5, 9)]
        assert char_span_to_token_span(2, 7, offsets) == (0, 2, True)

    def test_no_overlap_returns_none(self):
        offsets = [(0, 4)]
        assert char_span_to_token_span(10, 12, offsets) is None


class TestDistributionValidation:
    def test_valid_sum_passes(self):
        dist(0.2, 0.3, 0.5).validate()

    def test_bad_sum_rejected(self):
        with pytest.raises(TaggingError):
            dist(0.5, 0.5, 0.5).validate()

    def test_none_polarity_span_rejected(self):
        with pytest.raises(TaggingError):
            TargetSpan(0, 1, Label.NONE)
