"""Review ingestion, filtering, domain assignment, and sentence splitting."""

import json
import random

import pytest

from tsa_selftrain.corpus import (
    UNASSIGNED,
    CorpusError,
    IngestCounters,
    Review,
    Sentence,
    assign_domain,
    build_sentence_pool,
    domain_histogram,
    filter_reviews,
    filter_sentences,
    load_reviews,
    split_sentences,
    split_text,
    tokenize,
    tokenize_with_offsets,
)
from tsa_selftrain.lexicon import SentimentLexicon

TABLE_DOMAINS = [
    "Restaurants", "Food", "Beauty&Spas", "Services", "Travel", "Shopping",
    "Automotive", "Health", "Active Life", "Entertainment", "Bars", "Pets",
    "Local Flavor", "Education", "Nightlife", "Television", "Religious", "Media",
]


def make_review(text="Great tacos.", useful=3, categories=("Restaurants",), rid="r1"):
    return Review(rid, text, useful, list(categories))


LEX = SentimentLexicon(entries={"tasty": 0.9, "awful": -0.8, "great": 0.85}, threshold=0.7)


class TestTokenize:
    def test_strips_edge_punctuation(self):
        assert tokenize("Great tacos.") == ["Great", "tacos"]

    def test_keeps_interior_punctuation(self):
        assert tokenize("don't stop, ever!") == ["don't", "stop", "ever"]

    def test_drops_pure_punctuation_chunks(self):
        assert tokenize("good -- bad") == ["good", "bad"]

    def test_offsets_point_into_text(self):
        text = '  "Nice place!"  '
        for tok, start, end in tokenize_with_offsets(text):
            assert text[start:end] == tok


class TestSplitText:
    def test_two_terminated_clauses(self):
        assert split_text("Great food. Bad service.") == ["Great food.", "Bad service."]

    def test_abbreviation_blocks_split(self):
        assert split_text("I met Dr. Smith today.") == ["I met Dr. Smith today."]

    def test_empty_text(self):
        assert split_text("") == []

    def test_question_and_exclamation(self):
        assert split_text("Really?! Yes. Wow!") == ["Really?!", "Yes.", "Wow!"]

    def test_initials_do_not_split(self):
        assert split_text("Thanks to J. Smith for the tip.") == [
            "Thanks to J. Smith for the tip."
        ]

    def test_decimal_number_does_not_split(self):
        assert split_text("We paid 3.50 for coffee. Worth it.") == [
            "We paid 3.50 for coffee.",
            "Worth it.",
        ]

    def test_trailing_quote_stays_attached(self):
        assert split_text('She said "wow." Then left.') == ['She said "wow."', "Then left."]

    @pytest.mark.parametrize("seed", range(20))
    def test_reconstruction_modulo_whitespace(self, seed):
        rng = random.Random(seed)
        words = ["alpha", "beta", "Dr.", "gamma", "e.g.", "delta", "99"]
        text = ""
        for _ in range(rng.randint(1, 40)):
            text += rng.choice(words) + rng.choice([" ", " ", ". ", "! ", "? "])
        joined = "".join(split_text(text)).replace(" ", "")
        assert joined == text.strip().replace(" ", "")


class TestSplitSentences:
    def test_sentences_carry_domain_and_indices(self):
        review = make_review(text="Great food. Bad service.")
        sentences = split_sentences(review, "Restaurants")
        assert [s.index_in_review for s in sentences] == [0, 1]
        assert all(s.domain == "Restaurants" for s in sentences)
        assert all(s.review_id == "r1" for s in sentences)

    def test_empty_review_yields_nothing(self):
        assert split_sentences(make_review(text="   ")) == []

    def test_pure_punctuation_segment_merges_backward(self):
        review = make_review(text="Great food. !!!")
        sentences = split_sentences(review, "Restaurants")
        assert len(sentences) == 1
        assert sentences[0].text == "Great food. !!!"

    def test_every_sentence_has_tokens(self):
        review = make_review(text="Good. ... Bad. ???")
        for sentence in split_sentences(review, "Food"):
            assert len(sentence.tokens) >= 1


class TestLoadReviews:
    def test_field_mapping(self, tmp_path):
        path = tmp_path / "reviews.jsonl"
        path.write_text(
            json.dumps({"text": "Great tacos.", "useful": 3, "categories": ["Restaurants"]})
            + "\n"
        )
        (review,) = list(load_reviews(str(path)))
        assert review.useful_count == 3
        assert review.categories == ["Restaurants"]

    def test_missing_categories_defaults_empty(self, tmp_path):
        path = tmp_path / "reviews.jsonl"
        path.write_text(json.dumps({"text": "Fine.", "useful": 1}) + "\n")
        (review,) = list(load_reviews(str(path)))
        assert review.categories == []

    def test_malformed_line_skipped_with_counted_warning(self, tmp_path):
        path = tmp_path / "reviews.jsonl"
        rows = [
            json.dumps({"text": "One.", "useful": 1, "categories": ["Food"]}),
            "{not json",
            json.dumps({"text": "Two.", "useful": 2, "categories": ["Pets"]}),
        ]
        path.write_text("\n".join(rows) + "\n")
        counters = IngestCounters()
        reviews = list(load_reviews(str(path), counters=counters))
        assert len(reviews) == 2
        assert counters.malformed == 1

    def test_unreadable_file_is_fatal(self, tmp_path):
        with pytest.raises(CorpusError):
            list(load_reviews(str(tmp_path / "missing.jsonl")))

    def test_two_file_join(self, tmp_path):
        reviews = tmp_path / "reviews.jsonl"
        business = tmp_path / "business.jsonl"
        reviews.write_text(
            json.dumps({"text": "Nice.", "useful": 2, "business_id": "b1"}) + "\n"
        )
        business.write_text(
            json.dumps({"business_id": "b1", "categories": "Nightlife, Bars"}) + "\n"
        )
        (review,) = list(load_reviews(str(reviews), str(business)))
        assert review.categories == ["Nightlife", "Bars"]


class TestFilterReviews:
    def test_not_useful_dropped(self):
        assert list(filter_reviews([make_review(useful=0, categories=["Food"])])) == []

    def test_no_categories_dropped(self):
        assert list(filter_reviews([make_review(useful=5, categories=())])) == []

    def test_passing_review_kept(self):
        kept = list(filter_reviews([make_review(useful=1, categories=["Pets"])]))
        assert len(kept) == 1

    def test_fuzz_against_predicate_oracle(self):
        rng = random.Random(7)
        reviews = [
            make_review(
                useful=rng.choice([0, 0, 1, 2, 10]),
                categories=rng.choice([[], ["Food"], ["Pets", "Bars"]]),
                rid=f"r{i}",
            )
            for i in range(500)
        ]
        kept_ids = {r.id for r in filter_reviews(reviews)}
        for review in reviews:
            expected = review.useful_count != 0 and bool(review.categories)
            assert (review.id in kept_ids) == expected


class TestAssignDomain:
    def test_first_match_in_popularity_order(self):
        review = make_review(categories=["Nightlife", "Restaurants"])
        assert assign_domain(review, TABLE_DOMAINS) == "Restaurants"

    def test_empty_categories_unassigned(self):
        assert assign_domain(make_review(categories=()), TABLE_DOMAINS) == UNASSIGNED

    def test_food_precedes_media(self):
        review = make_review(categories=["Media", "Food"])
        assert assign_domain(review, TABLE_DOMAINS) == "Food"

    def test_case_insensitive_match(self):
        review = make_review(categories=["restaurants"])
        assert assign_domain(review, TABLE_DOMAINS) == "Restaurants"

    def test_minimal_index_match_against_brute_force(self):
        rng = random.Random(3)
        for _ in range(300):
            cats = rng.sample(TABLE_DOMAINS + ["Other", "Junk"], rng.randint(0, 5))
            ordered = rng.sample(TABLE_DOMAINS, len(TABLE_DOMAINS))
            got = assign_domain(make_review(categories=cats), ordered)
            lowered = {c.casefold() for c in cats}
            expected = next((d for d in ordered if d.casefold() in lowered), UNASSIGNED)
            assert got == expected

    def test_empty_domain_list_rejected(self):
        with pytest.raises(ValueError):
            assign_domain(make_review(), [])


def sent(n_words, words=None, domain="Food", rid="r1", idx=0):
    tokens = words or [f"w{i}" for i in range(n_words)]
    return Sentence.from_tokens(tokens, domain, rid, idx)


class TestFilterSentences:
    def test_nine_words_dropped_even_with_sentiment(self):
        s = sent(9, ["tasty"] + [f"w{i}" for i in range(8)])
        assert list(filter_sentences([s], LEX)) == []

    def test_no_lexicon_word_dropped(self):
        assert list(filter_sentences([sent(12)], LEX)) == []

    def test_passing_sentence_kept(self):
        s = sent(12, ["tasty"] + [f"w{i}" for i in range(11)])
        assert list(filter_sentences([s], LEX)) == [s]

    @pytest.mark.parametrize("n,kept", [(9, False), (10, True), (50, True), (51, False)])
    def test_word_count_boundaries(self, n, kept):
        s = sent(n, ["tasty"] + [f"w{i}" for i in range(n - 1)])
        assert (list(filter_sentences([s], LEX)) == [s]) == kept

    def test_output_subset_and_no_qualifying_dropped(self):
        rng = random.Random(11)
        sentences = []
        for i in range(400):
            n = rng.randint(5, 55)
            words = [f"w{j}" for j in range(n)]
            if rng.random() < 0.5:
                words[rng.randrange(n)] = "Tasty."
            sentences.append(sent(n, words, rid=f"r{i}"))
        kept = set(id(s) for s in filter_sentences(sentences, LEX))
        for s in sentences:
            qualifies = 10 <= len(s.tokens) <= 50 and LEX.contains_sentiment_word(s.tokens)
            assert (id(s) in kept) == qualifies


class TestDomainHistogram:
    def test_counts(self):
        sentences = [sent(10, domain="Restaurants", idx=i) for i in range(3)]
        sentences.append(sent(10, domain="Pets", idx=3))
        assert domain_histogram(sentences) == {"Restaurants": 3, "Pets": 1}

    def test_empty(self):
        assert domain_histogram([]) == {}

    def test_sum_matches_input_length(self):
        sentences = [sent(10, domain=f"d{i % 4}", idx=i) for i in range(37)]
        assert sum(domain_histogram(sentences).values()) == 37


def _pool_review(i, n_sentences=3):
    text = " ".join(
        f"the food was tasty and the w{i} staff were great here today." for _ in range(n_sentences)
    )
    return make_review(text=text, useful=1, categories=["Food"], rid=f"r{i}")


class TestBuildSentencePool:
    def test_unassigned_reviews_dropped(self):
        reviews = [make_review(text="tasty " * 12, useful=1, categories=["Unknown"])]
        assert build_sentence_pool(reviews, TABLE_DOMAINS, LEX) == []

    def test_max_sentences_cap_respected(self):
        reviews = [_pool_review(i) for i in range(20)]
        pool = build_sentence_pool(reviews, TABLE_DOMAINS, LEX, max_sentences=10, seed=1)
        assert 0 < len(pool) <= 10

    def test_cap_sampling_is_review_level_and_deterministic(self):
        reviews = [_pool_review(i) for i in range(20)]
        pool_a = build_sentence_pool(reviews, TABLE_DOMAINS, LEX, max_sentences=9, seed=5)
        pool_b = build_sentence_pool(
            [_pool_review(i) for i in range(20)], TABLE_DOMAINS, LEX, max_sentences=9, seed=5
        )
        assert [s.identity for s in pool_a] == [s.identity for s in pool_b]
        by_review = {}
        for s in pool_a:
            by_review.setdefault(s.review_id, []).append(s.index_in_review)
        for indices in by_review.values():
            assert indices == [0, 1, 2]
