import math
import random
from collections import Counter

import pytest
from hypothesis import given
from hypothesis import strategies as st

from hashrag.corpus import TweetHashtagPair
from hashrag.retriever import RetrievalHit
from hashrag.selector import (
    CandidateHashtag,
    PerturbationKind,
    SelectorConfig,
    SynonymLexicon,
    aggregate_candidates,
    build_training_triples,
    candidate_final_score,
    perturb_hashtag,
    rank_candidates,
    select_top_k,
    selector_loss,
    selector_similarity,
    write_triples,
)
from hashrag.selector import _apply_perturbation

from conftest import make_corpus

CONFIG = SelectorConfig()


class FixedScorer:
    """Similarity provider backed by a plain lookup table."""

    def __init__(self, table):
        self.table = table

    def similarity(self, a, b):
        return self.table[b]


class TestApplyPerturbation:
    def test_swap_adjacent(self, full_lexicon):
        rng = random.Random(0)
        out, kind = _apply_perturbation(
            ["world", "cup"], PerturbationKind.SWAP_ADJACENT, 0, full_lexicon, rng
        )
        assert out == "cup world"
        assert kind is PerturbationKind.SWAP_ADJACENT

    def test_swap_at_last_position_uses_previous(self, full_lexicon):
        rng = random.Random(0)
        out, kind = _apply_perturbation(
            ["world", "cup", "final"], PerturbationKind.SWAP_ADJACENT, 2, full_lexicon, rng
        )
        assert out == "world final cup"

    def test_delete_middle_token(self, full_lexicon):
        rng = random.Random(0)
        out, kind = _apply_perturbation(
            ["world", "cup", "final"], PerturbationKind.DELETE, 1, full_lexicon, rng
        )
        assert out == "world final"
        assert kind is PerturbationKind.DELETE

    def test_insert_synonym_after_position(self, full_lexicon):
        rng = random.Random(0)
        out, kind = _apply_perturbation(
            ["world", "cup"], PerturbationKind.INSERT_SYNONYM, 0, full_lexicon, rng
        )
        tokens = out.split()
        assert tokens[0] == "world"
        assert tokens[1] in full_lexicon.synonyms("world")
        assert tokens[2] == "cup"
        assert kind is PerturbationKind.INSERT_SYNONYM

    def test_swap_on_single_token_falls_back_to_synonym(self, full_lexicon):
        rng = random.Random(0)
        out, kind = _apply_perturbation(
            ["world"], PerturbationKind.SWAP_ADJACENT, 0, full_lexicon, rng
        )
        assert kind is PerturbationKind.SYNONYM_REPLACE
        assert out in full_lexicon.synonyms("world")

    def test_delete_on_single_token_falls_back_to_synonym(self, full_lexicon):
        rng = random.Random(0)
        out, kind = _apply_perturbation(["cup"], PerturbationKind.DELETE, 0, full_lexicon, rng)
        assert kind is PerturbationKind.SYNONYM_REPLACE

    def test_unknown_token_falls_back_to_delete(self, full_lexicon):
        rng = random.Random(0)
        out, kind = _apply_perturbation(
            ["unknown", "cup"], PerturbationKind.SYNONYM_REPLACE, 0, full_lexicon, rng
        )
        assert kind is PerturbationKind.DELETE
        assert out == "cup"

    def test_unknown_single_token_degenerates(self, full_lexicon):
        rng = random.Random(0)
        out, kind = _apply_perturbation(
            ["unknown"], PerturbationKind.SYNONYM_REPLACE, 0, full_lexicon, rng
        )
        assert kind is PerturbationKind.IDENTITY
        assert out == "unknown"


class TestPerturbHashtag:
    def test_empty_hashtag_rejected(self, full_lexicon):
        with pytest.raises(ValueError):
            perturb_hashtag("   ", full_lexicon, random.Random(0), CONFIG)

    def test_kind_proportions(self, full_lexicon):
        rng = random.Random(7)
        counts = Counter()
        for _ in range(4000):
            _, kind = perturb_hashtag("world cup final", full_lexicon, rng, CONFIG)
            counts[kind] += 1
        assert counts[PerturbationKind.SYNONYM_REPLACE] / 4000 == pytest.approx(0.7, abs=0.03)
        assert counts[PerturbationKind.DELETE] / 4000 == pytest.approx(0.1, abs=0.03)
        assert counts[PerturbationKind.SWAP_ADJACENT] / 4000 == pytest.approx(0.1, abs=0.03)
        assert counts[PerturbationKind.INSERT_SYNONYM] / 4000 == pytest.approx(0.1, abs=0.03)

    def test_probs_validation(self):
        with pytest.raises(ValueError):
            SelectorConfig(perturbation_probs=(0.5, 0.5, 0.5, 0.5))
        with pytest.raises(ValueError):
            SelectorConfig(perturbation_probs=(1.1, -0.1, 0.0, 0.0))


class TestLexicon:
    def test_from_file(self, tmp_path):
        path = tmp_path / "syn.tsv"
        path.write_text("world\tglobe, earth\ncup\ttrophy\n", encoding="utf-8")
        lexicon = SynonymLexicon.from_file(path)
        assert lexicon.synonyms("world") == ["globe", "earth"]
        assert lexicon.synonyms("missing") == []

    def test_rejects_self_only_entry(self):
        with pytest.raises(ValueError, match="sole synonym"):
            SynonymLexicon(entries={"word": ("word",)})

    def test_self_filtered_from_synonyms(self):
        lexicon = SynonymLexicon(entries={"word": ("word", "term")})
        assert lexicon.synonyms("word") == ["term"]


class TestBuildTriples:
    def test_one_triple_per_hashtag(self, full_lexicon):
        corpus = make_corpus([("some tweet", ["world cup", "cup final", "goal rain"])])
        triples = build_training_triples(corpus, full_lexicon, CONFIG)
        assert len(triples) <= 3
        assert all(triple.anchor_tweet == "some tweet" for triple in triples)

    def test_same_seed_same_triples(self, full_lexicon):
        corpus = make_corpus(
            [("tweet one", ["world cup"]), ("tweet two", ["cup final", "goal"])]
        )
        first = build_training_triples(corpus, full_lexicon, CONFIG)
        second = build_training_triples(corpus, full_lexicon, CONFIG)
        assert first == second

    def test_count_matches_enumeration(self, full_lexicon):
        rng = random.Random(5)
        words = list(full_lexicon.entries)
        rows = []
        for _ in range(100):
            tags = [
                " ".join(rng.choices(words, k=rng.randint(2, 3)))
                for _ in range(rng.randint(3, 5))
            ]
            rows.append(("tweet text", tags))
        corpus = make_corpus(rows)
        triples = build_training_triples(corpus, full_lexicon, CONFIG)
        expected_occurrences = sum(len(pair.hashtags) for pair in corpus.pairs)
        # full lexicon, multi-token tags: only swap-of-equal-tokens can degenerate
        assert len(triples) <= expected_occurrences
        assert len(triples) >= expected_occurrences * 0.9
        assert all(triple.negative != triple.positive for triple in triples)

    def test_export_format(self, tmp_path, full_lexicon):
        corpus = make_corpus([("tweet", ["world cup"])])
        triples = build_training_triples(corpus, full_lexicon, CONFIG)
        path = tmp_path / "triples.jsonl"
        write_triples(triples, path)
        import json

        lines = [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines()]
        assert len(lines) == len(triples)
        assert set(lines[0]) == {"anchor", "positive", "negative", "kind"}


class TestSelectorSimilarity:
    def test_self_similarity(self, small_corpus):
        from hashrag.retriever import Embedder, RetrieverConfig

        scorer = Embedder(small_corpus, RetrieverConfig())
        assert selector_similarity("wvd", "wvd", scorer) == pytest.approx(1.0, abs=1e-12)

    def test_symmetry(self, small_corpus):
        from hashrag.retriever import Embedder, RetrieverConfig

        scorer = Embedder(small_corpus, RetrieverConfig())
        ab = selector_similarity("cloud desktops", "world cup", scorer)
        ba = selector_similarity("world cup", "cloud desktops", scorer)
        assert ab == pytest.approx(ba, abs=1e-12)

    def test_feature_disjoint_zero(self, small_corpus):
        from hashrag.retriever import Embedder, RetrieverConfig

        scorer = Embedder(small_corpus, RetrieverConfig())
        assert selector_similarity("aaaa bbbb", "cccc dddd", scorer) == 0.0


class TestSelectorLoss:
    def test_symmetric_pair_is_ln2(self):
        assert selector_loss([[0.3]], [[0.3]], 0.05) == pytest.approx(math.log(2), abs=1e-9)

    def test_hand_value(self):
        assert selector_loss([[1.0]], [[0.0]], 1.0) == pytest.approx(
            math.log(1 + math.exp(-1)), abs=1e-9
        )

    def test_matches_naive_formula(self):
        rng = random.Random(9)
        for _ in range(50):
            pos = [[rng.uniform(-1, 1) for _ in range(2)] for _ in range(2)]
            neg = [[rng.uniform(-1, 1) for _ in range(2)] for _ in range(2)]
            naive = 0.0
            for i in range(2):
                denom = sum(math.exp(pos[i][j]) + math.exp(neg[i][j]) for j in range(2))
                naive += -math.log(math.exp(pos[i][i]) / denom)
            naive /= 2
            assert selector_loss(pos, neg, 1.0) == pytest.approx(naive, abs=1e-9)

    def test_temperature_must_be_positive(self):
        with pytest.raises(ValueError):
            selector_loss([[0.5]], [[0.5]], 0.0)

    def test_shape_validation(self):
        with pytest.raises(ValueError):
            selector_loss([[0.5, 0.1]], [[0.5, 0.1]], 1.0)

    @given(st.integers(min_value=1, max_value=6), st.floats(min_value=-1, max_value=1))
    def test_equal_sims_give_ln_2l(self, batch_size, value):
        matrix = [[value] * batch_size for _ in range(batch_size)]
        assert selector_loss(matrix, matrix, 0.05) == pytest.approx(
            math.log(2 * batch_size), abs=1e-9
        )

    @given(
        st.integers(min_value=1, max_value=4).flatmap(
            lambda size: st.tuples(
                st.lists(
                    st.lists(st.floats(min_value=-1, max_value=1), min_size=size, max_size=size),
                    min_size=size,
                    max_size=size,
                ),
                st.lists(
                    st.lists(st.floats(min_value=-1, max_value=1), min_size=size, max_size=size),
                    min_size=size,
                    max_size=size,
                ),
            )
        )
    )
    def test_non_negative_and_finite(self, matrices):
        pos, neg = matrices
        loss = selector_loss(pos, neg, 0.05)
        assert math.isfinite(loss)
        assert loss >= -1e-12


def _hit(tags, score, pair_id="p"):
    pair = TweetHashtagPair(id=pair_id, text="text", hashtags=tuple(tags))
    return RetrievalHit(pair=pair, raw_score=score, normalized_score=score)


class TestAggregateCandidates:
    def test_merging_and_counts(self):
        hits = [_hit(["a", "b"], 1.0, "p0"), _hit(["a"], 0.5, "p1")]
        candidates = aggregate_candidates(hits)
        by_text = {candidate.text: candidate for candidate in candidates}
        assert by_text["a"].frequency == 2
        assert by_text["a"].tweet_scores == [1.0, 0.5]
        assert by_text["b"].frequency == 1
        assert by_text["b"].tweet_scores == [1.0]

    def test_no_hits(self):
        assert aggregate_candidates([]) == []

    def test_case_variants_merge(self):
        hits = [_hit(["#WVD"], 1.0, "p0"), _hit(["wvd"], 0.5, "p1")]
        candidates = aggregate_candidates(hits)
        assert len(candidates) == 1
        assert candidates[0].text == "wvd"
        assert candidates[0].frequency == 2

    def test_duplicates_within_hit_count_once(self):
        hits = [_hit(["a", "A", "#a"], 0.9, "p0")]
        candidates = aggregate_candidates(hits)
        assert candidates[0].frequency == 1
        assert candidates[0].tweet_scores == [0.9]

    def test_unnormalized_hits_rejected(self):
        pair = TweetHashtagPair(id="p", text="text", hashtags=("a",))
        with pytest.raises(ValueError):
            aggregate_candidates([RetrievalHit(pair=pair, raw_score=1.0)])


class TestRankCandidates:
    def test_single_occurrence_formula(self):
        candidates = [CandidateHashtag(text="a", frequency=1, tweet_scores=[0.8])]
        ranked = rank_candidates("tweet", candidates, FixedScorer({"a": 0.4}))
        assert ranked[0].final_score == pytest.approx(1.2, abs=1e-9)

    def test_frequency_magnified_formula(self):
        candidates = [CandidateHashtag(text="a", frequency=3, tweet_scores=[0.4, 0.5, 0.6])]
        ranked = rank_candidates("tweet", candidates, FixedScorer({"a": 0.3}))
        assert ranked[0].final_score == pytest.approx(0.96, abs=1e-9)

    def test_multiplier_is_one_for_single_hit(self):
        candidates = [CandidateHashtag(text="a", frequency=1, tweet_scores=[0.25])]
        ranked = rank_candidates("tweet", candidates, FixedScorer({"a": 0.0}))
        assert ranked[0].final_score == pytest.approx(0.25, abs=1e-9)

    def test_tie_break_frequency_then_text(self):
        candidates = [
            CandidateHashtag(text="b", frequency=1, tweet_scores=[0.6]),
            CandidateHashtag(text="a", frequency=1, tweet_scores=[0.6]),
            CandidateHashtag(text="c", frequency=2, tweet_scores=[0.3, 0.3]),
        ]
        # scores: b = 0.6, a = 0.6, c = (0.3 + 0.3) ... with s-hat 0 -> c = 0.33
        ranked = rank_candidates(
            "tweet", candidates, FixedScorer({"a": 0.0, "b": 0.0, "c": 0.0})
        )
        assert [candidate.text for candidate in ranked] == ["a", "b", "c"]

    def test_negative_similarity_candidates_kept(self):
        candidates = [
            CandidateHashtag(text="a", frequency=1, tweet_scores=[0.1]),
            CandidateHashtag(text="b", frequency=1, tweet_scores=[0.9]),
        ]
        ranked = rank_candidates("tweet", candidates, FixedScorer({"a": -0.5, "b": 0.0}))
        assert [candidate.text for candidate in ranked] == ["b", "a"]
        assert ranked[1].final_score == pytest.approx(-0.4, abs=1e-9)

    @given(
        st.floats(min_value=0.05, max_value=1.0),
        st.floats(min_value=0.0, max_value=1.0),
        st.integers(min_value=1, max_value=9),
    )
    def test_frequency_monotonicity(self, mean_score, hashtag_score, frequency):
        lower = candidate_final_score(mean_score, hashtag_score, frequency)
        higher = candidate_final_score(mean_score, hashtag_score, frequency + 1)
        assert higher > lower

    @given(
        st.floats(min_value=0.0, max_value=1.0),
        st.floats(min_value=-1.0, max_value=0.9),
        st.integers(min_value=1, max_value=10),
    )
    def test_similarity_monotonicity(self, mean_score, hashtag_score, frequency):
        lower = candidate_final_score(mean_score, hashtag_score, frequency)
        higher = candidate_final_score(mean_score, hashtag_score + 0.05, frequency)
        assert higher > lower


class TestSelectTopK:
    def _ranked(self, texts):
        return [CandidateHashtag(text=t, frequency=1, tweet_scores=[0.0]) for t in texts]

    def test_truncates(self):
        assert select_top_k(self._ranked(["a", "b", "c"]), 2) == ["a", "b"]

    def test_short_list(self):
        assert select_top_k(self._ranked(["a"]), 5) == ["a"]

    def test_zero_k_rejected(self):
        with pytest.raises(ValueError):
            select_top_k(self._ranked(["a"]), 0)
        with pytest.raises(ValueError):
            SelectorConfig(top_k=0)
