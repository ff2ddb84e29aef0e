import json
import math
import os
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from elink.errors import DimensionMismatchError, NetworkError, ProviderError
from elink.kg import Candidate, CandidateSource
from elink.similarity import (
    BleuScorer,
    EmbeddingClient,
    EmbeddingScorer,
    bleu,
    cosine,
    embed_similarity,
    rank_top_k,
)

FIXTURE = os.path.join(os.path.dirname(__file__), "fixtures", "bleu_oracle.json")


class TestBleu:
    def test_matches_frozen_oracle(self):
        with open(FIXTURE, "r", encoding="utf-8") as handle:
            cases = json.load(handle)
        assert len(cases) >= 20
        for case in cases:
            got = bleu(case["hypothesis"], case["reference"])
            assert got == pytest.approx(case["score"], abs=1e-9), case

    def test_identical_strings(self):
        assert bleu("Japan national football team", "Japan national football team") == 1.0

    def test_empty_sides(self):
        assert bleu("", "anything here") == 0.0
        assert bleu("anything here", "") == 0.0
        assert bleu("", "") == 0.0

    def test_disjoint_strings(self):
        assert bleu("alpha beta", "gamma delta") == 0.0

    def test_range(self):
        score = bleu("the cat sat", "the cat sat on the mat")
        assert 0.0 < score < 1.0

    @given(st.lists(st.sampled_from("a b c dd ee ff gg".split()), min_size=1, max_size=12))
    @settings(max_examples=80)
    def test_identity_property(self, tokens):
        text = " ".join(tokens)
        assert bleu(text, text) == 1.0

    @given(
        st.lists(st.sampled_from("a b c dd ee".split()), min_size=0, max_size=10),
        st.lists(st.sampled_from("a b c dd ee".split()), min_size=0, max_size=10),
    )
    @settings(max_examples=80)
    def test_bounded(self, hyp, ref):
        score = bleu(" ".join(hyp), " ".join(ref))
        assert 0.0 <= score <= 1.0


class TestCosine:
    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            cosine([1.0, 0.0], [1.0, 0.0, 0.0])

    def test_zero_vector_is_neutral(self):
        assert cosine([0.0, 0.0], [1.0, 0.0]) == 0.0

    def test_parallel(self):
        assert cosine([2.0, 0.0], [4.0, 0.0]) == pytest.approx(1.0)


class StubTransport:
    """Returns vectors from a fixed text -> vector table."""

    offline = True

    def __init__(self, table, fail_with=None, respond_with=None):
        self.table = table
        self.fail_with = fail_with
        self.respond_with = respond_with
        self.calls = 0

    def request(self, method, url, *, params=None, body=None, headers=None):
        self.calls += 1
        if self.fail_with is not None:
            raise self.fail_with
        if self.respond_with is not None:
            return self.respond_with
        return {"vectors": [self.table[text] for text in body["inputs"]]}


class TestEmbedSimilarity:
    def test_equal_texts_short_circuit(self):
        transport = StubTransport({})
        client = EmbeddingClient(transport, base_url="http://e")
        assert embed_similarity("same", "same", client) == 1.0
        assert transport.calls == 0

    def test_affine_mapping(self):
        table = {"a": [1.0, 0.0], "b": [0.6, 0.8], "c": [0.8, 0.6]}
        client = EmbeddingClient(StubTransport(table), base_url="http://e")
        assert embed_similarity("a", "b", client) == pytest.approx(0.8)
        assert embed_similarity("a", "c", client) == pytest.approx(0.9)

    def test_orthogonal_maps_to_half(self):
        table = {"a": [1.0, 0.0], "b": [0.0, 1.0]}
        client = EmbeddingClient(StubTransport(table), base_url="http://e")
        assert embed_similarity("a", "b", client) == pytest.approx(0.5)

    def test_provider_error_on_bad_shape(self):
        client = EmbeddingClient(
            StubTransport({}, respond_with={"wrong": []}), base_url="http://e"
        )
        with pytest.raises(ProviderError):
            client.embed(["a"])

    def test_provider_error_on_misaligned_count(self):
        client = EmbeddingClient(
            StubTransport({}, respond_with={"vectors": [[1.0]]}), base_url="http://e"
        )
        with pytest.raises(ProviderError):
            client.embed(["a", "b"])

    def test_provider_error_on_non_numeric(self):
        client = EmbeddingClient(
            StubTransport({}, respond_with={"vectors": [["x"]]}), base_url="http://e"
        )
        with pytest.raises(ProviderError):
            client.embed(["a"])

    def test_network_error_wrapped(self):
        client = EmbeddingClient(
            StubTransport({}, fail_with=NetworkError("down")), base_url="http://e"
        )
        with pytest.raises(ProviderError):
            client.embed(["a"])

    def test_dimension_mismatch_surfaces(self):
        table = {"a": [1.0, 0.0], "b": [1.0, 0.0, 0.0]}
        client = EmbeddingClient(StubTransport(table), base_url="http://e")
        with pytest.raises(DimensionMismatchError):
            embed_similarity("a", "b", client)

    def test_score_many_single_round_trip(self):
        table = {"q": [1.0, 0.0], "d1": [0.6, 0.8], "d2": [0.0, 1.0]}
        transport = StubTransport(table)
        scorer = EmbeddingScorer(EmbeddingClient(transport, base_url="http://e"))
        scores = scorer.score_many(["d1", "d2"], "q")
        assert scores == [pytest.approx(0.8), pytest.approx(0.5)]
        assert transport.calls == 1

    def test_env_base_url(self, monkeypatch):
        monkeypatch.setenv("EMBED_BASE_URL", "http://env-embed")
        client = EmbeddingClient(StubTransport({}))
        assert client.base_url == "http://env-embed"


def make_candidates(descriptions):
    return [
        Candidate(qid=f"Q{i + 1}", label=f"L{i}", description=desc, search_rank=i)
        for i, desc in enumerate(descriptions)
    ]


def brute_force_rank(query, candidates, k, scorer):
    def qid_key(qid):
        return (0, int(qid[1:]))

    scored = [(scorer.score(c.description, query), c) for c in candidates]
    ordered = sorted(scored, key=lambda pair: (-pair[0], pair[1].search_rank, qid_key(pair[1].qid)))
    return [c.qid for _, c in ordered[:k]]


class TestRankTopK:
    def test_prefers_similar_descriptions(self):
        cands = make_candidates(
            ["blue fish swimming", "national football team", "a football team of Japan"]
        )
        top = rank_top_k("Japan national football team", cands, 2, BleuScorer())
        assert [c.qid for c in top] == ["Q2", "Q3"]
        assert all(c.source is CandidateSource.SIMILARITY for c in top)

    def test_tie_breaks_on_search_rank(self):
        cands = make_candidates(["same words", "same words", "same words"])
        top = rank_top_k("same words", cands, 3, BleuScorer())
        assert [c.qid for c in top] == ["Q1", "Q2", "Q3"]

    def test_tie_breaks_on_qid_when_rank_equal(self):
        cands = [
            Candidate(qid="Q20", label="a", description="same", search_rank=5),
            Candidate(qid="Q3", label="b", description="same", search_rank=5),
        ]
        top = rank_top_k("same", cands, 2, BleuScorer())
        assert [c.qid for c in top] == ["Q3", "Q20"]

    def test_k_zero_and_empty(self):
        cands = make_candidates(["a"])
        assert rank_top_k("a", cands, 0, BleuScorer()) == []
        assert rank_top_k("a", [], 3, BleuScorer()) == []

    def test_negative_k_rejected(self):
        with pytest.raises(ValueError):
            rank_top_k("a", make_candidates(["a"]), -1, BleuScorer())

    def test_constant_scorer_reduces_to_search_order(self):
        class Constant:
            def score(self, hypothesis, reference):
                return 0.5

            def score_many(self, hypotheses, reference):
                return [0.5] * len(hypotheses)

        cands = make_candidates(["x", "y", "z", "w"])
        top = rank_top_k("anything", cands, 3, Constant())
        assert [c.qid for c in top] == ["Q1", "Q2", "Q3"]

    def test_matches_brute_force_on_random_inputs(self):
        rng = random.Random(7)
        vocab = "cat dog fish team club city river mountain".split()
        scorer = BleuScorer()
        for _ in range(100):
            descriptions = [
                " ".join(rng.choices(vocab, k=rng.randint(0, 6))) for _ in range(rng.randint(1, 12))
            ]
            cands = make_candidates(descriptions)
            query = " ".join(rng.choices(vocab, k=rng.randint(1, 6)))
            k = rng.randint(1, 12)
            got = [c.qid for c in rank_top_k(query, cands, k, scorer)]
            assert got == brute_force_rank(query, cands, k, scorer)

    def test_input_order_is_irrelevant(self):
        rng = random.Random(9)
        cands = make_candidates(["a b", "a b c", "c d", "a", "d e f"])
        baseline = [c.qid for c in rank_top_k("a b c", cands, 3, BleuScorer())]
        for _ in range(10):
            shuffled = cands[:]
            rng.shuffle(shuffled)
            assert [c.qid for c in rank_top_k("a b c", shuffled, 3, BleuScorer())] == baseline

    def test_keeps_original_search_rank_as_provenance(self):
        cands = make_candidates(["match this query", "unrelated words"])
        [top] = rank_top_k("match this query", cands, 1, BleuScorer())
        assert top.search_rank == 0
        assert top.qid == "Q1"
