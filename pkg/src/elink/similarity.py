"""Text similarity scorers and similarity-based candidate ranking.

Two interchangeable scorers share the score(hypothesis, reference)
interface with outputs in [0, 1]: sentence BLEU (default, offline) and
embedding cosine via an HTTP provider. Ranking always scores the
candidate description as hypothesis against the generated query as
reference; that direction is fixed here and nowhere else.
"""

from __future__ import annotations

import logging
import math
import os
from collections import Counter
from dataclasses import replace
from typing import List, Sequence

from .errors import DimensionMismatchError, NetworkError, ProviderError
from .kg import Candidate, CandidateSource

LOGGER = logging.getLogger(__name__)

DEFAULT_EMBED_URL = "http://localhost:8731/embeddings"
MAX_ORDER = 4  # highest n-gram order


def _ngram_counts(tokens, n) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(hypothesis: str, reference: str) -> float:
    """Sentence BLEU on whitespace tokens, orders 1..4, uniform weights.

    Unigram precision is unsmoothed, so disjoint strings score 0.
    Orders 2..4 get add-one smoothing; an order with no n-grams at all
    counts as 1, which keeps bleu(x, x) == 1.0 for every non-empty x.
    Either side empty scores 0. Brevity penalty exp(1 - r/c) when the
    hypothesis is not longer than the reference.
    """
    hyp = hypothesis.split()
    ref = reference.split()
    if not hyp or not ref:
        return 0.0
    log_sum = 0.0
    for order in range(1, MAX_ORDER + 1):
        hyp_counts = _ngram_counts(hyp, order)
        ref_counts = _ngram_counts(ref, order)
        matches = sum(min(count, ref_counts[gram]) for gram, count in hyp_counts.items())
        total = sum(hyp_counts.values())
        if order == 1:
            if matches == 0:
                return 0.0
            precision = matches / total
        else:
            precision = (matches + 1) / (total + 1)
        log_sum += math.log(precision) / MAX_ORDER
    if len(hyp) > len(ref):
        brevity = 1.0
    else:
        brevity = math.exp(1 - len(ref) / len(hyp))
    return brevity * math.exp(log_sum)


class BleuScorer:
    name = "bleu"

    def score(self, hypothesis: str, reference: str) -> float:
        return bleu(hypothesis, reference)

    def score_many(self, hypotheses: Sequence[str], reference: str) -> List[float]:
        return [self.score(h, reference) for h in hypotheses]


def cosine(u: Sequence[float], v: Sequence[float]) -> float:
    if len(u) != len(v):
        raise DimensionMismatchError(f"vector lengths differ: {len(u)} vs {len(v)}")
    dot = sum(a * b for a, b in zip(u, v))
    norm_u = math.sqrt(sum(a * a for a in u))
    norm_v = math.sqrt(sum(b * b for b in v))
    if norm_u == 0.0 or norm_v == 0.0:
        return 0.0  # degenerate vector: treat as neutral
    return dot / (norm_u * norm_v)


class EmbeddingClient:
    """Tiny client for a POST {"inputs": [...]} -> {"vectors": [...]} provider."""

    def __init__(self, transport, base_url=None):
        self.transport = transport
        self.base_url = base_url or os.environ.get("EMBED_BASE_URL") or DEFAULT_EMBED_URL

    def embed(self, texts: Sequence[str]) -> List[List[float]]:
        if not texts:
            return []
        try:
            payload = self.transport.request("POST", self.base_url, body={"inputs": list(texts)})
        except NetworkError as exc:
            raise ProviderError(f"embedding provider unreachable: {exc}") from exc
        vectors = payload.get("vectors") if isinstance(payload, dict) else None
        if not isinstance(vectors, list) or len(vectors) != len(texts):
            raise ProviderError("embedding response missing aligned 'vectors' list")
        for vec in vectors:
            if not isinstance(vec, list) or not all(isinstance(x, (int, float)) for x in vec):
                raise ProviderError("embedding vector is not a list of numbers")
        return vectors


def embed_similarity(a: str, b: str, client: EmbeddingClient) -> float:
    """Cosine similarity of two texts mapped affinely from [-1, 1] to [0, 1]."""
    if a == b:
        return 1.0
    va, vb = client.embed([a, b])
    return (cosine(va, vb) + 1.0) / 2.0


class EmbeddingScorer:
    name = "embedding"

    def __init__(self, client: EmbeddingClient):
        self.client = client

    def score(self, hypothesis: str, reference: str) -> float:
        return embed_similarity(hypothesis, reference, self.client)

    def score_many(self, hypotheses: Sequence[str], reference: str) -> List[float]:
        # one provider round-trip for the whole option list
        if not hypotheses:
            return []
        vectors = self.client.embed([reference, *hypotheses])
        ref_vec = vectors[0]
        return [(cosine(vec, ref_vec) + 1.0) / 2.0 for vec in vectors[1:]]


def _qid_order(qid: str):
    try:
        return (0, int(qid[1:]))
    except (ValueError, IndexError):
        return (1, qid)


def rank_top_k(query: str, candidates: Sequence[Candidate], k: int, scorer) -> List[Candidate]:
    """Top k candidates by similarity of description to the query.

    Ties break on lower search_rank, then on qid. Returned candidates
    are re-tagged with source=similarity; their search_rank is kept as
    provenance.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    if k == 0 or not candidates:
        return []
    scores = scorer.score_many([c.description for c in candidates], query)
    ranked = sorted(
        zip(candidates, scores),
        key=lambda pair: (-pair[1], pair[0].search_rank, _qid_order(pair[0].qid)),
    )
    return [replace(c, source=CandidateSource.SIMILARITY) for c, _ in ranked[:k]]
