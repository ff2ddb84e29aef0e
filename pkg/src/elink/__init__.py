"""Unsupervised entity linking against Wikidata with LLM agents.

Pipeline in one line: window the text around each mention, have a model
write a retrieval query, search the knowledge graph, keep the best
candidates by search order and by description similarity, let a judge
agent demand query refinements until the list looks right, then pick
the answer from a lettered option list. Every outbound HTTP call can be
recorded to a cassette and replayed byte-for-byte offline.
"""

from .corpus import (
    DifficultyCategory,
    Document,
    Mention,
    MentionContext,
    SegmentMode,
    categorize,
    dump_dataset,
    load_dataset,
    remove_fraction,
    segment,
)
from .errors import ElinkError
from .kg import Candidate, CandidateSource, SearchRequest, WikidataClient
from .linker import (
    Ablation,
    CandidateSet,
    CombineStrategy,
    LinkMethod,
    LinkResult,
    Pipeline,
    PipelineConfig,
    combine,
    link_documents,
    string_match,
)
from .llm import ChatClient, ChatParams, LlmAgents, PromptVariant, VARIANTS
from .similarity import BleuScorer, EmbeddingClient, EmbeddingScorer, bleu, rank_top_k

__version__ = "0.1.0"

__all__ = [
    "Ablation",
    "BleuScorer",
    "Candidate",
    "CandidateSet",
    "CandidateSource",
    "ChatClient",
    "ChatParams",
    "CombineStrategy",
    "DifficultyCategory",
    "Document",
    "ElinkError",
    "EmbeddingClient",
    "EmbeddingScorer",
    "LinkMethod",
    "LinkResult",
    "LlmAgents",
    "Mention",
    "MentionContext",
    "Pipeline",
    "PipelineConfig",
    "PromptVariant",
    "SearchRequest",
    "SegmentMode",
    "VARIANTS",
    "WikidataClient",
    "bleu",
    "categorize",
    "combine",
    "dump_dataset",
    "link_documents",
    "load_dataset",
    "rank_top_k",
    "remove_fraction",
    "segment",
    "string_match",
]
