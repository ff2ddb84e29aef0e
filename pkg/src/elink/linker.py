"""The linking pipeline: understand, retrieve, iterate, resolve.

Per mention: an understanding agent writes a retrieval query, the
knowledge graph returns up to search_limit candidates, the top slice by
search order and the top slice by description similarity are combined,
a judgment agent decides whether the entity is in the combined list
(regenerating the query with feedback until it is, bounded by
max_iterations), and a chooser picks the final answer from a lettered
option list. Ablations switch off the filter, the iteration, or the
multiple-choice resolution.

Agents passed in need understand(ctx, feedback=None) -> str,
judge(ctx, candidates) -> bool and choose(ctx, options) -> int | None
(plus choose_inline for the direct-chat style). Anything with those
methods works; tests use scripted stand-ins.
"""

from __future__ import annotations

import hashlib
import json
import logging
import unicodedata
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

from .corpus import Document, MentionContext, SegmentMode, categorize, segment
from .errors import ParseError
from .kg import Candidate, SearchRequest, WikidataClient
from .llm import VARIANTS, PromptVariant, SearchTarget
from .similarity import BleuScorer, rank_top_k

LOGGER = logging.getLogger(__name__)


class CombineStrategy(str, Enum):
    SEA_ONLY = "sea-only"
    SIM_ONLY = "sim-only"
    SEA_THEN_SIM = "sea-then-sim"
    SIM_THEN_SEA = "sim-then-sea"
    INTERSECTION = "intersection"


class Ablation(str, Enum):
    NO_CANDIDATE_FILTER = "no-candidate-filter"
    NO_ADAPTIVE_ITERATION = "no-adaptive-iteration"
    NO_MULTIPLE_CHOICE = "no-multiple-choice"


class LinkMethod(str, Enum):
    MULTIPLE_CHOICE = "multiple-choice"
    STRING_MATCH = "string-match"
    DIRECT_CHAT = "direct-chat"


@dataclass(frozen=True)
class CandidateSet:
    mention_id: str
    sea_can: Tuple[Candidate, ...]  # top slice in search order
    sim_can: Tuple[Candidate, ...]  # top slice by similarity to the query
    combined: Tuple[Candidate, ...]  # deduped merge per strategy
    strategy: CombineStrategy
    iteration: int = 0  # regeneration round that produced this set


@dataclass
class LinkResult:
    mention_id: str
    chosen_qid: Optional[str] = None
    method: LinkMethod = LinkMethod.MULTIPLE_CHOICE
    iterations_used: int = 1
    used_fallback: bool = False
    candidate_category: Optional[str] = None  # difficulty of the final set
    error: Optional[str] = None
    candidates: Optional[CandidateSet] = None  # final set, not serialized
    initial_candidates: Optional[CandidateSet] = None  # first round, not serialized


@dataclass
class PipelineConfig:
    variant: str = "5-0"
    mode: SegmentMode = SegmentMode.MEN
    window_tokens: int = 64
    search_limit: int = 200
    top_k_sea: int = 5
    top_k_sim: int = 5
    strategy: CombineStrategy = CombineStrategy.SEA_THEN_SIM
    max_iterations: int = 5
    mc_option_cap: int = 10
    scorer: str = "bleu"  # bleu | embedding
    ablations: frozenset = field(default_factory=frozenset)
    understanding_shots: int = 32
    choice_shots: int = 2
    no_mc_style: LinkMethod = LinkMethod.STRING_MATCH  # resolution arm without MC
    language: str = "en"
    seed: int = 0

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        SegmentMode(self.mode)
        if self.window_tokens < 1:
            raise ValueError("window_tokens must be >= 1")
        if not 1 <= self.search_limit <= 500:
            raise ValueError("search_limit must be in [1, 500]")
        if self.top_k_sea < 0 or self.top_k_sim < 0:
            raise ValueError("top_k_sea and top_k_sim must be >= 0")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not 1 <= self.mc_option_cap <= 26:
            raise ValueError("mc_option_cap must be in [1, 26]; options are lettered")
        concat = (CombineStrategy.SEA_THEN_SIM, CombineStrategy.SIM_THEN_SEA)
        if CombineStrategy(self.strategy) in concat:
            if self.top_k_sea + self.top_k_sim > self.mc_option_cap:
                raise ValueError(
                    "top_k_sea + top_k_sim must be <= mc_option_cap for concatenating strategies"
                )
        if self.scorer not in ("bleu", "embedding"):
            raise ValueError(f"unknown scorer {self.scorer!r}")
        if LinkMethod(self.no_mc_style) is LinkMethod.MULTIPLE_CHOICE:
            raise ValueError("no_mc_style must be string-match or direct-chat")

    @property
    def prompt_variant(self) -> PromptVariant:
        return VARIANTS[self.variant]

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "mode": SegmentMode(self.mode).value,
            "window_tokens": self.window_tokens,
            "search_limit": self.search_limit,
            "top_k_sea": self.top_k_sea,
            "top_k_sim": self.top_k_sim,
            "strategy": CombineStrategy(self.strategy).value,
            "max_iterations": self.max_iterations,
            "mc_option_cap": self.mc_option_cap,
            "scorer": self.scorer,
            "ablations": sorted(Ablation(a).value for a in self.ablations),
            "understanding_shots": self.understanding_shots,
            "choice_shots": self.choice_shots,
            "no_mc_style": LinkMethod(self.no_mc_style).value,
            "language": self.language,
            "seed": self.seed,
        }

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def dedup_by_qid(candidates: Sequence[Candidate]) -> List[Candidate]:
    seen = set()
    out = []
    for c in candidates:
        if c.qid not in seen:
            seen.add(c.qid)
            out.append(c)
    return out


def combine(
    sea: Sequence[Candidate], sim: Sequence[Candidate], strategy: CombineStrategy
) -> List[Candidate]:
    """Merge the two top slices; concatenating strategies dedup by qid."""
    strategy = CombineStrategy(strategy)
    if strategy is CombineStrategy.SEA_ONLY:
        return list(sea)
    if strategy is CombineStrategy.SIM_ONLY:
        return list(sim)
    if strategy is CombineStrategy.SEA_THEN_SIM:
        return dedup_by_qid([*sea, *sim])
    if strategy is CombineStrategy.SIM_THEN_SEA:
        return dedup_by_qid([*sim, *sea])
    sim_qids = {c.qid for c in sim}
    return [c for c in sea if c.qid in sim_qids]


_PUNCT_STRIP = {"P"}  # unicode categories removed before matching


def _normalize_label(text: str) -> str:
    kept = []
    for ch in text.casefold():
        if unicodedata.category(ch)[0] in _PUNCT_STRIP:
            continue
        kept.append(ch)
    return " ".join("".join(kept).split())


def string_match(surface: str, candidates: Sequence[Candidate]) -> Optional[Candidate]:
    """Exact label match after case folding and punctuation stripping.

    Several matches: the earliest in the list wins. No match: the first
    candidate stands in. Empty list: None.
    """
    if not candidates:
        return None
    target = _normalize_label(surface)
    for c in candidates:
        if _normalize_label(c.label) == target:
            return c
    return candidates[0]


class Pipeline:
    def __init__(self, cfg: PipelineConfig, kg: WikidataClient, agents, scorer=None):
        cfg.validate()
        self.cfg = cfg
        self.kg = kg
        self.agents = agents
        self.scorer = scorer or BleuScorer()

    # -- candidate generation -------------------------------------------------

    def _generate(self, ctx: MentionContext, query: str, iteration: int):
        cfg = self.cfg
        variant = cfg.prompt_variant
        if variant.search_target is SearchTarget.MENTION:
            term = ctx.surface
        else:
            term = query
        pool, used_fallback = self.kg.search_with_fallback(
            term,
            ctx.surface,
            limit=cfg.search_limit,
            language=cfg.language,
            fallback_enabled=variant.mention_fallback,
        )
        sea = pool[: cfg.top_k_sea]
        sim = rank_top_k(query, pool, cfg.top_k_sim, self.scorer)
        merged = combine(sea, sim, cfg.strategy)
        cans = CandidateSet(
            mention_id=ctx.mention_id,
            sea_can=tuple(sea),
            sim_can=tuple(sim),
            combined=tuple(merged),
            strategy=CombineStrategy(cfg.strategy),
            iteration=iteration,
        )
        return cans, used_fallback

    def generate_candidates(self, ctx: MentionContext, query: str) -> CandidateSet:
        cans, _ = self._generate(ctx, query, iteration=0)
        return cans

    # -- adaptive iteration ---------------------------------------------------

    def adaptive_iterate(self, ctx: MentionContext, initial: CandidateSet):
        """Judge the set; on rejection re-understand with feedback and retry.

        Returns (final set, iterations_used, used_fallback_any). The
        judgment runs once per round up to max_iterations; a new query
        is only generated between rounds, so a run that never confirms
        performs max_iterations judgments and max_iterations - 1
        regenerations.
        """
        cfg = self.cfg
        current = initial
        fallback_any = False
        for round_no in range(1, cfg.max_iterations + 1):
            confirmed = False
            if current.combined:
                try:
                    confirmed = self.agents.judge(ctx, current.combined)
                except ParseError as exc:
                    LOGGER.warning("judgment unparseable for %s: %s", ctx.mention_id, exc)
            if confirmed:
                return current, round_no, fallback_any
            if round_no == cfg.max_iterations:
                break
            query = self.agents.understand(ctx, feedback=current.combined)
            current, used_fallback = self._generate(ctx, query, iteration=round_no)
            fallback_any = fallback_any or used_fallback
        return current, cfg.max_iterations, fallback_any

    # -- resolution -----------------------------------------------------------

    def resolve(self, ctx: MentionContext, cans: CandidateSet) -> LinkResult:
        cfg = self.cfg
        options = list(cans.combined[: cfg.mc_option_cap])
        result = LinkResult(mention_id=ctx.mention_id, candidates=cans)
        if Ablation.NO_MULTIPLE_CHOICE in cfg.ablations:
            if LinkMethod(cfg.no_mc_style) is LinkMethod.DIRECT_CHAT:
                result.method = LinkMethod.DIRECT_CHAT
                if options:
                    index = self.agents.choose_inline(ctx, options)
                    if index is not None:
                        result.chosen_qid = options[index].qid
            else:
                result.method = LinkMethod.STRING_MATCH
                match = string_match(ctx.surface, options)
                if match is not None:
                    result.chosen_qid = match.qid
        else:
            result.method = LinkMethod.MULTIPLE_CHOICE
            if options:
                index = self.agents.choose(ctx, options)
                if index is not None:  # None is an abstention, not an error
                    result.chosen_qid = options[index].qid
        return result

    # -- per-mention and per-document driving ---------------------------------

    def link_context(self, ctx: MentionContext) -> LinkResult:
        cfg = self.cfg
        try:
            if Ablation.NO_CANDIDATE_FILTER in cfg.ablations:
                # raw mode: query the KG with the surface, no agents before resolution
                pool = self.kg.search_entities(
                    SearchRequest(ctx.surface, limit=cfg.search_limit, language=cfg.language)
                )
                keep = cfg.top_k_sea + cfg.top_k_sim
                cans = CandidateSet(
                    mention_id=ctx.mention_id,
                    sea_can=tuple(pool[: cfg.top_k_sea]),
                    sim_can=tuple(pool[cfg.top_k_sea : keep]),
                    combined=tuple(pool[:keep]),
                    strategy=CombineStrategy(cfg.strategy),
                    iteration=0,
                )
                result = self.resolve(ctx, cans)
                result.initial_candidates = cans
                return result
            query = self.agents.understand(ctx)
            initial, used_fallback = self._generate(ctx, query, iteration=0)
            if Ablation.NO_ADAPTIVE_ITERATION in cfg.ablations:
                final, iterations, fallback_later = initial, 1, False
            else:
                final, iterations, fallback_later = self.adaptive_iterate(ctx, initial)
            result = self.resolve(ctx, final)
            result.iterations_used = iterations
            result.used_fallback = used_fallback or fallback_later
            result.initial_candidates = initial
            return result
        except Exception as exc:  # single mentions must not sink the batch
            LOGGER.warning("linking %s failed: %s", ctx.mention_id, exc)
            return LinkResult(
                mention_id=ctx.mention_id,
                iterations_used=0,
                error=f"{type(exc).__name__}: {exc}",
            )

    def link_document(self, doc: Document, workers: int = 1) -> List[LinkResult]:
        """Link every mention; results come back in mention order."""
        contexts = segment(doc, self.cfg.mode, self.cfg.window_tokens)
        if workers <= 1:
            results = [self.link_context(ctx) for ctx in contexts]
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(self.link_context, contexts))
        by_id = {m.id: m for m in doc.mentions}
        for result in results:
            mention = by_id[result.mention_id]
            if mention.gold_qid is not None and result.error is None and result.candidates:
                result.candidate_category = categorize(mention, result.candidates.combined).value
        return results


def link_documents(
    pipeline: Pipeline, docs: Sequence[Document], workers: int = 1
) -> Dict[str, List[LinkResult]]:
    """Convenience driver: document id -> results, document order kept."""
    return {doc.id: pipeline.link_document(doc, workers=workers) for doc in docs}
