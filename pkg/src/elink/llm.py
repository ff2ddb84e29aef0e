"""Chat-model client and the three agent roles built on it.

The client speaks the chat-completions wire shape through a transport,
enforces the input token budget on the final user message, and retries
parsing failures by appending one corrective system instruction per
attempt; it never repairs model output heuristically.

Agent roles: understanding (writes a retrieval query for a mention),
judgment (is the right entity in this candidate list), choice (pick a
lettered option). All three demand strict JSON from the model.
"""

from __future__ import annotations

import json
import logging
import os
import random
import string
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Sequence

from . import prompts
from .errors import AuthError, InputTooLongError, ParseError, UpstreamSchemaError
from .kg import Candidate

LOGGER = logging.getLogger(__name__)

DEFAULT_BASE_URL = "https://api.openai.com/v1"
DEFAULT_MODEL = "gpt-3.5-turbo"
REPAIR_INSTRUCTION = "Return only valid JSON matching the schema."


class ExampleSource(str, Enum):
    DATASET = "dataset"  # few-shot glosses in annotation style
    WIKIDATA = "wikidata"  # few-shot glosses in KG description style
    NONE = "none"  # no examples


class SearchTarget(str, Enum):
    QUERY = "query"  # search the generated query text
    MENTION = "mention"  # search the raw mention surface


@dataclass(frozen=True)
class PromptVariant:
    id: str
    example_source: ExampleSource
    mention_fallback: bool  # retry search with the surface on empty results
    search_target: SearchTarget


VARIANTS: Dict[str, PromptVariant] = {
    v.id: v
    for v in (
        PromptVariant("3-0", ExampleSource.DATASET, False, SearchTarget.QUERY),
        PromptVariant("3-1", ExampleSource.DATASET, True, SearchTarget.QUERY),
        PromptVariant("4-0", ExampleSource.WIKIDATA, False, SearchTarget.QUERY),
        PromptVariant("4-1", ExampleSource.WIKIDATA, True, SearchTarget.QUERY),
        PromptVariant("5-0", ExampleSource.NONE, False, SearchTarget.MENTION),
    )
}

_SHOT_POOLS = {
    ExampleSource.DATASET: "dataset_descriptions",
    ExampleSource.WIKIDATA: "wikidata_descriptions",
}


@dataclass
class ChatParams:
    model: Optional[str] = None  # falls back to LLM_MODEL, then the default
    temperature: float = 0.75
    max_input_tokens: int = 256  # whitespace tokens in the final user message
    max_output_tokens: int = 256
    max_retries_on_parse: int = 2

    def __post_init__(self):
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature must be in [0, 2], got {self.temperature}")
        if self.max_input_tokens < 1:
            raise ValueError("max_input_tokens must be >= 1")
        if self.max_retries_on_parse < 0:
            raise ValueError("max_retries_on_parse must be >= 0")
        if self.model is None:
            self.model = os.environ.get("LLM_MODEL") or DEFAULT_MODEL


def count_tokens(text: str) -> int:
    return len(text.split())


class ChatClient:
    def __init__(self, transport, base_url=None, api_key=None):
        self.transport = transport
        self.base_url = (base_url or os.environ.get("LLM_BASE_URL") or DEFAULT_BASE_URL).rstrip("/")
        self.api_key = api_key if api_key is not None else os.environ.get("LLM_API_KEY")

    def chat(self, messages: Sequence[dict], params: ChatParams) -> str:
        """One chat turn; returns the assistant message content."""
        if not messages:
            raise ValueError("messages must be non-empty")
        last_user = next((m for m in reversed(messages) if m.get("role") == "user"), None)
        if last_user is None:
            raise ValueError("messages must contain a user message")
        tokens = count_tokens(last_user.get("content", ""))
        if tokens > params.max_input_tokens:
            raise InputTooLongError(
                f"user message has {tokens} tokens, budget is {params.max_input_tokens}"
            )
        headers = None
        if self.api_key:
            headers = {"Authorization": f"Bearer {self.api_key}"}
        elif not getattr(self.transport, "offline", False):
            raise AuthError("no API key configured (set LLM_API_KEY)")
        body = {
            "model": params.model,
            "messages": list(messages),
            "temperature": params.temperature,
            "max_tokens": params.max_output_tokens,
        }
        payload = self.transport.request(
            "POST", f"{self.base_url}/chat/completions", body=body, headers=headers
        )
        try:
            content = payload["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise UpstreamSchemaError(f"malformed chat completion payload: {exc}") from exc
        if not isinstance(content, str):
            raise UpstreamSchemaError("chat completion content is not a string")
        return content

    def chat_parsed(self, messages: Sequence[dict], params: ChatParams, parser):
        """chat() plus strict parsing, re-asking on ParseError.

        Each retry appends one system instruction demanding valid JSON;
        total attempts are bounded by 1 + max_retries_on_parse.
        """
        attempts = 1 + params.max_retries_on_parse
        current = list(messages)
        last_error = None
        for attempt in range(1, attempts + 1):
            text = self.chat(current, params)
            try:
                return parser(text)
            except ParseError as exc:
                last_error = exc
                LOGGER.debug("parse failure on attempt %d: %s", attempt, exc)
                current = current + [{"role": "system", "content": REPAIR_INSTRUCTION}]
        raise last_error


def _load_json_object(text: str) -> dict:
    try:
        value = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"not valid JSON: {exc}") from exc
    if not isinstance(value, dict):
        raise ParseError("JSON output is not an object")
    return value


def parse_understanding(text: str) -> str:
    obj = _load_json_object(text)
    query = obj.get("query")
    if not isinstance(query, str) or not query.strip():
        raise ParseError("missing non-empty 'query' string")
    return query.strip()


def parse_judgment(text: str) -> bool:
    obj = _load_json_object(text)
    present = obj.get("present")
    if not isinstance(present, bool):
        raise ParseError("missing boolean 'present'")
    return present


def parse_choice(text: str, n_options: int) -> Optional[int]:
    """Letter -> 0-based index; a letter beyond the options means abstain."""
    obj = _load_json_object(text)
    choice = obj.get("choice")
    if not isinstance(choice, str):
        raise ParseError("missing 'choice' string")
    letter = choice.strip().upper()
    if len(letter) != 1 or letter not in string.ascii_uppercase:
        raise ParseError(f"choice {choice!r} is not a single letter")
    index = ord(letter) - ord("A")
    if index >= n_options:
        return None  # abstain: the model pointed outside the list
    return index


def parse_number_choice(text: str, n_options: int) -> Optional[int]:
    """1-based number -> 0-based index; out of range means abstain."""
    obj = _load_json_object(text)
    choice = obj.get("choice")
    if isinstance(choice, bool) or not isinstance(choice, int):
        raise ParseError("missing integer 'choice'")
    if not 1 <= choice <= n_options:
        return None
    return choice - 1


def render_candidate_lines(candidates: Sequence[Candidate]) -> str:
    return "\n".join(f"{c.label}: {c.description}" for c in candidates)


def render_option_lines(options: Sequence[Candidate]) -> str:
    letters = string.ascii_uppercase
    return "\n".join(
        f"{letters[i]}. {c.label}: {c.description}" for i, c in enumerate(options)
    )


class LlmAgents:
    """The three model-backed roles the linking pipeline calls.

    Shot selection is seeded by (seed, variant, count) so identical
    configurations build byte-identical prompts run after run.
    """

    def __init__(
        self,
        client: ChatClient,
        params: Optional[ChatParams] = None,
        variant="5-0",
        understanding_shots: int = 32,
        choice_shots: int = 2,
        mc_option_cap: int = 10,
        seed: int = 0,
    ):
        self.client = client
        self.params = params or ChatParams()
        self.variant = VARIANTS[variant] if isinstance(variant, str) else variant
        self.understanding_shots = understanding_shots
        self.choice_shots = choice_shots
        self.mc_option_cap = mc_option_cap
        self.seed = seed

    def _sample_shots(self, pool_name: str, count: int) -> List[dict]:
        pool = prompts.load_shots(pool_name)
        if count > len(pool):
            raise ValueError(f"asked for {count} shots, pool {pool_name} has {len(pool)}")
        rng = random.Random(f"{self.seed}:{self.variant.id}:{pool_name}:{count}")
        return rng.sample(pool, count)

    def _understanding_messages(self, ctx, feedback) -> List[dict]:
        messages = [{"role": "system", "content": prompts.load_template("understanding_system")}]
        if self.variant.example_source is not ExampleSource.NONE:
            pool_name = _SHOT_POOLS[self.variant.example_source]
            for shot in self._sample_shots(pool_name, self.understanding_shots):
                messages.append(
                    {
                        "role": "user",
                        "content": prompts.render_named(
                            "understanding_user",
                            sentence=shot["sentence"],
                            mention=shot["mention"],
                            feedback="",
                        ),
                    }
                )
                messages.append(
                    {"role": "assistant", "content": json.dumps({"query": shot["query"]})}
                )
        feedback_text = ""
        if feedback:
            feedback_text = prompts.render_named(
                "understanding_feedback", candidates=render_candidate_lines(feedback)
            )
        messages.append(
            {
                "role": "user",
                "content": prompts.render_named(
                    "understanding_user",
                    sentence=ctx.window_text,
                    mention=ctx.surface,
                    feedback=feedback_text,
                ),
            }
        )
        return messages

    def understand(self, ctx, feedback: Optional[Sequence[Candidate]] = None) -> str:
        """Produce a retrieval query for the mention in its window.

        feedback, when given, is the unconfirmed candidate list from the
        previous round; it is rendered into the prompt so the next query
        can steer away from it.
        """
        messages = self._understanding_messages(ctx, feedback)
        return self.client.chat_parsed(messages, self.params, parse_understanding)

    def judge(self, ctx, candidates: Sequence[Candidate]) -> bool:
        """Does the candidate list contain the mention's entity?"""
        if not candidates:
            raise ValueError("judge needs a non-empty candidate list")
        messages = [
            {"role": "system", "content": prompts.load_template("judge_system")},
            {
                "role": "user",
                "content": prompts.render_named(
                    "judge_user",
                    sentence=ctx.window_text,
                    mention=ctx.surface,
                    candidates=render_candidate_lines(candidates),
                ),
            },
        ]
        return self.client.chat_parsed(messages, self.params, parse_judgment)

    def choose(self, ctx, options: Sequence[Candidate]) -> Optional[int]:
        """Pick one lettered option; None when the model abstains."""
        if not 1 <= len(options) <= min(self.mc_option_cap, 26):
            raise ValueError(
                f"need 1..{min(self.mc_option_cap, 26)} options, got {len(options)}"
            )
        messages = [{"role": "system", "content": prompts.load_template("choice_system")}]
        for shot in self._sample_shots("choice_examples", self.choice_shots):
            rendered = "\n".join(
                f"{string.ascii_uppercase[i]}. {opt['label']}: {opt['description']}"
                for i, opt in enumerate(shot["options"])
            )
            messages.append(
                {
                    "role": "user",
                    "content": prompts.render_named(
                        "choice_user",
                        sentence=shot["sentence"],
                        mention=shot["mention"],
                        options=rendered,
                    ),
                }
            )
            messages.append(
                {"role": "assistant", "content": json.dumps({"choice": shot["answer"]})}
            )
        messages.append(
            {
                "role": "user",
                "content": prompts.render_named(
                    "choice_user",
                    sentence=ctx.window_text,
                    mention=ctx.surface,
                    options=render_option_lines(options),
                ),
            }
        )
        return self.client.chat_parsed(
            messages, self.params, lambda text: parse_choice(text, len(options))
        )

    def choose_inline(self, ctx, options: Sequence[Candidate]) -> Optional[int]:
        """Annotation-style variant: mention bracketed, candidates inline."""
        if not 1 <= len(options) <= self.mc_option_cap:
            raise ValueError(f"need 1..{self.mc_option_cap} options, got {len(options)}")
        annotated = ctx.window_text.replace(
            ctx.surface,
            "[" + ctx.surface + "]" + "".join(f"({i + 1}. {c.label})" for i, c in enumerate(options)),
            1,
        )
        messages = [
            {"role": "system", "content": prompts.load_template("direct_system")},
            {
                "role": "user",
                "content": prompts.render_named("direct_user", annotated=annotated),
            },
        ]
        return self.client.chat_parsed(
            messages, self.params, lambda text: parse_number_choice(text, len(options))
        )
