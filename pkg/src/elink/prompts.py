"""Versioned prompt templates and few-shot pools shipped as package data.

Templates live under prompts/ with {{name}} placeholders; shot pools
are JSONL under shots/. Loading is cached; rendering a template with a
missing placeholder value raises ValueError so silent prompt drift
cannot happen.
"""

from __future__ import annotations

import json
import re
from functools import lru_cache
from importlib import resources
from typing import Dict, List

_PLACEHOLDER_RE = re.compile(r"\{\{(\w+)\}\}")


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    path = resources.files("elink").joinpath("prompts", f"{name}.txt")
    return path.read_text(encoding="utf-8")


def render(template: str, values: Dict[str, str]) -> str:
    def substitute(match):
        key = match.group(1)
        if key not in values:
            raise ValueError(f"template placeholder {{{{{key}}}}} has no value")
        return str(values[key])

    return _PLACEHOLDER_RE.sub(substitute, template)


def render_named(name: str, **values) -> str:
    return render(load_template(name), values)


@lru_cache(maxsize=None)
def load_shots(name: str) -> tuple:
    path = resources.files("elink").joinpath("shots", f"{name}.jsonl")
    rows: List[dict] = []
    for line in path.read_text(encoding="utf-8").splitlines():
        if line.strip():
            rows.append(json.loads(line))
    return tuple(rows)
