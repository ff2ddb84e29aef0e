"""Wikidata lookups: entity search with paging, fallback search, entity fetch.

The public API is search-order faithful: candidates come back in the
order the endpoint returned them, with search_rank counting from 0.
Results are cached in memory per client and optionally on disk with a
TTL, keyed by (term, limit, language).
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import tempfile
import threading
import time
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Tuple

from .errors import NotFoundError, UpstreamSchemaError

LOGGER = logging.getLogger(__name__)

DEFAULT_BASE_URL = "https://www.wikidata.org/w/api.php"
PAGE_SIZE = 50  # upstream maximum per wbsearchentities call
_QID_RE = re.compile(r"^Q\d+$")


class CandidateSource(str, Enum):
    SEARCH = "search"
    SIMILARITY = "similarity"


@dataclass(frozen=True)
class Candidate:
    qid: str
    label: str
    description: str = ""
    search_rank: int = 0  # 0-based position in the original search order
    source: CandidateSource = CandidateSource.SEARCH


@dataclass(frozen=True)
class SearchRequest:
    term: str
    limit: int = 200  # total results to page up to
    language: str = "en"

    def __post_init__(self):
        if not self.term or not self.term.strip():
            raise ValueError("search term must be non-empty")
        if not 1 <= self.limit <= 500:
            raise ValueError(f"limit must be in [1, 500], got {self.limit}")


class DiskCache:
    """File-per-key JSON cache with a freshness TTL."""

    def __init__(self, directory, ttl_seconds=7 * 24 * 3600):
        self.directory = str(directory)
        self.ttl_seconds = ttl_seconds
        self._lock = threading.Lock()
        os.makedirs(self.directory, exist_ok=True)

    def _path(self, key):
        return os.path.join(self.directory, f"{key}.json")

    def get(self, key):
        path = self._path(key)
        try:
            if time.time() - os.path.getmtime(path) > self.ttl_seconds:
                return None
            with open(path, "r", encoding="utf-8") as handle:
                return json.load(handle)
        except (OSError, ValueError):
            return None

    def put(self, key, value) -> None:
        with self._lock:
            fd, tmp = tempfile.mkstemp(dir=self.directory, suffix=".tmp")
            try:
                with os.fdopen(fd, "w", encoding="utf-8") as handle:
                    json.dump(value, handle, ensure_ascii=False)
                os.replace(tmp, self._path(key))
            finally:
                if os.path.exists(tmp):
                    os.unlink(tmp)


def _cache_key(kind: str, *parts) -> str:
    blob = json.dumps([kind, *parts], sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


class WikidataClient:
    def __init__(self, transport, base_url=None, cache_dir=None, cache_ttl=7 * 24 * 3600):
        self.transport = transport
        self.base_url = base_url or os.environ.get("KG_BASE_URL") or DEFAULT_BASE_URL
        self._memory = {}
        self._memory_lock = threading.Lock()
        self._disk = DiskCache(cache_dir, cache_ttl) if cache_dir else None

    def _cached(self, key):
        with self._memory_lock:
            if key in self._memory:
                return self._memory[key]
        if self._disk is not None:
            value = self._disk.get(key)
            if value is not None:
                with self._memory_lock:
                    self._memory[key] = value
                return value
        return None

    def _remember(self, key, value):
        with self._memory_lock:
            self._memory[key] = value
        if self._disk is not None:
            self._disk.put(key, value)

    def search_entities(self, request: SearchRequest) -> List[Candidate]:
        """Page wbsearchentities until `limit` results or the well runs dry."""
        key = _cache_key("search", request.term, request.limit, request.language)
        cached = self._cached(key)
        if cached is not None:
            return [_candidate_from_record(rec) for rec in cached]

        items = []
        offset = 0
        while len(items) < request.limit:
            params = {
                "action": "wbsearchentities",
                "search": request.term,
                "language": request.language,
                "uselang": request.language,
                "type": "item",
                "format": "json",
                "limit": min(PAGE_SIZE, request.limit - len(items)),
            }
            if offset:
                params["continue"] = offset
            payload = self.transport.request("GET", self.base_url, params=params)
            if "error" in payload:
                raise UpstreamSchemaError(f"search error: {payload['error']}")
            batch = payload.get("search")
            if not isinstance(batch, list):
                raise UpstreamSchemaError("search response missing 'search' list")
            for item in batch:
                if not isinstance(item, dict) or "id" not in item:
                    raise UpstreamSchemaError("search item missing 'id'")
                items.append(item)
            cont = payload.get("search-continue")
            if cont is None or not batch:
                break
            offset = cont

        records = [
            {
                "qid": item["id"],
                "label": item.get("label", "") or "",
                "description": item.get("description", "") or "",
                "search_rank": rank,
            }
            for rank, item in enumerate(items[: request.limit])
        ]
        self._remember(key, records)
        return [_candidate_from_record(rec) for rec in records]

    def search_with_fallback(
        self,
        query: str,
        mention_surface: str,
        limit: int = 200,
        language: str = "en",
        fallback_enabled: bool = True,
    ) -> Tuple[List[Candidate], bool]:
        """Search the query; if empty-handed, retry with the raw mention.

        Returns (candidates, used_fallback). With fallback disabled the
        first search's result stands, however empty.
        """
        if not mention_surface or not mention_surface.strip():
            raise ValueError("mention_surface must be non-empty")
        primary: List[Candidate] = []
        if query and query.strip():
            primary = self.search_entities(SearchRequest(query, limit=limit, language=language))
        if primary or not fallback_enabled:
            return primary, False
        fallback = self.search_entities(
            SearchRequest(mention_surface, limit=limit, language=language)
        )
        return fallback, True

    def get_entity(self, qid: str, language: str = "en") -> Candidate:
        """Fetch one entity's label and description by QID."""
        if not _QID_RE.match(qid or ""):
            raise ValueError(f"malformed qid {qid!r}")
        key = _cache_key("entity", qid, language)
        cached = self._cached(key)
        if cached is not None:
            return _candidate_from_record(cached)
        params = {
            "action": "wbgetentities",
            "ids": qid,
            "props": "labels|descriptions",
            "languages": language,
            "format": "json",
        }
        payload = self.transport.request("GET", self.base_url, params=params)
        if "error" in payload:
            raise UpstreamSchemaError(f"entity error: {payload['error']}")
        entities = payload.get("entities")
        if not isinstance(entities, dict) or qid not in entities:
            raise UpstreamSchemaError(f"entity response missing {qid}")
        entity = entities[qid]
        if "missing" in entity:
            raise NotFoundError(f"entity {qid} does not exist")
        record = {
            "qid": qid,
            "label": _lang_value(entity.get("labels"), language),
            "description": _lang_value(entity.get("descriptions"), language),
            "search_rank": 0,
        }
        self._remember(key, record)
        return _candidate_from_record(record)


def _lang_value(mapping, language) -> str:
    if isinstance(mapping, dict):
        entry = mapping.get(language)
        if isinstance(entry, dict):
            return entry.get("value", "") or ""
    return ""


def _candidate_from_record(rec) -> Candidate:
    return Candidate(
        qid=rec["qid"],
        label=rec["label"],
        description=rec["description"],
        search_rank=rec["search_rank"],
        source=CandidateSource.SEARCH,
    )
