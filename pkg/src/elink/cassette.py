"""HTTP boundary with deterministic record/replay.

Every outbound call (knowledge graph, chat model, embeddings) goes
through a transport. HttpTransport talks to the network with retries
and a bounded in-flight count. RecordingTransport wraps it and writes
each request/response pair into a cassette keyed by a content hash.
ReplayTransport serves from the cassette alone; a miss raises, it never
falls back to the network.

Cassette file: a JSON object mapping hash -> {request, response,
recorded_at}. The hash covers method, url, query params and JSON body
with keys sorted; headers are excluded entirely so credentials never
leak into fixtures and never perturb the hash.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
import threading
import time
from enum import Enum
from typing import Optional

import requests

from .errors import (
    AuthError,
    IoError,
    NetworkError,
    RateLimitError,
    ReplayMissError,
    UpstreamSchemaError,
)

LOGGER = logging.getLogger(__name__)


class CassetteMode(str, Enum):
    RECORD = "record"
    REPLAY = "replay"
    PASSTHROUGH = "passthrough"


def canonical_request(method: str, url: str, params=None, body=None) -> dict:
    request = {"method": method.upper(), "url": url}
    if params:
        request["params"] = {str(k): params[k] for k in sorted(params) if params[k] is not None}
    if body is not None:
        request["body"] = body
    return request


def request_hash(canonical: dict) -> str:
    blob = json.dumps(canonical, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


class Cassette:
    """On-disk store of request/response pairs."""

    def __init__(self, path, mode: CassetteMode):
        self.path = str(path)
        self.mode = CassetteMode(mode)
        self._lock = threading.Lock()
        self.entries = {}
        if os.path.exists(self.path):
            with open(self.path, "r", encoding="utf-8") as handle:
                self.entries = json.load(handle)
        elif self.mode is CassetteMode.REPLAY:
            raise IoError(f"cassette file {self.path} does not exist")

    def lookup(self, key: str):
        entry = self.entries.get(key)
        return None if entry is None else entry["response"]

    def store(self, key: str, canonical: dict, response) -> None:
        with self._lock:
            self.entries[key] = {
                "request": canonical,
                "response": response,
                "recorded_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
            }

    def save(self) -> None:
        with self._lock:
            directory = os.path.dirname(os.path.abspath(self.path))
            fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
            try:
                with os.fdopen(fd, "w", encoding="utf-8") as handle:
                    json.dump(self.entries, handle, indent=2, sort_keys=True, ensure_ascii=False)
                    handle.write("\n")
                os.replace(tmp, self.path)
            finally:
                if os.path.exists(tmp):
                    os.unlink(tmp)

    def __len__(self):
        return len(self.entries)


class HttpTransport:
    """requests-backed transport: retries, backoff, bounded concurrency."""

    offline = False

    def __init__(self, max_attempts=3, backoff=0.5, max_inflight=4, timeout=30.0, session=None):
        if max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        self.max_attempts = max_attempts
        self.backoff = backoff
        self.timeout = timeout
        self.session = session or requests.Session()
        self._limiter = threading.Semaphore(max_inflight)
        self.calls = 0  # network attempts, for instrumentation
        self._calls_lock = threading.Lock()

    def _count(self):
        with self._calls_lock:
            self.calls += 1

    def request(self, method: str, url: str, *, params=None, body=None, headers=None) -> dict:
        delay = self.backoff
        last_error: Optional[Exception] = None
        for attempt in range(1, self.max_attempts + 1):
            try:
                with self._limiter:
                    self._count()
                    response = self.session.request(
                        method,
                        url,
                        params=params,
                        json=body,
                        headers=headers,
                        timeout=self.timeout,
                    )
            except requests.RequestException as exc:
                last_error = NetworkError(f"{method} {url} failed: {exc}")
            else:
                if response.status_code in (401, 403):
                    raise AuthError(f"{method} {url} rejected with {response.status_code}")
                if response.status_code == 429:
                    retry_after = _parse_retry_after(response.headers.get("Retry-After"))
                    last_error = RateLimitError(f"{method} {url} throttled", retry_after=retry_after)
                    if retry_after is not None:
                        delay = max(delay, retry_after)
                elif response.status_code >= 400:
                    last_error = NetworkError(f"{method} {url} returned {response.status_code}")
                else:
                    try:
                        return response.json()
                    except ValueError as exc:
                        raise UpstreamSchemaError(f"{method} {url} returned non-JSON body") from exc
            if attempt < self.max_attempts:
                LOGGER.debug("retrying %s %s in %.1fs (%s)", method, url, delay, last_error)
                time.sleep(delay)
                delay *= 2
        raise last_error


def _parse_retry_after(value) -> Optional[float]:
    if value is None:
        return None
    try:
        return max(0.0, float(value))
    except ValueError:
        return None


class RecordingTransport:
    """Pass through to an inner transport, writing every pair to a cassette."""

    offline = False

    def __init__(self, inner, cassette: Cassette):
        self.inner = inner
        self.cassette = cassette

    def request(self, method, url, *, params=None, body=None, headers=None) -> dict:
        canonical = canonical_request(method, url, params=params, body=body)
        response = self.inner.request(method, url, params=params, body=body, headers=headers)
        self.cassette.store(request_hash(canonical), canonical, response)
        return response


class ReplayTransport:
    """Serve responses from a cassette only. No network path exists here."""

    offline = True

    def __init__(self, cassette: Cassette):
        self.cassette = cassette

    def request(self, method, url, *, params=None, body=None, headers=None) -> dict:
        key = request_hash(canonical_request(method, url, params=params, body=body))
        response = self.cassette.lookup(key)
        if response is None:
            raise ReplayMissError(key)
        return response


def open_transport(cassette_path=None, mode=CassetteMode.PASSTHROUGH, **http_kwargs):
    """Build the transport for a run; returns (transport, cassette or None)."""
    mode = CassetteMode(mode)
    if cassette_path is None or mode is CassetteMode.PASSTHROUGH:
        return HttpTransport(**http_kwargs), None
    cassette = Cassette(cassette_path, mode)
    if mode is CassetteMode.REPLAY:
        return ReplayTransport(cassette), cassette
    return RecordingTransport(HttpTransport(**http_kwargs), cassette), cassette
