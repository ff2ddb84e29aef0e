"""Datasets of annotated documents: loading, windowing, difficulty, removal.

A dataset is JSONL, one document per line:

    {"id": "doc1", "text": "...", "mentions": [
        {"id": "doc1:0", "start": 10, "end": 15, "surface": "JAPAN",
         "gold_qid": "Q170566"}]}

gold_qid may be null for unlabeled mentions.
"""

from __future__ import annotations

import json
import logging
import math
import random
import re
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, List, Optional, Sequence, Tuple

from .errors import IoError, MissingGoldError, SchemaError, SpanError

LOGGER = logging.getLogger(__name__)

_QID_RE = re.compile(r"^Q\d+$")
_TOKEN_RE = re.compile(r"\S+")


class SegmentMode(str, Enum):
    SEN = "sen"  # shared-sentence style: windows carry co-mention ids
    MEN = "men"  # isolated: one window per mention, no co-mentions


class DifficultyCategory(str, Enum):
    EASY = "easy"  # gold is the first candidate
    HARD = "hard"  # gold present but not first
    DIFFICULT = "difficult"  # candidates exist, gold absent
    NONE = "none"  # no candidates at all


@dataclass(frozen=True)
class Mention:
    id: str
    start: int  # char offset, inclusive
    end: int  # char offset, exclusive
    surface: str  # must equal text[start:end]
    gold_qid: Optional[str] = None


@dataclass(frozen=True)
class Document:
    id: str
    text: str
    mentions: Tuple[Mention, ...]  # ordered by start, non-overlapping


@dataclass(frozen=True)
class MentionContext:
    mention_id: str
    surface: str
    window_text: str  # always contains surface
    mode: SegmentMode
    window_tokens: int
    co_mentions: Tuple[str, ...] = ()  # ids of other mentions inside the window


def _require(record, key, types, line):
    if key not in record:
        raise SchemaError(f"line {line}: missing field '{key}'", line=line, field=key)
    value = record[key]
    if not isinstance(value, types):
        raise SchemaError(
            f"line {line}: field '{key}' has wrong type {type(value).__name__}",
            line=line,
            field=key,
        )
    return value


def _parse_mention(raw, line):
    mid = _require(raw, "id", str, line)
    start = _require(raw, "start", int, line)
    end = _require(raw, "end", int, line)
    surface = _require(raw, "surface", str, line)
    gold = raw.get("gold_qid")
    if gold is not None:
        if not isinstance(gold, str) or not _QID_RE.match(gold):
            raise SchemaError(
                f"line {line}: mention {mid} gold_qid {gold!r} is not Q<digits>",
                line=line,
                field="gold_qid",
            )
    # bool is an int subclass; reject it explicitly
    if isinstance(start, bool) or isinstance(end, bool):
        raise SchemaError(f"line {line}: boolean offset", line=line, field="start")
    return Mention(id=mid, start=start, end=end, surface=surface, gold_qid=gold)


def _validate_spans(doc_id, text, mentions):
    for m in mentions:
        if not (0 <= m.start < m.end <= len(text)):
            raise SpanError(f"{doc_id}/{m.id}: span [{m.start}, {m.end}) out of bounds")
        if text[m.start : m.end] != m.surface:
            raise SpanError(f"{doc_id}/{m.id}: surface does not match text at span")
        if not m.surface.strip():
            raise SpanError(f"{doc_id}/{m.id}: surface is empty or whitespace")
    for prev, cur in zip(mentions, mentions[1:]):
        if cur.start < prev.end:
            raise SpanError(f"{doc_id}: mentions {prev.id} and {cur.id} overlap")


def document_from_record(record, line=0) -> Document:
    doc_id = _require(record, "id", str, line)
    text = _require(record, "text", str, line)
    raw_mentions = _require(record, "mentions", list, line)
    mentions = tuple(
        sorted(
            (_parse_mention(raw, line) for raw in raw_mentions),
            key=lambda m: (m.start, m.end),
        )
    )
    _validate_spans(doc_id, text, mentions)
    return Document(id=doc_id, text=text, mentions=mentions)


def load_dataset(path) -> List[Document]:
    """Read a JSONL dataset, validating schema and span consistency."""
    try:
        with open(path, "r", encoding="utf-8") as handle:
            lines = handle.readlines()
    except OSError as exc:
        raise IoError(f"cannot read dataset {path}: {exc}") from exc
    docs = []
    seen_ids = set()
    for line_no, raw in enumerate(lines, start=1):
        if not raw.strip():
            continue
        try:
            record = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"line {line_no}: invalid JSON: {exc}", line=line_no) from exc
        if not isinstance(record, dict):
            raise SchemaError(f"line {line_no}: record is not an object", line=line_no)
        doc = document_from_record(record, line=line_no)
        if doc.id in seen_ids:
            raise SchemaError(f"line {line_no}: duplicate document id {doc.id}", line=line_no, field="id")
        seen_ids.add(doc.id)
        docs.append(doc)
    return docs


def document_to_record(doc: Document) -> dict:
    return {
        "id": doc.id,
        "text": doc.text,
        "mentions": [
            {
                "id": m.id,
                "start": m.start,
                "end": m.end,
                "surface": m.surface,
                "gold_qid": m.gold_qid,
            }
            for m in doc.mentions
        ],
    }


def dump_dataset(docs: Iterable[Document], path) -> None:
    """Write documents as JSONL; load_dataset(dump_dataset(x)) round-trips."""
    with open(path, "w", encoding="utf-8") as handle:
        for doc in docs:
            handle.write(json.dumps(document_to_record(doc), ensure_ascii=False))
            handle.write("\n")


def _token_spans(text) -> List[Tuple[int, int]]:
    return [(m.start(), m.end()) for m in _TOKEN_RE.finditer(text)]


def segment(doc: Document, mode: SegmentMode, window_tokens: int) -> List[MentionContext]:
    """Cut one context window per mention, centered on it.

    Windows hold at most window_tokens whitespace tokens, shifted when the
    mention sits near a document edge. A mention longer than the window
    widens it just enough to stay inside (window_text must contain the
    surface). In SEN mode each context also lists the other mentions that
    fall fully inside its window.
    """
    if window_tokens < 1:
        raise ValueError("window_tokens must be >= 1")
    mode = SegmentMode(mode)
    spans = _token_spans(doc.text)
    contexts = []
    for mention in doc.mentions:
        overlap = [
            i
            for i, (ts, te) in enumerate(spans)
            if te > mention.start and ts < mention.end
        ]
        if not overlap:
            raise SpanError(f"{doc.id}/{mention.id}: no token overlaps the mention")
        first, last = overlap[0], overlap[-1]
        start = first - window_tokens // 2
        start = min(start, len(spans) - window_tokens)
        start = max(start, 0)
        end = min(len(spans), start + window_tokens)
        # degenerate: mention spills past the window; widen minimally
        if last >= end:
            end = last + 1
            start = max(0, min(start, end - window_tokens))
        start = min(start, first)
        char_lo = spans[start][0]
        char_hi = spans[end - 1][1]
        window_text = doc.text[char_lo:char_hi]
        co = ()
        if mode is SegmentMode.SEN:
            co = tuple(
                m.id
                for m in doc.mentions
                if m.id != mention.id and m.start >= char_lo and m.end <= char_hi
            )
        contexts.append(
            MentionContext(
                mention_id=mention.id,
                surface=mention.surface,
                window_text=window_text,
                mode=mode,
                window_tokens=window_tokens,
                co_mentions=co,
            )
        )
    return contexts


def categorize(mention: Mention, candidates: Sequence) -> DifficultyCategory:
    """Difficulty of a mention given its retrieved candidates.

    easy: gold ranked first; hard: gold present later; difficult:
    candidates exist but none is gold; none: empty candidate list.
    """
    if mention.gold_qid is None:
        raise MissingGoldError(f"mention {mention.id} has no gold_qid")
    if not candidates:
        return DifficultyCategory.NONE
    qids = [c.qid for c in candidates]
    if qids[0] == mention.gold_qid:
        return DifficultyCategory.EASY
    if mention.gold_qid in qids:
        return DifficultyCategory.HARD
    return DifficultyCategory.DIFFICULT


def remove_fraction(docs: Sequence[Document], fraction: float, seed: int) -> List[Document]:
    """Drop floor(fraction * total) mention annotations, seeded.

    The same seed removes a prefix of one fixed shuffle, so the kept set
    for a larger fraction is a subset of the kept set for a smaller one.
    Document text is untouched; only mention lists shrink.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fraction must be in [0, 1], got {fraction}")
    positions = [
        (doc_idx, mention_idx)
        for doc_idx, doc in enumerate(docs)
        for mention_idx in range(len(doc.mentions))
    ]
    to_remove = math.floor(fraction * len(positions))
    order = list(range(len(positions)))
    random.Random(seed).shuffle(order)
    removed = {positions[i] for i in order[:to_remove]}
    result = []
    for doc_idx, doc in enumerate(docs):
        kept = tuple(
            m for mention_idx, m in enumerate(doc.mentions) if (doc_idx, mention_idx) not in removed
        )
        result.append(Document(id=doc.id, text=doc.text, mentions=kept))
    LOGGER.debug("removed %d of %d mentions (fraction=%s)", to_remove, len(positions), fraction)
    return result


def read_aida_tsv(path) -> List[Document]:
    """Best-effort conversion of AIDA-CoNLL style TSV to documents.

    Token lines: token [\\t B|I \\t full-mention \\t entity-columns...].
    Any column matching Q<digits> is taken as the gold QID; rows tagged
    --NME-- or lacking one yield unlabeled mentions. Documents split on
    -DOCSTART- headers; text is the tokens joined by single spaces.
    """
    try:
        with open(path, "r", encoding="utf-8") as handle:
            lines = handle.read().splitlines()
    except OSError as exc:
        raise IoError(f"cannot read TSV {path}: {exc}") from exc

    docs: List[Document] = []
    doc_id = None
    tokens: List[str] = []
    # open mention: [start_token_idx, end_token_idx, gold_qid]
    pending: List[list] = []
    current: Optional[list] = None

    def flush():
        nonlocal doc_id, tokens, pending, current
        if doc_id is None:
            return
        if current is not None:
            pending.append(current)
        text = " ".join(tokens)
        offsets = []
        pos = 0
        for tok in tokens:
            offsets.append((pos, pos + len(tok)))
            pos += len(tok) + 1
        mentions = []
        for n, (t0, t1, qid) in enumerate(pending):
            start, end = offsets[t0][0], offsets[t1][1]
            mentions.append(
                Mention(
                    id=f"{doc_id}:{n}",
                    start=start,
                    end=end,
                    surface=text[start:end],
                    gold_qid=qid,
                )
            )
        docs.append(Document(id=doc_id, text=text, mentions=tuple(mentions)))
        doc_id, tokens, pending, current = None, [], [], None

    for raw in lines:
        if raw.startswith("-DOCSTART-"):
            flush()
            header = raw[len("-DOCSTART-") :].strip().strip("()")
            doc_id = header.split()[0] if header else f"doc{len(docs)}"
            continue
        if doc_id is None:
            continue
        if not raw.strip():
            if current is not None:
                pending.append(current)
                current = None
            continue
        cols = raw.split("\t")
        tokens.append(cols[0])
        idx = len(tokens) - 1
        tag = cols[1] if len(cols) > 1 else ""
        if tag == "B":
            if current is not None:
                pending.append(current)
            qid = next((c for c in cols[2:] if _QID_RE.match(c)), None)
            current = [idx, idx, qid]
        elif tag == "I" and current is not None:
            current[1] = idx
        else:
            if current is not None:
                pending.append(current)
                current = None
    flush()
    return docs
