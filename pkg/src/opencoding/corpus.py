"""Chat-log ingestion and conversation segmentation.

A corpus is an immutable, timestamp-ordered list of messages. Segmentation
finds conversation boundaries by looking for peaks in the stream of
timestamp intervals: a boundary is placed before message ``i`` whenever the
gap to the previous message is at least ``min_gap`` seconds AND at least
``prominence_factor`` times the median of all nonzero gaps. Both conditions
use >= so ties at the threshold split deterministically.
"""

from __future__ import annotations

import json
import statistics
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import EmptyCorpus, MalformedRecord

ROLES = ("designer", "user", "other")

DEFAULT_MIN_GAP = 1800.0
DEFAULT_PROMINENCE = 3.0


@dataclass(frozen=True)
class Message:
    """One timestamped chat message. ``chunk_id`` is set by segmentation."""

    id: str
    author: str
    role: str
    timestamp: int
    text: str
    chunk_id: str | None = None


@dataclass(frozen=True)
class Chunk:
    """A contiguous, timestamp-ordered run of messages treated as one conversation."""

    id: str
    message_ids: tuple[str, ...]


@dataclass(frozen=True)
class Corpus:
    messages: tuple[Message, ...]
    chunks: tuple[Chunk, ...] = ()
    metadata: Mapping[str, str] | None = None

    def __post_init__(self):
        object.__setattr__(self, "metadata", dict(self.metadata or {}))

    def message_by_id(self, message_id: str) -> Message:
        return self._index()[message_id]

    def chunk_of(self, message_id: str) -> Chunk | None:
        chunk_id = self._index()[message_id].chunk_id
        if chunk_id is None:
            return None
        return next(c for c in self.chunks if c.id == chunk_id)

    def messages_of(self, chunk: Chunk) -> list[Message]:
        index = self._index()
        return [index[m] for m in chunk.message_ids]

    def _index(self) -> dict[str, Message]:
        cached = getattr(self, "_by_id", None)
        if cached is None:
            cached = {m.id: m for m in self.messages}
            object.__setattr__(self, "_by_id", cached)
        return cached


def parse_timestamp(value) -> int:
    """Parse ISO-8601 or epoch seconds to integer epoch seconds (second precision)."""
    if isinstance(value, bool):
        raise ValueError(f"not a timestamp: {value!r}")
    if isinstance(value, (int, float)):
        return int(value)
    if isinstance(value, str):
        text = value.strip()
        try:
            return int(float(text))
        except ValueError:
            pass
        # datetime.fromisoformat does not accept a trailing Z until 3.11
        if text.endswith("Z"):
            text = text[:-1] + "+00:00"
        dt = datetime.fromisoformat(text)
        if dt.tzinfo is None:
            dt = dt.replace(tzinfo=timezone.utc)
        return int(dt.timestamp())
    raise ValueError(f"not a timestamp: {value!r}")


def format_timestamp(ts: int) -> str:
    return (
        datetime.fromtimestamp(ts, tz=timezone.utc)
        .isoformat()
        .replace("+00:00", "Z")
    )


def ingest_corpus(records: Sequence[Mapping]) -> Corpus:
    """Validate raw message records and build a timestamp-sorted corpus.

    Records need ``id``, ``author``, ``role``, ``ts`` (or ``timestamp``) and
    ``text``. Unknown role strings are normalized to "other" rather than
    rejected, since chat exports disagree on role vocabularies. Records whose
    text is empty after stripping are filtered out. Sorting is stable, so
    equal timestamps keep input order.

    Raises EmptyCorpus when no messages survive, MalformedRecord (with the
    record index) on a missing field, unparseable timestamp, or duplicate id.
    """
    if not records:
        raise EmptyCorpus("no records")
    messages: list[Message] = []
    seen_ids: set[str] = set()
    for i, record in enumerate(records):
        for field in ("id", "author", "role", "text"):
            if field not in record or record[field] is None:
                raise MalformedRecord(i, f"missing field {field!r}")
        ts_raw = record.get("ts", record.get("timestamp"))
        if ts_raw is None:
            raise MalformedRecord(i, "missing field 'ts'")
        try:
            ts = parse_timestamp(ts_raw)
        except (ValueError, TypeError) as exc:
            raise MalformedRecord(i, f"unparseable timestamp: {exc}") from exc
        msg_id = str(record["id"])
        if msg_id in seen_ids:
            raise MalformedRecord(i, f"duplicate id {msg_id!r}")
        seen_ids.add(msg_id)
        text = str(record["text"])
        if not text.strip():
            continue
        role = str(record["role"]).strip().lower()
        if role not in ROLES:
            role = "other"
        messages.append(
            Message(
                id=msg_id,
                author=str(record["author"]),
                role=role,
                timestamp=ts,
                text=text,
            )
        )
    if not messages:
        raise EmptyCorpus("all records had empty text")
    messages.sort(key=lambda m: m.timestamp)
    return Corpus(messages=tuple(messages))


def boundary_gaps(
    timestamps: Sequence[int], min_gap: float, prominence_factor: float
) -> list[int]:
    """Indices i such that a chunk boundary falls before message i.

    The prominence baseline is the median of nonzero intervals; duplicate
    timestamps (interval 0) are excluded from it so bursty chat exports do
    not drag it to zero.
    """
    intervals = [
        timestamps[i] - timestamps[i - 1] for i in range(1, len(timestamps))
    ]
    nonzero = [gap for gap in intervals if gap > 0]
    median = statistics.median(nonzero) if nonzero else 0.0
    return [
        i + 1
        for i, gap in enumerate(intervals)
        if gap >= min_gap and gap >= prominence_factor * median
    ]


def segment_chunks(
    corpus: Corpus,
    min_gap: float = DEFAULT_MIN_GAP,
    prominence_factor: float = DEFAULT_PROMINENCE,
) -> Corpus:
    """Partition a corpus into conversation chunks at timestamp-interval peaks.

    Every message lands in exactly one chunk, chunk ids are ordered by first
    message time, and the same corpus and parameters always produce the same
    assignment. A single message yields a single chunk.
    """
    if not corpus.messages:
        raise EmptyCorpus("cannot segment an empty corpus")
    if prominence_factor <= 0:
        raise ValueError("prominence_factor must be positive")
    if min_gap < 0:
        raise ValueError("min_gap must be >= 0")
    timestamps = [m.timestamp for m in corpus.messages]
    boundaries = boundary_gaps(timestamps, min_gap, prominence_factor)
    starts = [0] + boundaries
    ends = boundaries + [len(corpus.messages)]
    chunks: list[Chunk] = []
    assigned: list[Message] = []
    for n, (start, end) in enumerate(zip(starts, ends), start=1):
        chunk_id = f"chunk-{n:04d}"
        members = corpus.messages[start:end]
        chunks.append(Chunk(id=chunk_id, message_ids=tuple(m.id for m in members)))
        assigned.extend(replace(m, chunk_id=chunk_id) for m in members)
    return Corpus(
        messages=tuple(assigned), chunks=tuple(chunks), metadata=corpus.metadata
    )


def read_corpus_file(path: str | Path) -> Corpus:
    """Read a line-delimited corpus file (fields id, author, role, ts, text)."""
    records = []
    with open(path, encoding="utf-8") as handle:
        for i, line in enumerate(handle):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise MalformedRecord(i, f"invalid JSON: {exc}") from exc
    corpus = ingest_corpus(records)
    # Rebuild chunk assignments when the file already carries them.
    chunk_ids = [r.get("chunk_id") for r in records]
    if any(chunk_ids):
        by_id = {str(r["id"]): r.get("chunk_id") for r in records}
        messages = tuple(
            replace(m, chunk_id=by_id.get(m.id)) for m in corpus.messages
        )
        chunks: dict[str, list[str]] = {}
        for m in messages:
            if m.chunk_id is not None:
                chunks.setdefault(m.chunk_id, []).append(m.id)
        corpus = Corpus(
            messages=messages,
            chunks=tuple(
                Chunk(id=cid, message_ids=tuple(ids)) for cid, ids in chunks.items()
            ),
            metadata=corpus.metadata,
        )
    return corpus


def write_corpus_file(corpus: Corpus, path: str | Path) -> None:
    """Write one message per line; segmented corpora carry ``chunk_id``."""
    with open(path, "w", encoding="utf-8") as handle:
        for m in corpus.messages:
            record = {
                "id": m.id,
                "author": m.author,
                "role": m.role,
                "ts": format_timestamp(m.timestamp),
                "text": m.text,
            }
            if m.chunk_id is not None:
                record["chunk_id"] = m.chunk_id
            handle.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")


def records_from_lines(lines: Iterable[str]) -> list[dict]:
    """Parse raw JSONL lines, reporting the failing line index."""
    records = []
    for i, line in enumerate(lines):
        if not line.strip():
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise MalformedRecord(i, f"invalid JSON: {exc}") from exc
    return records
