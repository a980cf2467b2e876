"""Append-only journaled store for review state.

One JSONL journal per project is the single source of truth: every write is
appended (with a sequence number and wall-clock timestamp) and fsynced
before the in-memory view updates, and reopening a store replays the
journal. Nothing is ever deleted; superseding writes leave the full history
in place, which is what makes reconciliation auditable.
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator


@dataclass(frozen=True)
class SessionRecord:
    id: str
    merged_code_ids: tuple[str, ...]
    seed: int
    blind: bool
    reviewers: tuple[str, ...]
    rounds: tuple[tuple[int, int], ...]  # half-open index ranges


@dataclass(frozen=True)
class DecisionRecord:
    session_id: str
    merged_code_id: str
    reviewer: str
    coder_id: str
    covered: bool
    memo: str
    round: int
    is_consensus: bool
    seq: int
    recorded_at: float


@dataclass(frozen=True)
class LabelRecord:
    session_id: str
    target_id: str
    dimension: str
    value: str
    reviewer: str
    memo: str
    is_consensus: bool
    seq: int
    recorded_at: float


def _decision_key(record: DecisionRecord) -> tuple:
    reviewer = "__consensus__" if record.is_consensus else record.reviewer
    return (record.session_id, record.merged_code_id, record.coder_id, reviewer)


def _label_key(record: LabelRecord) -> tuple:
    reviewer = "__consensus__" if record.is_consensus else record.reviewer
    return (record.target_id, record.dimension, reviewer)


@dataclass
class StoreState:
    sessions: dict[str, SessionRecord] = field(default_factory=dict)
    decisions: dict[tuple, DecisionRecord] = field(default_factory=dict)
    decision_history: list[DecisionRecord] = field(default_factory=list)
    labels: dict[tuple, LabelRecord] = field(default_factory=dict)
    label_history: list[LabelRecord] = field(default_factory=list)


class ReviewStore:
    """Journal-backed store; all writes go through one lock."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.RLock()
        self._seq = 0
        self.state = StoreState()
        if self.path.exists():
            for event in self._read_journal():
                self._apply(event)

    def _read_journal(self) -> Iterator[dict]:
        with open(self.path, encoding="utf-8") as handle:
            for line in handle:
                if line.strip():
                    yield json.loads(line)

    def append(self, event: dict) -> dict:
        """Journal the event, then apply it. The journal write is the commit."""
        with self._lock:
            self._seq += 1
            event = {**event, "seq": self._seq, "recorded_at": time.time()}
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as handle:
                handle.write(json.dumps(event, ensure_ascii=False, sort_keys=True) + "\n")
                handle.flush()
                os.fsync(handle.fileno())
            self._apply(event)
            return event

    def _apply(self, event: dict) -> None:
        self._seq = max(self._seq, int(event.get("seq", 0)))
        kind = event["event"]
        if kind == "session_created":
            record = SessionRecord(
                id=event["id"],
                merged_code_ids=tuple(event["merged_code_ids"]),
                seed=int(event["seed"]),
                blind=bool(event["blind"]),
                reviewers=tuple(event["reviewers"]),
                rounds=tuple((int(a), int(b)) for a, b in event["rounds"]),
            )
            self.state.sessions[record.id] = record
        elif kind == "decision":
            record = DecisionRecord(
                session_id=event["session_id"],
                merged_code_id=event["merged_code_id"],
                reviewer=event["reviewer"],
                coder_id=event["coder_id"],
                covered=bool(event["covered"]),
                memo=event.get("memo", ""),
                round=int(event["round"]),
                is_consensus=bool(event.get("is_consensus", False)),
                seq=int(event["seq"]),
                recorded_at=float(event["recorded_at"]),
            )
            self.state.decision_history.append(record)
            self.state.decisions[_decision_key(record)] = record
        elif kind == "label":
            record = LabelRecord(
                session_id=event["session_id"],
                target_id=event["target_id"],
                dimension=event["dimension"],
                value=event["value"],
                reviewer=event["reviewer"],
                memo=event.get("memo", ""),
                is_consensus=bool(event.get("is_consensus", False)),
                seq=int(event["seq"]),
                recorded_at=float(event["recorded_at"]),
            )
            self.state.label_history.append(record)
            self.state.labels[_label_key(record)] = record
        else:
            raise ValueError(f"unknown journal event {kind!r}")

    # -- read helpers ---------------------------------------------------------

    def session(self, session_id: str) -> SessionRecord | None:
        return self.state.sessions.get(session_id)

    def session_count(self) -> int:
        return len(self.state.sessions)

    def decision_for(
        self, session_id: str, merged_code_id: str, coder_id: str, reviewer: str
    ) -> DecisionRecord | None:
        return self.state.decisions.get((session_id, merged_code_id, coder_id, reviewer))

    def consensus_for(
        self, session_id: str, merged_code_id: str, coder_id: str
    ) -> DecisionRecord | None:
        return self.state.decisions.get(
            (session_id, merged_code_id, coder_id, "__consensus__")
        )

    def decisions_by_reviewer(
        self, session_id: str, reviewer: str
    ) -> list[DecisionRecord]:
        return [
            record
            for key, record in self.state.decisions.items()
            if key[0] == session_id and key[3] == reviewer
        ]

    def history_for_key(
        self, session_id: str, merged_code_id: str, coder_id: str, reviewer: str
    ) -> list[DecisionRecord]:
        return [
            r
            for r in self.state.decision_history
            if r.session_id == session_id
            and r.merged_code_id == merged_code_id
            and r.coder_id == coder_id
            and (("__consensus__" if r.is_consensus else r.reviewer) == reviewer)
        ]

    def labels_current(self) -> list[LabelRecord]:
        return list(self.state.labels.values())
