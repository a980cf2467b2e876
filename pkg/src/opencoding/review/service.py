"""Review workflows over a project: blind coverage sessions, decisions,
round reconciliation, quality-label passes, and reliability passthrough.

The blind guarantee is enforced here, server side: while a session is
blind, no payload includes algorithmic coverage (or child markers, which
would leak it) for an item until the requesting reviewer has saved at
least one decision for that item.
"""

from __future__ import annotations

import random
from typing import TYPE_CHECKING, Sequence

from ..errors import (
    Empty,
    IllegalValue,
    PrematureConsensus,
    RoundIncomplete,
    SampleTooLarge,
    UnknownReviewer,
    UnknownSession,
    UnknownTarget,
)
from ..merging import suggest_near_codes
from ..metrics import cohen_kappa, format_kappa
from .store import DecisionRecord, LabelRecord, SessionRecord

if TYPE_CHECKING:
    from ..project import Project

LEGAL_VALUES = {
    "groundedness": ("grounded", "ungrounded"),
    "breadth": ("specific", "overly_broad"),
    "gain": ("little", "minor", "substantial"),
    "source": ("content", "conversational_dynamics"),
}
MERGED_DIMENSIONS = ("gain", "source")
CODE_DIMENSIONS = ("groundedness", "breadth")

SUGGESTIONS_PER_CODEBOOK = 5


def seeded_sample(population: Sequence[str], sample_size: int, seed: int) -> list[str]:
    """Uniform sample without replacement in shuffled order; pure function of
    (population, sample_size, seed), identical across processes."""
    if sample_size > len(population):
        raise SampleTooLarge(
            f"sample {sample_size} exceeds population {len(population)}"
        )
    rng = random.Random(seed)
    indices = list(range(len(population)))
    for i in range(len(indices) - 1, 0, -1):
        j = rng.randrange(i + 1)
        indices[i], indices[j] = indices[j], indices[i]
    return [population[i] for i in indices[:sample_size]]


def normalize_rounds(
    rounds: Sequence[Sequence[int]] | None, size: int
) -> tuple[tuple[int, int], ...]:
    """Validate 1-based inclusive round ranges and convert to half-open
    0-based; rounds must partition 1..size in order."""
    if not rounds:
        return ((0, size),) if size else ()
    normalized: list[tuple[int, int]] = []
    expected_start = 1
    for pair in rounds:
        start, end = int(pair[0]), int(pair[1])
        if start != expected_start or end < start:
            raise IllegalValue(
                f"rounds must partition 1..{size}; got range [{start}, {end}]"
            )
        normalized.append((start - 1, end))
        expected_start = end + 1
    if expected_start != size + 1:
        raise IllegalValue(f"rounds must cover 1..{size} exactly")
    return tuple(normalized)


class ReviewService:
    def __init__(self, project: "Project"):
        self.project = project
        self.store = project.store

    # -- sessions -------------------------------------------------------------

    def create_session(
        self,
        sample_size: int,
        seed: int,
        blind: bool,
        reviewers: Sequence[str],
        rounds: Sequence[Sequence[int]] | None = None,
    ) -> SessionRecord:
        population = [m.id for m in self.project.merged]
        if not population:
            raise Empty("project has no merged codes to review")
        if not reviewers:
            raise IllegalValue("a session needs at least one reviewer")
        sample = seeded_sample(population, sample_size, seed)
        session = SessionRecord(
            id=f"s{self.store.session_count() + 1:03d}",
            merged_code_ids=tuple(sample),
            seed=seed,
            blind=blind,
            reviewers=tuple(reviewers),
            rounds=normalize_rounds(rounds, len(sample)),
        )
        self.store.append(
            {
                "event": "session_created",
                "id": session.id,
                "merged_code_ids": list(session.merged_code_ids),
                "seed": session.seed,
                "blind": session.blind,
                "reviewers": list(session.reviewers),
                "rounds": [list(r) for r in session.rounds],
            }
        )
        return session

    def _session(self, session_id: str) -> SessionRecord:
        session = self.store.session(session_id)
        if session is None:
            raise UnknownSession(f"no session {session_id!r}")
        return session

    def _require_reviewer(self, session: SessionRecord, reviewer: str) -> None:
        if reviewer not in session.reviewers:
            raise UnknownReviewer(
                f"reviewer {reviewer!r} is not part of session {session.id}"
            )

    def round_of(self, session: SessionRecord, position: int) -> int:
        """1-based round number for a 0-based item position."""
        for n, (start, end) in enumerate(session.rounds, start=1):
            if start <= position < end:
                return n
        return 1

    # -- review payloads --------------------------------------------------------

    def items_for(self, session_id: str, reviewer: str) -> list[dict]:
        session = self._session(session_id)
        self._require_reviewer(session, reviewer)
        items = []
        for position, merged_id in enumerate(session.merged_code_ids):
            items.append(self._item_payload(session, reviewer, position, merged_id))
        return items

    def _item_payload(
        self, session: SessionRecord, reviewer: str, position: int, merged_id: str
    ) -> dict:
        merged = self.project.merged_by_id(merged_id)
        if merged is None:
            raise UnknownTarget(f"merged code {merged_id!r} missing from project")
        saved = any(
            self.store.decision_for(session.id, merged_id, coder_id, reviewer)
            for coder_id in self.project.coder_ids()
        )
        reveal = (not session.blind) or saved
        payload: dict = {
            "merged_code_id": merged_id,
            "position": position + 1,
            "round": self.round_of(session, position),
            "label": merged.label,
            "definition": merged.definition,
            "blind": session.blind,
            "saved": saved,
            "suggestions": self._suggestions(merged, reveal),
            "decisions": self._own_decisions(session, reviewer, merged_id),
            "context": self._context(merged),
        }
        if reveal:
            payload["algorithmic_coverage"] = dict(sorted(merged.coverage.items()))
        return payload

    def _suggestions(self, merged, reveal: bool) -> dict[str, list[dict]]:
        out: dict[str, list[dict]] = {}
        index = self.project.embeddings
        for codebook in self.project.codebooks:
            have = merged.id in index and all(
                c.id in index for c in codebook.codes
            )
            if not have:
                out[codebook.coder_id] = []
                continue
            ranked = suggest_near_codes(
                merged, codebook, SUGGESTIONS_PER_CODEBOOK, index
            )
            if not reveal:
                # Pre-save in a blind session the child-first ordering and
                # the child marks would leak the algorithm's merge.
                ranked = sorted(
                    ranked, key=lambda s: (-s.similarity, s.code.normalized_label)
                )
                out[codebook.coder_id] = [
                    {
                        "code_id": s.code.id,
                        "label": s.code.label,
                        "definition": s.code.definition,
                        "similarity": round(s.similarity, 6),
                    }
                    for s in ranked
                ]
            else:
                out[codebook.coder_id] = [
                    {
                        "code_id": s.code.id,
                        "label": s.code.label,
                        "definition": s.code.definition,
                        "similarity": round(s.similarity, 6),
                        "is_child": s.is_child,
                    }
                    for s in ranked
                ]
        return out

    def _own_decisions(self, session, reviewer: str, merged_id: str) -> dict:
        decisions = {}
        for coder_id in self.project.coder_ids():
            record = self.store.decision_for(session.id, merged_id, coder_id, reviewer)
            if record is not None:
                decisions[coder_id] = {"covered": record.covered, "memo": record.memo}
        return decisions

    def _context(self, merged) -> dict | None:
        corpus = self.project.corpus
        if corpus is None or not merged.children:
            return None
        first = merged.children[0]
        codebook = self.project.codebook(first.coder_id)
        if codebook is None:
            return None
        try:
            code = codebook.code_by_id(first.code_id)
        except KeyError:
            return None
        try:
            chunk = corpus.chunk_of(code.example_message_ids[0])
        except KeyError:
            return None
        if chunk is None:
            return None
        return {
            "chunk_id": chunk.id,
            "messages": [
                {
                    "id": m.id,
                    "author": m.author,
                    "role": m.role,
                    "text": m.text,
                    "highlight": m.id in code.example_message_ids,
                }
                for m in corpus.messages_of(chunk)
            ],
        }

    # -- decisions ---------------------------------------------------------------

    def record_decision(
        self,
        session_id: str,
        merged_code_id: str,
        reviewer: str,
        coder_id: str,
        covered: bool,
        memo: str = "",
        is_consensus: bool = False,
    ) -> DecisionRecord:
        session = self._session(session_id)
        self._require_reviewer(session, reviewer)
        if merged_code_id not in session.merged_code_ids:
            raise UnknownTarget(
                f"merged code {merged_code_id!r} is not part of session {session_id}"
            )
        if coder_id not in self.project.coder_ids():
            raise UnknownTarget(f"no codebook {coder_id!r} in project")
        if is_consensus:
            deciders = {
                record.reviewer
                for record in self.store.state.decisions.values()
                if record.session_id == session_id
                and record.merged_code_id == merged_code_id
                and record.coder_id == coder_id
                and not record.is_consensus
            }
            if len(deciders) < 2:
                raise PrematureConsensus(
                    "consensus needs prior decisions from at least two reviewers"
                )
        position = session.merged_code_ids.index(merged_code_id)
        event = self.store.append(
            {
                "event": "decision",
                "session_id": session_id,
                "merged_code_id": merged_code_id,
                "reviewer": reviewer,
                "coder_id": coder_id,
                "covered": bool(covered),
                "memo": memo,
                "round": self.round_of(session, position),
                "is_consensus": bool(is_consensus),
            }
        )
        key_reviewer = "__consensus__" if is_consensus else reviewer
        return self.store.decision_for(session_id, merged_code_id, coder_id, key_reviewer)

    def list_discrepancies(self, session_id: str, round_no: int) -> list[dict]:
        session = self._session(session_id)
        positions = self._round_positions(session, round_no)
        coder_ids = self.project.coder_ids()
        missing: list[tuple[str, str, str]] = []
        values: dict[tuple[str, str], dict[str, DecisionRecord]] = {}
        for position in positions:
            merged_id = session.merged_code_ids[position]
            for coder_id in coder_ids:
                for reviewer in session.reviewers:
                    record = self.store.decision_for(
                        session_id, merged_id, coder_id, reviewer
                    )
                    if record is None:
                        missing.append((merged_id, coder_id, reviewer))
                    else:
                        values.setdefault((merged_id, coder_id), {})[reviewer] = record
        if missing:
            raise RoundIncomplete(
                f"round {round_no} has {len(missing)} undecided (item, codebook, reviewer) combinations"
            )
        out = []
        for (merged_id, coder_id), records in values.items():
            flags = {reviewer: r.covered for reviewer, r in records.items()}
            if len(set(flags.values())) > 1:
                out.append(
                    {
                        "merged_code_id": merged_id,
                        "coder_id": coder_id,
                        "values": flags,
                        "memos": {rev: r.memo for rev, r in records.items()},
                        "consensus": self._consensus_value(session_id, merged_id, coder_id),
                    }
                )
        return out

    def _consensus_value(self, session_id, merged_id, coder_id):
        record = self.store.consensus_for(session_id, merged_id, coder_id)
        return None if record is None else record.covered

    def _round_positions(self, session: SessionRecord, round_no: int) -> range:
        if not 1 <= round_no <= len(session.rounds):
            raise IllegalValue(
                f"session {session.id} has rounds 1..{len(session.rounds)}"
            )
        start, end = session.rounds[round_no - 1]
        return range(start, end)

    # -- quality labels ------------------------------------------------------------

    def record_label(
        self,
        session_id: str,
        target_id: str,
        dimension: str,
        value: str,
        reviewer: str,
        memo: str = "",
        is_consensus: bool = False,
    ) -> LabelRecord:
        session = self._session(session_id)
        self._require_reviewer(session, reviewer)
        legal = LEGAL_VALUES.get(dimension)
        if legal is None:
            raise IllegalValue(f"unknown label dimension {dimension!r}")
        if value not in legal:
            raise IllegalValue(
                f"value {value!r} is not legal for {dimension}; expected one of {legal}"
            )
        if dimension in MERGED_DIMENSIONS:
            if self.project.merged_by_id(target_id) is None:
                raise UnknownTarget(
                    f"{dimension} labels attach to merged codes; {target_id!r} is not one"
                )
        else:
            if target_id not in self.project.code_ids():
                raise UnknownTarget(
                    f"{dimension} labels attach to raw codes; {target_id!r} is not one"
                )
        if is_consensus:
            labelers = {
                record.reviewer
                for record in self.store.state.labels.values()
                if record.target_id == target_id
                and record.dimension == dimension
                and not record.is_consensus
            }
            if len(labelers) < 2:
                raise PrematureConsensus(
                    "consensus needs prior labels from at least two reviewers"
                )
        self.store.append(
            {
                "event": "label",
                "session_id": session_id,
                "target_id": target_id,
                "dimension": dimension,
                "value": value,
                "reviewer": reviewer,
                "memo": memo,
                "is_consensus": bool(is_consensus),
            }
        )
        key_reviewer = "__consensus__" if is_consensus else reviewer
        return self.store.state.labels[(target_id, dimension, key_reviewer)]

    # -- reliability ------------------------------------------------------------------

    def kappa(self, session_id: str, round_no: int | None = None) -> dict:
        """Pairwise reviewer kappa plus reviewer/consensus vs algorithm."""
        session = self._session(session_id)
        if round_no is None:
            positions: Sequence[int] = range(len(session.merged_code_ids))
        else:
            positions = self._round_positions(session, round_no)
        keys = [
            (session.merged_code_ids[p], coder_id)
            for p in positions
            for coder_id in self.project.coder_ids()
        ]
        result: dict = {"session_id": session_id, "round": round_no, "pairs": []}
        for i, rev_a in enumerate(session.reviewers):
            for rev_b in session.reviewers[i + 1 :]:
                a_vals, b_vals = [], []
                for merged_id, coder_id in keys:
                    rec_a = self.store.decision_for(session_id, merged_id, coder_id, rev_a)
                    rec_b = self.store.decision_for(session_id, merged_id, coder_id, rev_b)
                    if rec_a is not None and rec_b is not None:
                        a_vals.append(rec_a.covered)
                        b_vals.append(rec_b.covered)
                if a_vals:
                    report = cohen_kappa(a_vals, b_vals)
                    result["pairs"].append(
                        {
                            "reviewers": [rev_a, rev_b],
                            "kappa": report.kappa,
                            "band": report.band,
                            "n": report.n,
                            "text": format_kappa(report),
                        }
                    )
        result["vs_algorithm"] = self._algorithm_kappas(session, keys)
        if result["pairs"]:
            result["primary"] = result["pairs"][0]
        return result

    def _algorithm_kappas(self, session: SessionRecord, keys) -> list[dict]:
        out = []
        algo = {}
        for merged_id, coder_id in keys:
            merged = self.project.merged_by_id(merged_id)
            if merged is not None:
                algo[(merged_id, coder_id)] = bool(merged.coverage.get(coder_id, False))
        raters = list(session.reviewers) + ["__consensus__"]
        for rater in raters:
            votes, truth = [], []
            for key in keys:
                record = self.store.decision_for(session.id, key[0], key[1], rater)
                if record is not None and key in algo:
                    votes.append(record.covered)
                    truth.append(algo[key])
            if votes:
                report = cohen_kappa(votes, truth)
                out.append(
                    {
                        "rater": "consensus" if rater == "__consensus__" else rater,
                        "kappa": report.kappa,
                        "band": report.band,
                        "n": report.n,
                        "text": format_kappa(report),
                    }
                )
        return out

    # -- report inputs ------------------------------------------------------------------

    def effective_labels(self, dimension: str) -> dict[str, str]:
        """Per-target label: consensus first, else the unanimous reviewer value."""
        by_target: dict[str, dict[str, str]] = {}
        consensus: dict[str, str] = {}
        for record in self.store.labels_current():
            if record.dimension != dimension:
                continue
            if record.is_consensus:
                consensus[record.target_id] = record.value
            else:
                by_target.setdefault(record.target_id, {})[record.reviewer] = record.value
        out = dict(consensus)
        for target, votes in by_target.items():
            if target in out:
                continue
            values = set(votes.values())
            if len(values) == 1:
                out[target] = values.pop()
        return out

    def consensus_coverage(self, session_id: str) -> dict[tuple[str, str], bool]:
        """Consensus coverage map for a session, falling back to unanimous
        reviewer agreement where no explicit consensus was recorded."""
        session = self._session(session_id)
        out: dict[tuple[str, str], bool] = {}
        for merged_id in session.merged_code_ids:
            for coder_id in self.project.coder_ids():
                record = self.store.consensus_for(session_id, merged_id, coder_id)
                if record is not None:
                    out[(merged_id, coder_id)] = record.covered
                    continue
                votes = [
                    self.store.decision_for(session_id, merged_id, coder_id, reviewer)
                    for reviewer in session.reviewers
                ]
                flags = {v.covered for v in votes if v is not None}
                if len(flags) == 1 and all(v is not None for v in votes):
                    out[(merged_id, coder_id)] = flags.pop()
        return out
