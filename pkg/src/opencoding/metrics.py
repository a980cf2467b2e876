"""Reliability and report computations.

Cohen's kappa is chance-corrected two-rater agreement:

    kappa = (p_o - p_e) / (1 - p_e)

with p_o the observed agreement rate and p_e the chance agreement implied
by each rater's marginal label distribution. Verbal bands follow the
Landis-Koch cut points. The degenerate case p_e = 1 (both raters constant
and identical) is reported as kappa 1 when p_o = 1 and 0 otherwise, flagged
so callers can tell it apart from a computed value.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from typing import Hashable, Mapping, Sequence

from .errors import Empty, LengthMismatch, MissingConsensus

BANDS = ("poor", "slight", "fair", "moderate", "substantial", "almost_perfect")


@dataclass(frozen=True)
class ContingencyTable:
    """Counts over (rater A value, rater B value) pairs on a shared alphabet."""

    counts: Mapping[tuple[Hashable, Hashable], int]

    def __post_init__(self):
        object.__setattr__(self, "counts", dict(self.counts))
        if any(count < 0 for count in self.counts.values()):
            raise ValueError("contingency counts must be non-negative")

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    @property
    def alphabet(self) -> list:
        labels = {a for a, _ in self.counts} | {b for _, b in self.counts}
        return sorted(labels, key=repr)


@dataclass(frozen=True)
class ReliabilityReport:
    kappa: float
    band: str
    n: int
    degenerate: bool = False


def band_for(kappa: float) -> str:
    """Landis-Koch verbal band for a kappa value."""
    if kappa <= 0.0:
        return "poor"
    if kappa <= 0.20:
        return "slight"
    if kappa <= 0.40:
        return "fair"
    if kappa <= 0.60:
        return "moderate"
    if kappa <= 0.80:
        return "substantial"
    return "almost_perfect"


def table_from_labels(a: Sequence, b: Sequence) -> ContingencyTable:
    if len(a) != len(b):
        raise LengthMismatch(f"label vectors differ in length: {len(a)} vs {len(b)}")
    if not a:
        raise Empty("label vectors are empty")
    counts: dict[tuple, int] = {}
    for va, vb in zip(a, b):
        counts[(va, vb)] = counts.get((va, vb), 0) + 1
    return ContingencyTable(counts)


def kappa_from_table(table: ContingencyTable) -> ReliabilityReport:
    n = table.total
    if n == 0:
        raise Empty("contingency table is empty")
    alphabet = table.alphabet
    p_o = sum(table.counts.get((v, v), 0) for v in alphabet) / n
    row = {v: sum(c for (a, _), c in table.counts.items() if a == v) for v in alphabet}
    col = {v: sum(c for (_, b), c in table.counts.items() if b == v) for v in alphabet}
    p_e = sum(row[v] * col[v] for v in alphabet) / (n * n)
    if p_e == 1.0:
        kappa = 1.0 if p_o == 1.0 else 0.0
        return ReliabilityReport(kappa=kappa, band=band_for(kappa), n=n, degenerate=True)
    kappa = (p_o - p_e) / (1.0 - p_e)
    return ReliabilityReport(kappa=kappa, band=band_for(kappa), n=n)


def cohen_kappa(a: Sequence, b: Sequence) -> ReliabilityReport:
    """Cohen's kappa between two equal-length label vectors."""
    return kappa_from_table(table_from_labels(a, b))


def format_kappa(report: ReliabilityReport) -> str:
    """Badge text, e.g. "0.68 (substantial)"."""
    return f"{report.kappa:.2f} ({report.band})"


# -- unique coverage ---------------------------------------------------------


@dataclass(frozen=True)
class UniqueCoverage:
    """Per-group unique-coverage tallies over a sample of merged codes."""

    per_group: Mapping[str, tuple[str, ...]]
    total_unique: int
    sample_size: int

    def __post_init__(self):
        object.__setattr__(self, "per_group", dict(self.per_group))


def unique_coverage(
    consensus: Mapping[tuple[str, str], bool],
    merged_ids: Sequence[str],
    groups: Mapping[str, Sequence[str]],
) -> UniqueCoverage:
    """Attribute each merged code to the group that uniquely covers it.

    A merged code with covering-coder set C is uniquely covered by group G
    when C is non-empty, C is a subset of G, and G is the smallest such
    group. With disjoint groups this is exactly "covered by some coder in G
    and none outside G"; nested groups (such as a pair group spanning two
    item coders) resolve to the most specific match, keeping tallies
    disjoint. Raises MissingConsensus listing every (merged code, coder)
    pair that still lacks a consensus decision.
    """
    group_sets = {name: frozenset(members) for name, members in groups.items()}
    all_coders = sorted(set().union(*group_sets.values())) if group_sets else []
    gaps = [
        (merged_id, coder)
        for merged_id in merged_ids
        for coder in all_coders
        if (merged_id, coder) not in consensus
    ]
    if gaps:
        raise MissingConsensus(gaps)
    per_group: dict[str, list[str]] = {name: [] for name in groups}
    total = 0
    for merged_id in merged_ids:
        covering = frozenset(
            coder for coder in all_coders if consensus[(merged_id, coder)]
        )
        if not covering:
            continue
        candidates = [
            name for name, members in group_sets.items() if covering <= members
        ]
        if not candidates:
            continue
        candidates.sort(key=lambda name: (len(group_sets[name]), name))
        smallest = group_sets[candidates[0]]
        ties = [name for name in candidates if group_sets[name] == smallest]
        per_group[ties[0]].append(merged_id)
        total += 1
    return UniqueCoverage(
        per_group={name: tuple(ids) for name, ids in per_group.items()},
        total_unique=total,
        sample_size=len(merged_ids),
    )


# -- report rendering ---------------------------------------------------------

APPROACH_DISPLAY = {
    "topic_model": "Topic Modeling",
    "chunk_level": "Chunk Level",
    "chunk_structured": "Chunk Level Structured",
    "item_level": "Item Level",
    "item_verb": "Item Level Verb Phrases",
}
APPROACH_ORDER = tuple(APPROACH_DISPLAY)

GAIN_VALUES = ("little", "minor", "substantial")
SOURCE_VALUES = ("content", "conversational_dynamics")


def percent_str(count: int, total: int) -> str:
    """Percentage to one decimal, round-half-up, trailing ".0" dropped.

    3 of 23 renders "13%", 2 of 47 renders "4.3%", 0 of anything "0%".
    """
    if total <= 0 or count == 0:
        return "0%"
    value = Decimal(count * 100) / Decimal(total)
    rounded = value.quantize(Decimal("0.1"), rounding=ROUND_HALF_UP)
    text = str(rounded)
    if text.endswith(".0"):
        text = text[:-2]
    return f"{text}%"


def count_with_percent(count: int, total: int) -> str:
    return f"{count} ({percent_str(count, total)})"


@dataclass(frozen=True)
class ReportTable:
    key: str
    title: str
    columns: tuple[str, ...]
    rows: tuple[tuple[str, ...], ...]

    def to_doc(self) -> dict:
        return {
            "key": self.key,
            "title": self.title,
            "columns": list(self.columns),
            "rows": [list(row) for row in self.rows],
        }

    def to_text(self) -> str:
        """Aligned plain-text rendering."""
        header = ("",) + self.columns
        body = [header] + [row for row in self.rows]
        widths = [
            max(len(str(row[i])) for row in body) for i in range(len(header))
        ]
        lines = [self.title]
        for r, row in enumerate(body):
            cells = [str(cell).ljust(widths[i]) for i, cell in enumerate(row)]
            lines.append("  ".join(cells).rstrip())
            if r == 0:
                lines.append("  ".join("-" * w for w in widths).rstrip())
        return "\n".join(lines)


def validation_table(
    code_counts: Mapping[str, int],
    ungrounded: Mapping[str, int],
    overly_broad: Mapping[str, int],
    column_order: Sequence[str] | None = None,
) -> ReportTable:
    """Per-approach overview: code count, ungrounded, overly broad.

    Keys of the three maps are approach names (or coder ids); value look-up
    falls back to zero. Missing label passes render as empty cells.
    """
    columns = tuple(column_order if column_order is not None else code_counts)
    display = tuple(APPROACH_DISPLAY.get(c, c) for c in columns)
    row_counts = tuple(str(code_counts.get(c, 0)) for c in columns)
    if ungrounded:
        row_ungrounded = tuple(
            count_with_percent(ungrounded.get(c, 0), code_counts.get(c, 0))
            for c in columns
        )
    else:
        row_ungrounded = tuple("" for _ in columns)
    if overly_broad:
        row_broad = tuple(
            count_with_percent(overly_broad.get(c, 0), code_counts.get(c, 0))
            for c in columns
        )
    else:
        row_broad = tuple("" for _ in columns)
    return ReportTable(
        key="table2",
        title="Open codes and validation overview",
        columns=display,
        rows=(
            ("# Codes",) + row_counts,
            ("# Ungrounded",) + row_ungrounded,
            ("# Overly Broad",) + row_broad,
        ),
    )


def contribution_table(
    coverage: UniqueCoverage,
    gain_labels: Mapping[str, str],
    group_order: Sequence[str] | None = None,
) -> ReportTable:
    """Unique coverage crossed with gain labels per coder group."""
    names = tuple(group_order if group_order is not None else coverage.per_group)
    unique_row = ("# Uniquely Covered", str(coverage.total_unique)) + tuple(
        str(len(coverage.per_group.get(name, ()))) for name in names
    )
    rows = [unique_row]
    for gain in GAIN_VALUES:
        if gain_labels:
            total = sum(
                1
                for ids in coverage.per_group.values()
                for merged_id in ids
                if gain_labels.get(merged_id) == gain
            )
            cells = tuple(
                str(
                    sum(
                        1
                        for merged_id in coverage.per_group.get(name, ())
                        if gain_labels.get(merged_id) == gain
                    )
                )
                for name in names
            )
            rows.append((f"- {gain.capitalize()} Gain", str(total)) + cells)
        else:
            rows.append((f"- {gain.capitalize()} Gain", "") + tuple("" for _ in names))
    return ReportTable(
        key="table4",
        title="Unique coverage and potential contribution",
        columns=("Total",) + names,
        rows=tuple(rows),
    )


def render_reports(project, session_id: str | None = None) -> dict[str, "ReportTable"]:
    """Assemble the three report tables from a project's artifacts.

    Missing passes render as empty cells, and an empty project yields valid
    zero-row documents; this function does not raise for absent data. The
    coverage-based tables use the named session, defaulting to the most
    recently created one.
    """
    from .review.service import ReviewService

    service = ReviewService(project)
    approach_keys: list[str] = []
    code_counts: dict[str, int] = {}
    code_approach: dict[str, str] = {}
    for cb in project.codebooks:
        for code in cb.codes:
            key = code.source_approach or cb.coder_id
            if key not in code_counts:
                code_counts[key] = 0
                approach_keys.append(key)
            code_counts[key] += 1
            code_approach[code.id] = key
    order = [a for a in APPROACH_ORDER if a in code_counts] + sorted(
        k for k in code_counts if k not in APPROACH_ORDER
    )
    groundedness = service.effective_labels("groundedness")
    breadth = service.effective_labels("breadth")
    ungrounded: dict[str, int] = {}
    for code_id, value in groundedness.items():
        if value == "ungrounded" and code_id in code_approach:
            ungrounded[code_approach[code_id]] = ungrounded.get(code_approach[code_id], 0) + 1
    overly_broad: dict[str, int] = {}
    for code_id, value in breadth.items():
        if value == "overly_broad" and code_id in code_approach:
            overly_broad[code_approach[code_id]] = (
                overly_broad.get(code_approach[code_id], 0) + 1
            )
    if order:
        table2 = validation_table(code_counts, ungrounded, overly_broad, order)
    else:
        table2 = ReportTable(
            key="table2", title="Open codes and validation overview", columns=(), rows=()
        )
    sessions = project.store.state.sessions
    if session_id is None and sessions:
        session_id = sorted(sessions)[-1]
    empty4 = ReportTable(
        key="table4",
        title="Unique coverage and potential contribution",
        columns=(),
        rows=(),
    )
    empty5 = ReportTable(
        key="table5", title="Sources of substantial-gain codes", columns=(), rows=()
    )
    if session_id is None or session_id not in sessions:
        return {"table2": table2, "table4": empty4, "table5": empty5}
    session = sessions[session_id]
    groups = project.effective_groups()
    try:
        coverage = unique_coverage(
            service.consensus_coverage(session_id), session.merged_code_ids, groups
        )
    except MissingConsensus:
        return {"table2": table2, "table4": empty4, "table5": empty5}
    gain = service.effective_labels("gain")
    source = service.effective_labels("source")
    group_order = list(groups)
    table4 = contribution_table(coverage, gain, group_order)
    table5 = sources_table(coverage, gain, source, group_order)
    return {"table2": table2, "table4": table4, "table5": table5}


def sources_table(
    coverage: UniqueCoverage,
    gain_labels: Mapping[str, str],
    source_labels: Mapping[str, str],
    group_order: Sequence[str] | None = None,
) -> ReportTable:
    """Substantial-gain codes broken down by grounding source per group."""
    names = tuple(group_order if group_order is not None else coverage.per_group)
    substantial = {
        name: tuple(
            merged_id
            for merged_id in coverage.per_group.get(name, ())
            if gain_labels.get(merged_id) == "substantial"
        )
        for name in names
    }
    total_sub = sum(len(ids) for ids in substantial.values())
    rows = [
        ("# Substantial Gain", str(total_sub))
        + tuple(str(len(substantial[name])) for name in names)
    ]
    source_display = {
        "content": "- From Content",
        "conversational_dynamics": "- From Conversational Dynamics",
    }
    for source in SOURCE_VALUES:
        if source_labels:
            total = sum(
                1
                for ids in substantial.values()
                for merged_id in ids
                if source_labels.get(merged_id) == source
            )
            cells = tuple(
                str(
                    sum(
                        1
                        for merged_id in substantial[name]
                        if source_labels.get(merged_id) == source
                    )
                )
                for name in names
            )
            rows.append((source_display[source], str(total)) + cells)
        else:
            rows.append((source_display[source], "") + tuple("" for _ in names))
    return ReportTable(
        key="table5",
        title="Sources of substantial-gain codes",
        columns=("Total",) + names,
        rows=tuple(rows),
    )
