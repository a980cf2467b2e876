"""Canonical code and codebook model shared by all coders and the merger.

Human codebooks are imported from the same file format machine coders emit,
so both kinds are interchangeable downstream.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

KINDS = ("human", "machine")

_WS_RE = re.compile(r"\s+")


def normalize_label(label: str) -> str:
    """Lowercased, whitespace-collapsed form used for dedup and tie-breaking."""
    return _WS_RE.sub(" ", label.strip().lower())


@dataclass(frozen=True)
class RawAssignment:
    """One code-to-messages link as parsed from coder output, pre-dedup."""

    label: str
    message_ids: tuple[str, ...]
    definition: str | None = None
    parent_label: str | None = None
    is_theme: bool = False
    needs_review: bool = False

    def __post_init__(self):
        if not self.label.strip():
            raise ValueError("assignment label must be non-empty")
        if not self.message_ids:
            raise ValueError("assignment must reference at least one message")


@dataclass(frozen=True)
class Code:
    id: str
    label: str
    definition: str
    example_message_ids: tuple[str, ...]
    coder_id: str
    is_theme: bool = False
    source_approach: str | None = None
    parent_label: str | None = None
    needs_review: bool = False
    normalized_label: str = field(default="")

    def __post_init__(self):
        if not self.label.strip():
            raise ValueError("code label must be non-empty")
        if not self.example_message_ids:
            raise ValueError(f"code {self.label!r} needs at least one example message")
        object.__setattr__(self, "normalized_label", normalize_label(self.label))

    @property
    def embedding_text(self) -> str:
        """Text embedded for similarity work: label plus definition, or the
        label twice when no definition exists."""
        return f"{self.label}: {self.definition or self.label}"


@dataclass(frozen=True)
class Codebook:
    coder_id: str
    kind: str
    codes: tuple[Code, ...]

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")

    def code_by_id(self, code_id: str) -> Code:
        for code in self.codes:
            if code.id == code_id:
                return code
        raise KeyError(code_id)


def finalize(
    assignments: Sequence[RawAssignment],
    coder_id: str,
    kind: str,
    gateway=None,
    *,
    source_approach: str | None = None,
    model_id: str | None = None,
    temperature: float | None = None,
) -> Codebook:
    """Deduplicate assignments into a Codebook with stable ids.

    Assignments whose labels normalize identically collapse into one code
    whose example set is the union, in first-appearance order, so no message
    reference is lost. Codes still missing a definition get one generated
    through a single gateway call each; pass ``gateway=None`` only when all
    definitions are present. Finalize is idempotent: re-finalizing a
    codebook's own codes reproduces it.
    """
    grouped: dict[str, dict] = {}
    order: list[str] = []
    for a in assignments:
        key = normalize_label(a.label)
        entry = grouped.get(key)
        if entry is None:
            grouped[key] = entry = {
                "label": a.label.strip(),
                "definition": (a.definition or "").strip(),
                "examples": list(dict.fromkeys(a.message_ids)),
                "parent": a.parent_label,
                "is_theme": a.is_theme,
                "needs_review": a.needs_review,
            }
            order.append(key)
        else:
            for m in a.message_ids:
                if m not in entry["examples"]:
                    entry["examples"].append(m)
            if not entry["definition"] and a.definition:
                entry["definition"] = a.definition.strip()
            if entry["parent"] is None and a.parent_label is not None:
                entry["parent"] = a.parent_label
            entry["is_theme"] = entry["is_theme"] or a.is_theme
            entry["needs_review"] = entry["needs_review"] or a.needs_review
    codes: list[Code] = []
    for n, key in enumerate(order, start=1):
        entry = grouped[key]
        definition = entry["definition"]
        if not definition:
            definition = _generate_definition(
                entry["label"], gateway, model_id=model_id, temperature=temperature
            )
        codes.append(
            Code(
                id=f"{coder_id}-{n:04d}",
                label=entry["label"],
                definition=definition,
                example_message_ids=tuple(entry["examples"]),
                coder_id=coder_id,
                is_theme=entry["is_theme"],
                source_approach=source_approach,
                parent_label=entry["parent"],
                needs_review=entry["needs_review"],
            )
        )
    return Codebook(coder_id=coder_id, kind=kind, codes=tuple(codes))


def _generate_definition(label, gateway, *, model_id=None, temperature=None) -> str:
    from .gateway import DEFAULT_TEMPERATURE, PromptRequest

    if gateway is None:
        raise ValueError(
            f"code {label!r} has no definition and no gateway was provided to generate one"
        )
    request = PromptRequest(
        model_id=model_id or "gpt-4o-0513",
        temperature=DEFAULT_TEMPERATURE if temperature is None else temperature,
        system_text="You write one-sentence definitions for qualitative open codes.",
        user_text=(
            "Write a single-sentence definition for this open code.\n"
            f"Code label: {label}\n"
            "Reply with the definition sentence only."
        ),
        tag=f"define:{normalize_label(label)}",
    )
    return gateway.complete(request).output_text.strip()


def codebook_to_doc(codebook: Codebook) -> dict:
    return {
        "coder_id": codebook.coder_id,
        "kind": codebook.kind,
        "codes": [
            {
                "id": code.id,
                "label": code.label,
                "definition": code.definition,
                "examples": list(code.example_message_ids),
                "is_theme": code.is_theme,
                "parent": code.parent_label,
                "source_approach": code.source_approach,
                "needs_review": code.needs_review,
            }
            for code in codebook.codes
        ],
    }


def codebook_from_doc(doc: dict) -> Codebook:
    coder_id = doc["coder_id"]
    codes = []
    for n, row in enumerate(doc.get("codes", []), start=1):
        codes.append(
            Code(
                id=row.get("id") or f"{coder_id}-{n:04d}",
                label=row["label"],
                definition=row.get("definition", "") or "",
                example_message_ids=tuple(str(m) for m in row.get("examples", [])),
                coder_id=coder_id,
                is_theme=bool(row.get("is_theme", False)),
                source_approach=row.get("source_approach"),
                parent_label=row.get("parent"),
                needs_review=bool(row.get("needs_review", False)),
            )
        )
    return Codebook(coder_id=coder_id, kind=doc["kind"], codes=tuple(codes))


def write_codebook(codebook: Codebook, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(codebook_to_doc(codebook), handle, ensure_ascii=False, indent=2, sort_keys=True)
        handle.write("\n")


def read_codebook(path: str | Path) -> Codebook:
    with open(path, encoding="utf-8") as handle:
        return codebook_from_doc(json.load(handle))
