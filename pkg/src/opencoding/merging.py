"""Cross-codebook code merging by embedding similarity.

Codes from all codebooks are embedded from "label: definition" text and
clustered agglomeratively on cosine distance. Each cluster becomes one
merged code: singletons pass through unchanged, multi-child clusters get a
generated umbrella label and definition from the children's labels,
definitions, and one example message each. A merged code's algorithmic
coverage marks which codebooks contributed a child, which is a heuristic
"could be the same" judgment, not the stricter human coverage standard the
review module captures.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .clustering import LINKAGES, agglomerate, cluster_groups, cosine_distance_matrix
from .codebook import Code, Codebook, normalize_label
from .coders import load_template, render_template
from .coders.parsing import clean_label, extract_json_object
from .corpus import Corpus
from .gateway import DEFAULT_TEMPERATURE, Gateway, PromptRequest

log = logging.getLogger(__name__)

DEFAULT_DISTANCE_THRESHOLD = 0.35
MAX_REEMBED_ROUNDS = 5


@dataclass(frozen=True)
class MergeParams:
    distance_threshold: float = DEFAULT_DISTANCE_THRESHOLD
    linkage: str = "average"
    reembed_merged: bool = False
    model_id: str = "gpt-4o-0513"
    temperature: float = DEFAULT_TEMPERATURE

    def __post_init__(self):
        if not 0.0 < self.distance_threshold < 2.0:
            raise ValueError("distance_threshold must be in (0, 2)")
        if self.linkage not in LINKAGES:
            raise ValueError(f"linkage must be one of {LINKAGES}")


@dataclass(frozen=True)
class ChildRef:
    coder_id: str
    code_id: str


@dataclass(frozen=True)
class MergedCode:
    id: str
    label: str
    definition: str
    children: tuple[ChildRef, ...]
    coverage: Mapping[str, bool] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "coverage", dict(self.coverage))

    @property
    def embedding_text(self) -> str:
        return f"{self.label}: {self.definition or self.label}"


@dataclass(frozen=True)
class Suggestion:
    code: Code
    similarity: float
    is_child: bool


def hierarchical_merge(
    codebooks: Sequence[Codebook],
    params: MergeParams,
    gateway: Gateway,
    *,
    corpus: Corpus | None = None,
) -> list[MergedCode]:
    """Merge codes across codebooks into a deterministic merged-code list.

    The child sets of the output partition the input codes exactly. Given
    the same codebooks, params, and transcript, ids, labels, and order are
    identical run to run. ``corpus`` supplies example message texts to the
    label generator when available.
    """
    if not codebooks:
        raise ValueError("hierarchical_merge needs at least one codebook")
    coder_ids = [cb.coder_id for cb in codebooks]
    entries: list[tuple[str, Code]] = [
        (cb.coder_id, code) for cb in codebooks for code in cb.codes
    ]
    if not entries:
        return []
    merged = _merge_pass(entries, coder_ids, params, gateway, corpus)
    if params.reembed_merged:
        # Optional iterative variant: re-embed generated labels and keep
        # merging until a fixpoint, flattening child sets as clusters fuse.
        for _ in range(MAX_REEMBED_ROUNDS):
            remerged = _remerge_pass(merged, entries, coder_ids, params, gateway, corpus)
            if len(remerged) == len(merged):
                merged = remerged
                break
            merged = remerged
    return merged


def _merge_pass(entries, coder_ids, params, gateway, corpus) -> list[MergedCode]:
    texts = [code.embedding_text for _, code in entries]
    vectors = np.array(gateway.embed(texts))
    labels = agglomerate(
        cosine_distance_matrix(vectors), params.distance_threshold, params.linkage
    )
    merged: list[MergedCode] = []
    for n, group in enumerate(cluster_groups(labels), start=1):
        merged.append(
            _build_merged_code(
                f"mc-{n:04d}", group, entries, vectors, coder_ids, params, gateway, corpus
            )
        )
    return merged


def _remerge_pass(
    merged: list[MergedCode], entries, coder_ids, params, gateway, corpus
) -> list[MergedCode]:
    code_index = {(coder_id, code.id): code for coder_id, code in entries}
    vectors = np.array(gateway.embed([m.embedding_text for m in merged]))
    labels = agglomerate(
        cosine_distance_matrix(vectors), params.distance_threshold, params.linkage
    )
    out: list[MergedCode] = []
    for n, group in enumerate(cluster_groups(labels), start=1):
        if len(group) == 1:
            prior = merged[group[0]]
            out.append(
                MergedCode(
                    id=f"mc-{n:04d}",
                    label=prior.label,
                    definition=prior.definition,
                    children=prior.children,
                    coverage=prior.coverage,
                )
            )
            continue
        children = [
            (ref.coder_id, code_index[(ref.coder_id, ref.code_id)])
            for g in group
            for ref in merged[g].children
        ]
        flat_group = list(range(len(children)))
        child_vectors = np.array(
            gateway.embed([code.embedding_text for _, code in children])
        )
        out.append(
            _build_merged_code(
                f"mc-{n:04d}",
                flat_group,
                children,
                child_vectors,
                coder_ids,
                params,
                gateway,
                corpus,
            )
        )
    return out


def _build_merged_code(
    merged_id, group, entries, vectors, coder_ids, params, gateway, corpus
) -> MergedCode:
    coverage = {coder_id: False for coder_id in coder_ids}
    group_entries = [entries[i] for i in group]
    for coder_id, _ in group_entries:
        coverage[coder_id] = True
    if len(group) == 1:
        coder_id, code = group_entries[0]
        return MergedCode(
            id=merged_id,
            label=code.label,
            definition=code.definition,
            children=(ChildRef(coder_id, code.id),),
            coverage=coverage,
        )
    centroid = vectors[group].mean(axis=0)
    centroid /= np.linalg.norm(centroid)
    sims = np.einsum("d,id->i", centroid, vectors[group], optimize=False)
    order = sorted(
        range(len(group)),
        key=lambda g: (-sims[g], group_entries[g][1].normalized_label, group_entries[g][0]),
    )
    ordered = [group_entries[g] for g in order]
    label, definition = _generate_merged_label(ordered, params, gateway, corpus)
    return MergedCode(
        id=merged_id,
        label=label,
        definition=definition,
        children=tuple(ChildRef(coder_id, code.id) for coder_id, code in ordered),
        coverage=coverage,
    )


def _generate_merged_label(
    ordered_children: list[tuple[str, Code]],
    params: MergeParams,
    gateway: Gateway,
    corpus: Corpus | None,
) -> tuple[str, str]:
    lines = []
    for coder_id, code in ordered_children:
        example = code.example_message_ids[0]
        if corpus is not None:
            try:
                example = corpus.message_by_id(example).text
            except KeyError:
                pass
        lines.append(
            f'- label: {code.label}; definition: {code.definition or "(none)"}; example: {example}'
        )
    user_text = render_template(
        load_template("merged_label"), {"children": "\n".join(lines)}
    )
    request = PromptRequest(
        model_id=params.model_id,
        temperature=params.temperature,
        system_text=(
            "You merge equivalent open codes from several coders into one "
            "umbrella code for qualitative analysis."
        ),
        user_text=user_text,
        tag="merge:" + "+".join(code.id for _, code in ordered_children),
    )
    parsed = extract_json_object(gateway.complete(request).output_text)
    if parsed is None:
        retry = PromptRequest(
            model_id=request.model_id,
            temperature=request.temperature,
            system_text=request.system_text,
            user_text=request.user_text
            + "\n\nYour previous reply could not be parsed. Reply with only the JSON object.",
            tag=request.tag + ":retry1",
        )
        parsed = extract_json_object(gateway.complete(retry).output_text)
    if parsed is not None:
        label = clean_label(parsed.get("label"))
        definition = parsed.get("definition")
        if label:
            return label, definition if isinstance(definition, str) else ""
    # Never fatal: fall back to the most central child.
    first = ordered_children[0][1]
    log.warning("merged label generation failed; falling back to %r", first.label)
    return first.label, first.definition


def suggest_near_codes(
    merged: MergedCode,
    codebook: Codebook,
    k: int,
    index: Mapping[str, np.ndarray],
) -> list[Suggestion]:
    """Top-k candidate matches for a merged code within one codebook.

    Ranking is cosine similarity descending with ties broken by normalized
    label; codes that are already children of the merged code rank first
    and are marked. ``index`` maps merged/code ids to their embedding
    vectors (the merge step persists exactly this map).
    """
    merged_vector = index[merged.id]
    child_ids = {ref.code_id for ref in merged.children if ref.coder_id == codebook.coder_id}
    scored = []
    for code in codebook.codes:
        similarity = float(
            np.einsum("d,d->", merged_vector, index[code.id], optimize=False)
        )
        scored.append(
            Suggestion(code=code, similarity=similarity, is_child=code.id in child_ids)
        )
    scored.sort(
        key=lambda s: (not s.is_child, -s.similarity, s.code.normalized_label)
    )
    return scored[: max(0, k)]


def embedding_index(
    merged: Sequence[MergedCode],
    codebooks: Sequence[Codebook],
    gateway: Gateway,
) -> dict[str, np.ndarray]:
    """Embedding vectors for every merged code and every codebook code."""
    ids = [m.id for m in merged] + [c.id for cb in codebooks for c in cb.codes]
    texts = [m.embedding_text for m in merged] + [
        c.embedding_text for cb in codebooks for c in cb.codes
    ]
    vectors = gateway.embed(texts)
    return dict(zip(ids, vectors))


def merged_to_doc(merged: Sequence[MergedCode], params: MergeParams) -> dict:
    return {
        "params": {
            "distance_threshold": params.distance_threshold,
            "linkage": params.linkage,
            "reembed_merged": params.reembed_merged,
            "model_id": params.model_id,
            "temperature": params.temperature,
        },
        "merged_codes": [
            {
                "id": m.id,
                "label": m.label,
                "definition": m.definition,
                "children": [
                    {"coder_id": ref.coder_id, "code_id": ref.code_id}
                    for ref in m.children
                ],
                "algorithmic_coverage": dict(sorted(m.coverage.items())),
            }
            for m in merged
        ],
    }


def merged_from_doc(doc: dict) -> tuple[list[MergedCode], MergeParams]:
    params = MergeParams(**doc.get("params", {}))
    merged = [
        MergedCode(
            id=row["id"],
            label=row["label"],
            definition=row.get("definition", ""),
            children=tuple(
                ChildRef(ref["coder_id"], ref["code_id"]) for ref in row["children"]
            ),
            coverage=row.get("algorithmic_coverage", {}),
        )
        for row in doc.get("merged_codes", [])
    ]
    return merged, params


def write_merged(
    merged: Sequence[MergedCode], params: MergeParams, path: str | Path
) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(merged_to_doc(merged, params), handle, ensure_ascii=False, indent=2, sort_keys=True)
        handle.write("\n")


def read_merged(path: str | Path) -> tuple[list[MergedCode], MergeParams]:
    with open(path, encoding="utf-8") as handle:
        return merged_from_doc(json.load(handle))


def write_embedding_index(index: Mapping[str, np.ndarray], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {key: [float(v) for v in vector] for key, vector in sorted(index.items())}
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(doc, handle, sort_keys=True)
        handle.write("\n")


def read_embedding_index(path: str | Path) -> dict[str, np.ndarray]:
    with open(path, encoding="utf-8") as handle:
        doc = json.load(handle)
    return {key: np.asarray(values, dtype=np.float64) for key, values in doc.items()}
