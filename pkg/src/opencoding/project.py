"""Project directory layout and loading.

A project is a plain directory so every stage is inspectable and
re-runnable from disk artifacts alone:

    project.json        metadata (research_question, context), defaults,
                        optional coder groups and access token
    corpus.jsonl        one message per line; chunk_id after segmentation
    codebooks/*.json    one codebook per coder
    merged_codes.json   merged codes plus the merge params used
    embeddings.json     id -> embedding vector for merged codes and codes
    review.jsonl        append-only review journal
    manifests/*.json    per-command provenance (params, input/output digests)
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .codebook import Codebook, read_codebook
from .corpus import Corpus, read_corpus_file
from .merging import MergedCode, MergeParams, read_embedding_index, read_merged
from .review.store import ReviewStore

PROJECT_FILE = "project.json"
CORPUS_FILE = "corpus.jsonl"
CODEBOOKS_DIR = "codebooks"
MERGED_FILE = "merged_codes.json"
EMBEDDINGS_FILE = "embeddings.json"
REVIEW_FILE = "review.jsonl"
MANIFESTS_DIR = "manifests"


@dataclass
class Project:
    root: Path
    name: str = ""
    metadata: dict = field(default_factory=dict)
    defaults: dict = field(default_factory=dict)
    groups: dict[str, list[str]] = field(default_factory=dict)
    token: str | None = None
    corpus: Corpus | None = None
    codebooks: list[Codebook] = field(default_factory=list)
    merged: list[MergedCode] = field(default_factory=list)
    merge_params: MergeParams | None = None
    embeddings: dict[str, np.ndarray] = field(default_factory=dict)
    _store: ReviewStore | None = None

    @property
    def store(self) -> ReviewStore:
        if self._store is None:
            self._store = ReviewStore(self.root / REVIEW_FILE)
        return self._store

    def codebook(self, coder_id: str) -> Codebook | None:
        for cb in self.codebooks:
            if cb.coder_id == coder_id:
                return cb
        return None

    def coder_ids(self) -> list[str]:
        return [cb.coder_id for cb in self.codebooks]

    def merged_by_id(self, merged_id: str) -> MergedCode | None:
        for m in self.merged:
            if m.id == merged_id:
                return m
        return None

    def code_ids(self) -> set[str]:
        return {code.id for cb in self.codebooks for code in cb.codes}

    def effective_groups(self) -> dict[str, list[str]]:
        """Configured coder groups, or the default: all human codebooks as
        one group plus each machine codebook as its own group."""
        if self.groups:
            return self.groups
        groups: dict[str, list[str]] = {}
        humans = [cb.coder_id for cb in self.codebooks if cb.kind == "human"]
        if humans:
            groups["humans"] = humans
        for cb in self.codebooks:
            if cb.kind != "human":
                groups[cb.coder_id] = [cb.coder_id]
        return groups


def load_project(root: str | Path) -> Project:
    root = Path(root)
    project = Project(root=root, name=root.name or "project")
    config = root / PROJECT_FILE
    if config.exists():
        doc = json.loads(config.read_text(encoding="utf-8"))
        project.name = doc.get("name", project.name)
        project.metadata = doc.get("metadata", {})
        project.defaults = doc.get("defaults", {})
        project.groups = doc.get("groups", {})
        project.token = doc.get("token")
    corpus_path = root / CORPUS_FILE
    if corpus_path.exists():
        project.corpus = read_corpus_file(corpus_path)
        if project.corpus is not None:
            project.corpus = Corpus(
                messages=project.corpus.messages,
                chunks=project.corpus.chunks,
                metadata={**project.metadata, **(project.corpus.metadata or {})},
            )
    codebooks_dir = root / CODEBOOKS_DIR
    if codebooks_dir.is_dir():
        for path in sorted(codebooks_dir.glob("*.json")):
            codebook = read_codebook(path)
            if any(cb.coder_id == codebook.coder_id for cb in project.codebooks):
                raise ValueError(
                    f"duplicate coder_id {codebook.coder_id!r} in {path.name}"
                )
            project.codebooks.append(codebook)
    merged_path = root / MERGED_FILE
    if merged_path.exists():
        project.merged, project.merge_params = read_merged(merged_path)
    embeddings_path = root / EMBEDDINGS_FILE
    if embeddings_path.exists():
        project.embeddings = read_embedding_index(embeddings_path)
    return project


def save_project_config(project: Project) -> None:
    doc = {
        "name": project.name,
        "metadata": project.metadata,
        "defaults": project.defaults,
    }
    if project.groups:
        doc["groups"] = project.groups
    if project.token:
        doc["token"] = project.token
    path = project.root / PROJECT_FILE
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        json.dumps(doc, ensure_ascii=False, indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )


def file_digest(path: str | Path) -> str:
    sha = hashlib.sha256()
    with open(path, "rb") as handle:
        for block in iter(lambda: handle.read(65536), b""):
            sha.update(block)
    return sha.hexdigest()


def write_manifest(
    root: str | Path,
    name: str,
    params: dict,
    inputs: list[str | Path],
    outputs: list[str | Path],
    transcript: str | Path | None = None,
) -> Path:
    """Provenance record for one command; deterministic content so replayed
    runs can be compared byte for byte."""
    root = Path(root)
    manifest = {
        "command": name,
        "params": params,
        "inputs": {
            str(Path(p).relative_to(root) if Path(p).is_relative_to(root) else p): file_digest(p)
            for p in inputs
            if Path(p).exists()
        },
        "outputs": {
            str(Path(p).relative_to(root) if Path(p).is_relative_to(root) else p): file_digest(p)
            for p in outputs
            if Path(p).exists()
        },
        "transcript": file_digest(transcript)
        if transcript is not None and Path(transcript).exists()
        else None,
    }
    out = root / MANIFESTS_DIR / f"{name}.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(
        json.dumps(manifest, ensure_ascii=False, indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    return out
