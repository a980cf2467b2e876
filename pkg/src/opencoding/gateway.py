"""Uniform access to chat and embedding providers.

The gateway adds three guarantees on top of any provider: an in-run cache
(identical requests cost one upstream call), bounded retries with
exponential backoff, and byte-exact record/replay through transcripts so
every pipeline stage can be re-run deterministically with no network.

The request digest covers every request field except ``tag``: the tag names
the pipeline step that issued the request and must not split the cache.
"""

from __future__ import annotations

import json
import hashlib
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import ProviderError, ReplayMiss

DEFAULT_TEMPERATURE = 0.5
DEFAULT_MAX_RETRIES = 3
DEFAULT_BACKOFF_BASE = 1.0
DEFAULT_PARALLELISM = 4


@dataclass(frozen=True)
class PromptRequest:
    model_id: str
    temperature: float
    system_text: str
    user_text: str
    tag: str

    def __post_init__(self):
        if not self.model_id:
            raise ValueError("model_id must be non-empty")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError("temperature must be in [0, 2]")


@dataclass(frozen=True)
class Completion:
    request_hash: str
    output_text: str
    provider_meta: Mapping[str, str] = field(default_factory=dict)


def request_digest(request: PromptRequest) -> str:
    """Stable digest of the request identity (every field except tag)."""
    canonical = json.dumps(
        {
            "model_id": request.model_id,
            "temperature": request.temperature,
            "system_text": request.system_text,
            "user_text": request.user_text,
        },
        sort_keys=True,
        ensure_ascii=True,
        separators=(",", ":"),
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def embed_digest(model_id: str, text: str) -> str:
    canonical = json.dumps(
        {"embed_model": model_id, "text": text},
        sort_keys=True,
        ensure_ascii=True,
        separators=(",", ":"),
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class Transcript:
    """Persistent digest -> completion map with record/replay/live modes.

    Replay mode never touches the network: a missing digest is a ReplayMiss.
    Record mode appends one JSON line per new completion; writes are
    serialized so concurrent gateway calls cannot interleave lines.
    """

    def __init__(self, mode: str = "live", path: str | Path | None = None):
        if mode not in ("record", "replay", "live"):
            raise ValueError(f"unknown transcript mode {mode!r}")
        self.mode = mode
        self.path = Path(path) if path is not None else None
        self.entries: dict[str, Completion] = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            self._load()

    def _load(self) -> None:
        with open(self.path, encoding="utf-8") as handle:
            for line in handle:
                if not line.strip():
                    continue
                row = json.loads(line)
                self.entries[row["hash"]] = Completion(
                    request_hash=row["hash"],
                    output_text=row["output_text"],
                    provider_meta={"source": "transcript"},
                )

    def get(self, digest: str) -> Completion | None:
        return self.entries.get(digest)

    def put(self, digest: str, completion: Completion, request_info: dict) -> None:
        with self._lock:
            if digest in self.entries:
                return
            self.entries[digest] = completion
            if self.mode == "record" and self.path is not None:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with open(self.path, "a", encoding="utf-8") as handle:
                    handle.write(
                        json.dumps(
                            {
                                "hash": digest,
                                "request": request_info,
                                "output_text": completion.output_text,
                            },
                            ensure_ascii=False,
                            sort_keys=True,
                        )
                        + "\n"
                    )


class Gateway:
    """Provider facade with caching, retries, and transcript record/replay."""

    def __init__(
        self,
        chat_provider=None,
        embed_provider=None,
        transcript: Transcript | None = None,
        *,
        max_retries: int = DEFAULT_MAX_RETRIES,
        backoff_base: float = DEFAULT_BACKOFF_BASE,
        parallelism: int = DEFAULT_PARALLELISM,
        embed_batch_size: int = 16,
        embed_model_id: str | None = None,
        sleep=time.sleep,
    ):
        self.chat_provider = chat_provider
        self.embed_provider = embed_provider
        self._embed_model_id = embed_model_id
        self.transcript = transcript or Transcript(mode="live")
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self.parallelism = max(1, parallelism)
        self.embed_batch_size = max(1, embed_batch_size)
        self._sleep = sleep
        self._completion_cache: dict[str, Completion] = {}
        self._embed_cache: dict[str, np.ndarray] = {}
        self._cache_lock = threading.Lock()

    # -- chat ---------------------------------------------------------------

    def complete(self, request: PromptRequest) -> Completion:
        digest = request_digest(request)
        with self._cache_lock:
            cached = self._completion_cache.get(digest)
        if cached is not None:
            return cached
        recorded = self.transcript.get(digest)
        if recorded is not None:
            completion = Completion(request_hash=digest, output_text=recorded.output_text,
                                    provider_meta=recorded.provider_meta)
        elif self.transcript.mode == "replay":
            raise ReplayMiss(f"no recorded completion for {digest} (tag={request.tag})")
        else:
            output = self._call_with_retries(request)
            completion = Completion(
                request_hash=digest,
                output_text=output,
                provider_meta={"model_id": request.model_id},
            )
            self.transcript.put(
                digest,
                completion,
                request_info={
                    "model_id": request.model_id,
                    "temperature": request.temperature,
                    "system_text": request.system_text,
                    "user_text": request.user_text,
                    "tag": request.tag,
                },
            )
        with self._cache_lock:
            self._completion_cache[digest] = completion
        return completion

    def complete_many(self, requests: Sequence[PromptRequest]) -> list[Completion]:
        """Resolve a batch; results are re-associated by index, so downstream
        ordering is independent of provider scheduling."""
        if self.parallelism == 1 or len(requests) <= 1:
            return [self.complete(r) for r in requests]
        results: list[Completion | None] = [None] * len(requests)
        with ThreadPoolExecutor(max_workers=self.parallelism) as pool:
            futures = {pool.submit(self.complete, r): i for i, r in enumerate(requests)}
            for future, index in futures.items():
                results[index] = future.result()
        return results  # type: ignore[return-value]

    def _call_with_retries(self, request: PromptRequest) -> str:
        if self.chat_provider is None:
            raise ProviderError("no chat provider configured", status="unconfigured")
        last: ProviderError | None = None
        for attempt in range(self.max_retries):
            try:
                return self.chat_provider.complete(
                    request.model_id,
                    request.temperature,
                    request.system_text,
                    request.user_text,
                )
            except ProviderError as exc:
                last = exc
                if attempt + 1 < self.max_retries:
                    self._sleep(self.backoff_base * 2**attempt)
        raise ProviderError(
            f"provider failed after {self.max_retries} attempts: {last}",
            status=last.status if last else None,
        )

    # -- embeddings ----------------------------------------------------------

    @property
    def embed_model_id(self) -> str:
        """Embedding identity for digests; overridable so replay mode can
        address recordings made with a provider that is no longer attached."""
        if self._embed_model_id:
            return self._embed_model_id
        if self.embed_provider is None:
            return "unconfigured"
        return getattr(self.embed_provider, "model_id", "unknown-embedder")

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        """Embed texts to L2-normalized vectors, order and cardinality preserved.

        Each text is cached and recorded under its own digest, so replay
        results do not depend on how a batch was split.
        """
        if not texts:
            return []
        for t in texts:
            if not isinstance(t, str) or not t:
                raise ValueError("embed requires non-empty strings")
        model_id = self.embed_model_id
        digests = [embed_digest(model_id, t) for t in texts]
        vectors: dict[str, np.ndarray] = {}
        missing: list[int] = []
        for i, digest in enumerate(digests):
            with self._cache_lock:
                cached = self._embed_cache.get(digest)
            if cached is not None:
                vectors[digest] = cached
                continue
            recorded = self.transcript.get(digest)
            if recorded is not None:
                # Recorded vectors were normalized when stored; normalizing
                # again would drift the last ulp and break exact replay.
                vectors[digest] = np.asarray(
                    json.loads(recorded.output_text), dtype=np.float64
                )
                continue
            missing.append(i)
        if missing:
            if self.transcript.mode == "replay" and not self._embedder_is_local():
                raise ReplayMiss(
                    f"no recorded embedding for {len(missing)} text(s)"
                )
            if self.embed_provider is None:
                raise ProviderError("no embed provider configured", status="unconfigured")
            for start in range(0, len(missing), self.embed_batch_size):
                batch = missing[start : start + self.embed_batch_size]
                raw = self._embed_with_retries([texts[i] for i in batch])
                if len(raw) != len(batch):
                    raise ProviderError(
                        f"embedder returned {len(raw)} vectors for {len(batch)} texts",
                        status="schema",
                    )
                for i, values in zip(batch, raw):
                    vector = _normalize(np.asarray(values, dtype=np.float64))
                    digest = digests[i]
                    vectors[digest] = vector
                    self.transcript.put(
                        digest,
                        Completion(
                            request_hash=digest,
                            output_text=json.dumps([float(v) for v in vector]),
                        ),
                        request_info={"embed_model": model_id, "text": texts[i]},
                    )
        out: list[np.ndarray] = []
        for digest in digests:
            vector = vectors[digest]
            with self._cache_lock:
                self._embed_cache[digest] = vector
            out.append(vector)
        return out

    def _embedder_is_local(self) -> bool:
        # Local embedders (the stub) may compute in replay mode: no network.
        return getattr(self.embed_provider, "local", False)

    def _embed_with_retries(self, batch: list[str]) -> list[list[float]]:
        last: ProviderError | None = None
        for attempt in range(self.max_retries):
            try:
                return self.embed_provider.embed_batch(batch)
            except ProviderError as exc:
                last = exc
                if attempt + 1 < self.max_retries:
                    self._sleep(self.backoff_base * 2**attempt)
        raise ProviderError(
            f"embedder failed after {self.max_retries} attempts: {last}",
            status=last.status if last else None,
        )


def _normalize(vector: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(vector))
    if norm == 0.0:
        raise ProviderError("embedder returned a zero vector", status="schema")
    return vector / norm
