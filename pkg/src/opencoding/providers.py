"""Chat and embedding providers.

Two offline providers ship with the workbench so the whole pipeline runs
without API keys: a hash-projection embedder and a scripted chat provider
that synthesizes parseable coding output from the prompt itself. The HTTP
providers speak the common chat-completions / embeddings wire shape and are
selected by base URL.
"""

from __future__ import annotations

import hashlib
import json
import re
from typing import Sequence

import numpy as np

from .errors import ProviderError

STUB_EMBED_DIM = 64


def _hash_floats(key: str, dim: int) -> np.ndarray:
    """Expand a string key into ``dim`` floats in [-1, 1) via repeated SHA-256."""
    values: list[float] = []
    block = 0
    while len(values) < dim:
        digest = hashlib.sha256(f"{key}|{block}".encode("utf-8")).digest()
        for offset in range(0, 32, 4):
            values.append(
                int.from_bytes(digest[offset : offset + 4], "big") / 2**31 - 1.0
            )
        block += 1
    return np.array(values[:dim], dtype=np.float64)


def character_trigrams(text: str) -> list[str]:
    """Trigram multiset of the normalized text, padded with single spaces."""
    normalized = " ".join(text.lower().split())
    padded = f" {normalized} "
    return [padded[i : i + 3] for i in range(len(padded) - 2)]


class StubEmbedder:
    """Deterministic embedder: seeded hash projection of character trigrams.

    Each trigram hashes to a fixed 64-dimensional vector; a text embeds as
    the L2-normalized sum over its trigram occurrences. Texts sharing
    surface vocabulary land close together, which is enough structure for
    clustering tests without any model weights.
    """

    local = True

    def __init__(self, dim: int = STUB_EMBED_DIM, seed: int = 0):
        self.dim = dim
        self.seed = seed
        self.model_id = f"stub-trigram-{dim}-s{seed}"

    def embed_batch(self, texts: Sequence[str]) -> list[list[float]]:
        return [self._embed_one(t) for t in texts]

    def _embed_one(self, text: str) -> list[float]:
        total = np.zeros(self.dim, dtype=np.float64)
        for gram in character_trigrams(text):
            total += _hash_floats(f"{self.seed}:{gram}", self.dim)
        norm = float(np.linalg.norm(total))
        if norm == 0.0:
            # Degenerate only for pathological inputs; pin a fixed direction.
            total = _hash_floats(f"{self.seed}:<zero>", self.dim)
            norm = float(np.linalg.norm(total))
        return [float(v) for v in total / norm]


_WORD_RE = re.compile(r"[a-z][a-z']+")

_SCRIPT_STOPWORDS = frozenset(
    """a an the and or of to in on for with is are was were be been it this
    that you i we they he she will would can could should have has had do
    does did not no yes if then else at by as from into out more most very
    too also just only some any all each per one two three until after
    before about your our their its own same other than but so because
    what which who whom when where how there here still may might must
    let us them him her my me up down over under again once during while
    output format reply json list label definition message index parent
    conversation chunk target instructions research question context expert
    thematic analysis grounded theory open coding codes code working produce
    return""".split()
)


def _content_words(text: str, limit: int) -> list[str]:
    """Most salient words by (frequency, length), stable under re-runs."""
    counts: dict[str, int] = {}
    for word in _WORD_RE.findall(text.lower()):
        if word in _SCRIPT_STOPWORDS or len(word) < 4:
            continue
        counts[word] = counts.get(word, 0) + 1
    ranked = sorted(counts, key=lambda w: (-counts[w], -len(w), w))
    return ranked[:limit]


class ScriptedChatProvider:
    """Offline chat provider that fakes an open-coding model.

    The reply is derived deterministically from the request, so recorded
    transcripts and repeated runs are reproducible. ``overrides`` is an
    ordered list of (required substrings, canned reply) pairs checked
    against the user text first; it is how fixtures pin exact outputs.
    """

    def __init__(
        self,
        overrides: Sequence[tuple[Sequence[str], str]] | None = None,
    ):
        self.overrides = [(tuple(keys), reply) for keys, reply in overrides or []]
        self.calls = 0

    def complete(self, model_id: str, temperature: float, system_text: str, user_text: str) -> str:
        self.calls += 1
        for keys, reply in self.overrides:
            if all(key in user_text for key in keys):
                return reply
        return self._synthesize(model_id, temperature, user_text)

    def _pick(self, words: list[str], salt: str, count: int) -> list[str]:
        if not words:
            return []
        start = int.from_bytes(hashlib.sha256(salt.encode()).digest()[:4], "big")
        return [words[(start + i) % len(words)] for i in range(min(count, len(words)))]

    def _synthesize(self, model_id: str, temperature: float, user_text: str) -> str:
        salt = f"{model_id}|{temperature}|{user_text}"
        if "Child codes:" in user_text:
            words = _content_words(user_text.split("Child codes:", 1)[1], 4)
            label = " ".join(words[:2]) or "shared concept"
            return json.dumps(
                {"label": label, "definition": f"Umbrella concept spanning {label}."}
            )
        if "Code label:" in user_text:
            tail = user_text.split("Code label:", 1)[1].strip().splitlines()
            label = tail[0].strip() if tail else "the concept"
            return f"Moments in the conversation concerning {label}."
        if "Topic terms:" in user_text:
            words = _content_words(user_text.split("Topic terms:", 1)[1], 3)
            label = " ".join(words[:2]) or "general discussion"
            return json.dumps(
                [{"label": label, "definition": f"Messages revolving around {label}."}]
            )
        if "Target message:" in user_text:
            target = user_text.split("Target message:", 1)[1].split("\n\n", 1)[0]
            words = _content_words(target, 6)
            verb_mode = "verb phrase" in user_text.lower()
            n = 3 if verb_mode else 2
            verbs = ["discuss", "mention", "describe", "raise", "consider", "note"]
            codes = []
            for k, word in enumerate(self._pick(words, salt, n)):
                if verb_mode:
                    verb = verbs[
                        int.from_bytes(hashlib.sha256(f"{salt}|{k}".encode()).digest()[:2], "big")
                        % len(verbs)
                    ]
                    label = f"{verb} {word}"
                else:
                    label = word
                codes.append(
                    {"label": label, "definition": f"The message involves {word}."}
                )
            if not codes:
                codes = [{"label": "brief remark", "definition": "A short message."}]
            return json.dumps(codes)
        if "Conversation chunk:" in user_text:
            body = user_text.split("Conversation chunk:", 1)[1]
            words = _content_words(body, 8)
            structured = "more than one level" in user_text
            if structured:
                themes = self._pick(words, salt + "|themes", 2)
                out = []
                for t_idx, theme in enumerate(themes or ["discussion"]):
                    theme_label = f"{theme} theme"
                    out.append(
                        {"label": theme_label, "definition": f"Theme around {theme}.", "parent": None}
                    )
                    for child in self._pick(words, f"{salt}|{t_idx}", 2):
                        out.append(
                            {
                                "label": f"{theme} {child}",
                                "definition": f"Aspect of {theme} touching {child}.",
                                "parent": theme_label,
                            }
                        )
                return json.dumps(out)
            codes = [
                {"label": word, "definition": f"The conversation covers {word}."}
                for word in self._pick(words, salt, 3)
            ]
            if not codes:
                codes = [{"label": "short exchange", "definition": "A brief exchange."}]
            return json.dumps(codes)
        words = _content_words(user_text, 2)
        label = " ".join(words) or "general note"
        return json.dumps([{"label": label, "definition": f"Concerns {label}."}])


class CountingChatProvider:
    """Wraps another provider and counts upstream calls; for cache tests."""

    def __init__(self, inner):
        self.inner = inner
        self.calls = 0
        self.requests: list[tuple[str, float, str, str]] = []

    def complete(self, model_id, temperature, system_text, user_text):
        self.calls += 1
        self.requests.append((model_id, temperature, system_text, user_text))
        return self.inner.complete(model_id, temperature, system_text, user_text)


class HttpChatProvider:
    """Chat-completions client for any endpoint speaking the common wire shape."""

    def __init__(self, base_url: str, api_key: str = "", timeout: float = 60.0):
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key
        self.timeout = timeout

    def complete(self, model_id, temperature, system_text, user_text):
        import httpx

        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        body = {
            "model": model_id,
            "temperature": temperature,
            "messages": [
                {"role": "system", "content": system_text},
                {"role": "user", "content": user_text},
            ],
        }
        try:
            response = httpx.post(
                f"{self.base_url}/chat/completions",
                json=body,
                headers=headers,
                timeout=self.timeout,
            )
        except httpx.HTTPError as exc:
            raise ProviderError(f"transport failure: {exc}", status="transport") from exc
        if response.status_code != 200:
            raise ProviderError(
                f"provider returned {response.status_code}",
                status=str(response.status_code),
            )
        data = response.json()
        try:
            return data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"malformed provider response: {exc}", status="schema") from exc


class HttpEmbedder:
    """Embeddings client for any endpoint speaking the common wire shape."""

    def __init__(self, base_url: str, model_id: str, api_key: str = "", timeout: float = 60.0):
        self.base_url = base_url.rstrip("/")
        self.model_id = model_id
        self.api_key = api_key
        self.timeout = timeout

    def embed_batch(self, texts: Sequence[str]) -> list[list[float]]:
        import httpx

        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            response = httpx.post(
                f"{self.base_url}/embeddings",
                json={"model": self.model_id, "input": list(texts)},
                headers=headers,
                timeout=self.timeout,
            )
        except httpx.HTTPError as exc:
            raise ProviderError(f"transport failure: {exc}", status="transport") from exc
        if response.status_code != 200:
            raise ProviderError(
                f"provider returned {response.status_code}",
                status=str(response.status_code),
            )
        data = response.json()
        try:
            rows = sorted(data["data"], key=lambda row: row["index"])
            return [row["embedding"] for row in rows]
        except (KeyError, TypeError) as exc:
            raise ProviderError(f"malformed provider response: {exc}", status="schema") from exc
