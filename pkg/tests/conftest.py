from __future__ import annotations

import sys
from pathlib import Path

import pytest

TESTS_DIR = Path(__file__).parent
FIXTURES_DIR = TESTS_DIR / "fixtures"

if str(TESTS_DIR) not in sys.path:
    sys.path.insert(0, str(TESTS_DIR))

from opencoding.corpus import Corpus, Message, ingest_corpus, segment_chunks
from opencoding.gateway import Gateway, Transcript
from opencoding.providers import ScriptedChatProvider, StubEmbedder

METADATA = {
    "research_question": "How did an online community emerge around the learning software?",
    "context": "Chat messages between designers and teachers from the first two months of the channel.",
}


def make_messages(texts, start_ts=1_600_000_000, step=60, role="user"):
    return [
        {
            "id": f"m{i:02d}",
            "author": f"author-{i % 3}",
            "role": role,
            "ts": start_ts + i * step,
            "text": text,
        }
        for i, text in enumerate(texts, start=1)
    ]


def make_corpus(texts, metadata=METADATA, segmented=True, **kwargs) -> Corpus:
    corpus = ingest_corpus(make_messages(texts, **kwargs))
    corpus = Corpus(messages=corpus.messages, metadata=metadata)
    if segmented:
        corpus = segment_chunks(corpus)
    return corpus


@pytest.fixture
def metadata():
    return dict(METADATA)


@pytest.fixture
def stub_gateway():
    """Offline gateway: scripted chat, stub embedder, no transcript."""
    return Gateway(
        chat_provider=ScriptedChatProvider(),
        embed_provider=StubEmbedder(),
        transcript=Transcript("live"),
        parallelism=1,
        backoff_base=0.0,
    )


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES_DIR
