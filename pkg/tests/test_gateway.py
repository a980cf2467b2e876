from __future__ import annotations

import json

import numpy as np
import pytest

from opencoding.errors import ProviderError, ReplayMiss
from opencoding.gateway import (
    Gateway,
    PromptRequest,
    Transcript,
    embed_digest,
    request_digest,
)
from opencoding.providers import (
    CountingChatProvider,
    ScriptedChatProvider,
    StubEmbedder,
)

from oracles import stub_embedding_reference


def req(tag="t1", **kw):
    base = dict(
        model_id="gpt-4o-0513",
        temperature=0.5,
        system_text="sys",
        user_text="Target message:\nAlice (user): the circuit wiring looks right\n\nInstructions",
        tag=tag,
    )
    base.update(kw)
    return PromptRequest(**base)


class TestPromptRequest:
    def test_rejects_empty_model(self):
        with pytest.raises(ValueError):
            req(model_id="")

    def test_rejects_out_of_range_temperature(self):
        with pytest.raises(ValueError):
            req(temperature=2.5)

    def test_digest_ignores_tag(self):
        assert request_digest(req(tag="a")) == request_digest(req(tag="b"))
        assert request_digest(req()) != request_digest(req(temperature=0.7))


class TestComplete:
    def test_envelope_fields_verbatim(self):
        provider = CountingChatProvider(ScriptedChatProvider())
        gateway = Gateway(chat_provider=provider, backoff_base=0)
        gateway.complete(req())
        model_id, temperature, system_text, user_text = provider.requests[0]
        assert model_id == "gpt-4o-0513"
        assert temperature == 0.5
        assert system_text == "sys"
        assert "circuit wiring" in user_text

    def test_identical_requests_one_upstream_call(self):
        provider = CountingChatProvider(ScriptedChatProvider())
        gateway = Gateway(chat_provider=provider, backoff_base=0)
        first = gateway.complete(req(tag="a"))
        second = gateway.complete(req(tag="b"))  # differs only in tag
        assert provider.calls == 1
        assert first.output_text == second.output_text

    def test_record_then_replay_byte_identical(self, tmp_path):
        path = tmp_path / "transcript.jsonl"
        recording = Gateway(
            chat_provider=ScriptedChatProvider(),
            transcript=Transcript("record", path),
        )
        recorded = recording.complete(req())
        replaying = Gateway(transcript=Transcript("replay", path))
        replayed = replaying.complete(req())
        assert replayed.output_text == recorded.output_text

    def test_replay_miss(self, tmp_path):
        gateway = Gateway(transcript=Transcript("replay", tmp_path / "none.jsonl"))
        with pytest.raises(ReplayMiss):
            gateway.complete(req())

    def test_record_mode_serves_existing_entries_without_provider_call(self, tmp_path):
        path = tmp_path / "transcript.jsonl"
        Gateway(
            chat_provider=ScriptedChatProvider(), transcript=Transcript("record", path)
        ).complete(req())
        provider = CountingChatProvider(ScriptedChatProvider())
        gateway = Gateway(chat_provider=provider, transcript=Transcript("record", path))
        gateway.complete(req())
        assert provider.calls == 0

    def test_retries_with_exponential_backoff(self):
        class Flaky:
            def __init__(self):
                self.calls = 0

            def complete(self, *args):
                self.calls += 1
                if self.calls < 3:
                    raise ProviderError("boom", status="503")
                return "ok"

        sleeps = []
        gateway = Gateway(
            chat_provider=Flaky(), backoff_base=1.0, sleep=sleeps.append
        )
        assert gateway.complete(req()).output_text == "ok"
        assert sleeps == [1.0, 2.0]

    def test_retries_exhausted_raises_with_status(self):
        class Dead:
            def complete(self, *args):
                raise ProviderError("no luck", status="500")

        gateway = Gateway(chat_provider=Dead(), max_retries=3, sleep=lambda s: None)
        with pytest.raises(ProviderError) as err:
            gateway.complete(req())
        assert err.value.status == "500"

    def test_complete_many_preserves_order(self):
        gateway = Gateway(chat_provider=ScriptedChatProvider(), parallelism=4)
        requests = [req(user_text=f"Target message:\nA (user): note {i} about wiring\n\n", tag=f"t{i}") for i in range(9)]
        singles = [gateway.complete(r).output_text for r in requests]
        fresh = Gateway(chat_provider=ScriptedChatProvider(), parallelism=4)
        batched = [c.output_text for c in fresh.complete_many(requests)]
        assert batched == singles


class TestEmbed:
    def test_identical_texts_identical_vectors(self, stub_gateway):
        a, b = stub_gateway.embed(["x", "x"])
        assert float(np.dot(a, b)) == pytest.approx(1.0, abs=1e-6)

    def test_empty_input(self, stub_gateway):
        assert stub_gateway.embed([]) == []

    def test_rejects_empty_strings(self, stub_gateway):
        with pytest.raises(ValueError):
            stub_gateway.embed(["ok", ""])

    def test_unit_norm(self, stub_gateway):
        vectors = stub_gateway.embed(["alpha beta", "gamma", "delta epsilon zeta"])
        for v in vectors:
            assert float(np.linalg.norm(v)) == pytest.approx(1.0, abs=1e-12)

    def test_stub_matches_independent_reimplementation(self, stub_gateway):
        va, vb = stub_gateway.embed(["aa", "ab"])
        ra = np.array(stub_embedding_reference("aa"))
        rb = np.array(stub_embedding_reference("ab"))
        got = float(np.dot(va, vb))
        expected = float(np.dot(ra, rb))
        assert got == pytest.approx(expected, abs=1e-12)
        assert np.allclose(va, ra, atol=1e-12)

    def test_order_independent_of_batch_size(self):
        texts = [f"text number {i} with words" for i in range(7)]
        small = Gateway(embed_provider=StubEmbedder(), embed_batch_size=2).embed(texts)
        large = Gateway(embed_provider=StubEmbedder(), embed_batch_size=100).embed(texts)
        for a, b in zip(small, large):
            assert np.array_equal(a, b)

    def test_record_then_replay_without_provider(self, tmp_path):
        class RemoteEmbedder:
            model_id = "remote-embed"

            def embed_batch(self, texts):
                return [[1.0, 2.0, 2.0] for _ in texts]

        path = tmp_path / "emb.jsonl"
        recorded = Gateway(
            embed_provider=RemoteEmbedder(), transcript=Transcript("record", path)
        ).embed(["hello"])
        replayed = Gateway(
            transcript=Transcript("replay", path), embed_model_id="remote-embed"
        ).embed(["hello"])
        assert np.array_equal(recorded[0], replayed[0])
        with pytest.raises(ReplayMiss):
            Gateway(
                transcript=Transcript("replay", path), embed_model_id="remote-embed"
            ).embed(["other text"])

    def test_transcript_lines_carry_hash_request_output(self, tmp_path):
        path = tmp_path / "t.jsonl"
        gateway = Gateway(
            chat_provider=ScriptedChatProvider(),
            embed_provider=StubEmbedder(),
            transcript=Transcript("record", path),
        )
        gateway.complete(req())
        gateway.embed(["sample text"])
        rows = [json.loads(line) for line in path.read_text().splitlines()]
        assert {"hash", "request", "output_text"} <= set(rows[0])
        assert rows[0]["hash"] == request_digest(req())
        assert rows[1]["hash"] == embed_digest(gateway.embed_model_id, "sample text")
