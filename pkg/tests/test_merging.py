from __future__ import annotations

import numpy as np
import pytest

from opencoding.codebook import Code, Codebook
from opencoding.gateway import Gateway, Transcript
from opencoding.merging import (
    MergeParams,
    embedding_index,
    hierarchical_merge,
    merged_from_doc,
    merged_to_doc,
    read_merged,
    suggest_near_codes,
)
from opencoding.project import load_project
from opencoding.providers import ScriptedChatProvider, StubEmbedder


def code(coder, n, label, definition=None, example="m1"):
    return Code(
        id=f"{coder}-{n:04d}",
        label=label,
        definition=definition if definition is not None else f"About {label}.",
        example_message_ids=(example,),
        coder_id=coder,
    )


def book(coder, *codes, kind="machine"):
    return Codebook(coder_id=coder, kind=kind, codes=tuple(codes))


def offline_gateway():
    return Gateway(
        chat_provider=ScriptedChatProvider(),
        embed_provider=StubEmbedder(),
        backoff_base=0,
        parallelism=1,
    )


WORDS = (
    "circuit wiring voltage diagram garden tomato seedling harvest lesson "
    "classroom teacher student feedback update feature timeline praise "
    "question answer experiment simulation physics community"
).split()


def random_codebooks(rng, n_books=3, max_codes=8):
    books = []
    for b in range(n_books):
        codes = []
        for n in range(1, int(rng.integers(1, max_codes + 1)) + 1):
            words = rng.choice(WORDS, size=int(rng.integers(2, 4)), replace=False)
            label = " ".join(words)
            codes.append(code(f"coder{b}", n, label, f"Codes about {label}."))
        books.append(book(f"coder{b}", *codes))
    return books


class TestHierarchicalMerge:
    def test_close_labels_merge_at_threshold(self):
        books = [
            book("verb", code("verb", 1, "manage user expectations", "Keeping user expectations realistic.")),
            book("humans", code("humans", 1, "managing expectations", "Keeping user expectations realistic."), kind="human"),
            book("item", code("item", 1, "harvest schedule", "When crops get picked.")),
        ]
        merged = hierarchical_merge(
            books, MergeParams(distance_threshold=0.4), offline_gateway()
        )
        multi = [m for m in merged if len(m.children) == 2]
        assert len(multi) == 1
        coders = {ref.coder_id for ref in multi[0].children}
        assert coders == {"verb", "humans"}
        assert multi[0].coverage == {"verb": True, "humans": True, "item": False}

    def test_single_code_passthrough(self):
        only = code("solo", 1, "lone concept", "The only one.")
        merged = hierarchical_merge([book("solo", only)], MergeParams(), offline_gateway())
        assert len(merged) == 1
        assert merged[0].label == only.label
        assert merged[0].definition == only.definition
        assert merged[0].children[0].code_id == only.id

    def test_tiny_threshold_keeps_distinct_codes_apart(self):
        books = [
            book(
                "a",
                code("a", 1, "alpha concept", "First."),
                code("a", 2, "beta concept", "Second."),
            ),
            # Exact duplicate of a code in another book still merges.
            book("b", code("b", 1, "alpha concept", "First.")),
        ]
        merged = hierarchical_merge(
            books, MergeParams(distance_threshold=1e-9), offline_gateway()
        )
        assert len(merged) == 2  # distinct (label, definition) pairs

    def test_child_set_conservation(self):
        rng = np.random.default_rng(0)
        books = random_codebooks(rng)
        merged = hierarchical_merge(
            books, MergeParams(distance_threshold=0.5), offline_gateway()
        )
        inputs = {(cb.coder_id, c.id) for cb in books for c in cb.codes}
        outputs = [(ref.coder_id, ref.code_id) for m in merged for ref in m.children]
        assert len(outputs) == len(inputs)
        assert set(outputs) == inputs

    def test_coverage_has_entry_for_every_codebook(self):
        rng = np.random.default_rng(1)
        books = random_codebooks(rng, n_books=4)
        merged = hierarchical_merge(books, MergeParams(), offline_gateway())
        for m in merged:
            assert set(m.coverage) == {cb.coder_id for cb in books}

    def test_threshold_sweep_non_increasing(self):
        rng = np.random.default_rng(2)
        books = random_codebooks(rng, n_books=3, max_codes=7)
        counts = [
            len(hierarchical_merge(books, MergeParams(distance_threshold=t), offline_gateway()))
            for t in (0.05, 0.15, 0.3, 0.5, 0.7, 0.9, 1.1, 1.4)
        ]
        assert counts == sorted(counts, reverse=True)

    def test_deterministic(self):
        rng = np.random.default_rng(3)
        books = random_codebooks(rng)
        params = MergeParams(distance_threshold=0.6)
        first = hierarchical_merge(books, params, offline_gateway())
        second = hierarchical_merge(books, params, offline_gateway())
        assert merged_to_doc(first, params) == merged_to_doc(second, params)

    def test_generated_label_prompt_fallback(self):
        class Garbage:
            def complete(self, *args):
                return "absolutely not json"

        books = [
            book("a", code("a", 1, "shared concept", "Same idea.")),
            book("b", code("b", 1, "shared concept", "Same idea.")),
        ]
        gateway = Gateway(
            chat_provider=Garbage(), embed_provider=StubEmbedder(), backoff_base=0
        )
        merged = hierarchical_merge(books, MergeParams(), gateway)
        assert len(merged) == 1
        assert merged[0].label == "shared concept"  # most central child

    def test_reembed_flag_conserves_children(self):
        rng = np.random.default_rng(4)
        books = random_codebooks(rng)
        params = MergeParams(distance_threshold=0.5, reembed_merged=True)
        merged = hierarchical_merge(books, params, offline_gateway())
        inputs = {(cb.coder_id, c.id) for cb in books for c in cb.codes}
        outputs = {(ref.coder_id, ref.code_id) for m in merged for ref in m.children}
        assert outputs == inputs

    def test_doc_round_trip(self, tmp_path):
        books = [book("a", code("a", 1, "alpha", "First."))]
        params = MergeParams(distance_threshold=0.42, linkage="complete")
        merged = hierarchical_merge(books, params, offline_gateway())
        doc = merged_to_doc(merged, params)
        back, back_params = merged_from_doc(doc)
        assert back == merged
        assert back_params == params


class TestFigure1Fixture:
    @pytest.fixture
    def figure1(self, fixtures_dir):
        return load_project(fixtures_dir / "figure1")

    def test_merge_reproduces_committed_output(self, figure1, fixtures_dir):
        gateway = Gateway(
            embed_provider=StubEmbedder(),
            transcript=Transcript(
                "replay", fixtures_dir / "figure1" / "transcripts" / "merge.jsonl"
            ),
            parallelism=1,
        )
        params = MergeParams(distance_threshold=0.4)
        merged = hierarchical_merge(
            figure1.codebooks, params, gateway, corpus=figure1.corpus
        )
        committed, committed_params = read_merged(
            fixtures_dir / "figure1" / "merged_codes.json"
        )
        assert merged == committed
        assert committed_params.distance_threshold == 0.4

    def test_cater_to_user_needs_coverage_pattern(self, figure1):
        target = next(m for m in figure1.merged if m.label == "cater to user needs")
        assert target.coverage == {
            "humans": True,
            "item_verb": True,
            "item_level": False,
        }
        children = {(ref.coder_id) for ref in target.children}
        assert children == {"humans", "item_verb"}

    def test_top_item_level_suggestion(self, figure1):
        target = next(m for m in figure1.merged if m.label == "cater to user needs")
        item_book = figure1.codebook("item_level")
        ranked = suggest_near_codes(target, item_book, 3, figure1.embeddings)
        assert ranked[0].code.label == "user expectation management"
        assert not ranked[0].is_child


class TestSuggestNearCodes:
    def test_k_at_least_size_ranks_whole_codebook(self):
        books = [
            book(
                "cand",
                code("cand", 1, "alpha topic", "First."),
                code("cand", 2, "beta topic", "Second."),
                code("cand", 3, "gamma topic", "Third."),
            )
        ]
        gateway = offline_gateway()
        merged = hierarchical_merge(books, MergeParams(distance_threshold=1e-6), gateway)
        index = embedding_index(merged, books, gateway)
        ranked = suggest_near_codes(merged[0], books[0], 99, index)
        assert len(ranked) == 3

    def test_identical_candidate_ranks_first_with_similarity_one(self):
        target = code("cand", 1, "exact concept", "Identical text.")
        other = code("cand", 2, "unrelated woodwork", "Sawdust everywhere.")
        books = [book("cand", target, other)]
        gateway = offline_gateway()
        merged = hierarchical_merge(books, MergeParams(distance_threshold=1e-9), gateway)
        index = embedding_index(merged, books, gateway)
        merged_exact = next(m for m in merged if m.label == "exact concept")
        ranked = suggest_near_codes(merged_exact, books[0], 2, index)
        assert ranked[0].code.id == target.id
        assert ranked[0].similarity == pytest.approx(1.0, abs=1e-6)

    def test_children_ranked_first_and_marked(self):
        books = [
            book(
                "a",
                code("a", 1, "shared concept", "Same idea."),
                code("a", 2, "shared concept idea", "Same idea."),
                code("a", 3, "totally different", "Nothing alike."),
            )
        ]
        gateway = offline_gateway()
        merged = hierarchical_merge(books, MergeParams(distance_threshold=0.6), gateway)
        index = embedding_index(merged, books, gateway)
        cluster = next(m for m in merged if len(m.children) >= 2)
        ranked = suggest_near_codes(cluster, books[0], 3, index)
        child_ids = {ref.code_id for ref in cluster.children}
        marked = [s for s in ranked if s.is_child]
        assert {s.code.id for s in marked} == child_ids
        assert all(s.is_child for s in ranked[: len(marked)])

    def test_ties_broken_by_normalized_label(self):
        # Identical label+definition gives a true similarity tie.
        a = code("cand", 1, "same tie", "x")
        b = code("cand", 2, "same tie", "x")
        books = [book("cand", a, b)]
        gateway = offline_gateway()
        merged = hierarchical_merge(books, MergeParams(distance_threshold=1e-9), gateway)
        index = embedding_index(merged, books, gateway)
        ranked = suggest_near_codes(merged[0], books[0], 2, index)
        assert [s.code.id for s in ranked] == ["cand-0001", "cand-0002"]
