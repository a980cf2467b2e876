"""The five open-coding approaches: prompt builders plus output parsers.

Every approach shares one inductive-coding contract: prompts carry the
expert role, the research question, and the dataset context, and never any
codebook or previously generated code. Templates live in editable text
files next to this module; ``{research_question}``, ``{context}``,
``{chunk}`` and ``{message}`` are the substitution points.
"""

from __future__ import annotations

import logging
import re
from dataclasses import replace
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from ..clustering import agglomerate, cluster_groups, cosine_distance_matrix
from ..codebook import Codebook, RawAssignment, finalize
from ..corpus import Chunk, Corpus, Message
from ..errors import MissingMetadata, ParseFailure, TooFewMessages
from ..gateway import DEFAULT_TEMPERATURE, Gateway, PromptRequest
from .parsing import clean_label, extract_json_array

log = logging.getLogger(__name__)

DEFAULT_MODEL_ID = "gpt-4o-0513"
DEFAULT_MIN_TOPIC_SIZE = 4
DEFAULT_TOPIC_DISTANCE = 0.6
DEFAULT_OVERSIZED = 30
TOPIC_TERM_COUNT = 10
TOPIC_EXEMPLARS = 5

TEMPLATES_DIR = Path(__file__).parent / "templates"

_RETRY_NOTE = (
    "\n\nYour previous reply could not be parsed. "
    "Reply again with only the bracketed JSON list, nothing else."
)


class Approach(str, Enum):
    TOPIC_MODEL = "topic_model"
    CHUNK_LEVEL = "chunk_level"
    CHUNK_STRUCTURED = "chunk_structured"
    ITEM_LEVEL = "item_level"
    ITEM_VERB = "item_verb"


def load_template(name: str, templates_dir: str | Path | None = None) -> str:
    directory = Path(templates_dir) if templates_dir else TEMPLATES_DIR
    return (directory / f"{name}.txt").read_text(encoding="utf-8")


def render_template(template: str, values: Mapping[str, str]) -> str:
    """Substitute only the named placeholders; literal braces elsewhere
    (e.g. in JSON format examples) pass through untouched."""
    out = template
    for key, value in values.items():
        out = out.replace("{" + key + "}", value)
    return out


def format_message_line(message: Message, index: int | None = None, marker: str = "") -> str:
    prefix = f"{index}. " if index is not None else ""
    return f"{marker}{prefix}{message.author} ({message.role}): {message.text}"


def format_chunk(messages: Sequence[Message], target_id: str | None = None) -> str:
    lines = []
    for i, message in enumerate(messages, start=1):
        marker = ">>> " if target_id is not None and message.id == target_id else ""
        lines.append(format_message_line(message, index=i, marker=marker))
    return "\n".join(lines)


def build_system_text(
    corpus_metadata: Mapping[str, str], templates_dir: str | Path | None = None
) -> str:
    for key in ("research_question", "context"):
        if not corpus_metadata.get(key):
            raise MissingMetadata(f"corpus metadata is missing {key!r}")
    return render_template(
        load_template("system", templates_dir),
        {
            "research_question": corpus_metadata["research_question"],
            "context": corpus_metadata["context"],
        },
    ).strip()


def build_prompt(
    approach: Approach,
    unit: Chunk | Message,
    corpus_metadata: Mapping[str, str],
    *,
    chunk_messages: Sequence[Message] | None = None,
    model_id: str = DEFAULT_MODEL_ID,
    temperature: float = DEFAULT_TEMPERATURE,
    templates_dir: str | Path | None = None,
) -> PromptRequest:
    """Build the coding request for one unit of analysis.

    Chunk approaches take a Chunk plus its messages; item approaches take a
    Message plus the messages of its chunk, which are included as clearly
    marked context. The verb-phrase variant appends its extra instruction to
    the item-level template.
    """
    approach = Approach(approach)
    system_text = build_system_text(corpus_metadata, templates_dir)
    if approach in (Approach.CHUNK_LEVEL, Approach.CHUNK_STRUCTURED):
        if not isinstance(unit, Chunk):
            raise TypeError(f"{approach.value} codes chunks, got {type(unit).__name__}")
        if chunk_messages is None:
            raise ValueError("chunk_messages is required for chunk approaches")
        name = "chunk_level" if approach is Approach.CHUNK_LEVEL else "chunk_structured"
        user_text = render_template(
            load_template(name, templates_dir), {"chunk": format_chunk(chunk_messages)}
        )
        tag = f"{approach.value}:{unit.id}"
    elif approach in (Approach.ITEM_LEVEL, Approach.ITEM_VERB):
        if not isinstance(unit, Message):
            raise TypeError(f"{approach.value} codes messages, got {type(unit).__name__}")
        context = chunk_messages if chunk_messages else [unit]
        user_text = render_template(
            load_template("item_level", templates_dir),
            {
                "chunk": format_chunk(context, target_id=unit.id),
                "message": format_message_line(unit),
            },
        )
        if approach is Approach.ITEM_VERB:
            user_text = user_text.rstrip() + "\n" + load_template(
                "verb_phrase_instruction", templates_dir
            ).strip() + "\n"
        tag = f"{approach.value}:{unit.id}"
    else:
        raise ValueError(
            "topic_model prompts are built per topic by run_topic_coder"
        )
    return PromptRequest(
        model_id=model_id,
        temperature=temperature,
        system_text=system_text,
        user_text=user_text,
        tag=tag,
    )


def _parse_with_reprompt(
    gateway: Gateway,
    request: PromptRequest,
    unit_id: str,
    failures: list[ParseFailure] | None,
) -> list | None:
    """Parse a completion, reprompting once on failure, then skip-and-log."""
    items = extract_json_array(gateway.complete(request).output_text)
    if items is not None:
        return items
    retry = replace(
        request, user_text=request.user_text + _RETRY_NOTE, tag=f"{request.tag}:retry1"
    )
    items = extract_json_array(gateway.complete(retry).output_text)
    if items is not None:
        return items
    failure = ParseFailure(unit_id, "output was not a JSON list after one reprompt")
    log.warning("skipping %s: %s", unit_id, failure)
    if failures is not None:
        failures.append(failure)
    return None


def _require_segmented(corpus: Corpus) -> None:
    if not corpus.chunks:
        raise ValueError("corpus is not segmented; run segment_chunks first")


def run_chunk_coder(
    corpus: Corpus,
    gateway: Gateway,
    *,
    structured: bool = False,
    coder_id: str | None = None,
    model_id: str = DEFAULT_MODEL_ID,
    temperature: float = DEFAULT_TEMPERATURE,
    templates_dir: str | Path | None = None,
    failures: list[ParseFailure] | None = None,
) -> Codebook:
    """Code each chunk with one completion; parse code lists into a Codebook.

    Parsed codes attach to every message of the chunk unless the model named
    a specific message index. With ``structured=True`` the model is asked for
    themes plus codes: code entries record their parent label, and each
    parent also becomes a code flagged as a theme.
    """
    approach = Approach.CHUNK_STRUCTURED if structured else Approach.CHUNK_LEVEL
    if not corpus.messages:
        return finalize([], coder_id or approach.value, "machine", gateway,
                        source_approach=approach.value)
    _require_segmented(corpus)
    requests = []
    chunk_messages: dict[str, list[Message]] = {}
    for chunk in corpus.chunks:
        messages = corpus.messages_of(chunk)
        chunk_messages[chunk.id] = messages
        requests.append(
            build_prompt(
                approach,
                chunk,
                corpus.metadata,
                chunk_messages=messages,
                model_id=model_id,
                temperature=temperature,
                templates_dir=templates_dir,
            )
        )
    gateway.complete_many(requests)  # warm the cache in parallel
    assignments: list[RawAssignment] = []
    for chunk, request in zip(corpus.chunks, requests):
        items = _parse_with_reprompt(gateway, request, chunk.id, failures)
        if items is None:
            continue
        assignments.extend(
            _chunk_assignments(items, chunk, structured=structured)
        )
    return finalize(
        assignments,
        coder_id or approach.value,
        "machine",
        gateway,
        source_approach=approach.value,
        model_id=model_id,
        temperature=temperature,
    )


def _chunk_assignments(
    items: list[dict], chunk: Chunk, *, structured: bool
) -> list[RawAssignment]:
    assignments: list[RawAssignment] = []
    theme_labels: set[str] = set()
    child_messages: dict[str, list[str]] = {}
    for item in items:
        label = clean_label(item.get("label"))
        if label is None:
            continue
        message_ids = _resolve_message_ids(item.get("message_index"), chunk)
        definition = item.get("definition") if isinstance(item.get("definition"), str) else None
        parent = clean_label(item.get("parent")) if structured else None
        is_theme = structured and not parent
        if is_theme:
            theme_labels.add(label.lower())
        if parent:
            child_messages.setdefault(parent.lower(), []).extend(message_ids)
        assignments.append(
            RawAssignment(
                label=label,
                message_ids=tuple(message_ids),
                definition=definition,
                parent_label=parent,
                is_theme=is_theme,
            )
        )
    if structured:
        # Parents mentioned by children but never listed still become themes.
        for parent_key, messages in child_messages.items():
            if parent_key in theme_labels:
                continue
            parent_label = next(
                a.parent_label for a in assignments if a.parent_label and a.parent_label.lower() == parent_key
            )
            assignments.append(
                RawAssignment(
                    label=parent_label,
                    message_ids=tuple(dict.fromkeys(messages)),
                    definition=None,
                    is_theme=True,
                )
            )
            theme_labels.add(parent_key)
    return assignments


def _resolve_message_ids(message_index, chunk: Chunk) -> list[str]:
    if isinstance(message_index, int) and 1 <= message_index <= len(chunk.message_ids):
        return [chunk.message_ids[message_index - 1]]
    return list(chunk.message_ids)


def run_item_coder(
    corpus: Corpus,
    gateway: Gateway,
    *,
    verb_phrases: bool = False,
    coder_id: str | None = None,
    model_id: str = DEFAULT_MODEL_ID,
    temperature: float = DEFAULT_TEMPERATURE,
    templates_dir: str | Path | None = None,
    failures: list[ParseFailure] | None = None,
) -> Codebook:
    """Line-by-line coding: one completion per message, chunk as context.

    Every parsed code references exactly the target message. Zero codes for
    a message is a valid outcome, as is an empty codebook for an empty corpus.
    """
    approach = Approach.ITEM_VERB if verb_phrases else Approach.ITEM_LEVEL
    if not corpus.messages:
        return finalize([], coder_id or approach.value, "machine", gateway,
                        source_approach=approach.value)
    _require_segmented(corpus)
    requests = []
    for message in corpus.messages:
        chunk = corpus.chunk_of(message.id)
        context = corpus.messages_of(chunk) if chunk else [message]
        requests.append(
            build_prompt(
                approach,
                message,
                corpus.metadata,
                chunk_messages=context,
                model_id=model_id,
                temperature=temperature,
                templates_dir=templates_dir,
            )
        )
    gateway.complete_many(requests)
    assignments: list[RawAssignment] = []
    for message, request in zip(corpus.messages, requests):
        items = _parse_with_reprompt(gateway, request, message.id, failures)
        if items is None:
            continue
        for item in items:
            label = clean_label(item.get("label"))
            if label is None:
                continue
            definition = (
                item.get("definition") if isinstance(item.get("definition"), str) else None
            )
            assignments.append(
                RawAssignment(
                    label=label,
                    message_ids=(message.id,),
                    definition=definition,
                )
            )
    return finalize(
        assignments,
        coder_id or approach.value,
        "machine",
        gateway,
        source_approach=approach.value,
        model_id=model_id,
        temperature=temperature,
    )


_TOKEN_RE = re.compile(r"[a-z0-9']+")


def topic_term_weights(
    topic_tokens: Sequence[str], all_tokens_counts: Mapping[str, int]
) -> list[tuple[str, float]]:
    """Class-based term weighting: topic term frequency over corpus-wide
    term frequency. Distinctive terms score 1.0; ubiquitous ones decay."""
    topic_counts: dict[str, int] = {}
    for token in topic_tokens:
        topic_counts[token] = topic_counts.get(token, 0) + 1
    weighted = [
        (term, topic_counts[term] / all_tokens_counts[term]) for term in topic_counts
    ]
    weighted.sort(key=lambda tw: (-tw[1], -topic_counts[tw[0]], tw[0]))
    return weighted


def run_topic_coder(
    corpus: Corpus,
    gateway: Gateway,
    *,
    min_topic_size: int = DEFAULT_MIN_TOPIC_SIZE,
    distance_threshold: float = DEFAULT_TOPIC_DISTANCE,
    oversized_threshold: int = DEFAULT_OVERSIZED,
    coder_id: str | None = None,
    model_id: str = DEFAULT_MODEL_ID,
    temperature: float = DEFAULT_TEMPERATURE,
    templates_dir: str | Path | None = None,
    failures: list[ParseFailure] | None = None,
) -> Codebook:
    """Cluster message embeddings into topics and label each with one code.

    Clusters smaller than ``min_topic_size`` fall into an outlier bucket and
    are not coded. Each topic is labeled from its top distinguishing terms
    (topic term frequency over corpus term frequency) plus up to five
    exemplar messages nearest the topic centroid. Topics larger than
    ``oversized_threshold`` are flagged for review: in practice neither
    models nor humans can name them well.
    """
    if len(corpus.messages) < 2:
        raise TooFewMessages("topic coding needs at least 2 messages")
    system_text = build_system_text(corpus.metadata, templates_dir)
    vectors = np.array(gateway.embed([m.text for m in corpus.messages]))
    labels = agglomerate(
        cosine_distance_matrix(vectors), distance_threshold, "average"
    )
    topics = [
        group for group in cluster_groups(labels) if len(group) >= min_topic_size
    ]
    token_lists = [_TOKEN_RE.findall(m.text.lower()) for m in corpus.messages]
    clustered = [i for group in topics for i in group]
    all_counts: dict[str, int] = {}
    for i in clustered:
        for token in token_lists[i]:
            all_counts[token] = all_counts.get(token, 0) + 1
    template = load_template("topic_label", templates_dir)
    assignments: list[RawAssignment] = []
    for k, group in enumerate(topics, start=1):
        topic_tokens = [t for i in group for t in token_lists[i]]
        terms = [t for t, _ in topic_term_weights(topic_tokens, all_counts)][:TOPIC_TERM_COUNT]
        centroid = vectors[group].mean(axis=0)
        centroid /= np.linalg.norm(centroid)
        sims = np.einsum("d,id->i", centroid, vectors[group], optimize=False)
        ranked = sorted(range(len(group)), key=lambda g: (-sims[g], group[g]))
        exemplars = [corpus.messages[group[g]] for g in ranked[:TOPIC_EXEMPLARS]]
        request = PromptRequest(
            model_id=model_id,
            temperature=temperature,
            system_text=system_text,
            user_text=render_template(
                template,
                {
                    "terms": ", ".join(terms),
                    "examples": "\n".join(
                        format_message_line(m, index=i)
                        for i, m in enumerate(exemplars, start=1)
                    ),
                },
            ),
            tag=f"topic_model:topic-{k:03d}",
        )
        items = _parse_with_reprompt(gateway, request, f"topic-{k:03d}", failures)
        if not items:
            continue
        label = clean_label(items[0].get("label"))
        if label is None:
            continue
        definition = (
            items[0].get("definition")
            if isinstance(items[0].get("definition"), str)
            else None
        )
        assignments.append(
            RawAssignment(
                label=label,
                message_ids=tuple(corpus.messages[i].id for i in group),
                definition=definition,
                needs_review=len(group) > oversized_threshold,
            )
        )
    return finalize(
        assignments,
        coder_id or Approach.TOPIC_MODEL.value,
        "machine",
        gateway,
        source_approach=Approach.TOPIC_MODEL.value,
        model_id=model_id,
        temperature=temperature,
    )
