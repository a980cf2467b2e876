"""Command-line entry point orchestrating the pipeline.

Subcommands mirror the pipeline stages: ingest, chunk, code, merge,
review serve, report, and matrix for the model x temperature x repetition
replication grid. Every command writes a manifest (params, input digests,
transcript digest) under manifests/ so any stage can be audited or re-run
from disk artifacts alone. Failures exit non-zero with a single-line JSON
error on stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import re
import sys
from pathlib import Path

from . import corpus as corpus_mod
from .coders import (
    Approach,
    run_chunk_coder,
    run_item_coder,
    run_topic_coder,
)
from .codebook import write_codebook
from .errors import WorkbenchError
from .gateway import Gateway, Transcript
from .merging import (
    MergeParams,
    embedding_index,
    hierarchical_merge,
    write_embedding_index,
    write_merged,
)
from .metrics import render_reports
from .project import (
    CODEBOOKS_DIR,
    CORPUS_FILE,
    EMBEDDINGS_FILE,
    MERGED_FILE,
    load_project,
    save_project_config,
    write_manifest,
)
from .providers import (
    HttpChatProvider,
    HttpEmbedder,
    ScriptedChatProvider,
    StubEmbedder,
)

APPROACH_ALIASES = {
    "topic": Approach.TOPIC_MODEL,
    "topic_model": Approach.TOPIC_MODEL,
    "chunk": Approach.CHUNK_LEVEL,
    "chunk_level": Approach.CHUNK_LEVEL,
    "chunk_structured": Approach.CHUNK_STRUCTURED,
    "item": Approach.ITEM_LEVEL,
    "item_level": Approach.ITEM_LEVEL,
    "item_verb": Approach.ITEM_VERB,
}


def resolve_approach(name: str, verb_phrases: bool, structured: bool) -> Approach:
    approach = APPROACH_ALIASES.get(name)
    if approach is None:
        raise ValueError(f"unknown approach {name!r}; pick one of {sorted(set(APPROACH_ALIASES))}")
    if structured and approach in (Approach.CHUNK_LEVEL, Approach.CHUNK_STRUCTURED):
        approach = Approach.CHUNK_STRUCTURED
    if verb_phrases and approach in (Approach.ITEM_LEVEL, Approach.ITEM_VERB):
        approach = Approach.ITEM_VERB
    return approach


def _default(args_value, project, key, fallback):
    if args_value is not None:
        return args_value
    return project.defaults.get(key, fallback)


def build_gateway(
    project,
    *,
    provider: str | None,
    replay: str | None,
    record: str | None,
    transcript_name: str,
    parallelism: int | None = None,
) -> Gateway:
    """Assemble providers and transcript from flags, project defaults, and env."""
    if replay and record:
        raise ValueError("--replay and --record are mutually exclusive")
    if replay:
        transcript = Transcript("replay", Path(replay) / f"{transcript_name}.jsonl")
    elif record:
        transcript = Transcript("record", Path(record) / f"{transcript_name}.jsonl")
    else:
        transcript = Transcript("live")
    base_url = os.environ.get("LLM_BASE_URL", "")
    provider = provider or project.defaults.get(
        "provider", "http" if base_url else "scripted"
    )
    if provider == "scripted":
        chat = ScriptedChatProvider()
    elif provider == "http":
        if not base_url:
            raise ValueError("provider 'http' needs LLM_BASE_URL in the environment")
        chat = HttpChatProvider(base_url, os.environ.get("LLM_API_KEY", ""))
    else:
        raise ValueError(f"unknown provider {provider!r}")
    embed_model = os.environ.get("EMBED_MODEL_ID", "")
    if base_url and embed_model and provider == "http":
        embedder = HttpEmbedder(base_url, embed_model, os.environ.get("LLM_API_KEY", ""))
    else:
        embedder = StubEmbedder()
    return Gateway(
        chat_provider=chat,
        embed_provider=embedder,
        transcript=transcript,
        parallelism=parallelism or int(project.defaults.get("parallelism", 4)),
    )


def _safe_name(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "-", text)


def _format_temp(temperature: float) -> str:
    text = f"{temperature:g}"
    return text


# -- command handlers -----------------------------------------------------------


def cmd_ingest(args) -> int:
    project = load_project(args.project)
    project.root.mkdir(parents=True, exist_ok=True)
    with open(args.input, encoding="utf-8") as handle:
        records = corpus_mod.records_from_lines(handle)
    corpus = corpus_mod.ingest_corpus(records)
    if args.research_question:
        project.metadata["research_question"] = args.research_question
    if args.context:
        project.metadata["context"] = args.context
    save_project_config(project)
    out_path = project.root / CORPUS_FILE
    corpus_mod.write_corpus_file(corpus, out_path)
    write_manifest(
        project.root,
        "ingest",
        {"input": str(args.input), "messages": len(corpus.messages)},
        inputs=[args.input],
        outputs=[out_path],
    )
    print(f"ingested {len(corpus.messages)} messages -> {out_path}")
    return 0


def cmd_chunk(args) -> int:
    project = load_project(args.project)
    if project.corpus is None:
        raise ValueError("no corpus.jsonl in project; run ingest first")
    min_gap = float(_default(args.min_gap, project, "min_gap", corpus_mod.DEFAULT_MIN_GAP))
    prominence = float(
        _default(args.prominence, project, "prominence_factor", corpus_mod.DEFAULT_PROMINENCE)
    )
    segmented = corpus_mod.segment_chunks(project.corpus, min_gap, prominence)
    out_path = project.root / CORPUS_FILE
    corpus_mod.write_corpus_file(segmented, out_path)
    write_manifest(
        project.root,
        "chunk",
        {"min_gap": min_gap, "prominence_factor": prominence, "chunks": len(segmented.chunks)},
        inputs=[],
        outputs=[out_path],
    )
    print(f"segmented into {len(segmented.chunks)} chunks")
    return 0


def _run_one_coder(project, approach: Approach, gateway, *, coder_id, model_id, temperature, args):
    corpus = project.corpus
    failures: list = []
    common = dict(
        coder_id=coder_id,
        model_id=model_id,
        temperature=temperature,
        failures=failures,
        templates_dir=getattr(args, "templates", None)
        or project.defaults.get("templates_dir"),
    )
    if approach is Approach.TOPIC_MODEL:
        codebook = run_topic_coder(
            corpus,
            gateway,
            min_topic_size=int(_default(args.min_topic_size, project, "min_topic_size", 4)),
            distance_threshold=float(
                _default(args.topic_distance, project, "topic_distance", 0.6)
            ),
            oversized_threshold=int(
                _default(args.oversized_threshold, project, "oversized_threshold", 30)
            ),
            **common,
        )
    elif approach in (Approach.CHUNK_LEVEL, Approach.CHUNK_STRUCTURED):
        codebook = run_chunk_coder(
            corpus, gateway, structured=approach is Approach.CHUNK_STRUCTURED, **common
        )
    else:
        codebook = run_item_coder(
            corpus, gateway, verb_phrases=approach is Approach.ITEM_VERB, **common
        )
    return codebook, failures


def _code_once(project, args, approach: Approach, model_id: str, temperature: float, run: int) -> Path:
    coder_id = f"{approach.value}_{_safe_name(model_id)}_{_format_temp(temperature)}_{run}"
    gateway = build_gateway(
        project,
        provider=args.provider,
        replay=args.replay,
        record=args.record,
        transcript_name=coder_id,
        parallelism=args.parallelism,
    )
    codebook, failures = _run_one_coder(
        project, approach, gateway,
        coder_id=coder_id, model_id=model_id, temperature=temperature, args=args,
    )
    out_path = project.root / CODEBOOKS_DIR / f"{coder_id}.json"
    write_codebook(codebook, out_path)
    transcript_path = gateway.transcript.path
    write_manifest(
        project.root,
        f"code-{coder_id}",
        {
            "approach": approach.value,
            "model": model_id,
            "temperature": temperature,
            "run": run,
            "codes": len(codebook.codes),
            "parse_failures": len(failures),
        },
        inputs=[project.root / CORPUS_FILE],
        outputs=[out_path],
        transcript=transcript_path,
    )
    print(f"coded {coder_id}: {len(codebook.codes)} codes -> {out_path}")
    return out_path


def cmd_code(args) -> int:
    project = load_project(args.project)
    if project.corpus is None:
        raise ValueError("no corpus.jsonl in project; run ingest first")
    approach = resolve_approach(args.approach, args.verb_phrases, args.structured)
    model_id = _default(args.model, project, "model", "gpt-4o-0513")
    temperature = float(_default(args.temperature, project, "temperature", 0.5))
    for run in range(1, args.runs + 1):
        _code_once(project, args, approach, model_id, temperature, run)
    return 0


def cmd_merge(args) -> int:
    project = load_project(args.project)
    if not project.codebooks:
        raise ValueError("no codebooks in project; run code first")
    params = MergeParams(
        distance_threshold=float(_default(args.threshold, project, "merge_threshold", 0.35)),
        linkage=_default(args.linkage, project, "merge_linkage", "average"),
        reembed_merged=bool(args.reembed_merged),
        model_id=_default(args.model, project, "model", "gpt-4o-0513"),
        temperature=float(_default(args.temperature, project, "temperature", 0.5)),
    )
    gateway = build_gateway(
        project,
        provider=args.provider,
        replay=args.replay,
        record=args.record,
        transcript_name="merge",
        parallelism=args.parallelism,
    )
    merged = hierarchical_merge(
        project.codebooks, params, gateway, corpus=project.corpus
    )
    index = embedding_index(merged, project.codebooks, gateway)
    merged_path = project.root / MERGED_FILE
    embeddings_path = project.root / EMBEDDINGS_FILE
    write_merged(merged, params, merged_path)
    write_embedding_index(index, embeddings_path)
    write_manifest(
        project.root,
        "merge",
        {
            "distance_threshold": params.distance_threshold,
            "linkage": params.linkage,
            "reembed_merged": params.reembed_merged,
            "input_codes": sum(len(cb.codes) for cb in project.codebooks),
            "merged_codes": len(merged),
        },
        inputs=sorted((project.root / CODEBOOKS_DIR).glob("*.json")),
        outputs=[merged_path, embeddings_path],
        transcript=gateway.transcript.path,
    )
    print(f"merged {sum(len(cb.codes) for cb in project.codebooks)} codes into {len(merged)}")
    return 0


def cmd_review(args) -> int:
    if args.review_command != "serve":
        raise ValueError("usage: review serve --port P")
    import uvicorn

    from .review.api import create_app

    app = create_app(args.project, ui_dir=args.ui)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def cmd_report(args) -> int:
    project = load_project(args.project)
    tables = render_reports(project, args.session)
    key = f"table{args.table}"
    table = tables[key]
    out_dir = project.root / "reports"
    out_dir.mkdir(parents=True, exist_ok=True)
    out_path = out_dir / f"{key}.json"
    out_path.write_text(
        json.dumps(table.to_doc(), ensure_ascii=False, indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    write_manifest(
        project.root,
        f"report-{key}",
        {"table": args.table, "session": args.session},
        inputs=[project.root / MERGED_FILE],
        outputs=[out_path],
    )
    print(table.to_text())
    return 0


def cmd_matrix(args) -> int:
    project = load_project(args.project)
    if project.corpus is None:
        raise ValueError("no corpus.jsonl in project; run ingest first")
    models = [m.strip() for m in args.models.split(",") if m.strip()]
    temperatures = [float(t) for t in args.temperatures.split(",") if t.strip()]
    if not models or not temperatures or args.runs < 1:
        raise ValueError("matrix needs non-empty --models, --temperatures, and --runs >= 1")
    approaches = [
        resolve_approach(a.strip(), False, False)
        for a in args.approach.split(",")
        if a.strip()
    ]
    outputs = []
    for approach in approaches:
        for model_id in models:
            for temperature in temperatures:
                for run in range(1, args.runs + 1):
                    outputs.append(
                        _code_once(project, args, approach, model_id, temperature, run)
                    )
    write_manifest(
        project.root,
        "matrix",
        {
            "models": models,
            "temperatures": temperatures,
            "runs": args.runs,
            "approaches": [a.value for a in approaches],
            "codebooks": len(outputs),
        },
        inputs=[project.root / CORPUS_FILE],
        outputs=outputs,
    )
    print(f"matrix produced {len(outputs)} codebooks")
    return 0


# -- parser ----------------------------------------------------------------------


def _add_gateway_flags(parser):
    parser.add_argument("--replay", help="read completions from this transcript directory")
    parser.add_argument("--record", help="record completions into this transcript directory")
    parser.add_argument("--provider", choices=["http", "scripted"], default=None)
    parser.add_argument("--parallelism", type=int, default=None)
    parser.add_argument("--model", default=None)
    parser.add_argument("--temperature", type=float, default=None)
    parser.add_argument("--templates", default=None, help="directory of prompt template overrides")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="opencoding",
        description="Open-coding workbench: chunk chat logs, run ML/GAI coders, merge codes, review coverage, report reliability.",
    )
    parser.add_argument("--project", default=".", help="project directory (default: cwd)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate and sort raw message records")
    p.add_argument("--input", required=True)
    p.add_argument("--research-question", dest="research_question", default=None)
    p.add_argument("--context", default=None)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("chunk", help="segment the corpus at timestamp-interval peaks")
    p.add_argument("--min-gap", dest="min_gap", type=float, default=None)
    p.add_argument("--prominence", type=float, default=None)
    p.set_defaults(func=cmd_chunk)

    p = sub.add_parser("code", help="run one coding approach over the corpus")
    p.add_argument("--approach", required=True)
    p.add_argument("--verb-phrases", dest="verb_phrases", action="store_true")
    p.add_argument("--structured", action="store_true")
    p.add_argument("--runs", type=int, default=1)
    p.add_argument("--min-topic-size", dest="min_topic_size", type=int, default=None)
    p.add_argument("--topic-distance", dest="topic_distance", type=float, default=None)
    p.add_argument("--oversized-threshold", dest="oversized_threshold", type=int, default=None)
    _add_gateway_flags(p)
    p.set_defaults(func=cmd_code)

    p = sub.add_parser("merge", help="merge codes across codebooks by embedding similarity")
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--linkage", choices=["average", "complete"], default=None)
    p.add_argument("--reembed-merged", dest="reembed_merged", action="store_true")
    _add_gateway_flags(p)
    p.set_defaults(func=cmd_merge)

    p = sub.add_parser("review", help="review service commands")
    p.add_argument("review_command", choices=["serve"])
    p.add_argument("--port", type=int, default=8400)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--ui", default=None, help="directory of built UI assets to serve")
    p.set_defaults(func=cmd_review)

    p = sub.add_parser("report", help="render a report table")
    p.add_argument("--table", type=int, choices=[2, 4, 5], required=True)
    p.add_argument("--session", default=None)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("matrix", help="replication grid: models x temperatures x runs")
    p.add_argument("--models", required=True)
    p.add_argument("--temperatures", required=True)
    p.add_argument("--runs", type=int, default=1)
    p.add_argument("--approach", default="item_verb", help="comma-separated approach names")
    p.add_argument("--min-topic-size", dest="min_topic_size", type=int, default=None)
    p.add_argument("--topic-distance", dest="topic_distance", type=float, default=None)
    p.add_argument("--oversized-threshold", dest="oversized_threshold", type=int, default=None)
    _add_gateway_flags(p)
    p.set_defaults(func=cmd_matrix)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except WorkbenchError as exc:
        print(json.dumps(exc.payload(), ensure_ascii=False), file=sys.stderr)
        return 1
    except (ValueError, OSError, KeyError) as exc:
        print(
            json.dumps({"error": type(exc).__name__, "detail": str(exc)}, ensure_ascii=False),
            file=sys.stderr,
        )
        return 1


if __name__ == "__main__":
    sys.exit(main())
