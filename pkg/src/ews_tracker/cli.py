"""Command-line surface: ingest, index, extract, evaluate, compare, report.

Exit codes: 0 success, 1 data error, 2 usage error, 3 backend failure.
Backends are chosen per command (--backend mock|http). The mock backend is
fully deterministic: a scripted LLM (--script JSON file mapping prompt tags
to reply queues) plus the seeded hash embedder. The image embedding space
always uses the deterministic hash embedder; image encoders are an external
port by design.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import shutil
import subprocess
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import jsonschema

from . import __version__
from .agent import run_agent
from .augment import augment_corpus, build_augmented
from .chunking import chunk_document
from .config import EngineConfig, RunManifest, load_config
from .errors import EwsError, MalformedJson, SchemaViolation
from .evaluation import MetricsReport, compare_systems, evaluate_run, load_gold_csv
from .extraction import (
    RetrievalTrace,
    extract_cot,
    extract_direct,
    extract_with_classifier,
    result_from_json,
    result_schema,
    result_to_json,
    validate_extraction,
)
from .index_store import Index, load_index
from .interchange import parse_document_ir, serialize_document_ir, validate_corpus
from .ports import (
    IMAGE_SPACE,
    TEXT_TABLE_SPACE,
    EmbeddingSpec,
    HttpConfig,
    MockLlm,
    hash_embedder,
    http_embedder,
    http_llm,
    keyword_classifier,
    mock_llm,
)
from .prompts import load_exemplars
from .report import render_report

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_DATA = 1
EXIT_USAGE = 2
EXIT_BACKEND = 3

METHOD_FLAGS = {
    "zero": "zero_shot",
    "few": "few_shot",
    "clf": "classifier",
    "cot": "cot",
    "agent": "agent",
}


def _load_script(path: str | None) -> MockLlm:
    """Build the scripted mock LLM from a JSON file: {"tags": {tag:
    [entries]}, "default": [...]}. String entries are returned verbatim,
    objects are JSON-encoded, {"!error": "msg"} raises."""
    from .errors import LlmUnavailable

    if path is None:
        return mock_llm({}, default=["{}"])
    raw = json.loads(Path(path).read_text("utf-8"))

    def convert(entry):
        if isinstance(entry, str):
            return entry
        if isinstance(entry, dict) and set(entry) == {"!error"}:
            return LlmUnavailable(entry["!error"])
        return json.dumps(entry)

    script = {tag: [convert(e) for e in queue] for tag, queue in raw.get("tags", {}).items()}
    default = raw.get("default")
    if default is not None:
        default = [convert(e) for e in default]
    return mock_llm(script, default=default)


def _build_backend(args, cfg: EngineConfig):
    """Returns (llm, embedder_by_space). The text/table embedder follows the
    backend flag; the image space always uses the deterministic mock."""
    tt_spec = EmbeddingSpec(TEXT_TABLE_SPACE, dim=cfg.embed_dim)
    im_spec = EmbeddingSpec(IMAGE_SPACE, dim=cfg.embed_dim)
    image_embedder = hash_embedder(im_spec, seed=cfg.seed + 1)
    if args.backend == "http":
        llm = http_llm(HttpConfig.llm_from_env())
        embedder = http_embedder(HttpConfig.embedder_from_env(), tt_spec)
    else:
        llm = _load_script(getattr(args, "script", None))
        embedder = hash_embedder(tt_spec, seed=cfg.seed)
    return llm, {TEXT_TABLE_SPACE: embedder, IMAGE_SPACE: image_embedder}


def _iter_interchange_files(directory: Path) -> list[Path]:
    skip = {"corpus_manifest.json", "run_manifest.json"}
    return sorted(p for p in directory.glob("*.json") if p.name not in skip)


def cmd_ingest(args) -> int:
    in_dir, out_dir = Path(args.in_dir), Path(args.out_dir)
    if not in_dir.is_dir():
        print(f"error: input directory {in_dir} does not exist", file=sys.stderr)
        return EXIT_USAGE
    out_dir.mkdir(parents=True, exist_ok=True)

    pdfs = sorted(in_dir.glob("*.pdf"))
    if pdfs:
        adapter = shutil.which("ews-pdf-ingest")
        if adapter is None:
            print(
                "error: PDF inputs need the pdf-ingest adapter (ews-pdf-ingest) on PATH",
                file=sys.stderr,
            )
            return EXIT_DATA
        proc = subprocess.run(
            [adapter, "convert", str(in_dir), "--out", str(out_dir)],
            capture_output=True, text=True,
        )
        print(proc.stdout, end="")
        if proc.returncode != 0:
            print(f"error: adapter failed: {proc.stderr}", file=sys.stderr)
            return EXIT_DATA

    search_dir = out_dir if pdfs else in_dir
    paths = _iter_interchange_files(search_dir)
    docs = []
    entries = []
    warnings = []
    for path in paths:
        try:
            doc = parse_document_ir(path.read_bytes())
        except (MalformedJson, SchemaViolation) as exc:
            print(f"error: {path.name}: {exc}", file=sys.stderr)
            return EXIT_DATA
        docs.append(doc)
        target = out_dir / path.name
        if target.resolve() != path.resolve():
            target.write_text(serialize_document_ir(doc), "utf-8")
        entries.append({
            "file_name": doc.file_name,
            "path": path.name,
            "elements": len(doc.elements),
        })
    issues = validate_corpus(docs)
    if issues:
        for issue in issues:
            print(f"error: {issue}", file=sys.stderr)
        return EXIT_DATA
    if not docs:
        warnings.append("EmptyCorpus: no interchange documents found")
        print("warning: EmptyCorpus", file=sys.stderr)

    manifest = {"documents": entries, "warnings": warnings, "engine_version": __version__}
    (out_dir / "corpus_manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n", "utf-8"
    )
    print(f"ingested {len(entries)} document(s) into {out_dir}")
    return EXIT_OK


def cmd_index(args) -> int:
    corpus_dir, index_dir = Path(args.corpus_dir), Path(args.index_dir)
    if not corpus_dir.is_dir():
        print(f"error: corpus directory {corpus_dir} does not exist", file=sys.stderr)
        return EXIT_USAGE
    if index_dir.exists() and any(index_dir.iterdir()) and not args.force:
        print(f"error: {index_dir} exists; re-index requires --force", file=sys.stderr)
        return EXIT_USAGE

    cfg = load_config(args.config)
    try:
        llm, embedders = _build_backend(args, cfg)
    except KeyError as exc:
        print(f"error: missing backend environment variable {exc}", file=sys.stderr)
        return EXIT_USAGE

    paths = _iter_interchange_files(corpus_dir)
    docs = []
    for path in paths:
        try:
            docs.append(parse_document_ir(path.read_bytes()))
        except (MalformedJson, SchemaViolation) as exc:
            print(f"error: {path.name}: {exc}", file=sys.stderr)
            return EXIT_DATA

    # scripted mocks dequeue replies in call order, so the mock backend runs
    # strictly sequentially to keep outputs byte-reproducible
    in_flight = 1 if args.backend == "mock" else cfg.augment.max_in_flight

    def prepare(doc):
        chunks = chunk_document(doc, cfg.chunk)
        if args.skip_augment:
            logger.warning("--skip-augment: empty context summaries for %s", doc.file_name)
            return [build_augmented(c, "") for c in chunks]
        return augment_corpus(chunks, doc, llm, cfg.augment.budget_chars, in_flight)

    jobs = 1 if args.backend == "mock" else (args.jobs or os.cpu_count() or 1)
    try:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            per_doc = list(pool.map(prepare, docs))
    except EwsError as exc:
        print(f"error: augmentation failed: {exc}", file=sys.stderr)
        return EXIT_BACKEND

    index = Index(params=cfg.bm25f, specs={
        TEXT_TABLE_SPACE: EmbeddingSpec(TEXT_TABLE_SPACE, dim=cfg.embed_dim),
        IMAGE_SPACE: EmbeddingSpec(IMAGE_SPACE, dim=cfg.embed_dim),
    })
    try:
        for augmented in per_doc:
            stats = index.upsert_chunks(augmented, embedders)
    except EwsError as exc:
        print(f"error: indexing failed: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    index.persist(index_dir)
    overrides = {"skip_augment": True} if args.skip_augment else {}
    RunManifest(command="index", corpus_dir=str(corpus_dir), index_dir=str(index_dir),
                backend=args.backend, config_overrides=overrides).write(index_dir)
    print(json.dumps(index.stats().to_json(), sort_keys=True))
    return EXIT_OK


def _extract_one(method: str, file_name: str, index: Index, llm, embedders, cfg: EngineConfig,
                 trace: RetrievalTrace):
    embedder = embedders[TEXT_TABLE_SPACE]
    if method in ("zero_shot", "few_shot"):
        exemplars = load_exemplars() if method == "few_shot" else None
        return extract_direct(file_name, index, llm, embedder, mode=method,
                              exemplars=exemplars, cfg=cfg.retrieval, trace=trace)
    if method == "classifier":
        return extract_with_classifier(file_name, index, keyword_classifier(), llm, trace=trace)
    if method == "cot":
        return extract_cot(file_name, index, llm, embedder, cfg=cfg.retrieval, trace=trace)
    return run_agent(file_name, index, llm, embedder, policy=cfg.agent,
                     cfg=cfg.retrieval, trace=trace)


def cmd_extract(args) -> int:
    index_dir, out_dir = Path(args.index_dir), Path(args.out)
    method = METHOD_FLAGS[args.method]
    cfg = load_config(args.config)
    try:
        index = load_index(index_dir)
    except EwsError as exc:
        print(f"error: cannot load index: {exc}", file=sys.stderr)
        return EXIT_DATA
    try:
        llm, embedders = _build_backend(args, cfg)
    except KeyError as exc:
        print(f"error: missing backend environment variable {exc}", file=sys.stderr)
        return EXIT_USAGE

    results_dir = out_dir / "results"
    traces_dir = out_dir / "traces"
    results_dir.mkdir(parents=True, exist_ok=True)
    traces_dir.mkdir(parents=True, exist_ok=True)
    stem = Path(args.file).stem
    trace = RetrievalTrace(file_name=args.file, method=method)

    try:
        result = _extract_one(method, args.file, index, llm, embedders, cfg, trace)
    except EwsError as exc:
        (traces_dir / f"{stem}.trace.json").write_text(
            json.dumps(trace.to_json(), sort_keys=True, indent=2) + "\n", "utf-8"
        )
        print(f"error: extraction failed: {exc}", file=sys.stderr)
        return EXIT_BACKEND

    payload = result_to_json(result)
    try:
        jsonschema.validate(payload, result_schema())
    except jsonschema.ValidationError as exc:
        print(f"error: result violates output schema: {exc.message}", file=sys.stderr)
        return EXIT_DATA
    issues = validate_extraction(result, index)
    if issues:
        for issue in issues:
            print(f"error: {issue}", file=sys.stderr)
        return EXIT_DATA

    (results_dir / f"{stem}.json").write_text(
        json.dumps(payload, sort_keys=True, indent=2) + "\n", "utf-8"
    )
    (traces_dir / f"{stem}.trace.json").write_text(
        json.dumps(trace.to_json(), sort_keys=True, indent=2) + "\n", "utf-8"
    )
    RunManifest(command="extract", index_dir=str(index_dir), method=method,
                backend=args.backend, output_dir=str(out_dir)).write(out_dir)
    print(f"extracted {args.file} [{method}] -> {results_dir / (stem + '.json')}")
    return EXIT_OK


def _load_run(results_dir: Path):
    """Load every result (and trace when present) from a run directory."""
    base = results_dir / "results" if (results_dir / "results").is_dir() else results_dir
    preds = {}
    traces = {}
    for path in sorted(base.glob("*.json")):
        if path.name in ("run_manifest.json", "corpus_manifest.json", "metrics.json"):
            continue
        result = result_from_json(json.loads(path.read_text("utf-8")))
        project = Path(result.file_name).stem
        preds[project] = result
        trace_path = results_dir / "traces" / f"{path.stem}.trace.json"
        if trace_path.is_file():
            traces[project] = RetrievalTrace.from_json(json.loads(trace_path.read_text("utf-8")))
    return preds, traces


def cmd_evaluate(args) -> int:
    results_dir = Path(args.results_dir)
    if not results_dir.is_dir():
        print(f"error: results directory {results_dir} does not exist", file=sys.stderr)
        return EXIT_USAGE
    cfg = load_config(args.config)
    try:
        records = load_gold_csv(args.gold_csv)
    except (EwsError, OSError) as exc:
        print(f"error: gold CSV: {exc}", file=sys.stderr)
        return EXIT_DATA
    preds, traces = _load_run(results_dir)
    if not preds:
        print("error: no extraction results found", file=sys.stderr)
        return EXIT_DATA
    index = None
    if args.index:
        try:
            index = load_index(Path(args.index))
        except EwsError as exc:
            print(f"error: cannot load index: {exc}", file=sys.stderr)
            return EXIT_DATA
    try:
        report = evaluate_run(preds, records, cfg.eval, index=index,
                              traces=traces if index is not None else None)
    except EwsError as exc:
        print(f"error: evaluation failed: {exc}", file=sys.stderr)
        return EXIT_DATA

    metrics_dir = results_dir / "metrics"
    metrics_dir.mkdir(parents=True, exist_ok=True)
    out_path = Path(args.out) if args.out else metrics_dir / "metrics.json"
    out_path.write_text(json.dumps(report.to_json(), sort_keys=True, indent=2) + "\n", "utf-8")
    print(json.dumps(report.to_json(), sort_keys=True, indent=2))
    return EXIT_OK


def _find_metrics(path: Path):
    if path.is_file():
        return path
    for candidate in (path / "metrics.json", path / "metrics" / "metrics.json"):
        if candidate.is_file():
            return candidate
    return None


def cmd_compare(args) -> int:
    if len(args.runs) < 2:
        print("error: need at least two runs to compare", file=sys.stderr)
        return EXIT_USAGE
    runs = {}
    for raw in args.runs:
        path = Path(raw)
        metrics = _find_metrics(path)
        if metrics is None:
            print(f"error: no metrics.json under {path}", file=sys.stderr)
            return EXIT_DATA
        name = path.stem if path.is_file() else path.name
        runs[name] = MetricsReport.from_json(json.loads(metrics.read_text("utf-8")))
    try:
        table = compare_systems(runs)
    except EwsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    if args.out:
        Path(args.out).write_text(json.dumps(table.to_json(), sort_keys=True, indent=2) + "\n", "utf-8")
    print(table.render_text())
    return EXIT_OK


def cmd_report(args) -> int:
    path = Path(args.result_json)
    if not path.is_file():
        print(f"error: {path} does not exist", file=sys.stderr)
        return EXIT_USAGE
    try:
        result = result_from_json(json.loads(path.read_text("utf-8")))
    except (KeyError, ValueError) as exc:
        print(f"error: malformed result JSON: {exc}", file=sys.stderr)
        return EXIT_DATA
    text, payload = render_report(result)
    if args.out:
        reports_dir = Path(args.out) / "reports"
        reports_dir.mkdir(parents=True, exist_ok=True)
        stem = Path(result.file_name).stem
        (reports_dir / f"{stem}.txt").write_text(text, "utf-8")
        (reports_dir / f"{stem}.report.json").write_text(
            json.dumps(payload, sort_keys=True, indent=2) + "\n", "utf-8"
        )
    print(text, end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ews-tracker",
        description="Document-grounded EWS budget extraction pipeline",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate interchange JSON (or convert PDFs)")
    p.add_argument("in_dir")
    p.add_argument("out_dir")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("index", help="chunk, augment, embed and persist an index")
    p.add_argument("corpus_dir")
    p.add_argument("index_dir")
    p.add_argument("--backend", choices=("mock", "http"), default="mock")
    p.add_argument("--script", help="mock LLM script JSON (tags -> reply queues)")
    p.add_argument("--config", help="engine config YAML")
    p.add_argument("--skip-augment", action="store_true",
                   help="index with empty context summaries (offline)")
    p.add_argument("--force", action="store_true", help="overwrite an existing index dir")
    p.add_argument("--jobs", type=int, default=0, help="parallel documents (default: CPUs)")
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("extract", help="run one extraction strategy over one document")
    p.add_argument("index_dir")
    p.add_argument("file", help="document file_name as indexed")
    p.add_argument("--method", choices=sorted(METHOD_FLAGS), required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--backend", choices=("mock", "http"), default="mock")
    p.add_argument("--script", help="mock LLM script JSON")
    p.add_argument("--config", help="engine config YAML")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("evaluate", help="score a run against gold annotations")
    p.add_argument("results_dir")
    p.add_argument("gold_csv")
    p.add_argument("--index", help="index dir (enables evidence facets)")
    p.add_argument("--config", help="engine config YAML")
    p.add_argument("--out", help="metrics JSON path")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="compare two or more evaluated runs")
    p.add_argument("runs", nargs="*")
    p.add_argument("--out", help="comparison JSON path")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("report", help="render the analytic report for one result")
    p.add_argument("result_json")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("EWS_LOG", "WARNING"))
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except EwsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
