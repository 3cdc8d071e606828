"""Command-line entry point for reproducible batch jobs.

Every run that writes an output file also writes ``<out>.manifest.json``
beside it: the resolved configuration, seed, prompt version, and sha256 of
each input — enough to re-run the job. Offline backends make two identical
invocations byte-identical.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import hashlib
import json
import logging
import sys
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Sequence

import scurank
from scurank.analysis import (
    abstractiveness_report,
    penalty_scan,
    prepare_corpus,
    scurank_ranker,
    stability_from_rankings,
    stability_run,
)
from scurank.cache import FileCache
from scurank.chat import ChatClient
from scurank.clustering import HdbscanParams, assignment_debug_record
from scurank.corpus import (
    corpus_stats,
    document_to_record,
    dump_jsonl_line,
    load_corpus,
    load_scus,
    scus_to_record,
)
from scurank.embedding import EncoderConfig
from scurank.extraction import (
    ExtractorConfig,
    extractor_for,
    generate_candidates,
    PROMPT_VERSION,
)
from scurank.metrics import Ranking, intrinsic_scu_eval
from scurank.scoring import (
    ScoringConfig,
    brio_record,
    cluster_document,
    rank,
    rank_document,
    ranked_record,
    score_document,
)

logger = logging.getLogger(__name__)

COMMANDS = (
    "extract",
    "rank",
    "stability",
    "penalty-scan",
    "intrinsic-eval",
    "abstractiveness",
    "export-brio",
    "generate",
    "stats",
)


@dataclass(frozen=True)
class RunConfig:
    """Resolved settings; defaults are the reference pipeline configuration."""

    extractor: str = "llm"
    model: str = "gpt-4o-mini"
    shots: int = 1
    temperature: float = 0.0
    chat_base_url: str = ""
    encoder: str = "bridge"
    encoder_endpoint: str = ""
    encoder_model: str = "all-mpnet-base-v2"
    dimension: int = 768
    min_cluster_size: int = 2
    min_samples: int = 2
    epsilon: float = 0.15
    transform: str = "sum"
    penalty: str = "sqrt"
    cache_root: str = ""
    seed: int = 0
    runs: int = 5
    shuffle: bool = False
    jobs: int = 1
    max_attempts: int = 5

    def extractor_config(self) -> ExtractorConfig:
        return ExtractorConfig(
            model_id=self.model,
            temperature=self.temperature,
            shots=self.shots,
            max_attempts=self.max_attempts,
        )

    def encoder_config(self) -> EncoderConfig:
        backend = "offline_hash" if self.encoder == "offline" else "bridge_http"
        dimension = self.dimension if self.encoder != "offline" else min(self.dimension, 256)
        return EncoderConfig(
            backend=backend,
            endpoint=self.encoder_endpoint,
            model_id=self.encoder_model if self.encoder != "offline" else "offline-hash",
            dimension=dimension,
            seed=self.seed,
        )

    def hdbscan_params(self) -> HdbscanParams:
        return HdbscanParams(
            min_cluster_size=self.min_cluster_size,
            min_samples=self.min_samples,
            cluster_selection_epsilon=self.epsilon,
        )

    def scoring_config(self) -> ScoringConfig:
        return ScoringConfig(score_transform=self.transform, length_penalty=self.penalty)


def _sha256_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(out_path: str | Path, command: str, cfg: RunConfig, inputs: Sequence[str | Path]) -> None:
    manifest = {
        "command": command,
        "config": asdict(cfg),
        "prompt_version": PROMPT_VERSION,
        "seed": cfg.seed,
        "inputs": {str(p): _sha256_file(p) for p in inputs},
        "output": str(out_path),
        "version": scurank.__version__,
    }
    path = Path(str(out_path) + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_jsonl(path: str | Path, records: Sequence[dict[str, Any]]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(dump_jsonl_line(record) + "\n")


def _merge_config(args: argparse.Namespace) -> RunConfig:
    """Config file -> defaults -> explicit flags, flags winning."""
    base: dict[str, Any] = {}
    if getattr(args, "config", None):
        loaded = json.loads(Path(args.config).read_text("utf-8"))
        unknown = set(loaded) - set(RunConfig.__dataclass_fields__)
        if unknown:
            raise SystemExit(f"unknown config keys: {sorted(unknown)}")
        base.update(loaded)
    for field in RunConfig.__dataclass_fields__:
        value = getattr(args, field, None)
        if value is not None:
            base[field] = value
    return RunConfig(**base)


def _stack(cfg: RunConfig):
    """(extract_fn, encoder_cfg, params, scoring_cfg, cache) for a RunConfig."""
    cache = FileCache(cfg.cache_root) if cfg.cache_root else None
    extractor_cfg = cfg.extractor_config()
    client = None
    if cfg.extractor == "llm" and cfg.chat_base_url:
        client = ChatClient(
            cfg.chat_base_url,
            max_attempts=extractor_cfg.max_attempts,
            backoff_base=extractor_cfg.backoff_base,
        )
    extract = extractor_for(cfg.extractor, extractor_cfg, cache=cache, client=client)
    return extract, cfg.encoder_config(), cfg.hdbscan_params(), cfg.scoring_config(), cache


def _rank_corpus(docs, cfg: RunConfig):
    """Rank documents concurrently; output order follows input order."""
    extract, encoder, params, scoring, cache = _stack(cfg)
    results: list = [None] * len(docs)
    errors: list = [None] * len(docs)

    def _one(index: int) -> None:
        try:
            results[index] = rank_document(docs[index], extract, encoder, params, scoring, cache)
        except Exception as exc:  # noqa: BLE001 - per-document failures reported at exit
            errors[index] = exc

    with concurrent.futures.ThreadPoolExecutor(max_workers=max(1, cfg.jobs)) as pool:
        list(pool.map(_one, range(len(docs))))
    ranked_by_doc = {}
    ordered = []
    failures: list[tuple[str, str]] = []
    for doc, result, error in zip(docs, results, errors):
        if result is None:
            failures.append((doc.doc_id, str(error)))
            continue
        ranked_by_doc[doc.doc_id] = result
        ordered.append(result)
    return ordered, ranked_by_doc, failures


def _cmd_stats(args) -> int:
    cfg = _merge_config(args)
    docs = load_corpus(args.infile)
    stats = corpus_stats(docs)
    print(
        f"documents={stats.documents} candidates={stats.candidates} "
        f"references={stats.references} avg_article_words={stats.avg_article_words:.1f} "
        f"avg_summary_words={stats.avg_summary_words:.1f}"
    )
    if args.out:
        _write_jsonl(args.out, [asdict(stats)])
        write_manifest(args.out, "stats", cfg, [args.infile])
    return 0


def _cmd_extract(args) -> int:
    cfg = _merge_config(args)
    docs = load_corpus(args.infile)
    extract, _, _, _, _ = _stack(cfg)
    pairs = [(doc, candidate) for doc in docs for candidate in doc.candidates]
    results: list = [None] * len(pairs)
    errors: list = [None] * len(pairs)

    def _one(index: int) -> None:
        doc, candidate = pairs[index]
        try:
            results[index] = extract(candidate, doc_id=doc.doc_id)
        except Exception as exc:  # noqa: BLE001 - reported per candidate at exit
            errors[index] = exc

    with concurrent.futures.ThreadPoolExecutor(max_workers=max(1, cfg.jobs)) as pool:
        list(pool.map(_one, range(len(pairs))))
    records = []
    failures = []
    for (doc, candidate), scus, error in zip(pairs, results, errors):
        if scus is None:
            failures.append((doc.doc_id, candidate.candidate_id, str(error)))
            continue
        records.append(scus_to_record(doc.doc_id, candidate.candidate_id, scus))
    _write_jsonl(args.out, records)
    write_manifest(args.out, "extract", cfg, [args.infile])
    if failures:
        for doc_id, cand_id, error in failures:
            print(f"FAILED {doc_id}/{cand_id}: {error}", file=sys.stderr)
        return 1
    return 0


def _ranked_sets_from_scus(docs, scus_map, cfg: RunConfig, debug_path: str | None = None):
    _, encoder, params, scoring, cache = _stack(cfg)
    ordered = []
    failures = []
    debug_records = []
    for doc in docs:
        scus_by_candidate = {
            c.candidate_id: scus_map.get((doc.doc_id, c.candidate_id), [])
            for c in doc.candidates
        }
        try:
            assignment = cluster_document(doc, scus_by_candidate, encoder, params, cache)
            scored = score_document(doc, scus_by_candidate, assignment, scoring)
            ordered.append(rank(scored, doc_id=doc.doc_id))
            if debug_path and assignment is not None:
                debug_records.append(assignment_debug_record(assignment))
        except Exception as exc:  # noqa: BLE001
            failures.append((doc.doc_id, str(exc)))
    if debug_path:
        _write_jsonl(debug_path, debug_records)
    return ordered, failures


def _cmd_rank(args) -> int:
    cfg = _merge_config(args)
    docs = load_corpus(args.infile)
    inputs = [args.infile]
    if args.scus:
        scus_map = load_scus(args.scus)
        inputs.append(args.scus)
        ordered, failures = _ranked_sets_from_scus(docs, scus_map, cfg, args.debug_clusters)
    elif args.debug_clusters:
        # the debug dump needs the staged path: extract, then cluster per doc
        extract, _, _, _, _ = _stack(cfg)
        scus_map = {
            (doc.doc_id, cand.candidate_id): extract(cand, doc_id=doc.doc_id)
            for doc in docs
            for cand in doc.candidates
        }
        ordered, failures = _ranked_sets_from_scus(docs, scus_map, cfg, args.debug_clusters)
    else:
        ordered, _, failures = _rank_corpus(docs, cfg)
    _write_jsonl(args.out, [ranked_record(r) for r in ordered])
    write_manifest(args.out, "rank", cfg, inputs)
    if failures:
        for doc_id, error in failures:
            print(f"FAILED {doc_id}: {error}", file=sys.stderr)
        return 1
    return 0


def _cmd_stability(args) -> int:
    cfg = _merge_config(args)
    docs = load_corpus(args.infile)
    if args.from_ranked:
        per_run = []
        for path in args.from_ranked:
            run: dict[str, Ranking] = {}
            with open(path, encoding="utf-8") as handle:
                for line in handle:
                    if line.strip():
                        record = json.loads(line)
                        run[record["doc_id"]] = Ranking.from_order(record["order"])
            per_run.append(run)
        report = stability_from_rankings(
            per_run, doc_order=[d.doc_id for d in docs], shuffle=cfg.shuffle, seed=cfg.seed
        )
        inputs = [args.infile, *args.from_ranked]
    else:
        extract, encoder, params, scoring, cache = _stack(cfg)
        ranker = scurank_ranker(extract, encoder, params, scoring, cache)
        report = stability_run(docs, ranker, runs=cfg.runs, shuffle=cfg.shuffle, seed=cfg.seed)
        inputs = [args.infile]

    def _fmt(value):
        return "undefined" if value is None else f"{value:.4f}"

    print(
        f"runs={report.runs} shuffle={report.shuffle} samples={len(report.samples)} "
        f"skipped={report.skipped}"
    )
    print(
        f"tau={_fmt(report.mean_tau)} rho={_fmt(report.mean_rho)} "
        f"r={_fmt(report.mean_r)} alpha={_fmt(report.alpha)}"
    )
    if args.out:
        records: list[dict[str, Any]] = [
            {"type": "sample", "doc_id": s.doc_id, "tau": s.tau, "rho": s.rho, "r": s.r}
            for s in report.samples
        ]
        records.append(
            {
                "type": "summary",
                "tau": report.mean_tau,
                "rho": report.mean_rho,
                "r": report.mean_r,
                "alpha": report.alpha,
                "runs": report.runs,
                "shuffle": report.shuffle,
                "seed": report.seed,
                "skipped": report.skipped,
            }
        )
        _write_jsonl(args.out, records)
        write_manifest(args.out, "stability", cfg, inputs)
    return 0


def _cmd_penalty_scan(args) -> int:
    cfg = _merge_config(args)
    docs = load_corpus(args.infile)
    extract, encoder, params, _, cache = _stack(cfg)
    if args.scus:
        scus_map = load_scus(args.scus)

        def extract(candidate, doc_id=""):  # noqa: F811 - file-backed extractor
            return scus_map.get((doc_id, candidate.candidate_id), [])

    prepared = prepare_corpus(docs, extract, encoder, params, cache)
    report = penalty_scan(prepared)
    header = f"{'transform':<10}" + "".join(f"{p:>12}" for p in ("none", "linear", "sqrt", "log"))
    print(header)
    records = []
    for transform in ("sum", "sqrt_sum", "log_sum"):
        row = f"{transform:<10}"
        for penalty in ("none", "linear", "sqrt", "log"):
            tau = report.cells[(transform, penalty)]
            row += f"{'undef':>12}" if tau is None else f"{tau:>12.4f}"
            records.append(
                {"score_transform": transform, "length_penalty": penalty, "tau": tau}
            )
        print(row)
    if args.out:
        _write_jsonl(args.out, records)
        inputs = [args.infile] + ([args.scus] if args.scus else [])
        write_manifest(args.out, "penalty-scan", cfg, inputs)
    return 0


def _cmd_intrinsic_eval(args) -> int:
    cfg = _merge_config(args)
    extracted = load_scus(args.extracted)
    human = load_scus(args.human)
    keys = sorted(set(extracted) & set(human))
    if not keys:
        print("no overlapping (doc_id, candidate_id) pairs", file=sys.stderr)
        return 1
    recalls, precisions = [], []
    for key in keys:
        ext = [s.text for s in extracted[key]]
        ref = [s.text for s in human[key]]
        if not ext or not ref:
            continue
        recall_side, precision_side = intrinsic_scu_eval(ext, ref)
        recalls.append(recall_side)
        precisions.append(precision_side)
    mean_r = sum(recalls) / len(recalls)
    mean_p = sum(precisions) / len(precisions)
    print(f"pairs={len(recalls)} R={mean_r:.4f} P={mean_p:.4f}")
    if args.out:
        _write_jsonl(args.out, [{"pairs": len(recalls), "R": mean_r, "P": mean_p}])
        write_manifest(args.out, "intrinsic-eval", cfg, [args.extracted, args.human])
    return 0


def _cmd_abstractiveness(args) -> int:
    cfg = _merge_config(args)
    docs = load_corpus(args.infile)
    rankings = None
    inputs = [args.infile]
    if args.ranked:
        rankings = {}
        with open(args.ranked, encoding="utf-8") as handle:
            for line in handle:
                if line.strip():
                    record = json.loads(line)
                    rankings[record["doc_id"]] = Ranking.from_order(record["order"])
        inputs.append(args.ranked)
    report = abstractiveness_report(docs, source=args.source, rankings=rankings)
    print(
        f"source={report.source} summaries={report.summaries} "
        f"coverage={report.mean_coverage:.4f} density={report.mean_density:.4f}"
    )
    if args.out:
        _write_jsonl(args.out, [asdict(report)])
        write_manifest(args.out, "abstractiveness", cfg, inputs)
    return 0


def _cmd_export_brio(args) -> int:
    cfg = _merge_config(args)
    docs = load_corpus(args.infile)
    inputs = [args.infile]
    if args.ranked:
        order_by_doc = {}
        with open(args.ranked, encoding="utf-8") as handle:
            for line in handle:
                if line.strip():
                    record = json.loads(line)
                    order_by_doc[record["doc_id"]] = record["order"]
        inputs.append(args.ranked)
        missing = [d.doc_id for d in docs if d.doc_id not in order_by_doc]
        if missing:
            print(f"no ranking for documents: {missing}", file=sys.stderr)
            return 1
        from scurank.scoring import RankedSet  # local: only this command rebuilds RankedSets

        ranked_sets = []
        for d in docs:
            order = tuple(order_by_doc[d.doc_id])
            ranked_sets.append(
                RankedSet(
                    doc_id=d.doc_id,
                    order=order,
                    scores={cid: float(len(order) - i) for i, cid in enumerate(order)},
                    rank_of={cid: i + 1 for i, cid in enumerate(order)},
                )
            )
    else:
        ranked_sets, _, failures = _rank_corpus(docs, cfg)
        if failures:
            for doc_id, error in failures:
                print(f"FAILED {doc_id}: {error}", file=sys.stderr)
            return 1
    records = [brio_record(doc, ranked) for doc, ranked in zip(docs, ranked_sets)]
    _write_jsonl(args.out, records)
    write_manifest(args.out, "export-brio", cfg, inputs)
    return 0


def _cmd_generate(args) -> int:
    cfg = _merge_config(args)
    docs = load_corpus(args.infile)
    _, _, _, _, cache = _stack(cfg)
    client = ChatClient(cfg.chat_base_url, max_attempts=cfg.max_attempts) if cfg.chat_base_url else None
    models = [m for m in args.models.split(",") if m]
    records = []
    had_failures = False
    for doc in docs:
        candidates, failures = generate_candidates(
            doc.article, args.prompt, models, cfg.extractor_config(), client=client, cache=cache
        )
        for failure in failures:
            had_failures = True
            print(f"FAILED {doc.doc_id}/{failure.model_id}: {failure.error}", file=sys.stderr)
        new_doc = type(doc)(
            doc_id=doc.doc_id,
            article=doc.article,
            candidates=tuple(candidates),
            references=doc.references,
            extra=doc.extra,
        )
        records.append(document_to_record(new_doc))
    _write_jsonl(args.out, records)
    write_manifest(args.out, "generate", cfg, [args.infile])
    return 1 if had_failures else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scurank",
        description="Rank candidate summaries by the consensus importance of their content units.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser, needs_in=True, needs_out=True, out_optional=False):
        if needs_in:
            p.add_argument("--in", dest="infile", required=True, help="candidates jsonl")
        if needs_out:
            p.add_argument("--out", required=not out_optional, default=None, help="output path")
        p.add_argument("--config", default=None, help="JSON config file; flags win")
        p.add_argument("--extractor", choices=["llm", "offline"], default=None)
        p.add_argument("--model", default=None, help="extraction model id")
        p.add_argument("--shots", type=int, choices=[0, 1, 3], default=None)
        p.add_argument("--temperature", type=float, default=None)
        p.add_argument("--chat-base-url", dest="chat_base_url", default=None)
        p.add_argument("--encoder", choices=["bridge", "offline"], default=None)
        p.add_argument("--encoder-endpoint", dest="encoder_endpoint", default=None)
        p.add_argument("--encoder-model", dest="encoder_model", default=None)
        p.add_argument(
            "--dimension", type=int, default=None,
            help="embedding dimension (offline backend caps this at 256)",
        )
        p.add_argument("--min-cluster-size", dest="min_cluster_size", type=int, default=None)
        p.add_argument("--min-samples", dest="min_samples", type=int, default=None)
        p.add_argument("--epsilon", type=float, default=None)
        p.add_argument("--transform", choices=["sum", "sqrt_sum", "log_sum"], default=None)
        p.add_argument("--penalty", choices=["none", "linear", "sqrt", "log"], default=None)
        p.add_argument("--cache-root", dest="cache_root", default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--jobs", type=int, default=None)

    p = sub.add_parser("extract", help="extract content units to a scus jsonl")
    add_common(p)
    p.set_defaults(func=_cmd_extract)

    p = sub.add_parser("rank", help="rank candidates per document")
    add_common(p)
    p.add_argument("--scus", default=None, help="reuse precomputed scus jsonl")
    p.add_argument("--debug-clusters", default=None, help="dump condensed trees to this jsonl")
    p.set_defaults(func=_cmd_rank)

    p = sub.add_parser("stability", help="multi-run ranking stability report")
    add_common(p, needs_out=True, out_optional=True)
    p.add_argument("--runs", type=int, default=None)
    p.add_argument("--shuffle", action="store_const", const=True, default=None)
    p.add_argument(
        "--from-ranked",
        nargs="+",
        default=None,
        help="treat these ranked jsonl files as the runs (external ranker ingestion)",
    )
    p.set_defaults(func=_cmd_stability)

    p = sub.add_parser("penalty-scan", help="score-vs-length correlation grid")
    add_common(p, needs_out=True, out_optional=True)
    p.add_argument("--scus", default=None)
    p.set_defaults(func=_cmd_penalty_scan)

    p = sub.add_parser("intrinsic-eval", help="bidirectional unit quality vs human units")
    add_common(p, needs_in=False, needs_out=True, out_optional=True)
    p.add_argument("--extracted", required=True)
    p.add_argument("--human", required=True)
    p.set_defaults(func=_cmd_intrinsic_eval)

    p = sub.add_parser("abstractiveness", help="mean coverage/density report")
    add_common(p, needs_out=True, out_optional=True)
    p.add_argument("--source", choices=["candidates", "ranked_top", "references"], default="candidates")
    p.add_argument("--ranked", default=None)
    p.set_defaults(func=_cmd_abstractiveness)

    p = sub.add_parser("export-brio", help="emit best-to-worst ordered training records")
    add_common(p)
    p.add_argument("--ranked", default=None, help="reuse a ranked jsonl instead of recomputing")
    p.set_defaults(func=_cmd_export_brio)

    p = sub.add_parser("generate", help="generate candidates with one or more models")
    add_common(p)
    p.add_argument("--models", required=True, help="comma-separated model ids")
    p.add_argument("--prompt", choices=["cnndm", "xsum"], default="cnndm")
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("stats", help="corpus statistics")
    add_common(p, needs_out=True, out_optional=True)
    p.set_defaults(func=_cmd_stats)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError, KeyError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
