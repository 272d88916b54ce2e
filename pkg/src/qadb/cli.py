"""`qa`: one entry point for the whole engine.

Subcommands: ingest, export, sample, index (build/search), answer,
serve, eval, annotate (gen/validate/aggregate/export), bench
(candidates/scaling/kernels). Data goes to stdout, diagnostics to
stderr; exit 0 on success, 1 on runtime errors, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import json
import random
import sys

from . import annotation, bench, metrics
from .config import EngineConfig, load_config
from .encoder import make_encoder
from .errors import QAError
from .index import INPUT_PAIR, INPUT_QUESTION, VectorIndex
from .pipeline import Pipeline, PipelineConfig
from .rerank import LAYOUTS, Triplet, make_scorer
from .store import QAStore, SourceConfig


def _log(message: str):
    print(message, file=sys.stderr)


def _resolve_seed(config: EngineConfig) -> int:
    if config.seed is not None:
        return config.seed
    seed = random.SystemRandom().randrange(2**32)
    _log(f"no --seed given; generated seed {seed}")
    return seed


def _engine_config(args) -> EngineConfig:
    overrides = {
        "store": args.store,
        "index": args.index,
        "encoder": args.encoder,
        "scorer": args.scorer,
        "dim": args.dim,
        "seed": args.seed,
    }
    return load_config(args.config, overrides)


def _open_index(config: EngineConfig) -> VectorIndex:
    try:
        return VectorIndex.open(config.index_path)
    except QAError as exc:
        raise QAError(f"retrieval stage has no index ({exc}); run `qa index build` first") from exc


def _make_pipeline(config: EngineConfig, k: int, layout: str, threshold, use_reranker=True) -> Pipeline:
    store = QAStore(config.store_path)
    index = _open_index(config)
    encoder = make_encoder(config.encoder, dim=index.dim if len(index) else config.dim)
    scorer = make_scorer(config.scorer)
    return Pipeline(
        store,
        index,
        encoder,
        scorer,
        PipelineConfig(k=k, layout=layout, threshold=threshold, use_reranker=use_reranker),
    )


def _read_jsonl_stream(path: str):
    fh = sys.stdin if path == "-" else open(path, "r", encoding="utf-8")
    try:
        for raw in fh:
            raw = raw.strip()
            if not raw:
                continue
            try:
                yield json.loads(raw)
            except json.JSONDecodeError:
                # Malformed lines count as invalid records, they never
                # abort the batch.
                yield raw
    finally:
        if fh is not sys.stdin:
            fh.close()


def _parse_sizes(text: str) -> list[int]:
    sizes = []
    for token in text.split(","):
        token = token.strip().lower()
        if not token:
            continue
        factor = 1
        if token.endswith("k"):
            factor, token = 1000, token[:-1]
        elif token.endswith("m"):
            factor, token = 1_000_000, token[:-1]
        sizes.append(int(float(token) * factor))
    if not sizes:
        raise ValueError("expected a comma-separated list of sizes")
    return sizes


def _parse_ints(text: str) -> list[int]:
    values = [int(t) for t in text.split(",") if t.strip()]
    if not values:
        raise ValueError("expected a comma-separated list of integers")
    return values


# -- subcommand implementations ---------------------------------------------


def cmd_ingest(args) -> int:
    config = _engine_config(args)
    keep = args.keep
    source = SourceConfig(
        name=args.source,
        keep_fraction=keep,
        requires_score=args.requires_score or keep < 1.0,
    )
    store = QAStore(config.store_path)
    report = store.ingest(_read_jsonl_stream(args.file), source)
    print(json.dumps(report.__dict__))
    return 0


def cmd_export(args) -> int:
    config = _engine_config(args)
    store = QAStore(config.store_path)
    out = sys.stdout if args.out == "-" else open(args.out, "w", encoding="utf-8")
    try:
        for pair in store.export_pairs(args.source):
            out.write(json.dumps(pair.to_record(), ensure_ascii=False) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def cmd_sample(args) -> int:
    config = _engine_config(args)
    seed = _resolve_seed(config)
    store = QAStore(config.store_path)
    pairs = store.sample(args.n, seed, remove=args.remove)
    for pair in pairs:
        print(json.dumps(pair.to_record(), ensure_ascii=False))
    _log(f"sampled {len(pairs)} pairs (seed {seed}, removed: {args.remove})")
    return 0


def cmd_index_build(args) -> int:
    config = _engine_config(args)
    store = QAStore(config.store_path)
    encoder = make_encoder(config.encoder, dim=config.dim)
    input_config = INPUT_QUESTION if args.input_config == "question" else INPUT_PAIR
    index = VectorIndex.build(
        store.export_pairs(),
        encoder,
        config.index_path,
        input_config=input_config,
        batch_size=args.batch_size,
        resume=args.resume,
    )
    _log(f"built index {config.index_path}: {len(index)} entries, dim {index.dim}, {input_config} entries")
    return 0


def cmd_index_search(args) -> int:
    config = _engine_config(args)
    index = _open_index(config)
    encoder = make_encoder(config.encoder, dim=index.dim if len(index) else config.dim)
    results = index.search(encoder.encode_query(args.query), args.k)
    store = QAStore(config.store_path)
    for result in results:
        record = {"pair_id": result.pair_id, "score": result.score}
        try:
            pair = store.get_pair(result.pair_id)
            record["question"] = pair.question
            record["answer"] = pair.answer
        except QAError:
            pass
        print(json.dumps(record, ensure_ascii=False))
    return 0


def cmd_answer(args) -> int:
    config = _engine_config(args)
    pipeline = _make_pipeline(
        config, args.k or config.k, args.layout or config.layout,
        args.threshold if args.threshold is not None else config.threshold,
        use_reranker=not args.no_rerank,
    )
    response = pipeline.answer(args.question)
    if args.json:
        print(json.dumps(response.to_dict(), ensure_ascii=False))
    else:
        print(response.answer if response.answer is not None else "(no answer)")
        _log(json.dumps(response.to_dict(), ensure_ascii=False))
    return 0


def cmd_serve(args) -> int:
    from .service import make_server

    config = _engine_config(args)
    pipeline = _make_pipeline(
        config, args.k or config.k, args.layout or config.layout, config.threshold
    )
    server = make_server(pipeline, args.host, args.port)
    _log(f"answering on http://{args.host}:{server.server_address[1]}/answer")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


def cmd_eval(args) -> int:
    config = _engine_config(args)
    dataset = metrics.load_dataset(args.dataset)
    if args.split:
        dataset = [ex for ex in dataset if ex.split == args.split]
    scores = None
    if args.scores == "pipeline":
        scorer = make_scorer(config.scorer)
        layout = args.layout or config.layout
        scores = [
            scorer.score_batch(
                layout, [Triplet(ex.target, c.question, c.answer) for c in ex.candidates]
            )
            for ex in dataset
        ]
    elif args.scores:
        with open(args.scores, "r", encoding="utf-8") as fh:
            scores = [json.loads(line) for line in fh if line.strip()]
    report = metrics.evaluate(dataset, scores)
    print(json.dumps(report.to_dict(), sort_keys=True))
    _log(metrics.render_table(report))
    return 0


def cmd_annotate_gen(args) -> int:
    config = _engine_config(args)
    seed = _resolve_seed(config)
    real = [
        annotation.RealTriplet(
            target_id=int(obj["target_id"]),
            target=obj["target"],
            pair_id=int(obj["pair_id"]),
            question=obj["question"],
            answer=obj["answer"],
        )
        for obj in _read_jsonl_stream(args.triplets)
    ]
    controls = [
        annotation.ControlTriplet(obj["target"], obj["question"], obj["answer"])
        for obj in _read_jsonl_stream(args.controls)
    ]
    pool = [(obj["question"], obj["answer"]) for obj in _read_jsonl_stream(args.pool)]
    tasks = annotation.generate_tasks(real, controls, pool, seed)
    annotation.write_tasks(tasks, args.tasks, args.key)
    _log(f"wrote {len(tasks)} tasks to {args.tasks} (answer key: {args.key}, seed {seed})")
    return 0


def cmd_annotate_validate(args) -> int:
    tasks = annotation.read_tasks(args.tasks, args.key)
    by_id = {task.task_id: task for task in tasks}
    judgments = annotation.read_judgments(args.judgments)
    ledger = annotation.WorkerLedger()
    statuses = []
    for judgment in judgments:
        task = by_id.get(judgment.task_id)
        if task is None:
            raise QAError(f"judgment references unknown task {judgment.task_id}")
        statuses.append(annotation.validate_judgment(task, judgment, ledger))
    blacklisted, discarded = annotation.apply_blacklist(ledger, judgments)
    discarded_set = set(discarded)
    for judgment, status in zip(judgments, statuses):
        print(
            json.dumps(
                {
                    "task_id": judgment.task_id,
                    "worker_id": judgment.worker_id,
                    "status": status.value,
                    "discarded": (judgment.worker_id, judgment.task_id) in discarded_set,
                }
            )
        )
    if args.ledger:
        payload = {
            worker_id: {
                "assigned": rec.assigned,
                "failed": rec.failed,
                "blacklisted": rec.blacklisted,
            }
            for worker_id, rec in sorted(ledger.records.items())
        }
        with open(args.ledger, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
    _log(f"{len(judgments)} judgments validated; {len(blacklisted)} workers blacklisted")
    return 0


def cmd_annotate_aggregate(args) -> int:
    tasks = annotation.read_tasks(args.tasks, args.key)
    judgments = annotation.read_judgments(args.judgments)
    labels = annotation.collect_item_labels(tasks, judgments)
    out = sys.stdout if args.out == "-" else open(args.out, "w", encoding="utf-8")
    try:
        for (target_id, pair_id), votes in sorted(labels.items()):
            final = annotation.aggregate_labels(votes)
            out.write(
                json.dumps(
                    {
                        "target_id": target_id,
                        "pair_id": pair_id,
                        "labels": votes,
                        "final": final,
                    }
                )
                + "\n"
            )
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def cmd_annotate_export(args) -> int:
    config = _engine_config(args)
    seed = _resolve_seed(config)
    targets = annotation.read_targets(args.targets)
    final_labels: dict[tuple[int, int], int | str] = {}
    for obj in _read_jsonl_stream(args.labels):
        final_labels[(int(obj["target_id"]), int(obj["pair_id"]))] = obj["final"]
    fractions = tuple(float(f) for f in args.splits.split(","))
    examples = annotation.export_ranking_dataset(targets, final_labels, seed, fractions)
    metrics.save_dataset(examples, args.out)
    counts = {split: sum(1 for ex in examples if ex.split == split) for split in metrics.SPLITS}
    _log(f"wrote {len(examples)} examples to {args.out} (splits {counts}, seed {seed})")
    return 0


def _bench_emit(points, args) -> int:
    csv_text, table = bench.emit_report(points, args.out)
    if args.out:
        _log(f"wrote {args.out}")
    else:
        print(csv_text, end="")
    _log(table)
    return 0


def cmd_bench_candidates(args) -> int:
    config = _engine_config(args)
    store = QAStore(config.store_path)
    index = _open_index(config)
    encoder = make_encoder(config.encoder, dim=index.dim if len(index) else config.dim)
    scorer = make_scorer(config.scorer)
    pairs = []
    for pair in store.export_pairs():
        pairs.append(pair)
        if len(pairs) >= args.queries:
            break
    if not pairs:
        raise QAError("store is empty; ingest pairs before benchmarking")
    queries = [p.question for p in pairs]
    vectors = [encoder.encode_query(q) for q in queries]

    def lookup(pair_id: int):
        pair = store.get_pair(pair_id)
        return (pair.id, pair.question, pair.answer)

    layout = args.layout or config.layout
    ks = _parse_ints(args.ks)
    points = bench.bench_candidates(
        index, scorer, layout, queries, vectors, lookup, ks, args.reps, args.warmup
    )
    if args.concurrency > 1:
        points.append(
            bench.bench_throughput(
                index, scorer, layout, queries, vectors, lookup,
                max(ks), args.reps, args.concurrency, args.warmup,
            )
        )
    return _bench_emit(points, args)


def cmd_bench_scaling(args) -> int:
    config = _engine_config(args)
    seed = _resolve_seed(config)
    points = bench.bench_db_scaling(
        _parse_sizes(args.sizes), args.k, args.reps, args.dim, seed, args.workdir, args.warmup
    )
    return _bench_emit(points, args)


def cmd_bench_kernels(args) -> int:
    config = _engine_config(args)
    seed = _resolve_seed(config)
    points = bench.bench_kernels(args.n, args.dim, _parse_ints(args.ks), args.reps, seed, args.warmup)
    return _bench_emit(points, args)


# -- parser -------------------------------------------------------------------


def _add_override(parser: argparse.ArgumentParser, *flags, **kwargs):
    # Re-expose a global option on a subcommand (spec grammar puts e.g.
    # --seed after the subcommand). SUPPRESS keeps the global value when
    # the local flag is absent.
    parser.add_argument(*flags, default=argparse.SUPPRESS, **kwargs)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qa",
        description="Question/answer database engine: retrieval, reranking, evaluation.",
    )
    parser.add_argument("--config", help="flat key=value config file")
    parser.add_argument("--store", help="store directory (QA_STORE)")
    parser.add_argument("--index", help="index file (QA_INDEX)")
    parser.add_argument("--encoder", help="encoder backend: ref | remote:<url> (QA_ENCODER_URL)")
    parser.add_argument("--scorer", help="scorer backend: ref | remote:<url> (QA_SCORER_URL)")
    parser.add_argument("--dim", type=int, help="embedding dimension (QA_DIM)")
    parser.add_argument("--seed", type=int, help="seed for randomized subcommands (QA_SEED)")
    sub = parser.add_subparsers(dest="command", metavar="<command>")

    p = sub.add_parser("ingest", help="filter, dedup, and append a JSONL batch")
    p.add_argument("--source", required=True, help="source label for this batch")
    p.add_argument("--keep", type=float, default=1.0, help="fraction of top-scoring records to keep")
    p.add_argument("--requires-score", action="store_true", help="reject records without a score")
    p.add_argument("file", help="JSONL file of {question, answer, score?} records, or -")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("export", help="emit stored pairs as JSONL in id order")
    p.add_argument("--source", help="restrict to one source label")
    p.add_argument("--out", default="-", help="output file (default stdout)")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("sample", help="uniformly sample pairs, optionally removing them")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--remove", action="store_true", help="remove the sampled pairs from the store")
    _add_override(p, "--seed", type=int, help="sampling seed")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("index", help="build or query the vector index")
    index_sub = p.add_subparsers(dest="index_command", metavar="<build|search>", required=True)
    b = index_sub.add_parser("build", help="encode all stored pairs into a new index generation")
    b.add_argument(
        "--input-config",
        choices=["question", "pair"],
        default="pair",
        help="encode entries as bare questions or question/answer pairs",
    )
    b.add_argument("--batch-size", type=int, default=512)
    b.add_argument("--resume", action="store_true", help="continue an interrupted build")
    _add_override(b, "--encoder", help="encoder backend: ref | remote:<url>")
    _add_override(b, "--dim", type=int, help="embedding dimension")
    b.set_defaults(func=cmd_index_build)
    s = index_sub.add_parser("search", help="top-k cosine search for a query")
    s.add_argument("--k", type=int, default=10)
    s.add_argument("--query", required=True)
    _add_override(s, "--encoder", help="encoder backend: ref | remote:<url>")
    s.set_defaults(func=cmd_index_search)

    p = sub.add_parser("answer", help="answer a question end to end")
    p.add_argument("--k", type=int, help="retrieval depth (default 500)")
    p.add_argument("--layout", choices=list(LAYOUTS), help="reranker input configuration")
    p.add_argument("--threshold", type=float, help="minimum top score required to answer")
    p.add_argument("--no-rerank", action="store_true", help="retrieval-only ablation")
    p.add_argument("--json", action="store_true", help="print the full response JSON to stdout")
    p.add_argument("question")
    p.set_defaults(func=cmd_answer)

    p = sub.add_parser("serve", help="run the HTTP answer service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--k", type=int)
    p.add_argument("--layout", choices=list(LAYOUTS))
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("eval", help="score a ranking dataset and print the metric report")
    p.add_argument("--dataset", required=True, help="ranking dataset JSONL")
    p.add_argument(
        "--scores",
        help="JSONL of per-example score arrays, or 'pipeline' to score with the configured scorer",
    )
    p.add_argument("--split", choices=list(metrics.SPLITS), help="evaluate one split only")
    p.add_argument("--layout", choices=list(LAYOUTS), help="layout for --scores pipeline")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("annotate", help="annotation task tooling")
    ann = p.add_subparsers(dest="annotate_command", metavar="<gen|validate|aggregate|export>", required=True)
    g = ann.add_parser("gen", help="bundle triplets into 7-item tasks with controls")
    g.add_argument("--triplets", required=True, help="JSONL of real triplets with provenance")
    g.add_argument("--controls", required=True, help="JSONL of positive control triplets")
    g.add_argument("--pool", required=True, help="JSONL question pool for negative controls")
    g.add_argument("--tasks", required=True, help="worker-facing tasks JSONL (output)")
    g.add_argument("--key", required=True, help="answer-key JSON (output, never shown to workers)")
    _add_override(g, "--seed", type=int, help="task-generation seed")
    g.set_defaults(func=cmd_annotate_gen)
    v = ann.add_parser("validate", help="accept/reject judgments against the controls")
    v.add_argument("--tasks", required=True)
    v.add_argument("--key", required=True)
    v.add_argument("--judgments", required=True, help="CSV: task_id,worker_id,labels")
    v.add_argument("--ledger", help="write the worker ledger JSON here")
    v.set_defaults(func=cmd_annotate_validate)
    a = ann.add_parser("aggregate", help="majority-vote the surviving labels per candidate")
    a.add_argument("--tasks", required=True)
    a.add_argument("--key", required=True)
    a.add_argument("--judgments", required=True)
    a.add_argument("--out", default="-")
    a.set_defaults(func=cmd_annotate_aggregate)
    e = ann.add_parser("export", help="assemble the labeled ranking dataset")
    e.add_argument("--targets", required=True, help="JSONL of targets with candidate pools")
    e.add_argument("--labels", required=True, help="aggregated labels JSONL")
    e.add_argument("--splits", default="0.77,0.10,0.13", help="train,dev,test fractions")
    e.add_argument("--out", required=True)
    _add_override(e, "--seed", type=int, help="split-assignment seed")
    e.set_defaults(func=cmd_annotate_export)

    p = sub.add_parser("bench", help="latency benchmarks")
    bsub = p.add_subparsers(dest="bench_command", metavar="<candidates|scaling|kernels>", required=True)
    c = bsub.add_parser("candidates", help="stage latency vs number of reranked candidates")
    c.add_argument("--ks", default="1,50,100,200,300,400,500")
    c.add_argument("--reps", type=int, default=200)
    c.add_argument("--warmup", type=int, default=bench.DEFAULT_WARMUP)
    c.add_argument("--queries", type=int, default=8, help="number of probe questions from the store")
    c.add_argument("--layout", choices=list(LAYOUTS))
    c.add_argument(
        "--concurrency", type=int, default=1,
        help="also measure per-request latency under this many parallel clients",
    )
    c.add_argument("--out", help="write the CSV report here")
    c.set_defaults(func=cmd_bench_candidates)
    sc = bsub.add_parser("scaling", help="retrieval latency vs database size")
    sc.add_argument("--sizes", default="20k,50k,100k,200k")
    sc.add_argument("--k", type=int, default=500)
    sc.add_argument("--reps", type=int, default=200)
    sc.add_argument("--warmup", type=int, default=bench.DEFAULT_WARMUP)
    sc.add_argument("--dim", type=int, default=128)
    sc.add_argument("--workdir", default="bench_workdir")
    sc.add_argument("--out", help="write the CSV report here")
    sc.set_defaults(func=cmd_bench_scaling)
    kn = bsub.add_parser("kernels", help="compare the compiled and numpy scan backends")
    kn.add_argument("--n", type=int, default=100_000)
    kn.add_argument("--dim", type=int, default=128)
    kn.add_argument("--ks", default="1,10,100,500")
    kn.add_argument("--reps", type=int, default=50)
    kn.add_argument("--warmup", type=int, default=bench.DEFAULT_WARMUP)
    kn.add_argument("--out", help="write the CSV report here")
    kn.set_defaults(func=cmd_bench_kernels)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "func", None):
        parser.print_help()
        return 2
    try:
        return args.func(args)
    except QAError as exc:
        _log(f"error: {exc}")
        return 1
    except (ValueError, OSError) as exc:
        _log(f"error: {exc}")
        return 1
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
