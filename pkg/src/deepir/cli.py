"""Command-line entry points for the harness."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import agentloop, corpus as corpus_mod, evalkit, lexindex, pipeline, toolsvc, tracestore


def _unit_map(corpus: corpus_mod.Corpus, unit_kind: str, max_words: int) -> dict[str, str]:
    """Unit id -> indexed text.  Document units carry the title ahead of the
    body; passage units use the rendered passage text."""
    if unit_kind == "document":
        return {
            d.doc_id: (f"{d.title}\n{d.text}" if d.title else d.text)
            for d in corpus
        }
    if unit_kind == "passage":
        return {p.passage_id: p.rendered_text for p in corpus_mod.segment_corpus(corpus, max_words)}
    raise ValueError(f"unknown unit kind {unit_kind!r}")


def _bm25_params(args) -> lexindex.Bm25Params:
    if getattr(args, "preset", None):
        return lexindex.PRESETS[args.preset]
    return lexindex.Bm25Params(k1=args.k1, b=args.b)


def cmd_ingest(args) -> int:
    c = corpus_mod.ingest_documents(args.input, format=args.format)
    print(f"{len(c)} documents")
    return 0


def cmd_segment(args) -> int:
    c = corpus_mod.ingest_documents(args.input)
    n = 0
    with open(args.output, "w", encoding="utf-8") as fh:
        for p in corpus_mod.segment_corpus(c, args.max_words):
            doc = c.get(p.doc_id)
            rec = {
                "docid": p.passage_id,
                "title": doc.title,
                "text": p.rendered_text,
                "url": doc.url,
                "source_docid": p.doc_id,
                "seq": p.seq_index,
            }
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
            n += 1
    print(f"{n} passages -> {args.output}")
    return 0


def cmd_index(args) -> int:
    c = corpus_mod.ingest_documents(args.input)
    units = _unit_map(c, args.unit_kind, args.max_words)
    index = lexindex.build_index(units, unit_kind=args.unit_kind, prefix_tokens=args.prefix_tokens)
    lexindex.save_index(index, args.output_dir)
    print(f"indexed {index.n_units} {args.unit_kind} units (avgdl {index.avgdl:.2f}) -> {args.output_dir}")
    return 0


def cmd_search(args) -> int:
    index = lexindex.load_index(args.index_dir)
    ranked = lexindex.search(index, _bm25_params(args), args.query, args.k)
    for uid, score in ranked.entries:
        print(json.dumps({"id": uid, "score": score}, ensure_ascii=False))
    return 0


def _build_service(args) -> toolsvc.ToolService:
    c = corpus_mod.ingest_documents(args.corpus)
    units = _unit_map(c, args.unit_kind, args.max_words)
    if args.index_dir and os.path.isdir(args.index_dir):
        index = lexindex.load_index(args.index_dir)
    else:
        index = lexindex.build_index(units, unit_kind=args.unit_kind)
    retriever = pipeline.Bm25Retriever(index, units, _bm25_params(args))
    reranker = None
    if args.scorer_url:
        reranker = pipeline.RemoteScorer(pipeline.ScorerEndpoint(address=args.scorer_url))
    cfg = pipeline.PipelineConfig(
        retriever=retriever,
        reranker=reranker,
        depth_d=args.depth,
        k=args.k,
        maxp=args.maxp,
    )
    return toolsvc.ToolService(c, cfg)


def cmd_serve(args) -> int:
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s %(message)s")
    service = _build_service(args)
    running = toolsvc.serve_http(service, host=args.host, port=args.port)
    print(f"serving on {running.address} (ctrl-c to stop)")
    try:
        running.thread.join()
    except KeyboardInterrupt:
        running.close()
    return 0


def _load_run_config(path: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def cmd_run(args) -> int:
    cfg = _load_run_config(args.config)
    c = corpus_mod.ingest_documents(cfg["corpus"])
    unit_kind = cfg.get("unit_kind", "document")
    units = _unit_map(c, unit_kind, cfg.get("max_words", 250))
    bm25 = cfg.get("bm25", {})
    params = lexindex.Bm25Params(k1=bm25.get("k1", 0.9), b=bm25.get("b", 0.4))
    retriever = pipeline.Bm25Retriever(lexindex.build_index(units, unit_kind=unit_kind), units, params)
    pl = cfg.get("pipeline", {})
    reranker = None
    if pl.get("scorer_url"):
        reranker = pipeline.RemoteScorer(
            pipeline.ScorerEndpoint(
                address=pl["scorer_url"],
                timeout=pl.get("scorer_timeout", 15.0),
                batch_size=pl.get("scorer_batch", 32),
            )
        )
    pipe_cfg = pipeline.PipelineConfig(
        retriever=retriever,
        reranker=reranker,
        depth_d=pl.get("depth_d", 50),
        k=pl.get("k", 5),
        maxp=pl.get("maxp", False),
    )
    tools = toolsvc.ToolService(c, pipe_cfg)

    b = cfg.get("budgets", {})
    budgets = agentloop.Budgets(
        max_iterations=b.get("max_iterations", 100),
        max_output_tokens=b.get("max_output_tokens", 40000),
        context_window_tokens=b.get("context_window_tokens", 131072),
    )
    r = cfg.get("reformulator", {})
    reform = agentloop.ReformulatorConfig(mode="off")
    if r.get("mode", "off") != "off":
        llm = agentloop.ChatCompletionClient(r["llm_url"], r["model"])
        exemplars = agentloop.load_exemplars(r.get("exemplars_file"))
        reform = agentloop.ReformulatorConfig(mode=r["mode"], llm=llm, exemplar_questions=exemplars)

    agent_cfg = cfg["agent"]
    if agent_cfg["type"] == "scripted":
        with open(agent_cfg["script_file"], encoding="utf-8") as fh:
            scripts = json.load(fh)

        def agent_factory(qid: str):
            turns = [agentloop.Turn(**t) for t in scripts[qid]]
            return agentloop.ScriptedAgent(turns)

    elif agent_cfg["type"] == "http":

        def agent_factory(qid: str):
            return agentloop.ChatAgent(
                base_url=agent_cfg["base_url"],
                model=agent_cfg["model"],
                reasoning_effort=agent_cfg.get("reasoning_effort"),
            )

    else:
        raise ValueError(f"unknown agent type {agent_cfg['type']!r}")

    queries = evalkit.load_queries(cfg["queries"])
    items = [(q["qid"], q["text"]) for q in queries]
    episodes = agentloop.run_many(
        items, agent_factory, tools, budgets, reform, parallelism=cfg.get("parallelism", 4)
    )
    out = cfg.get("traces_out", "traces.atrc")
    tracestore.write_traces(episodes, out, passphrase=cfg.get("passphrase"))
    print(f"{len(episodes)} episodes -> {out}")
    return 0


def cmd_eval(args) -> int:
    episodes = tracestore.read_traces(args.traces, passphrase=args.passphrase)
    judgments = evalkit.load_judgments(args.judgments)
    answers = {q["qid"]: q["answer"] for q in evalkit.load_queries(args.queries)}
    report = evalkit.aggregate_run(episodes, judgments, answers)
    print(report.format_table())
    print(json.dumps(report.to_dict(), sort_keys=True))
    return 0


def cmd_grid(args) -> int:
    c = corpus_mod.ingest_documents(args.corpus)
    units = _unit_map(c, args.unit_kind, args.max_words)
    index = lexindex.build_index(units, unit_kind=args.unit_kind)
    spec = evalkit.GridSpec(
        k1_values=[float(v) for v in args.k1.split(",")] if args.k1 else evalkit.DEFAULT_K1_SWEEP,
        b_values=[float(v) for v in args.b.split(",")] if args.b else evalkit.DEFAULT_B_SWEEP,
        metric=args.metric,
        unit_kind=args.unit_kind,
    )
    queries = evalkit.load_queries(args.queries)
    judgments = evalkit.load_judgments(args.judgments)
    result = evalkit.grid_search_bm25(index, spec, queries, judgments)
    csv_text = result.to_csv()
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write(csv_text)
        print(f"grid -> {args.csv}")
    else:
        sys.stdout.write(csv_text)
    if args.heatmap:
        evalkit.render_heatmap(result, args.heatmap)
        print(f"heatmap -> {args.heatmap}")
    return 0


def cmd_heatmap(args) -> int:
    cells = []
    metric = None
    default_cell = None
    best_cell = None
    with open(args.csv, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if not header.startswith("k1,b,metric,value"):
            raise SystemExit(f"unexpected grid CSV header: {header}")
        for line in fh:
            if not line.strip():
                continue
            parts = line.strip().split(",")
            k1, b, metric, value = float(parts[0]), float(parts[1]), parts[2], float(parts[3])
            flag = parts[4] if len(parts) > 4 else ""
            cells.append((k1, b, value))
            if "default" in flag:
                default_cell = (k1, b)
            if "best" in flag:
                best_cell = (k1, b)
    if not cells:
        raise SystemExit("empty grid CSV")
    if best_cell is None:
        best = max(cells, key=lambda c: c[2])
        best_cell = (best[0], best[1])
    result = evalkit.GridResult(metric=metric or "", cells=cells, default_cell=default_cell, best_cell=best_cell)
    evalkit.render_heatmap(result, args.out)
    print(f"heatmap -> {args.out}")
    return 0


def cmd_trace_encrypt(args) -> int:
    if not args.passphrase:
        raise SystemExit("encrypt needs --passphrase or $DEEPIR_TRACE_PASSPHRASE")
    episodes = tracestore.read_traces(args.input, passphrase=args.passphrase_in)
    tracestore.write_traces(episodes, args.output, passphrase=args.passphrase)
    print(f"{len(episodes)} episodes -> {args.output} (encrypted)")
    return 0


def cmd_trace_decrypt(args) -> int:
    episodes = tracestore.read_traces(args.input, passphrase=args.passphrase)
    tracestore.write_traces(episodes, args.output, passphrase=None)
    print(f"{len(episodes)} episodes -> {args.output} (plaintext)")
    return 0


def cmd_trace_stats(args) -> int:
    episodes = tracestore.read_traces(args.input, passphrase=args.passphrase)
    print(json.dumps(tracestore.analyze_queries(episodes), sort_keys=True, indent=2))
    return 0


def _add_bm25_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--k1", type=float, default=0.9)
    p.add_argument("--b", type=float, default=0.4)
    p.add_argument("--preset", choices=sorted(lexindex.PRESETS), default=None,
                   help="named (k1, b) preset; overrides --k1/--b")


def _passphrase_arg(p: argparse.ArgumentParser, flag: str = "--passphrase") -> None:
    p.add_argument(flag, default=os.environ.get("DEEPIR_TRACE_PASSPHRASE"),
                   help="defaults to $DEEPIR_TRACE_PASSPHRASE")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="deepir", description="agentic search harness")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate and count a corpus file")
    p.add_argument("--input", required=True)
    p.add_argument("--format", default="jsonl")
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("segment", help="split documents into passages")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--max-words", type=int, default=250)
    p.set_defaults(fn=cmd_segment)

    p = sub.add_parser("index", help="build and persist an inverted index")
    p.add_argument("--input", required=True)
    p.add_argument("--output-dir", required=True)
    p.add_argument("--unit-kind", choices=["document", "passage"], default="document")
    p.add_argument("--max-words", type=int, default=250)
    p.add_argument("--prefix-tokens", type=int, default=None)
    p.set_defaults(fn=cmd_index)

    p = sub.add_parser("search", help="query a persisted index")
    p.add_argument("--index-dir", required=True)
    p.add_argument("--query", required=True)
    p.add_argument("--k", type=int, default=5)
    _add_bm25_args(p)
    p.set_defaults(fn=cmd_search)

    p = sub.add_parser("serve", help="serve search/doc tools over HTTP")
    p.add_argument("--corpus", required=True)
    p.add_argument("--index-dir", default=None)
    p.add_argument("--unit-kind", choices=["document", "passage"], default="document")
    p.add_argument("--max-words", type=int, default=250)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--depth", type=int, default=50)
    p.add_argument("--maxp", action="store_true")
    p.add_argument("--scorer-url", default=None)
    _add_bm25_args(p)
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("run", help="run agent episodes from a config file")
    p.add_argument("--config", required=True)
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("eval", help="score a trace file against judgments")
    p.add_argument("--traces", required=True)
    p.add_argument("--judgments", required=True)
    p.add_argument("--queries", required=True)
    _passphrase_arg(p)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("grid", help="BM25 (k1, b) grid search")
    p.add_argument("--corpus", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--judgments", required=True)
    p.add_argument("--unit-kind", choices=["document", "passage"], default="document")
    p.add_argument("--max-words", type=int, default=250)
    p.add_argument("--metric", choices=["recall@5", "ndcg@10"], default="recall@5")
    p.add_argument("--k1", default=None, help="comma-separated sweep values")
    p.add_argument("--b", default=None, help="comma-separated sweep values")
    p.add_argument("--csv", default=None)
    p.add_argument("--heatmap", default=None)
    p.set_defaults(fn=cmd_grid)

    p = sub.add_parser("heatmap", help="render a grid CSV as a heatmap image")
    p.add_argument("--csv", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_heatmap)

    p = sub.add_parser("trace", help="trace file operations")
    tsub = p.add_subparsers(dest="trace_command", required=True)

    tp = tsub.add_parser("encrypt", help="re-write a trace file encrypted")
    tp.add_argument("--input", required=True)
    tp.add_argument("--output", required=True)
    _passphrase_arg(tp)
    tp.add_argument("--passphrase-in", default=None, help="passphrase for an already encrypted input")
    tp.set_defaults(fn=cmd_trace_encrypt)

    tp = tsub.add_parser("decrypt", help="re-write an encrypted trace file as plaintext")
    tp.add_argument("--input", required=True)
    tp.add_argument("--output", required=True)
    _passphrase_arg(tp)
    tp.set_defaults(fn=cmd_trace_decrypt)

    tp = tsub.add_parser("stats", help="query behavior stats for a trace file")
    tp.add_argument("--input", required=True)
    _passphrase_arg(tp)
    tp.set_defaults(fn=cmd_trace_stats)

    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
