#!/usr/bin/env python3
"""End-to-end dry run on an in-memory toy corpus.

Four scripted episodes run against the BM25 tool service; one deliberately
exhausts its iteration budget.  Traces round-trip through an encrypted file
before scoring, so the whole record/replay/eval path is exercised.
"""
import tempfile

from deepir import (
    Bm25Params,
    Bm25Retriever,
    Budgets,
    Corpus,
    Document,
    Judgments,
    PipelineConfig,
    ScriptedAgent,
    ToolService,
    Turn,
    aggregate_run,
    analyze_queries,
    build_index,
    read_traces,
    run_episode,
    write_traces,
)

DOCS = {
    "d1": "apple banana apple",
    "d2": "banana cherry",
    "d3": "cherry cherry cherry date",
}

SCRIPTS = {
    "q1": [Turn.reason("fruit lookup"), Turn.search("apple"), Turn.answer("d1")],
    "q2": [Turn.search("cherry"), Turn.get_doc("d3"), Turn.answer("d3")],
    "q3": [Turn.search("banana"), Turn.answer("the wrong doc")],
    "q4": [Turn.search("date") for _ in range(6)],
}

ANSWERS = {"q1": "d1", "q2": "d3", "q3": "d2", "q4": "d3"}


def main() -> None:
    corpus = Corpus()
    for doc_id, text in DOCS.items():
        corpus.add(Document(doc_id=doc_id, text=text, title=f"Title {doc_id}"))
    units = {d.doc_id: f"{d.title}\n{d.text}" for d in corpus}
    retriever = Bm25Retriever(build_index(units), units, Bm25Params())
    tools = ToolService(corpus, PipelineConfig(retriever=retriever, k=2, depth_d=3))

    budgets = Budgets(max_iterations=5)
    episodes = [
        run_episode(f"query {qid}", ScriptedAgent(turns), tools, budgets=budgets, qid=qid)
        for qid, turns in SCRIPTS.items()
    ]

    with tempfile.NamedTemporaryFile(suffix=".atrc") as tmp:
        write_traces(episodes, tmp.name, passphrase="demo")
        episodes = read_traces(tmp.name, passphrase="demo")

    judgments = Judgments()
    judgments.add("q1", "d1", "gold")
    judgments.add("q2", "d3", "gold")
    judgments.add("q2", "d2", "evidence")
    judgments.add("q3", "d2", "gold")
    judgments.add("q4", "d3", "gold")

    report = aggregate_run(episodes, judgments, ANSWERS)
    print(report.format_table())
    print()
    print("query stats:", analyze_queries(episodes))

    assert report.completion_rate == 0.75, "expected exactly one capped episode"
    assert report.accuracy == 0.5
    print("\nall checks passed")


if __name__ == "__main__":
    main()
