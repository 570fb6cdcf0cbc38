#!/usr/bin/env python3
"""BM25 (k1, b) grid search on a length-skewed corpus.

The corpus pits one short relevant document against keyword-stuffed long
distractors, so recall@5 responds sharply to the length-normalization
parameter b.  Writes grid.csv and grid.svg next to the working directory.
"""
import argparse

from deepir import (
    DEFAULT_B_SWEEP,
    DEFAULT_K1_SWEEP,
    GridSpec,
    Judgments,
    build_index,
    grid_search_bm25,
    render_heatmap,
)


def skewed_units(n_distractors: int = 6) -> dict[str, str]:
    units = {"rel": "needle alpha beta gamma delta"}
    for i in range(n_distractors):
        filler = " ".join(f"w{i}x{j}" for j in range(392))
        units[f"dis{i}"] = ("needle " * 8) + filler
    return units


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--csv", default="grid.csv")
    ap.add_argument("--heatmap", default="grid.svg")
    ap.add_argument("--metric", choices=["recall@5", "ndcg@10"], default="recall@5")
    args = ap.parse_args()

    index = build_index(skewed_units(), "document")
    judgments = Judgments()
    judgments.add("q1", "rel", "gold")
    queries = [{"qid": "q1", "text": "needle", "answer": ""}]

    spec = GridSpec(k1_values=DEFAULT_K1_SWEEP, b_values=DEFAULT_B_SWEEP,
                    metric=args.metric, unit_kind="document")
    result = grid_search_bm25(index, spec, queries, judgments)

    with open(args.csv, "w", encoding="utf-8") as fh:
        fh.write(result.to_csv())
    render_heatmap(result, args.heatmap)

    print(result.to_csv())
    print(f"default cell: {result.default_cell}  best cell: {result.best_cell}")
    print(f"wrote {args.csv} and {args.heatmap}")


if __name__ == "__main__":
    main()
