"""Evaluation: evidence recall, answer accuracy, ranking metrics, BM25 grid search."""
from __future__ import annotations

import json
import math
import re
import unicodedata
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

from .agentloop import Episode, count_episode
from .corpus import doc_of_unit
from .lexindex import Analyzer, Bm25Params, DEFAULT_ANALYZER, InvertedIndex, RankedList
from .lexindex import search as bm25_search
from .pipeline import maxp_aggregate

DEFAULT_K1_SWEEP = (0.5, 0.9, 2.0, 3.8, 6.0, 8.0, 10.0, 12.0)
DEFAULT_B_SWEEP = (0.0, 0.2, 0.4, 0.6, 0.75, 0.87, 1.0)
DEFAULT_CELL = (0.9, 0.4)


class EvalError(Exception):
    pass


class JudgeError(EvalError):
    """Judge transport failure; the affected query is excluded and counted."""


@dataclass
class Judgments:
    """Per-query document labels.  Gold documents are always evidence too."""

    levels: dict[str, dict[str, str]] = field(default_factory=dict)

    def add(self, qid: str, doc_id: str, level: str) -> None:
        if level not in ("gold", "evidence"):
            raise EvalError(f"unknown judgment level {level!r}")
        per_q = self.levels.setdefault(qid, {})
        if per_q.get(doc_id) == "gold":
            return  # gold dominates
        per_q[doc_id] = level

    def evidence_set(self, qid: str) -> set[str]:
        if qid not in self.levels:
            raise EvalError(f"no judgments for qid {qid!r}")
        return set(self.levels[qid])

    def gold_set(self, qid: str) -> set[str]:
        if qid not in self.levels:
            raise EvalError(f"no judgments for qid {qid!r}")
        return {d for d, lvl in self.levels[qid].items() if lvl == "gold"}

    def __contains__(self, qid: str) -> bool:
        return qid in self.levels


def load_judgments(path: str) -> Judgments:
    """Line-delimited {qid, docid, level} with level gold or evidence."""
    judg = Judgments()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                judg.add(str(rec["qid"]), str(rec["docid"]), str(rec["level"]))
            except (ValueError, KeyError) as e:
                raise EvalError(f"bad judgment at line {lineno}: {e}") from None
    return judg


def load_queries(path: str) -> list[dict]:
    """Line-delimited {qid, text, answer} records."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                out.append({"qid": str(rec["qid"]), "text": str(rec["text"]), "answer": str(rec.get("answer", ""))})
            except (ValueError, KeyError) as e:
                raise EvalError(f"bad query at line {lineno}: {e}") from None
    return out


def recall_evidence(episode: Episode, judgments: Judgments) -> float:
    """Fraction of a query's evidence documents returned across all search calls.

    Passage ids map to their source documents before the union is taken.
    """
    evidence = judgments.evidence_set(episode.qid)
    if not evidence:
        raise EvalError(f"empty evidence set for qid {episode.qid!r}")
    seen: set[str] = set()
    for step in episode.steps:
        if step.kind == "search" and step.results is not None:
            seen.update(doc_of_unit(item["id"]) for item in step.results.items)
    return len(seen & evidence) / len(evidence)


_DASHES = "‐‑‒–—―−"
_ARTICLES = {"a", "an", "the"}


def normalize_answer(text: str) -> str:
    """Case-fold, unify Unicode dashes, drop articles, trim edge punctuation."""
    s = unicodedata.normalize("NFKC", text).casefold()
    for dash in _DASHES:
        s = s.replace(dash, "-")
    s = s.strip()
    s = re.sub(r"^[\s\.,;:!\?\"'()\[\]]+|[\s\.,;:!\?\"'()\[\]]+$", "", s)
    words = [w for w in s.split() if w not in _ARTICLES]
    return " ".join(words)


JUDGE_PROMPT = """You are grading an answer against a reference.
Reference answer: {reference}
Candidate answer: {answer}

Does the candidate convey the same final answer as the reference? Reply with exactly one word: yes or no."""


def accuracy_judge(answer: str | None, reference: str, judge=None) -> int:
    """Binary accuracy.  Without a judge client, normalized exact match; with
    one, a yes/no verdict.  Unanswered (None) always scores 0."""
    if answer is None:
        return 0
    if judge is None:
        return int(normalize_answer(answer) == normalize_answer(reference))
    try:
        verdict = judge.complete(JUDGE_PROMPT.format(reference=reference, answer=answer))
    except Exception as e:
        raise JudgeError(f"judge call failed: {e}") from None
    return int(verdict.strip().lower().startswith("yes"))


@dataclass
class MetricsReport:
    n_queries: int
    avg_search_calls: float
    avg_getdoc_calls: float
    recall_mean: float
    accuracy: float
    completion_rate: float
    judge_errors: int = 0

    def to_dict(self) -> dict:
        return {
            "n_queries": self.n_queries,
            "avg_search_calls": self.avg_search_calls,
            "avg_getdoc_calls": self.avg_getdoc_calls,
            "recall_mean": self.recall_mean,
            "accuracy": self.accuracy,
            "completion_rate": self.completion_rate,
            "judge_errors": self.judge_errors,
        }

    def format_table(self) -> str:
        rows = [
            ("queries", f"{self.n_queries}"),
            ("search calls / query", f"{self.avg_search_calls:.2f}"),
            ("getdoc calls / query", f"{self.avg_getdoc_calls:.2f}"),
            ("evidence recall", f"{self.recall_mean:.4f}"),
            ("accuracy", f"{self.accuracy:.4f}"),
            ("completion rate", f"{self.completion_rate:.4f}"),
        ]
        if self.judge_errors:
            rows.append(("judge errors", f"{self.judge_errors}"))
        width = max(len(name) for name, _ in rows)
        return "\n".join(f"{name.ljust(width)}  {value}" for name, value in rows)


def aggregate_run(
    episodes: Sequence[Episode],
    judgments: Judgments,
    answers: Mapping[str, str],
    judge=None,
) -> MetricsReport:
    """Aggregate per-episode counts and scores into a run-level report.

    Accuracy averages over queries with a judge verdict; judge transport
    failures are excluded from that mean and reported in judge_errors.
    """
    if not episodes:
        raise EvalError("no episodes to aggregate")
    search_calls = 0
    getdoc_calls = 0
    answered = 0
    recall_sum = 0.0
    acc_sum = 0
    judge_errors = 0
    for ep in episodes:
        counts = count_episode(ep)
        search_calls += counts["search_calls"]
        getdoc_calls += counts["getdoc_calls"]
        answered += int(counts["answered"])
        recall_sum += recall_evidence(ep, judgments)
        if ep.qid not in answers:
            raise EvalError(f"no reference answer for qid {ep.qid!r}")
        try:
            acc_sum += accuracy_judge(ep.final_answer, answers[ep.qid], judge)
        except JudgeError:
            judge_errors += 1
    n = len(episodes)
    scored = n - judge_errors
    return MetricsReport(
        n_queries=n,
        avg_search_calls=search_calls / n,
        avg_getdoc_calls=getdoc_calls / n,
        recall_mean=recall_sum / n,
        accuracy=(acc_sum / scored) if scored else 0.0,
        completion_rate=answered / n,
        judge_errors=judge_errors,
    )


def recall_at_k(ranked: RankedList, evidence: set[str], k: int) -> float:
    if not evidence:
        raise EvalError("empty evidence set")
    if k < 1:
        raise EvalError("k must be >= 1")
    top = set(ranked.ids()[:k])
    return len(top & evidence) / len(evidence)


def ndcg_at_10(ranked: RankedList, evidence: set[str]) -> float:
    """Binary-gain nDCG at depth 10: gain 1 for evidence docs, discount
    1/log2(rank+1), normalized by the ideal DCG."""
    if not evidence:
        raise EvalError("empty evidence set")
    dcg = 0.0
    for rank, uid in enumerate(ranked.ids()[:10], start=1):
        if uid in evidence:
            dcg += 1.0 / math.log2(rank + 1)
    ideal = sum(1.0 / math.log2(rank + 1) for rank in range(1, min(len(evidence), 10) + 1))
    return dcg / ideal


@dataclass
class GridSpec:
    k1_values: Sequence[float] = DEFAULT_K1_SWEEP
    b_values: Sequence[float] = DEFAULT_B_SWEEP
    metric: str = "recall@5"  # recall@5 | ndcg@10
    unit_kind: str = "document"  # document | passage
    pool_depth: int = 200

    def __post_init__(self) -> None:
        if self.metric not in ("recall@5", "ndcg@10"):
            raise EvalError(f"unknown grid metric {self.metric!r}")
        if self.unit_kind not in ("document", "passage"):
            raise EvalError(f"unknown unit kind {self.unit_kind!r}")


@dataclass
class GridResult:
    metric: str
    cells: list[tuple[float, float, float]]  # (k1, b, value)
    default_cell: tuple[float, float] | None
    best_cell: tuple[float, float]

    def value_at(self, k1: float, b: float) -> float:
        for ck1, cb, v in self.cells:
            if ck1 == k1 and cb == b:
                return v
        raise EvalError(f"no grid cell ({k1}, {b})")

    def to_csv(self) -> str:
        lines = ["k1,b,metric,value,flag"]
        for k1, b, value in self.cells:
            flags = []
            if self.default_cell == (k1, b):
                flags.append("default")
            if self.best_cell == (k1, b):
                flags.append("best")
            lines.append(f"{k1:g},{b:g},{self.metric},{value:.6f},{'+'.join(flags)}")
        return "\n".join(lines) + "\n"


def grid_search_bm25(
    index: InvertedIndex | Callable[[], InvertedIndex],
    spec: GridSpec,
    queries: Iterable[dict],
    judgments: Judgments,
    analyzer: Analyzer = DEFAULT_ANALYZER,
) -> GridResult:
    """Sweep (k1, b) cells, scoring each with the mean metric over the full
    original query texts.  Passage grids apply max-score aggregation to
    documents before the metric."""
    if callable(index):
        index = index()
    qs = list(queries)
    if not qs:
        raise EvalError("no queries for grid search")
    for q in qs:
        if q["qid"] not in judgments:
            raise EvalError(f"no judgments for qid {q['qid']!r}")

    cells: list[tuple[float, float, float]] = []
    for k1 in spec.k1_values:
        for b in spec.b_values:
            params = Bm25Params(k1=k1, b=b)
            total = 0.0
            for q in qs:
                ranked = bm25_search(index, params, q["text"], spec.pool_depth, analyzer)
                if spec.unit_kind == "passage":
                    ranked = maxp_aggregate(ranked)
                evidence = judgments.evidence_set(q["qid"])
                if spec.metric == "recall@5":
                    total += recall_at_k(ranked, evidence, 5)
                else:
                    total += ndcg_at_10(ranked, evidence)
            cells.append((float(k1), float(b), total / len(qs)))

    default = DEFAULT_CELL if (DEFAULT_CELL[0] in spec.k1_values and DEFAULT_CELL[1] in spec.b_values) else None
    best = max(cells, key=lambda c: c[2])
    return GridResult(metric=spec.metric, cells=cells, default_cell=default, best_cell=(best[0], best[1]))


def render_heatmap(result: GridResult, out_path: str) -> None:
    """Render the sweep as a heatmap; the default cell gets a red x marker and
    the best cell a green + marker."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    k1_values = sorted({c[0] for c in result.cells})
    b_values = sorted({c[1] for c in result.cells})
    grid = [[float("nan")] * len(b_values) for _ in k1_values]
    for k1, b, value in result.cells:
        grid[k1_values.index(k1)][b_values.index(b)] = value

    fig, ax = plt.subplots(figsize=(1.0 + 0.8 * len(b_values), 1.0 + 0.5 * len(k1_values)))
    im = ax.imshow(grid, aspect="auto", origin="lower", cmap="viridis")
    ax.set_xticks(range(len(b_values)), [f"{b:g}" for b in b_values])
    ax.set_yticks(range(len(k1_values)), [f"{k1:g}" for k1 in k1_values])
    ax.set_xlabel("b")
    ax.set_ylabel("k1")
    ax.set_title(result.metric)
    if result.default_cell is not None:
        ax.plot(b_values.index(result.default_cell[1]), k1_values.index(result.default_cell[0]),
                marker="x", color="red", markersize=12, markeredgewidth=3)
    ax.plot(b_values.index(result.best_cell[1]), k1_values.index(result.best_cell[0]),
            marker="+", color="lime", markersize=12, markeredgewidth=3)
    fig.colorbar(im, ax=ax)
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)
