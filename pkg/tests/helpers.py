"""Shared non-fixture helpers for the test suite."""
from __future__ import annotations

import random

from deepir import (
    Bm25Params,
    Bm25Retriever,
    BudgetUsage,
    Corpus,
    Document,
    Episode,
    PipelineConfig,
    SearchResult,
    Step,
    ToolService,
    build_index,
)

TOY_UNITS = {
    "d1": "apple banana apple",
    "d2": "banana cherry",
    "d3": "cherry cherry cherry date",
}


def toy_service(k: int = 2, depth_d: int = 2) -> ToolService:
    c = Corpus()
    for doc_id, text in TOY_UNITS.items():
        c.add(Document(doc_id=doc_id, text=text, title=f"Title {doc_id}"))
    units = dict(TOY_UNITS)
    retriever = Bm25Retriever(build_index(units), units, Bm25Params())
    cfg = PipelineConfig(retriever=retriever, k=k, depth_d=depth_d)
    return ToolService(c, cfg)


def make_random_episode(rng: random.Random, qid: str) -> Episode:
    """A structurally valid episode with randomized content for store tests."""
    steps = []
    n_steps = rng.randint(0, 6)
    words = ["alpha", "beta", "gamma", "delta", '"quoted"', "61,880", "attendance"]
    for _ in range(n_steps):
        kind = rng.choice(["reasoning", "search", "get_doc"])
        if kind == "reasoning":
            steps.append(Step(kind="reasoning", reasoning_text=" ".join(rng.choices(words, k=rng.randint(1, 8)))))
        elif kind == "search":
            raw = " ".join(rng.choices(words, k=rng.randint(1, 5)))
            items = [
                {"id": f"d{rng.randint(1, 9)}#{rng.randint(0, 3)}", "text": " ".join(rng.choices(words, k=4)), "score": rng.random()}
                for _ in range(rng.randint(0, 3))
            ]
            steps.append(
                Step(kind="search", query_raw=raw, query_sent=raw, results=SearchResult(items=items, k_requested=5))
            )
        else:
            steps.append(Step(kind="get_doc", doc_id=f"d{rng.randint(1, 9)}", doc_tokens=rng.randint(1, 40)))
    answered = rng.random() < 0.7
    if answered:
        answer = " ".join(rng.choices(words, k=rng.randint(1, 4)))
        steps.append(Step(kind="answer", answer_text=answer))
    return Episode(
        qid=qid,
        user_query=" ".join(rng.choices(words, k=rng.randint(2, 7))),
        steps=steps,
        final_answer=answer if answered else None,
        termination="answered" if answered else rng.choice(["iteration_cap", "context_limit", "output_limit", "agent_error"]),
        budget_used=BudgetUsage(
            iterations=len(steps),
            output_tokens=rng.randint(0, 500),
            context_tokens=rng.randint(0, 2000),
        ),
    )
