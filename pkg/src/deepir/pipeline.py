"""Retrieve-then-rerank pipelines and the remote scorer protocol client.

Scorer wire protocol: POST {address}/score with body
{"query": str, "candidates": [{"id": str, "text": str}, ...]} returns
{"scores": [float, ...]} aligned with the request order.  GET {address}/healthz
returns {"status": "ok", "model": str}.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Protocol

import requests

from .corpus import doc_of_unit
from .lexindex import Analyzer, Bm25Params, DEFAULT_ANALYZER, InvertedIndex, RankedList
from .lexindex import search as bm25_search


class PipelineError(Exception):
    def __init__(self, stage: str, message: str):
        super().__init__(f"pipeline stage {stage!r}: {message}")
        self.stage = stage


class ScorerError(Exception):
    pass


class ScorerTimeoutError(ScorerError):
    pass


class ScorerUnreachableError(ScorerError):
    pass


class ScorerResponseError(ScorerError):
    """Non-200 status or a body that is not {"scores": [numbers]}."""


class ScorerLengthMismatchError(ScorerError):
    pass


class Retriever(Protocol):
    def search(self, query: str, k: int) -> RankedList: ...
    def unit_text(self, unit_id: str) -> str: ...


class Bm25Retriever:
    """First-stage retriever over an inverted index plus the unit texts."""

    def __init__(
        self,
        index: InvertedIndex,
        units: Mapping[str, str],
        params: Bm25Params | None = None,
        analyzer: Analyzer = DEFAULT_ANALYZER,
    ):
        self.index = index
        self.units = units
        self.params = params or Bm25Params()
        self.analyzer = analyzer

    def search(self, query: str, k: int) -> RankedList:
        return bm25_search(self.index, self.params, query, k, self.analyzer)

    def unit_text(self, unit_id: str) -> str:
        return self.units[unit_id]


@dataclass
class ScorerEndpoint:
    address: str
    timeout: float = 15.0
    batch_size: int = 32

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


def score_remote(endpoint: ScorerEndpoint, query: str, candidates: list[tuple[str, str]]) -> list[float]:
    """Score candidates against a remote scorer, batching sequentially.

    Requests carry at most endpoint.batch_size candidates each; the returned
    list concatenates batch responses in request order.
    """
    scores: list[float] = []
    url = endpoint.address.rstrip("/") + "/score"
    for start in range(0, len(candidates), endpoint.batch_size):
        batch = candidates[start : start + endpoint.batch_size]
        body = {"query": query, "candidates": [{"id": uid, "text": text} for uid, text in batch]}
        try:
            resp = requests.post(url, json=body, timeout=endpoint.timeout)
        except requests.Timeout as e:
            raise ScorerTimeoutError(f"scorer at {endpoint.address} timed out: {e}") from None
        except requests.RequestException as e:
            raise ScorerUnreachableError(f"scorer at {endpoint.address} unreachable: {e}") from None
        if resp.status_code != 200:
            raise ScorerResponseError(f"scorer returned status {resp.status_code}")
        try:
            payload = resp.json()
        except ValueError:
            raise ScorerResponseError("scorer response is not valid JSON") from None
        got = payload.get("scores") if isinstance(payload, dict) else None
        if not isinstance(got, list) or not all(isinstance(s, (int, float)) and not isinstance(s, bool) for s in got):
            raise ScorerResponseError('scorer response missing numeric "scores" list')
        if len(got) != len(batch):
            raise ScorerLengthMismatchError(f"sent {len(batch)} candidates, got {len(got)} scores")
        scores.extend(float(s) for s in got)
    return scores


def check_scorer_health(endpoint: ScorerEndpoint) -> dict:
    try:
        resp = requests.get(endpoint.address.rstrip("/") + "/healthz", timeout=endpoint.timeout)
    except requests.RequestException as e:
        raise ScorerUnreachableError(str(e)) from None
    if resp.status_code != 200:
        raise ScorerResponseError(f"healthz returned status {resp.status_code}")
    return resp.json()


class RemoteScorer:
    def __init__(self, endpoint: ScorerEndpoint):
        self.endpoint = endpoint

    def score(self, query: str, candidates: list[tuple[str, str]]) -> list[float]:
        return score_remote(self.endpoint, query, candidates)


class LocalScorer:
    """Wraps an in-process scoring function (query, candidates) -> scores."""

    def __init__(self, fn: Callable[[str, list[tuple[str, str]]], list[float]]):
        self.fn = fn

    def score(self, query: str, candidates: list[tuple[str, str]]) -> list[float]:
        return list(self.fn(query, candidates))


@dataclass
class PipelineConfig:
    retriever: Retriever
    reranker: object | None = None
    depth_d: int = 50
    k: int = 5
    maxp: bool = False

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.depth_d < 1:
            raise ValueError("depth_d must be >= 1")
        if self.reranker is not None and self.depth_d < self.k:
            raise ValueError("depth_d must be >= k when a reranker is set")


def rerank_top(ranked: RankedList, d: int, scores: Mapping[str, float]) -> RankedList:
    """Reorder the first min(d, len) entries by new scores, descending.

    Ties keep the original rank order.  Entries beyond the window are
    untouched.  A window candidate missing from scores is an error.
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    window = ranked.entries[:d]
    tail = ranked.entries[d:]
    for uid, _ in window:
        if uid not in scores:
            raise PipelineError("rerank", f"no score for in-window candidate {uid!r}")
    order = sorted(range(len(window)), key=lambda i: (-scores[window[i][0]], i))
    reordered = [(window[i][0], float(scores[window[i][0]])) for i in order]
    return RankedList(reordered + tail)


def maxp_aggregate(ranked: RankedList, doc_of: Mapping[str, str] | None = None) -> RankedList:
    """Collapse passage entries to documents, keeping each document's max score.

    Without an explicit mapping, ids resolve by the "<doc_id>#<seq>" scheme and
    ids without "#" pass through, which makes the operation idempotent on
    document-level lists.
    """
    best: dict[str, float] = {}
    for uid, score in ranked.entries:
        if doc_of is not None:
            if uid not in doc_of:
                raise PipelineError("maxp", f"unmapped passage id {uid!r}")
            did = doc_of[uid]
        else:
            did = doc_of_unit(uid)
        if did not in best or score > best[did]:
            best[did] = score
    return RankedList.from_scores(best)


def run_pipeline(query: str, cfg: PipelineConfig) -> RankedList:
    """Retrieve a pool of max(depth_d, k) candidates, optionally rerank the
    first depth_d, optionally aggregate passages to documents, truncate to k."""
    pool = max(cfg.depth_d, cfg.k)
    ranked = cfg.retriever.search(query, pool)
    if cfg.reranker is not None and ranked.entries:
        d = min(cfg.depth_d, len(ranked.entries))
        window = ranked.entries[:d]
        candidates = [(uid, cfg.retriever.unit_text(uid)) for uid, _ in window]
        try:
            new_scores = cfg.reranker.score(query, candidates)
        except ScorerError as e:
            raise PipelineError("rerank", str(e)) from e
        if len(new_scores) != len(candidates):
            raise PipelineError("rerank", f"scorer returned {len(new_scores)} scores for {len(candidates)} candidates")
        ranked = rerank_top(ranked, d, {uid: s for (uid, _), s in zip(candidates, new_scores)})
    if cfg.maxp:
        ranked = maxp_aggregate(ranked)
    return ranked.truncate(cfg.k)
