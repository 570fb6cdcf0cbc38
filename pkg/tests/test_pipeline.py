import json
import random

import pytest
from hypothesis import given, settings, strategies as st

from deepir import (
    Bm25Params,
    Bm25Retriever,
    LocalScorer,
    PipelineConfig,
    PipelineError,
    RankedList,
    RemoteScorer,
    ScorerEndpoint,
    ScorerLengthMismatchError,
    ScorerResponseError,
    ScorerTimeoutError,
    ScorerUnreachableError,
    build_index,
    check_scorer_health,
    maxp_aggregate,
    rerank_top,
    run_pipeline,
    score_remote,
)
from deepir.pipeline import ScorerError


def make_ranked(n, start=100.0):
    return RankedList([(f"u{i:03d}", start - i) for i in range(n)])


class TestRerankTop:
    def test_reorders_window_by_new_scores(self):
        ranked = make_ranked(5)
        scores = {"u000": 0.1, "u001": 0.9, "u002": 0.5, "u003": 0.0, "u004": -1.0}
        out = rerank_top(ranked, 3, scores)
        assert out.ids() == ["u001", "u002", "u000", "u003", "u004"]
        assert out.entries[0][1] == 0.9

    def test_ties_keep_original_rank(self):
        ranked = make_ranked(4)
        out = rerank_top(ranked, 4, {u: 1.0 for u in ranked.ids()})
        assert out.ids() == ["u000", "u001", "u002", "u003"]

    def test_tail_untouched(self):
        ranked = make_ranked(10)
        out = rerank_top(ranked, 4, {f"u{i:03d}": float(i) for i in range(4)})
        assert out.entries[4:] == ranked.entries[4:]
        assert json.dumps(out.entries[4:]) == json.dumps(ranked.entries[4:])

    def test_d_beyond_length_reranks_everything(self):
        ranked = make_ranked(3)
        out = rerank_top(ranked, 10, {"u000": 0.0, "u001": 1.0, "u002": 0.5})
        assert out.ids() == ["u001", "u002", "u000"]

    def test_d_one_identity_on_order(self):
        ranked = make_ranked(5)
        out = rerank_top(ranked, 1, {"u000": -3.0})
        assert out.ids() == ranked.ids()

    def test_missing_score_names_candidate(self):
        ranked = make_ranked(3)
        with pytest.raises(PipelineError, match="u001"):
            rerank_top(ranked, 3, {"u000": 1.0, "u002": 0.0})

    def test_d_zero_disallowed(self):
        with pytest.raises(ValueError):
            rerank_top(make_ranked(3), 0, {})

    @settings(max_examples=50)
    @given(st.integers(1, 30), st.integers(1, 30), st.integers(0, 2**32 - 1))
    def test_window_conservation(self, n, d, seed):
        rng = random.Random(seed)
        ranked = make_ranked(n)
        scores = {u: rng.random() for u in ranked.ids()}
        out = rerank_top(ranked, d, scores)
        w = min(d, n)
        assert sorted(u for u, _ in out.entries[:w]) == sorted(u for u, _ in ranked.entries[:w])
        assert out.entries[w:] == ranked.entries[w:]
        assert len(out) == n


class TestMaxp:
    def test_example(self):
        ranked = RankedList([("A#0", 0.7), ("A#3", 0.5), ("B#1", 0.6)])
        assert maxp_aggregate(ranked).entries == [("A", 0.7), ("B", 0.6)]

    def test_tie_by_doc_id(self):
        ranked = RankedList([("B#0", 0.5), ("A#0", 0.5)])
        assert maxp_aggregate(ranked).ids() == ["A", "B"]

    def test_idempotent_on_doc_ids(self):
        ranked = RankedList([("A", 0.7), ("B", 0.6)])
        once = maxp_aggregate(ranked)
        assert maxp_aggregate(once).entries == once.entries

    def test_explicit_mapping_missing_names_id(self):
        ranked = RankedList([("p1", 0.5)])
        with pytest.raises(PipelineError, match="p1"):
            maxp_aggregate(ranked, doc_of={"other": "d"})

    def test_explicit_mapping_used(self):
        ranked = RankedList([("p1", 0.5), ("p2", 0.9)])
        out = maxp_aggregate(ranked, doc_of={"p1": "d", "p2": "d"})
        assert out.entries == [("d", 0.9)]

    @settings(max_examples=40)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 200))
    def test_group_by_max_oracle(self, seed, n):
        rng = random.Random(seed)
        entries = {}
        for i in range(n):
            entries[f"d{rng.randint(0, 12)}#{i}"] = rng.random()
        ranked = RankedList.from_scores(entries)
        got = maxp_aggregate(ranked)
        best = {}
        for pid, score in entries.items():
            did = pid.split("#")[0]
            best[did] = max(best.get(did, float("-inf")), score)
        want = sorted(best.items(), key=lambda e: (-e[1], e[0]))
        assert got.entries == want


class TestPipelineConfig:
    def test_depth_must_cover_k_with_reranker(self, toy_index, toy_units):
        retriever = Bm25Retriever(toy_index, toy_units)
        with pytest.raises(ValueError):
            PipelineConfig(retriever=retriever, reranker=LocalScorer(lambda q, c: [0.0] * len(c)), depth_d=3, k=5)

    def test_depth_equal_k_allowed(self, toy_index, toy_units):
        retriever = Bm25Retriever(toy_index, toy_units)
        PipelineConfig(retriever=retriever, reranker=LocalScorer(lambda q, c: [0.0] * len(c)), depth_d=5, k=5)

    def test_k_validation(self, toy_index, toy_units):
        with pytest.raises(ValueError):
            PipelineConfig(retriever=Bm25Retriever(toy_index, toy_units), k=0)


def length_graded_retriever(n=60):
    units = {f"u{i:02d}": "needle " + " ".join(["pad"] * i) for i in range(n)}
    index = build_index(units)
    return Bm25Retriever(index, units, Bm25Params(k1=0.9, b=1.0))


class TestRunPipeline:
    def test_no_reranker_matches_retriever_topk(self, toy_index, toy_units):
        retriever = Bm25Retriever(toy_index, toy_units)
        cfg = PipelineConfig(retriever=retriever, k=2, depth_d=10)
        assert run_pipeline("cherry", cfg).entries == retriever.search("cherry", 2).entries

    def test_boost_from_rank_37(self):
        retriever = length_graded_retriever(60)
        initial = retriever.search("needle", 50)
        target = initial.ids()[36]  # initial rank 37
        scorer = LocalScorer(lambda q, cands: [1.0 if uid == target else 0.0 for uid, _ in cands])
        cfg = PipelineConfig(retriever=retriever, reranker=scorer, depth_d=50, k=5)
        out = run_pipeline("needle", cfg)
        assert len(out) == 5
        assert out.ids()[0] == target
        assert out.ids()[1:] == initial.ids()[:4]

    def test_empty_retrieval_is_empty_not_error(self, toy_index, toy_units):
        retriever = Bm25Retriever(toy_index, toy_units)
        scorer = LocalScorer(lambda q, c: [0.0] * len(c))
        cfg = PipelineConfig(retriever=retriever, reranker=scorer, depth_d=5, k=5)
        assert run_pipeline("zebra", cfg).entries == []

    def test_scorer_failure_carries_stage(self, toy_index, toy_units):
        def boom(query, cands):
            raise ScorerTimeoutError("deadline")

        retriever = Bm25Retriever(toy_index, toy_units)
        cfg = PipelineConfig(retriever=retriever, reranker=LocalScorer(boom), depth_d=5, k=5)
        with pytest.raises(PipelineError, match="rerank"):
            run_pipeline("cherry", cfg)

    def test_maxp_aggregates_before_truncation(self):
        # Two passages of the same doc hold ranks 1-2; with maxp the second
        # doc must still appear in the top-2.
        units = {
            "a#0": "needle needle needle",
            "a#1": "needle needle needle needle",
            "b#0": "needle pad pad pad",
        }
        index = build_index(units, unit_kind="passage")
        retriever = Bm25Retriever(index, units, Bm25Params(k1=0.9, b=0.0))
        cfg = PipelineConfig(retriever=retriever, k=2, depth_d=3, maxp=True)
        out = run_pipeline("needle", cfg)
        assert out.ids() == ["a", "b"]

    def test_monotone_pool_property(self):
        retriever = length_graded_retriever(40)
        rng = random.Random(5)
        fixed = {f"u{i:02d}": rng.random() for i in range(40)}
        scorer = LocalScorer(lambda q, cands: [fixed[uid] for uid, _ in cands])
        shallow = run_pipeline("needle", PipelineConfig(retriever=retriever, reranker=scorer, depth_d=10, k=5))
        deep = run_pipeline("needle", PipelineConfig(retriever=retriever, reranker=scorer, depth_d=25, k=5))
        initial_ids = retriever.search("needle", 40).ids()
        newcomers = set(deep.ids()) - set(shallow.ids())
        for uid in newcomers:
            assert 10 < initial_ids.index(uid) + 1 <= 25


class TestScoreRemote:
    def test_batching_and_concatenation(self, stub_scorer_factory):
        server = stub_scorer_factory(fn=lambda q, cands: [float(len(t)) for _, t in cands])
        endpoint = ScorerEndpoint(address=server.address, batch_size=3)
        cands = [(f"c{i}", "x" * (i + 1)) for i in range(7)]
        scores = score_remote(endpoint, "q", cands)
        assert scores == [float(i + 1) for i in range(7)]
        assert [len(b) for b in server.batches] == [3, 3, 1]

    def test_single_batch_when_large(self, stub_scorer_factory):
        server = stub_scorer_factory()
        endpoint = ScorerEndpoint(address=server.address, batch_size=32)
        score_remote(endpoint, "q", [("a", "t"), ("b", "t")])
        assert [len(b) for b in server.batches] == [2]

    def test_length_mismatch(self, stub_scorer_factory):
        server = stub_scorer_factory(drop_one=True)
        endpoint = ScorerEndpoint(address=server.address, batch_size=7)
        with pytest.raises(ScorerLengthMismatchError):
            score_remote(endpoint, "q", [(f"c{i}", "t") for i in range(7)])

    def test_malformed_response(self, stub_scorer_factory):
        server = stub_scorer_factory(raw_body=b'{"nope": 1}')
        endpoint = ScorerEndpoint(address=server.address)
        with pytest.raises(ScorerResponseError):
            score_remote(endpoint, "q", [("a", "t")])

    def test_non_json_response(self, stub_scorer_factory):
        server = stub_scorer_factory(raw_body=b"garbage")
        endpoint = ScorerEndpoint(address=server.address)
        with pytest.raises(ScorerResponseError):
            score_remote(endpoint, "q", [("a", "t")])

    def test_timeout_kind(self, stub_scorer_factory):
        server = stub_scorer_factory(sleep=0.6)
        endpoint = ScorerEndpoint(address=server.address, timeout=0.15)
        with pytest.raises(ScorerTimeoutError):
            score_remote(endpoint, "q", [("a", "t")])

    def test_unreachable_kind(self):
        endpoint = ScorerEndpoint(address="http://127.0.0.1:9", timeout=0.5)
        with pytest.raises(ScorerUnreachableError):
            score_remote(endpoint, "q", [("a", "t")])

    def test_error_kinds_are_distinct(self):
        kinds = {ScorerTimeoutError, ScorerUnreachableError, ScorerResponseError, ScorerLengthMismatchError}
        assert len(kinds) == 4
        assert all(issubclass(k, ScorerError) for k in kinds)

    def test_batch_size_validation(self):
        with pytest.raises(ValueError):
            ScorerEndpoint(address="http://x", batch_size=0)

    def test_healthz(self, stub_scorer_factory):
        server = stub_scorer_factory(model="toy-model")
        health = check_scorer_health(ScorerEndpoint(address=server.address))
        assert health == {"status": "ok", "model": "toy-model"}

    def test_remote_scorer_in_pipeline(self, toy_index, toy_units, stub_scorer_factory):
        server = stub_scorer_factory(fn=lambda q, cands: [-float(len(t)) for _, t in cands])
        retriever = Bm25Retriever(toy_index, toy_units)
        scorer = RemoteScorer(ScorerEndpoint(address=server.address))
        cfg = PipelineConfig(retriever=retriever, reranker=scorer, depth_d=3, k=3)
        out = run_pipeline("cherry", cfg)
        local = {uid: -float(len(toy_units[uid])) for uid in out.ids()}
        expected = rerank_top(retriever.search("cherry", 3), 3, local)
        assert out.entries == expected.entries
