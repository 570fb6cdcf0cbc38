"""Black-box conformance checks for any endpoint claiming the scorer protocol.

Every check failure lands in the report; nothing raises past the caller, so
a broken endpoint yields a readable list instead of a stack trace.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import requests


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class ConformanceReport:
    endpoint: str
    checks: list[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def format_lines(self) -> str:
        lines = []
        for c in self.checks:
            mark = "PASS" if c.passed else "FAIL"
            suffix = f"  ({c.detail})" if c.detail and not c.passed else ""
            lines.append(f"{mark}  {c.name}{suffix}")
        verdict = "conformant" if self.passed else "NOT conformant"
        lines.append(f"{self.endpoint}: {verdict}")
        return "\n".join(lines)


_CANDIDATES = [
    {"id": "c1", "text": "short text"},
    {"id": "c2", "text": "a noticeably longer candidate text with many more words"},
    {"id": "c3", "text": "medium length candidate here"},
]
_QUERY = "candidate text"


def _post_score(endpoint: str, payload, timeout: float):
    return requests.post(f"{endpoint}/score", json=payload, timeout=timeout)


def _score_list(resp) -> list[float]:
    data = resp.json()
    scores = data["scores"]
    if not isinstance(scores, list) or any(isinstance(s, bool) or not isinstance(s, (int, float)) for s in scores):
        raise ValueError(f"scores is not a list of numbers: {scores!r}")
    return [float(s) for s in scores]


def conformance_check(endpoint: str, timeout: float = 10.0,
                      max_input_tokens: int | None = None) -> ConformanceReport:
    endpoint = endpoint.rstrip("/")
    report = ConformanceReport(endpoint=endpoint)

    def run(name: str, fn) -> None:
        try:
            detail = fn()
            report.checks.append(CheckResult(name=name, passed=True, detail=detail or ""))
        except Exception as e:
            report.checks.append(CheckResult(name=name, passed=False, detail=str(e)))

    def check_health():
        resp = requests.get(f"{endpoint}/healthz", timeout=timeout)
        assert resp.status_code == 200, f"healthz status {resp.status_code}"
        data = resp.json()
        assert data.get("status") == "ok", f"healthz body {data!r}"
        assert isinstance(data.get("model"), str) and data["model"], "healthz missing model id"
        return f"model={data['model']}"

    def check_length():
        resp = _post_score(endpoint, {"query": _QUERY, "candidates": _CANDIDATES}, timeout)
        assert resp.status_code == 200, f"status {resp.status_code}"
        scores = _score_list(resp)
        assert len(scores) == len(_CANDIDATES), f"{len(scores)} scores for {len(_CANDIDATES)} candidates"

    def check_alignment():
        # a rotation and a singleton defeat order-symmetric misalignments
        # (an exact reversal probe would cancel itself out)
        orders = [_CANDIDATES, _CANDIDATES[1:] + _CANDIDATES[:1], _CANDIDATES[:1]]
        maps = []
        for cands in orders:
            scores = _score_list(_post_score(endpoint, {"query": _QUERY, "candidates": cands}, timeout))
            assert len(scores) == len(cands), f"{len(scores)} scores for {len(cands)} candidates"
            maps.append({c["id"]: s for c, s in zip(cands, scores)})
        for other in maps[1:]:
            for cid, score in other.items():
                assert maps[0][cid] == score, (
                    f"score for {cid} moved with position: {maps[0][cid]} vs {score}")

    def check_determinism():
        payload = {"query": _QUERY, "candidates": _CANDIDATES}
        first = _score_list(_post_score(endpoint, payload, timeout))
        second = _score_list(_post_score(endpoint, payload, timeout))
        assert first == second, f"repeated request changed scores: {first} vs {second}"

    def check_empty_candidates():
        resp = _post_score(endpoint, {"query": _QUERY, "candidates": []}, timeout)
        assert resp.status_code == 200, f"status {resp.status_code}"
        assert _score_list(resp) == [], "non-empty scores for empty candidates"

    def check_error_shape():
        resp = requests.post(f"{endpoint}/score", data=b"{not json",
                             headers={"Content-Type": "application/json"}, timeout=timeout)
        assert 400 <= resp.status_code < 500, f"malformed body got status {resp.status_code}"
        assert "error" in resp.json(), "4xx body lacks an error field"
        resp = _post_score(endpoint, {"query": _QUERY}, timeout)
        assert 400 <= resp.status_code < 500, f"missing candidates got status {resp.status_code}"

    def check_truncation():
        base = "shared prefix " * ((max_input_tokens // 2) + 1)
        a = {"id": "t1", "text": base}
        b = {"id": "t1", "text": base + " trailing difference beyond the input budget"}
        sa = _score_list(_post_score(endpoint, {"query": _QUERY, "candidates": [a]}, timeout))
        sb = _score_list(_post_score(endpoint, {"query": _QUERY, "candidates": [b]}, timeout))
        assert sa == sb, f"text beyond max_input_tokens changed the score: {sa} vs {sb}"

    run("healthz shape", check_health)
    run("score length", check_length)
    run("order alignment", check_alignment)
    run("determinism", check_determinism)
    run("empty candidates", check_empty_candidates)
    run("error shapes", check_error_shape)
    if max_input_tokens is not None:
        run("input truncation", check_truncation)
    return report
