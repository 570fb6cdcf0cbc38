"""HTTP service speaking the scorer wire protocol.

POST /score  {"query": str, "candidates": [{"id": str, "text": str}, ...]}
          -> {"scores": [float, ...]} order-aligned with candidates, plus an
             optional "rationales": [str, ...] for models that emit them.
GET /healthz -> {"status": "ok", "model": <model_id>}

Candidate texts are truncated to max_input_tokens whitespace tokens before
scoring, and each request is scored in batch_size micro-batches; neither is
observable in the response beyond the truncation itself.
"""
from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .models import ScorerModelConfig, load_model


class RequestShapeError(Exception):
    pass


def truncate_tokens(text: str, max_tokens: int) -> str:
    toks = text.split()
    if len(toks) <= max_tokens:
        return text
    return " ".join(toks[:max_tokens])


def parse_score_request(body: bytes) -> tuple[str, list[tuple[str, str]]]:
    try:
        req = json.loads(body)
    except ValueError:
        raise RequestShapeError("body is not valid JSON")
    if not isinstance(req, dict):
        raise RequestShapeError("body must be a JSON object")
    query = req.get("query")
    if not isinstance(query, str):
        raise RequestShapeError("missing or non-string query")
    cands = req.get("candidates")
    if not isinstance(cands, list):
        raise RequestShapeError("missing or non-list candidates")
    parsed = []
    for i, c in enumerate(cands):
        if not isinstance(c, dict) or not isinstance(c.get("id"), str) or not isinstance(c.get("text"), str):
            raise RequestShapeError(f"candidate {i} must be an object with string id and text")
        parsed.append((c["id"], c["text"]))
    return query, parsed


def score_request(model, cfg: ScorerModelConfig, query: str, candidates: list[tuple[str, str]]) -> dict:
    texts = [truncate_tokens(text, cfg.max_input_tokens) for _, text in candidates]
    scores: list[float] = []
    rationales: list[str] = []
    for start in range(0, len(texts), cfg.batch_size):
        chunk = texts[start : start + cfg.batch_size]
        scores.extend(model.score_batch(query, chunk))
        if model.emits_rationales:
            rationales.extend(model.rationales(query, chunk))
    payload: dict = {"scores": scores}
    if model.emits_rationales:
        payload["rationales"] = rationales
    return payload


class _Handler(BaseHTTPRequestHandler):
    def _send(self, status: int, payload: dict) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self) -> None:
        svc = self.server.scorer  # type: ignore[attr-defined]
        if self.path == "/healthz":
            self._send(200, {"status": "ok", "model": svc.cfg.model_id})
        else:
            self._send(404, {"error": f"no route {self.path}"})

    def do_POST(self) -> None:
        svc = self.server.scorer  # type: ignore[attr-defined]
        if self.path != "/score":
            self._send(404, {"error": f"no route {self.path}"})
            return
        length = int(self.headers.get("Content-Length", 0))
        body = self.rfile.read(length)
        try:
            query, candidates = parse_score_request(body)
        except RequestShapeError as e:
            self._send(400, {"error": str(e)})
            return
        # one request at a time keeps per-request score order trivially aligned
        with svc.lock:
            payload = score_request(svc.model, svc.cfg, query, candidates)
        self._send(200, payload)

    def log_message(self, *args) -> None:
        pass


@dataclass
class RunningScorer:
    server: ThreadingHTTPServer
    thread: threading.Thread
    cfg: ScorerModelConfig

    @property
    def address(self) -> str:
        host, port = self.server.server_address[:2]
        return f"http://{host}:{port}"

    def close(self) -> None:
        self.server.shutdown()
        self.server.server_close()
        self.thread.join(timeout=5)


class _ScorerState:
    def __init__(self, model, cfg: ScorerModelConfig):
        self.model = model
        self.cfg = cfg
        self.lock = threading.Lock()


def serve_scorer(cfg: ScorerModelConfig, host: str = "127.0.0.1", port: int = 0) -> RunningScorer:
    """Start the sidecar; model load failures surface before binding."""
    model = load_model(cfg.model_id)
    server = ThreadingHTTPServer((host, port), _Handler)
    server.scorer = _ScorerState(model, cfg)  # type: ignore[attr-defined]
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return RunningScorer(server=server, thread=thread, cfg=cfg)
