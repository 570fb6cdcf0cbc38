"""Agent-facing tools over a corpus and pipeline, in-process and over HTTP.

HTTP surface: GET /search?q=...&k=... returns a SearchResult record,
GET /doc/{id} returns {"docid", "title", "text"}, GET /healthz returns
{"status": "ok"}.  Serving is read-only.
"""
from __future__ import annotations

import json
import logging
import threading
import time
import urllib.parse
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .corpus import Corpus, Document, TokenizerAdapter, WHITESPACE, doc_of_unit
from .pipeline import PipelineConfig, run_pipeline

log = logging.getLogger(__name__)

SNIPPET_TOKENS = 512


class ToolError(Exception):
    pass


class NotFoundError(ToolError):
    pass


@dataclass
class SearchResult:
    items: list[dict] = field(default_factory=list)
    k_requested: int = 0

    def to_dict(self) -> dict:
        return {"items": self.items, "k_requested": self.k_requested}

    @classmethod
    def from_dict(cls, d: dict) -> "SearchResult":
        return cls(items=list(d.get("items", [])), k_requested=int(d.get("k_requested", 0)))

    def doc_ids(self) -> list[str]:
        return [doc_of_unit(item["id"]) for item in self.items]


class ToolService:
    """search/get_document with pipeline-backed ranking and snippet truncation."""

    def __init__(
        self,
        corpus: Corpus,
        cfg: PipelineConfig,
        adapter: TokenizerAdapter = WHITESPACE,
        snippet_tokens: int = SNIPPET_TOKENS,
    ):
        self.corpus = corpus
        self.cfg = cfg
        self.adapter = adapter
        self.snippet_tokens = snippet_tokens
        self.search_count = 0
        self.getdoc_count = 0

    def _item_text(self, unit_id: str) -> str:
        if unit_id in self.corpus:
            return self.corpus.get(unit_id).text
        return self.cfg.retriever.unit_text(unit_id)

    def search(self, query: str, k: int | None = None) -> SearchResult:
        self.search_count += 1
        k_req = self.cfg.k if k is None else k
        if k_req < 1:
            raise ToolError("k must be >= 1")
        cfg = self.cfg
        if k_req != cfg.k:
            cfg = PipelineConfig(
                retriever=cfg.retriever,
                reranker=cfg.reranker,
                depth_d=max(cfg.depth_d, k_req),
                k=k_req,
                maxp=cfg.maxp,
            )
        ranked = run_pipeline(query, cfg)
        items = []
        for uid, score in ranked.entries:
            doc = self.corpus.get(doc_of_unit(uid)) if doc_of_unit(uid) in self.corpus else None
            item = {
                "id": uid,
                "text": self.adapter.truncate(self._item_text(uid), self.snippet_tokens),
                "score": score,
            }
            if doc is not None and doc.title:
                item["title"] = doc.title
            items.append(item)
        return SearchResult(items=items, k_requested=k_req)

    def get_document(self, unit_id: str) -> Document:
        """Full untruncated document; passage ids resolve to their source document."""
        self.getdoc_count += 1
        doc_id = doc_of_unit(unit_id)
        if doc_id not in self.corpus:
            raise NotFoundError(f"no document {doc_id!r}")
        return self.corpus.get(doc_id)


class _ToolHandler(BaseHTTPRequestHandler):
    service: ToolService  # set on the server class

    def _send(self, status: int, payload: dict) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self) -> None:  # noqa: N802 (http.server API)
        t0 = time.perf_counter()
        parsed = urllib.parse.urlparse(self.path)
        status = 200
        try:
            if parsed.path == "/healthz":
                self._send(200, {"status": "ok"})
            elif parsed.path == "/search":
                qs = urllib.parse.parse_qs(parsed.query)
                query = qs.get("q", [""])[0]
                k = int(qs.get("k", [str(self.server.service.cfg.k)])[0])  # type: ignore[attr-defined]
                result = self.server.service.search(query, k)  # type: ignore[attr-defined]
                self._send(200, result.to_dict())
            elif parsed.path.startswith("/doc/"):
                unit_id = urllib.parse.unquote(parsed.path[len("/doc/") :])
                doc = self.server.service.get_document(unit_id)  # type: ignore[attr-defined]
                self._send(200, {"docid": doc.doc_id, "title": doc.title, "text": doc.text})
            else:
                status = 404
                self._send(404, {"error": f"no route {parsed.path}"})
        except NotFoundError as e:
            status = 404
            self._send(404, {"error": str(e)})
        except Exception as e:  # malformed params and the like
            status = 400
            self._send(400, {"error": str(e)})
        log.info("%s -> %d in %.1fms", self.path, status, (time.perf_counter() - t0) * 1e3)

    def log_message(self, *args) -> None:  # request lines go through logging instead
        pass


class RunningService:
    def __init__(self, server: ThreadingHTTPServer, thread: threading.Thread):
        self.server = server
        self.thread = thread

    @property
    def address(self) -> str:
        host, port = self.server.server_address[:2]
        return f"http://{host}:{port}"

    def close(self) -> None:
        self.server.shutdown()
        self.server.server_close()
        self.thread.join(timeout=5)


def serve_http(service: ToolService, host: str = "127.0.0.1", port: int = 0) -> RunningService:
    """Start the tool service on a background thread; port 0 picks a free port."""
    server = ThreadingHTTPServer((host, port), _ToolHandler)
    server.service = service  # type: ignore[attr-defined]
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return RunningService(server, thread)
