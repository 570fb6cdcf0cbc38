"""Iterative search agent loop: turns, budgets, reformulation, episode records.

Budget accounting rules (whitespace-token based unless another adapter is
passed):

- An iteration is one agent invocation.  The loop stops before invocation
  max_iterations + 1 and tags the episode iteration_cap.
- Output tokens count the agent's own emissions: reasoning text, raw search
  queries, get_document ids, and the final answer.  An emission that would
  push the total past max_output_tokens is not recorded; the episode stops
  with output_limit and budget_used keeps the pre-breach value.
- Context tokens count the user query plus everything appended to the agent's
  context: its own emissions and serialized tool payloads.  A tool payload
  that would overflow context_window_tokens is withheld (the step is recorded
  with delivered=False) and the episode stops with context_limit.  Recorded
  budgets therefore never exceed the configured budgets, and the context
  total can be recomputed from the episode alone (replay_context_tokens).
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, asdict
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence

import requests

from .corpus import TokenizerAdapter, WHITESPACE
from .toolsvc import NotFoundError, SearchResult, ToolService

EPISODE_SCHEMA_VERSION = 1

TERMINATIONS = ("answered", "iteration_cap", "context_limit", "output_limit", "agent_error")

DEFAULT_SYSTEM_PROMPT = (
    "You answer questions using a fixed document collection. "
    "Use the search tool to find passages and the get_document tool to read a "
    "full document by id. When you know the answer, reply with the answer text "
    "only, no tool call."
)

TOOL_SCHEMAS = [
    {
        "type": "function",
        "function": {
            "name": "search",
            "description": "Search the collection; returns the top ranked passages or documents.",
            "parameters": {
                "type": "object",
                "properties": {"query": {"type": "string", "description": "search query"}},
                "required": ["query"],
            },
        },
    },
    {
        "type": "function",
        "function": {
            "name": "get_document",
            "description": "Fetch the full text of one document by id.",
            "parameters": {
                "type": "object",
                "properties": {"docid": {"type": "string", "description": "document id"}},
                "required": ["docid"],
            },
        },
    },
]


class AgentError(Exception):
    """Agent-side failure (transport, protocol, exhausted script)."""


@dataclass
class Turn:
    kind: str  # reason | search | get_doc | answer
    text: str | None = None
    query: str | None = None
    doc_id: str | None = None
    call_id: str | None = None

    @classmethod
    def reason(cls, text: str) -> "Turn":
        return cls(kind="reason", text=text)

    @classmethod
    def search(cls, query: str, call_id: str | None = None) -> "Turn":
        return cls(kind="search", query=query, call_id=call_id)

    @classmethod
    def get_doc(cls, doc_id: str, call_id: str | None = None) -> "Turn":
        return cls(kind="get_doc", doc_id=doc_id, call_id=call_id)

    @classmethod
    def answer(cls, text: str) -> "Turn":
        return cls(kind="answer", text=text)


@dataclass
class Step:
    kind: str  # reasoning | search | get_doc | answer
    reasoning_text: str | None = None
    query_raw: str | None = None
    query_sent: str | None = None
    results: SearchResult | None = None
    doc_id: str | None = None
    doc_tokens: int | None = None
    answer_text: str | None = None
    reform_failed: bool = False
    delivered: bool = True


@dataclass
class BudgetUsage:
    iterations: int = 0
    output_tokens: int = 0
    context_tokens: int = 0


@dataclass
class Budgets:
    max_iterations: int = 100
    max_output_tokens: int = 40000
    context_window_tokens: int = 131072


@dataclass
class Episode:
    qid: str
    user_query: str
    steps: list[Step] = field(default_factory=list)
    final_answer: str | None = None
    termination: str = "answered"
    budget_used: BudgetUsage = field(default_factory=BudgetUsage)


def _q2q_exemplars_path() -> str:
    return os.path.join(os.path.dirname(__file__), "data", "q2q_exemplars.txt")


def load_exemplars(path: str | None = None) -> list[str]:
    """Exemplar natural-language questions for the reformulation prompt."""
    with open(path or _q2q_exemplars_path(), encoding="utf-8") as fh:
        return [line.strip() for line in fh if line.strip()]


@dataclass
class ReformulatorConfig:
    mode: str = "off"  # off | Q | Q_plus_R
    llm: object | None = None  # needs .complete(prompt) -> str
    exemplar_questions: list[str] | None = None

    def __post_init__(self) -> None:
        if self.mode not in ("off", "Q", "Q_plus_R"):
            raise ValueError(f"unknown reformulation mode {self.mode!r}")
        if self.mode != "off" and self.llm is None:
            raise ValueError("reformulation needs an llm client")


Q2Q_PROMPT = """You turn terse web search queries into natural-language questions.
Write one question asking for exactly what the query tries to find, in the style of these examples:
{exemplars}

{reasoning_block}Search query: {query}

Reply with the question only."""


def reformulate_q2q(query_raw: str, reasoning: str | None, cfg: ReformulatorConfig) -> tuple[str, bool]:
    """Rewrite a raw search query as a natural-language question.

    Mode Q uses the query alone; Q_plus_R also passes the most recent
    reasoning text.  Returns (query_sent, failed): on any client failure or an
    empty completion the raw query passes through unchanged with failed=True.
    """
    if cfg.mode == "off":
        return query_raw, False
    exemplars = cfg.exemplar_questions if cfg.exemplar_questions is not None else load_exemplars()
    block = ""
    if cfg.mode == "Q_plus_R" and reasoning:
        block = f"Recent reasoning from the searcher, for context:\n{reasoning}\n\n"
    prompt = Q2Q_PROMPT.format(exemplars="\n".join(f"- {q}" for q in exemplars), reasoning_block=block, query=query_raw)
    try:
        out = cfg.llm.complete(prompt).strip()  # type: ignore[union-attr]
    except Exception:
        return query_raw, True
    if not out:
        return query_raw, True
    return out, False


def serialize_search_result(result: SearchResult) -> str:
    """Canonical payload fed back to the agent and counted against context."""
    return json.dumps({"results": result.items}, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def serialize_document(doc_id: str, title: str | None, text: str) -> str:
    return json.dumps({"docid": doc_id, "title": title, "text": text}, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


class ScriptedAgent:
    """Replays a fixed turn sequence; raises AgentError when the script runs out."""

    def __init__(self, turns: Sequence[Turn]):
        self._turns = list(turns)
        self._pos = 0
        self.observations: list[str] = []

    def begin(self, user_query: str) -> None:
        self._pos = 0
        self.observations = []

    def next_turn(self) -> Turn:
        if self._pos >= len(self._turns):
            raise AgentError("script exhausted without an answer")
        turn = self._turns[self._pos]
        self._pos += 1
        return turn

    def observe(self, payload: str) -> None:
        self.observations.append(payload)


class ChatCompletionClient:
    """Minimal chat-completions client used for reformulation and judging."""

    def __init__(self, base_url: str, model: str, timeout: float = 60.0):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.timeout = timeout

    def complete(self, prompt: str) -> str:
        resp = requests.post(
            self.base_url + "/v1/chat/completions",
            json={"model": self.model, "messages": [{"role": "user", "content": prompt}]},
            timeout=self.timeout,
        )
        resp.raise_for_status()
        return resp.json()["choices"][0]["message"]["content"]


class ChatAgent:
    """Remote chat-completions agent speaking the search/get_document tool schema."""

    def __init__(
        self,
        base_url: str,
        model: str,
        reasoning_effort: str | None = None,
        system_prompt: str = DEFAULT_SYSTEM_PROMPT,
        timeout: float = 300.0,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.reasoning_effort = reasoning_effort
        self.system_prompt = system_prompt
        self.timeout = timeout
        self._messages: list[dict] = []
        self._queue: list[Turn] = []
        self._pending_call_id: str | None = None

    def begin(self, user_query: str) -> None:
        self._messages = [
            {"role": "system", "content": self.system_prompt},
            {"role": "user", "content": user_query},
        ]
        self._queue = []
        self._pending_call_id = None

    def _request(self) -> dict:
        body: dict = {"model": self.model, "messages": self._messages, "tools": TOOL_SCHEMAS}
        if self.reasoning_effort is not None:
            body["reasoning_effort"] = self.reasoning_effort
        try:
            resp = requests.post(self.base_url + "/v1/chat/completions", json=body, timeout=self.timeout)
        except requests.RequestException as e:
            raise AgentError(f"agent endpoint unreachable: {e}") from None
        if resp.status_code != 200:
            raise AgentError(f"agent endpoint returned status {resp.status_code}")
        try:
            return resp.json()["choices"][0]["message"]
        except (ValueError, KeyError, IndexError) as e:
            raise AgentError(f"malformed agent response: {e}") from None

    def next_turn(self) -> Turn:
        if not self._queue:
            msg = self._request()
            self._messages.append(msg)
            turns: list[Turn] = []
            reasoning = msg.get("reasoning") or msg.get("reasoning_content")
            if reasoning:
                turns.append(Turn.reason(str(reasoning)))
            for tc in msg.get("tool_calls") or []:
                try:
                    name = tc["function"]["name"]
                    args = json.loads(tc["function"]["arguments"])
                except (KeyError, TypeError, ValueError) as e:
                    raise AgentError(f"malformed tool call: {e}") from None
                if name == "search":
                    turns.append(Turn.search(str(args["query"]), call_id=tc.get("id")))
                elif name == "get_document":
                    turns.append(Turn.get_doc(str(args["docid"]), call_id=tc.get("id")))
                else:
                    raise AgentError(f"unknown tool {name!r}")
            if not (msg.get("tool_calls")) and msg.get("content"):
                turns.append(Turn.answer(str(msg["content"])))
            if not turns:
                raise AgentError("agent produced neither a tool call nor an answer")
            self._queue = turns
        turn = self._queue.pop(0)
        self._pending_call_id = turn.call_id
        return turn

    def observe(self, payload: str) -> None:
        msg = {"role": "tool", "content": payload}
        if self._pending_call_id:
            msg["tool_call_id"] = self._pending_call_id
        self._messages.append(msg)


def _last_reasoning(steps: list[Step]) -> str | None:
    for step in reversed(steps):
        if step.kind == "reasoning":
            return step.reasoning_text
    return None


def run_episode(
    user_query: str,
    agent,
    tools: ToolService,
    budgets: Budgets | None = None,
    reform: ReformulatorConfig | None = None,
    qid: str = "",
    adapter: TokenizerAdapter = WHITESPACE,
) -> Episode:
    """Drive one agent over the tools until it answers or a budget trips."""
    budgets = budgets or Budgets()
    reform = reform or ReformulatorConfig()
    steps: list[Step] = []
    out_used = 0
    ctx_used = adapter.count(user_query)
    iters = 0
    final_answer: str | None = None
    termination: str | None = None

    agent.begin(user_query)
    if ctx_used > budgets.context_window_tokens:
        termination = "context_limit"

    while termination is None:
        if iters >= budgets.max_iterations:
            termination = "iteration_cap"
            break
        try:
            turn = agent.next_turn()
        except AgentError:
            termination = "agent_error"
            break
        iters += 1

        if turn.kind == "reason":
            t = adapter.count(turn.text or "")
            if out_used + t > budgets.max_output_tokens:
                termination = "output_limit"
                break
            if ctx_used + t > budgets.context_window_tokens:
                termination = "context_limit"
                break
            out_used += t
            ctx_used += t
            steps.append(Step(kind="reasoning", reasoning_text=turn.text))

        elif turn.kind == "search":
            query_raw = turn.query or ""
            qt = adapter.count(query_raw)
            if out_used + qt > budgets.max_output_tokens:
                termination = "output_limit"
                break
            if ctx_used + qt > budgets.context_window_tokens:
                termination = "context_limit"
                break
            out_used += qt
            ctx_used += qt
            query_sent, failed = reformulate_q2q(query_raw, _last_reasoning(steps), reform)
            result = tools.search(query_sent)
            payload = serialize_search_result(result)
            step = Step(
                kind="search",
                query_raw=query_raw,
                query_sent=query_sent,
                results=result,
                reform_failed=failed,
            )
            pt = adapter.count(payload)
            if ctx_used + pt > budgets.context_window_tokens:
                step.delivered = False
                steps.append(step)
                termination = "context_limit"
                break
            ctx_used += pt
            steps.append(step)
            agent.observe(payload)

        elif turn.kind == "get_doc":
            doc_id = turn.doc_id or ""
            it = adapter.count(doc_id)
            if out_used + it > budgets.max_output_tokens:
                termination = "output_limit"
                break
            if ctx_used + it > budgets.context_window_tokens:
                termination = "context_limit"
                break
            out_used += it
            ctx_used += it
            try:
                doc = tools.get_document(doc_id)
                payload = serialize_document(doc.doc_id, doc.title, doc.text)
            except NotFoundError as e:
                payload = json.dumps({"error": str(e)}, sort_keys=True, separators=(",", ":"))
            pt = adapter.count(payload)
            step = Step(kind="get_doc", doc_id=doc_id, doc_tokens=pt)
            if ctx_used + pt > budgets.context_window_tokens:
                step.delivered = False
                steps.append(step)
                termination = "context_limit"
                break
            ctx_used += pt
            steps.append(step)
            agent.observe(payload)

        elif turn.kind == "answer":
            t = adapter.count(turn.text or "")
            if out_used + t > budgets.max_output_tokens:
                termination = "output_limit"
                break
            out_used += t
            steps.append(Step(kind="answer", answer_text=turn.text))
            final_answer = turn.text
            termination = "answered"

        else:
            raise ValueError(f"unknown turn kind {turn.kind!r}")

    return Episode(
        qid=qid,
        user_query=user_query,
        steps=steps,
        final_answer=final_answer,
        termination=termination,
        budget_used=BudgetUsage(iterations=iters, output_tokens=out_used, context_tokens=ctx_used),
    )


def replay_context_tokens(episode: Episode, adapter: TokenizerAdapter = WHITESPACE) -> int:
    """Recompute context token usage from the recorded episode alone."""
    total = adapter.count(episode.user_query)
    for step in episode.steps:
        if step.kind == "reasoning":
            total += adapter.count(step.reasoning_text or "")
        elif step.kind == "search":
            total += adapter.count(step.query_raw or "")
            if step.delivered and step.results is not None:
                total += adapter.count(serialize_search_result(step.results))
        elif step.kind == "get_doc":
            total += adapter.count(step.doc_id or "")
            if step.delivered and step.doc_tokens is not None:
                total += step.doc_tokens
    return total


def count_episode(episode: Episode) -> dict:
    return {
        "search_calls": sum(1 for s in episode.steps if s.kind == "search"),
        "getdoc_calls": sum(1 for s in episode.steps if s.kind == "get_doc"),
        "answered": episode.termination == "answered",
    }


def run_many(
    items: Sequence[tuple[str, str]],
    agent_factory: Callable[[str], object],
    tools: ToolService,
    budgets: Budgets | None = None,
    reform: ReformulatorConfig | None = None,
    parallelism: int = 4,
    adapter: TokenizerAdapter = WHITESPACE,
) -> list[Episode]:
    """Run (qid, query) items concurrently with a fresh agent per episode."""
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")

    def one(item: tuple[str, str]) -> Episode:
        qid, query = item
        return run_episode(query, agent_factory(qid), tools, budgets, reform, qid=qid, adapter=adapter)

    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(one, items))


def episode_to_dict(episode: Episode) -> dict:
    d = asdict(episode)
    for step, rec in zip(episode.steps, d["steps"]):
        rec["results"] = step.results.to_dict() if step.results is not None else None
    return d


def episode_from_dict(d: dict) -> Episode:
    steps = []
    for rec in d.get("steps", []):
        rec = dict(rec)
        results = rec.pop("results", None)
        step = Step(**rec)
        if results is not None:
            step.results = SearchResult.from_dict(results)
        steps.append(step)
    usage = d.get("budget_used", {})
    return Episode(
        qid=d["qid"],
        user_query=d["user_query"],
        steps=steps,
        final_answer=d.get("final_answer"),
        termination=d["termination"],
        budget_used=BudgetUsage(**usage) if isinstance(usage, dict) else usage,
    )
