"""Relevance models served by the sidecar.

Two deterministic stub models ship with the package so the serving path and
its consumers never need model weights.  Real learned models plug in through
the same score_batch interface.
"""
from __future__ import annotations

import json
from dataclasses import dataclass


class ModelLoadError(Exception):
    pass


@dataclass(frozen=True)
class ScorerModelConfig:
    model_id: str
    max_input_tokens: int = 512
    batch_size: int = 32
    device: str = "cpu"

    def __post_init__(self) -> None:
        if self.max_input_tokens < 1:
            raise ValueError("max_input_tokens must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


def load_config(path: str) -> ScorerModelConfig:
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    return ScorerModelConfig(
        model_id=raw["model_id"],
        max_input_tokens=raw.get("max_input_tokens", 512),
        batch_size=raw.get("batch_size", 32),
        device=raw.get("device", "cpu"),
    )


class NegLengthModel:
    """Scores each candidate at the negative of its character count."""

    model_id = "neg-length"
    emits_rationales = False

    def score_batch(self, query: str, texts: list[str]) -> list[float]:
        return [-float(len(t)) for t in texts]


class TermOverlapModel:
    """Scores by the count of distinct query terms present in the candidate.

    Emits a rationale naming the matched terms, exercising the optional
    rationales response field."""

    model_id = "term-overlap"
    emits_rationales = True

    def score_batch(self, query: str, texts: list[str]) -> list[float]:
        q_terms = set(query.lower().split())
        return [float(len(q_terms & set(t.lower().split()))) for t in texts]

    def rationales(self, query: str, texts: list[str]) -> list[str]:
        q_terms = set(query.lower().split())
        out = []
        for t in texts:
            matched = sorted(q_terms & set(t.lower().split()))
            out.append("matched: " + (", ".join(matched) if matched else "(none)"))
        return out


_REGISTRY = {m.model_id: m for m in (NegLengthModel, TermOverlapModel)}


def load_model(model_id: str):
    if model_id not in _REGISTRY:
        raise ModelLoadError(f"cannot load model {model_id!r}; known: {sorted(_REGISTRY)}")
    return _REGISTRY[model_id]()
