"""Inverted index with BM25 scoring over documents or passages."""
from __future__ import annotations

import bisect
import json
import math
import os
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping

INDEX_FORMAT_VERSION = 1


class LexIndexError(Exception):
    pass


_DIGIT_COMMA = re.compile(r"(?<=\d),(?=\d)")
_TOKEN = re.compile(r"[a-z0-9]+")


class Analyzer:
    """Lowercase bag-of-words analyzer.

    Commas flanked by digits are removed so "61,880" yields the single term
    "61880"; every other non-alphanumeric character (quotes included) splits.
    There is no phrase matching: quoted spans score as plain terms.
    """

    version = "lower-alnum-v1"

    def tokens(self, text: str) -> list[str]:
        return _TOKEN.findall(_DIGIT_COMMA.sub("", text.lower()))


DEFAULT_ANALYZER = Analyzer()


@dataclass(frozen=True)
class Bm25Params:
    k1: float = 0.9
    b: float = 0.4

    def __post_init__(self) -> None:
        if self.k1 < 0:
            raise ValueError("k1 must be >= 0")
        if not 0.0 <= self.b <= 1.0:
            raise ValueError("b must be in [0, 1]")


# Named presets: the stock lexical setting, one tuned for long full documents,
# and the aggressive high-saturation high-normalization corner.
PRESETS: dict[str, Bm25Params] = {
    "default": Bm25Params(0.9, 0.4),
    "doc-oriented": Bm25Params(3.8, 0.87),
    "sweet-spot": Bm25Params(10.0, 1.0),
}


@dataclass
class RankedList:
    """Scored unit ids with non-increasing scores, ties by ascending unit_id."""

    entries: list[tuple[str, float]] = field(default_factory=list)

    @classmethod
    def from_scores(cls, scores: Mapping[str, float] | Iterable[tuple[str, float]], k: int | None = None) -> "RankedList":
        pairs = scores.items() if isinstance(scores, Mapping) else list(scores)
        ordered = sorted(pairs, key=lambda e: (-e[1], e[0]))
        if k is not None:
            ordered = ordered[:k]
        return cls(list(ordered))

    def ids(self) -> list[str]:
        return [uid for uid, _ in self.entries]

    def truncate(self, k: int) -> "RankedList":
        return RankedList(self.entries[:k])

    def validate(self) -> None:
        seen: set[str] = set()
        for i, (uid, score) in enumerate(self.entries):
            if uid in seen:
                raise ValueError(f"duplicate unit_id {uid!r}")
            seen.add(uid)
            if i > 0:
                prev_id, prev_score = self.entries[i - 1]
                if score > prev_score:
                    raise ValueError("scores must be non-increasing")
                if score == prev_score and uid < prev_id:
                    raise ValueError("ties must be ordered by ascending unit_id")

    def __len__(self) -> int:
        return len(self.entries)


@dataclass
class InvertedIndex:
    unit_kind: str
    postings: dict[str, list[tuple[str, int]]]
    unit_length: dict[str, int]
    df: dict[str, int]
    n_units: int
    avgdl: float
    prefix_tokens: int | None = None
    analyzer_version: str = Analyzer.version

    def term_frequency(self, term: str, unit_id: str) -> int:
        plist = self.postings.get(term)
        if not plist:
            return 0
        i = bisect.bisect_left(plist, (unit_id,))
        if i < len(plist) and plist[i][0] == unit_id:
            return plist[i][1]
        return 0


def build_index(
    units: Mapping[str, str],
    unit_kind: str = "document",
    prefix_tokens: int | None = None,
    analyzer: Analyzer = DEFAULT_ANALYZER,
) -> InvertedIndex:
    """Index unit texts.  With prefix_tokens set, only each unit's first
    prefix_tokens analyzer tokens contribute to postings and lengths."""
    if prefix_tokens is not None and prefix_tokens < 1:
        raise ValueError("prefix_tokens must be >= 1")
    postings: dict[str, list[tuple[str, int]]] = {}
    unit_length: dict[str, int] = {}
    for uid in sorted(units):
        toks = analyzer.tokens(units[uid])
        if prefix_tokens is not None:
            toks = toks[:prefix_tokens]
        unit_length[uid] = len(toks)
        for term, tf in Counter(toks).items():
            postings.setdefault(term, []).append((uid, tf))
    n = len(unit_length)
    avgdl = (sum(unit_length.values()) / n) if n else 1.0
    if avgdl == 0.0:
        avgdl = 1.0  # all-empty units: keep the length norm well defined
    df = {term: len(plist) for term, plist in postings.items()}
    return InvertedIndex(
        unit_kind=unit_kind,
        postings=postings,
        unit_length=unit_length,
        df=df,
        n_units=n,
        avgdl=avgdl,
        prefix_tokens=prefix_tokens,
        analyzer_version=analyzer.version,
    )


def idf(index: InvertedIndex, term: str) -> float:
    d = index.df.get(term, 0)
    return math.log(1.0 + (index.n_units - d + 0.5) / (d + 0.5))


def bm25_score(
    index: InvertedIndex,
    params: Bm25Params,
    query_terms: Iterable[str],
    unit_id: str,
) -> float:
    """Sum over query term occurrences of idf(t) * tf / (tf + k1 * (1 - b + b * len/avgdl)).

    idf(t) = ln(1 + (N - df + 0.5) / (df + 0.5)).  There is no (k1 + 1)
    numerator factor; it is rank-preserving and omitted.  Repeated query terms
    contribute once per occurrence.
    """
    if unit_id not in index.unit_length:
        raise LexIndexError(f"unknown unit_id {unit_id!r}")
    length = index.unit_length[unit_id]
    score = 0.0
    for term in query_terms:
        tf = index.term_frequency(term, unit_id)
        if tf == 0:
            continue
        norm = params.k1 * (1.0 - params.b + params.b * length / index.avgdl)
        score += idf(index, term) * tf / (tf + norm)
    return score


def search(
    index: InvertedIndex,
    params: Bm25Params,
    query: str,
    k: int,
    analyzer: Analyzer = DEFAULT_ANALYZER,
) -> RankedList:
    """Top-k disjunctive BM25 search; only units matching at least one query term appear."""
    if k < 0:
        raise ValueError("k must be >= 0")
    acc: dict[str, float] = {}
    for term, qtf in Counter(analyzer.tokens(query)).items():
        plist = index.postings.get(term)
        if not plist:
            continue
        term_idf = idf(index, term)
        for uid, tf in plist:
            norm = params.k1 * (1.0 - params.b + params.b * index.unit_length[uid] / index.avgdl)
            acc[uid] = acc.get(uid, 0.0) + qtf * term_idf * tf / (tf + norm)
    return RankedList.from_scores(acc, k=k)


def save_index(index: InvertedIndex, dir_path: str) -> None:
    """Persist to a directory: manifest.json plus line-delimited postings and lengths."""
    os.makedirs(dir_path, exist_ok=True)
    manifest = {
        "format_version": INDEX_FORMAT_VERSION,
        "unit_kind": index.unit_kind,
        "n_units": index.n_units,
        "avgdl": index.avgdl,
        "prefix_tokens": index.prefix_tokens,
        "analyzer_version": index.analyzer_version,
    }
    with open(os.path.join(dir_path, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(dir_path, "postings.jsonl"), "w", encoding="utf-8") as fh:
        for term in sorted(index.postings):
            fh.write(json.dumps({"term": term, "postings": index.postings[term]}, sort_keys=True))
            fh.write("\n")
    with open(os.path.join(dir_path, "lengths.jsonl"), "w", encoding="utf-8") as fh:
        for uid in sorted(index.unit_length):
            fh.write(json.dumps({"unit": uid, "length": index.unit_length[uid]}, sort_keys=True))
            fh.write("\n")


def load_index(dir_path: str) -> InvertedIndex:
    with open(os.path.join(dir_path, "manifest.json"), encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("format_version") != INDEX_FORMAT_VERSION:
        raise LexIndexError(f"unsupported index format version {manifest.get('format_version')!r}")
    postings: dict[str, list[tuple[str, int]]] = {}
    with open(os.path.join(dir_path, "postings.jsonl"), encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                postings[rec["term"]] = [(uid, int(tf)) for uid, tf in rec["postings"]]
    unit_length: dict[str, int] = {}
    with open(os.path.join(dir_path, "lengths.jsonl"), encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                unit_length[rec["unit"]] = int(rec["length"])
    return InvertedIndex(
        unit_kind=manifest["unit_kind"],
        postings=postings,
        unit_length=unit_length,
        df={term: len(plist) for term, plist in postings.items()},
        n_units=manifest["n_units"],
        avgdl=manifest["avgdl"],
        prefix_tokens=manifest.get("prefix_tokens"),
        analyzer_version=manifest.get("analyzer_version", Analyzer.version),
    )
