"""Document corpus handling: ingestion, tokenizer adapters, passage segmentation."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Iterator


class CorpusError(Exception):
    pass


@dataclass
class Document:
    doc_id: str
    text: str
    title: str | None = None
    url: str | None = None


@dataclass
class Passage:
    passage_id: str
    doc_id: str
    seq_index: int
    body: str
    rendered_text: str
    body_word_count: int


class TokenizerAdapter:
    """Maps text to a token sequence and back.

    truncate() keeps the first n tokens; when the text already fits it is
    returned unchanged, which makes truncation idempotent.
    """

    name = "adapter"

    def encode(self, text: str) -> list[str]:
        raise NotImplementedError

    def decode(self, tokens: list[str]) -> str:
        raise NotImplementedError

    def count(self, text: str) -> int:
        return len(self.encode(text))

    def truncate(self, text: str, n_tokens: int) -> str:
        if n_tokens < 0:
            raise ValueError("n_tokens must be >= 0")
        tokens = self.encode(text)
        if len(tokens) <= n_tokens:
            return text
        return self.decode(tokens[:n_tokens])


class WhitespaceTokenizer(TokenizerAdapter):
    """Whitespace words; the default adapter for budgets and snippets."""

    name = "whitespace"

    def encode(self, text: str) -> list[str]:
        return text.split()

    def decode(self, tokens: list[str]) -> str:
        return " ".join(tokens)


WHITESPACE = WhitespaceTokenizer()


def truncate_text(text: str, n_tokens: int, tok: TokenizerAdapter = WHITESPACE) -> str:
    return tok.truncate(text, n_tokens)


@dataclass
class Corpus:
    documents: dict[str, Document] = field(default_factory=dict)

    def add(self, doc: Document) -> None:
        if "#" in doc.doc_id:
            raise CorpusError(f"doc_id {doc.doc_id!r} may not contain '#' (reserved for passage ids)")
        if doc.doc_id in self.documents:
            raise CorpusError(f"duplicate doc_id {doc.doc_id!r}")
        self.documents[doc.doc_id] = doc

    def get(self, doc_id: str) -> Document:
        try:
            return self.documents[doc_id]
        except KeyError:
            raise CorpusError(f"unknown doc_id {doc_id!r}") from None

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self.documents

    def __len__(self) -> int:
        return len(self.documents)

    def __iter__(self) -> Iterator[Document]:
        return iter(self.documents.values())


def ingest_documents(path: str, format: str = "jsonl") -> Corpus:
    """Load a corpus from a line-delimited file of {docid, title?, text, url?} records.

    Duplicate ids and malformed records are rejected with the offending id or
    line number in the message.
    """
    if format != "jsonl":
        raise CorpusError(f"unsupported corpus format {format!r}")
    corpus = Corpus()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise CorpusError(f"malformed record at line {lineno}: {e}") from None
            if not isinstance(rec, dict) or "docid" not in rec or "text" not in rec:
                raise CorpusError(f"malformed record at line {lineno}: need docid and text fields")
            corpus.add(
                Document(
                    doc_id=str(rec["docid"]),
                    text=str(rec["text"]),
                    title=rec.get("title"),
                    url=rec.get("url"),
                )
            )
    return corpus


# Words that end with a period without ending a sentence.  Checked after
# stripping trailing punctuation and interior dots, lowercased.
_ABBREVIATIONS = {
    "mr", "mrs", "ms", "dr", "prof", "rev", "gen", "sen", "rep", "st", "sr", "jr",
    "vs", "etc", "eg", "ie", "cf", "al", "inc", "ltd", "co", "corp", "fig", "no",
    "vol", "pp", "ca", "approx", "dept", "univ",
}

_CLOSERS = "\"'”’)]}"
_OPENERS = "\"'“‘([{"


def _is_sentence_break(prev_word: str, next_word: str) -> bool:
    core = prev_word.rstrip(_CLOSERS)
    if not core or core[-1] not in ".!?":
        return False
    lead = next_word[0]
    if not (lead.isupper() or lead.isdigit() or lead in _OPENERS):
        return False
    if core[-1] == ".":
        stem = core.rstrip(".!?").replace(".", "").lower()
        if stem in _ABBREVIATIONS:
            return False
        # Single-letter initials ("J. Smith") do not end a sentence.
        if len(stem) == 1 and stem.isalpha():
            return False
    return True


def split_sentences(text: str) -> list[list[str]]:
    """Split whitespace-normalized words into sentences.

    Rule-based: a boundary falls after a word ending in terminal punctuation
    (optionally followed by closing quotes or brackets) when the next word
    starts with an uppercase letter, a digit, or an opening quote, and the
    word is not a known abbreviation.  Returns sentences as word lists, so
    concatenating them always reproduces the normalized text.
    """
    words = text.split()
    sentences: list[list[str]] = []
    cur: list[str] = []
    for i, word in enumerate(words):
        cur.append(word)
        if i + 1 < len(words) and _is_sentence_break(word, words[i + 1]):
            sentences.append(cur)
            cur = []
    if cur:
        sentences.append(cur)
    return sentences


def segment_document(doc: Document, max_words: int = 250) -> list[Passage]:
    """Segment a document into passages of at most max_words words.

    Sentences are packed greedily: the next sentence joins the current passage
    only when the total stays within max_words.  A single sentence longer than
    max_words is hard-split at word boundaries into max_words-sized chunks;
    the final remnant chunk is closed as its own passage so remnants always
    have single-sentence origin.  The document title, when present, is
    prepended to every passage's rendered_text (title words do not count
    toward the word budget).
    """
    if max_words < 1:
        raise ValueError("max_words must be >= 1")
    groups: list[list[str]] = []
    cur: list[str] = []
    for sent in split_sentences(doc.text):
        if len(sent) > max_words:
            if cur:
                groups.append(cur)
                cur = []
            for j in range(0, len(sent), max_words):
                groups.append(sent[j : j + max_words])
            continue
        if cur and len(cur) + len(sent) > max_words:
            groups.append(cur)
            cur = []
        cur = cur + sent
    if cur:
        groups.append(cur)

    passages = []
    for seq, group in enumerate(groups):
        body = " ".join(group)
        rendered = f"{doc.title}\n{body}" if doc.title else body
        passages.append(
            Passage(
                passage_id=f"{doc.doc_id}#{seq}",
                doc_id=doc.doc_id,
                seq_index=seq,
                body=body,
                rendered_text=rendered,
                body_word_count=len(group),
            )
        )
    return passages


def segment_corpus(corpus: Corpus | Iterable[Document], max_words: int = 250) -> list[Passage]:
    out: list[Passage] = []
    for doc in corpus:
        out.extend(segment_document(doc, max_words))
    return out


def doc_of_unit(unit_id: str) -> str:
    """Map a unit id to its source document id ("d7#2" -> "d7")."""
    return unit_id.rsplit("#", 1)[0] if "#" in unit_id else unit_id
