"""Episode trace files, plaintext or passphrase-encrypted.

File layout (version 1):

    bytes 0..3   magic b"ATRC"
    byte  4      format version (1)
    byte  5      flag: 0 plaintext, 1 encrypted
    plaintext:   UTF-8 line-delimited episode records
    encrypted:   16-byte PBKDF2 salt, 12-byte nonce, then AES-256-GCM
                 ciphertext with its 16-byte tag

Keys derive from the passphrase with PBKDF2-HMAC-SHA256 (100000 iterations).
The GCM tag authenticates the body, so any bit flip fails decryption; header
corruption fails parsing or key derivation instead.  Records are one episode
per line with an explicit schema_version field.
"""
from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass
from typing import Sequence

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.hashes import SHA256
from cryptography.hazmat.primitives.kdf.pbkdf2 import PBKDF2HMAC

from .agentloop import EPISODE_SCHEMA_VERSION, Episode, episode_from_dict, episode_to_dict

MAGIC = b"ATRC"
FORMAT_VERSION = 1
FLAG_PLAIN = 0
FLAG_ENCRYPTED = 1
SALT_LEN = 16
NONCE_LEN = 12
TAG_LEN = 16
PBKDF2_ITERATIONS = 100_000


class TraceError(Exception):
    pass


class TraceFormatError(TraceError):
    pass


class TraceVersionError(TraceError):
    pass


class TraceAuthError(TraceError):
    """Missing or wrong passphrase, or a tampered encrypted body."""


@dataclass
class TraceFile:
    path: str
    encrypted: bool
    version: int = FORMAT_VERSION
    n_episodes: int | None = 0  # None when the count needs decryption


def _derive_key(passphrase: str, salt: bytes) -> bytes:
    kdf = PBKDF2HMAC(algorithm=SHA256(), length=32, salt=salt, iterations=PBKDF2_ITERATIONS)
    return kdf.derive(passphrase.encode("utf-8"))


def _records_bytes(episodes: Sequence[Episode]) -> bytes:
    lines = []
    for ep in episodes:
        rec = {"schema_version": EPISODE_SCHEMA_VERSION}
        rec.update(episode_to_dict(ep))
        lines.append(json.dumps(rec, sort_keys=True, separators=(",", ":"), ensure_ascii=False))
    return ("\n".join(lines) + "\n" if lines else "").encode("utf-8")


def _parse_records(body: bytes, path: str) -> list[Episode]:
    episodes = []
    try:
        text = body.decode("utf-8")
    except UnicodeDecodeError as e:
        raise TraceFormatError(f"{path}: body is not UTF-8: {e}") from None
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as e:
            raise TraceFormatError(f"{path}: bad record at line {lineno}: {e}") from None
        version = rec.pop("schema_version", None)
        if version != EPISODE_SCHEMA_VERSION:
            raise TraceVersionError(f"{path}: unsupported episode schema_version {version!r} at line {lineno}")
        try:
            episodes.append(episode_from_dict(rec))
        except (KeyError, TypeError) as e:
            raise TraceFormatError(f"{path}: bad episode at line {lineno}: {e}") from None
    return episodes


def write_traces(episodes: Sequence[Episode], path: str, passphrase: str | None = None) -> TraceFile:
    """Write episodes to path; a passphrase switches on authenticated encryption."""
    body = _records_bytes(episodes)
    if passphrase is None:
        blob = MAGIC + bytes([FORMAT_VERSION, FLAG_PLAIN]) + body
    else:
        salt = os.urandom(SALT_LEN)
        nonce = os.urandom(NONCE_LEN)
        key = _derive_key(passphrase, salt)
        ciphertext = AESGCM(key).encrypt(nonce, body, MAGIC)
        blob = MAGIC + bytes([FORMAT_VERSION, FLAG_ENCRYPTED]) + salt + nonce + ciphertext
    with open(path, "wb") as fh:
        fh.write(blob)
    return TraceFile(path=path, encrypted=passphrase is not None, n_episodes=len(episodes))


def read_traces(path: str, passphrase: str | None = None) -> list[Episode]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 6:
        raise TraceFormatError(f"{path}: truncated header at offset {len(blob)} (need 6 bytes)")
    if blob[:4] != MAGIC:
        raise TraceFormatError(f"{path}: bad magic {blob[:4]!r} at offset 0")
    version = blob[4]
    if version != FORMAT_VERSION:
        raise TraceVersionError(f"{path}: unsupported trace format version {version}")
    flag = blob[5]
    if flag == FLAG_PLAIN:
        if passphrase is not None:
            # refusing beats silently ignoring a key the caller expected to matter
            raise TraceAuthError(f"{path}: passphrase given but the trace is not encrypted")
        return _parse_records(blob[6:], path)
    if flag != FLAG_ENCRYPTED:
        raise TraceFormatError(f"{path}: bad flag byte {flag} at offset 5")
    min_len = 6 + SALT_LEN + NONCE_LEN + TAG_LEN
    if len(blob) < min_len:
        raise TraceFormatError(f"{path}: truncated encrypted body at offset {len(blob)} (need {min_len} bytes)")
    if passphrase is None:
        raise TraceAuthError(f"{path}: encrypted trace needs a passphrase")
    salt = blob[6 : 6 + SALT_LEN]
    nonce = blob[6 + SALT_LEN : 6 + SALT_LEN + NONCE_LEN]
    ciphertext = blob[6 + SALT_LEN + NONCE_LEN :]
    key = _derive_key(passphrase, salt)
    try:
        body = AESGCM(key).decrypt(nonce, ciphertext, MAGIC)
    except InvalidTag:
        raise TraceAuthError(f"{path}: decryption failed (wrong passphrase or tampered file)") from None
    return _parse_records(body, path)


def trace_header(path: str) -> TraceFile:
    """Header metadata without decrypting anything.  Plaintext record counts
    come from a line count; encrypted counts are None."""
    with open(path, "rb") as fh:
        head = fh.read(6)
        if len(head) < 6:
            raise TraceFormatError(f"{path}: truncated header at offset {len(head)} (need 6 bytes)")
        if head[:4] != MAGIC:
            raise TraceFormatError(f"{path}: bad magic {head[:4]!r} at offset 0")
        if head[4] != FORMAT_VERSION:
            raise TraceVersionError(f"{path}: unsupported trace format version {head[4]}")
        if head[5] not in (FLAG_PLAIN, FLAG_ENCRYPTED):
            raise TraceFormatError(f"{path}: bad flag byte {head[5]} at offset 5")
        encrypted = head[5] == FLAG_ENCRYPTED
        count = None
        if not encrypted:
            count = sum(1 for line in fh if line.strip())
    return TraceFile(path=path, encrypted=encrypted, version=head[4], n_episodes=count)


_QUOTED = re.compile(r'"[^"]*"')


def analyze_queries(episodes: Sequence[Episode]) -> dict:
    """Read-only search behavior stats over episodes.

    quoted_fraction counts raw queries containing a double-quoted span (an
    empty "" span counts); avg_query_terms uses whitespace tokens of the raw
    query; the histogram maps search-call count per episode to episode count.
    """
    n_queries = 0
    quoted = 0
    term_total = 0
    histogram: dict[str, int] = {}
    for ep in episodes:
        searches = 0
        for step in ep.steps:
            if step.kind != "search":
                continue
            searches += 1
            n_queries += 1
            raw = step.query_raw or ""
            if _QUOTED.search(raw):
                quoted += 1
            term_total += len(raw.split())
        histogram[str(searches)] = histogram.get(str(searches), 0) + 1
    return {
        "n_episodes": len(episodes),
        "n_search_calls": n_queries,
        "quoted_fraction": (quoted / n_queries) if n_queries else 0.0,
        "avg_query_terms": (term_total / n_queries) if n_queries else 0.0,
        "searches_per_episode": dict(sorted(histogram.items(), key=lambda kv: int(kv[0]))),
    }
