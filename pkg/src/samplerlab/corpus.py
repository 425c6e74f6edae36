"""Corpus ingestion: the 27-symbol character codec and the binary token
stream container.

Token stream layout: 8-byte magic, little-endian uint32 vocab size, then
raw little-endian uint32 ids. The reserved id 0xFFFFFFFF separates
documents. Reading is chunked, so ingestion memory does not grow with the
corpus.
"""

from __future__ import annotations

import struct
from typing import Iterable, Iterator

import numpy as np

from .kernel import DOC_SEPARATOR

STREAM_MAGIC = b"SLTOKS01"
_HEADER_SIZE = len(STREAM_MAGIC) + 4

_CHARS = " abcdefghijklmnopqrstuvwxyz"
_CHAR_TO_ID = {c: i for i, c in enumerate(_CHARS)}


class CharVocab:
    """Bijective 27-symbol vocabulary: space -> 0, 'a'..'z' -> 1..26."""

    size = 27

    @staticmethod
    def encode(ch: str) -> int:
        return _CHAR_TO_ID[ch]

    @staticmethod
    def decode(token: int) -> str:
        return _CHARS[token]

    @staticmethod
    def id_to_string_map() -> dict[int, str]:
        return {i: c for i, c in enumerate(_CHARS)}


def encode_text8(text: str, lenient: bool = False) -> np.ndarray:
    """Map text onto the 27-symbol alphabet.

    Validation mode rejects the first character outside the alphabet with
    its position. Lenient mode lowercases and maps every non-letter to a
    space, so raw dumps ingest cleanly.
    """
    if lenient:
        text = text.lower()
        ids = np.frombuffer(text.encode("latin-1", errors="replace"), dtype=np.uint8).astype(np.int64)
        out = ids - (ord("a") - 1)
        out[(ids < ord("a")) | (ids > ord("z"))] = 0
        return out
    out = np.empty(len(text), dtype=np.int64)
    for i, ch in enumerate(text):
        tok = _CHAR_TO_ID.get(ch)
        if tok is None:
            raise ValueError(f"invalid character {ch!r} at position {i}")
        out[i] = tok
    return out


def decode_text8(ids: Iterable[int]) -> str:
    arr = np.asarray(ids if isinstance(ids, np.ndarray) else list(ids), dtype=np.int64)
    bad = (arr < 0) | (arr >= CharVocab.size)
    if bad.any():
        at = int(np.argmax(bad))
        raise ValueError(f"token id {int(arr[at])} out of range at position {at}")
    table = np.frombuffer(_CHARS.encode("ascii"), dtype=np.uint8)
    return table[arr].tobytes().decode("ascii")


def write_token_stream(path, documents: Iterable[np.ndarray], vocab_size: int) -> int:
    """Write documents as a binary token stream; returns documents written."""
    n_docs = 0
    with open(path, "wb") as fh:
        fh.write(STREAM_MAGIC)
        fh.write(struct.pack("<I", vocab_size))
        sep = np.array([DOC_SEPARATOR], dtype="<u4").tobytes()
        for doc in documents:
            arr = np.asarray(doc)
            if arr.size and (arr.min() < 0 or arr.max() >= vocab_size):
                raise ValueError("document contains ids outside the declared vocabulary")
            if n_docs:
                fh.write(sep)
            fh.write(arr.astype("<u4").tobytes())
            n_docs += 1
    return n_docs


def load_token_stream(path, vocab_size: int, chunk_size: int = 1 << 20) -> Iterator[np.ndarray]:
    """Yield one validated id array per document.

    Raises ValueError on a malformed header, a vocabulary mismatch, or an
    out-of-range id (reported with its byte offset in the file).
    """
    with open(path, "rb") as fh:
        magic = fh.read(len(STREAM_MAGIC))
        if magic != STREAM_MAGIC:
            raise ValueError(f"malformed header: bad magic {magic!r}")
        raw = fh.read(4)
        if len(raw) != 4:
            raise ValueError("malformed header: truncated vocab size")
        (declared,) = struct.unpack("<I", raw)
        if declared != vocab_size:
            raise ValueError(f"stream declares vocab size {declared}, expected {vocab_size}")
        pending: list[np.ndarray] = []
        index = 0
        while True:
            buf = fh.read(4 * chunk_size)
            if not buf:
                break
            if len(buf) % 4:
                raise ValueError(f"truncated id at byte offset {_HEADER_SIZE + 4 * index}")
            ids = np.frombuffer(buf, dtype="<u4").astype(np.int64)
            ids[ids == DOC_SEPARATOR] = -1
            bad = ids >= vocab_size
            if bad.any():
                at = index + int(np.argmax(bad))
                raise ValueError(
                    f"id {int(ids[np.argmax(bad)])} out of range at byte offset {_HEADER_SIZE + 4 * at}"
                )
            index += len(ids)
            cuts = np.nonzero(ids < 0)[0]
            start = 0
            for cut in cuts:
                pending.append(ids[start:cut])
                yield np.concatenate(pending) if len(pending) > 1 else pending[0]
                pending = []
                start = cut + 1
            tail = ids[start:]
            if len(tail):
                pending.append(tail)
        if pending:
            yield np.concatenate(pending) if len(pending) > 1 else pending[0]
        elif index == 0:
            return


def iter_text8_file(path, chunk_chars: int = 1 << 22, lenient: bool = False) -> Iterator[np.ndarray]:
    """Stream a plain-text corpus as id chunks of one logical document."""
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        while True:
            block = fh.read(chunk_chars)
            if not block:
                return
            yield encode_text8(block, lenient=lenient)
