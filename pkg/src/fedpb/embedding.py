"""Pre-trained word embedding table and fixed-length sequence encoding."""

from __future__ import annotations

import hashlib
import math
import os
from dataclasses import dataclass
from types import MappingProxyType
from typing import Iterable, Mapping

import numpy as np

from .errors import DataUnreadable, DimensionMismatch, IndexOutOfRange, ParseFailure
from .text_pipeline import ProcessedText

PAD = 0
MAX_LEN = 200
MIN_LEN = 10


@dataclass(frozen=True)
class EmbeddingTable:
    """Row 0 is PAD (zeros), rows 1..V are the loaded words, row V+1 is OOV."""

    vocab: Mapping[str, int]
    vectors: np.ndarray

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def oov_index(self) -> int:
        return self.vectors.shape[0] - 1

    @property
    def num_rows(self) -> int:
        return self.vectors.shape[0]

    def words(self) -> list[str]:
        """Vocabulary in file order."""
        return sorted(self.vocab, key=self.vocab.__getitem__)

    def checksum(self) -> str:
        h = hashlib.sha256()
        for word in self.words():
            h.update(word.encode("utf-8"))
            h.update(b"\n")
        h.update(np.ascontiguousarray(self.vectors).tobytes())
        return h.hexdigest()


def _build(vocab: dict[str, int], rows: list[np.ndarray], dim: int) -> EmbeddingTable:
    body = np.array(rows, dtype=np.float64).reshape(len(rows), dim)
    oov = body.mean(axis=0) if len(rows) else np.zeros(dim)
    vectors = np.vstack([np.zeros((1, dim)), body, oov[None, :]])
    vectors.flags.writeable = False
    return EmbeddingTable(MappingProxyType(dict(vocab)), vectors)


def load_embedding(source: str | os.PathLike | Iterable[str], dim: int = 100) -> EmbeddingTable:
    """Load GloVe text format: ``word v1 ... vd`` per line.

    ``source`` is a path or any iterable of lines. Duplicate words keep their
    first vector; blank lines are skipped.
    """
    if isinstance(source, (str, os.PathLike)):
        try:
            with open(source, encoding="utf-8", errors="replace") as fh:
                return load_embedding(fh, dim)
        except OSError as exc:
            raise DataUnreadable(source, str(exc)) from exc
    vocab: dict[str, int] = {}
    rows: list[np.ndarray] = []
    for line_no, line in enumerate(source, start=1):
        line = line.rstrip("\r\n")
        if not line.strip():
            continue
        parts = line.rstrip(" ").split(" ")
        word, values = parts[0], parts[1:]
        if len(values) != dim:
            raise DimensionMismatch(line_no, dim, len(values))
        try:
            vec = [float(v) for v in values]
        except ValueError as exc:
            raise ParseFailure(line_no, str(exc)) from exc
        if not all(math.isfinite(v) for v in vec):
            raise ParseFailure(line_no, "non-finite value")
        if word in vocab:
            continue
        vocab[word] = len(rows) + 1
        rows.append(vec)
    return _build(vocab, rows, dim)


def table_from_arrays(words: list[str], vectors: np.ndarray) -> EmbeddingTable:
    vectors = np.asarray(vectors, dtype=np.float64)
    vocab: dict[str, int] = {}
    rows = []
    for word, vec in zip(words, vectors):
        if word not in vocab:
            vocab[word] = len(rows) + 1
            rows.append(vec)
    return _build(vocab, rows, vectors.shape[1])


def write_embedding(path: str | os.PathLike, words: list[str], vectors: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for word, vec in zip(words, vectors):
            fh.write(word + " " + " ".join(repr(float(v)) for v in vec) + "\n")


@dataclass(frozen=True)
class EncodedSample:
    indices: np.ndarray  # int32, length max_len, PAD-filled tail
    true_length: int
    label: int
    source_id: str = ""

    def key(self) -> tuple[bytes, int]:
        return self.indices.tobytes(), self.label


@dataclass(frozen=True)
class Rejected:
    """Returned by encode() when a text has fewer than the minimum tokens."""

    source_id: str
    length: int


def encode(
    text: ProcessedText,
    table: EmbeddingTable,
    max_len: int = MAX_LEN,
    min_len: int = MIN_LEN,
) -> EncodedSample | Rejected:
    """Map tokens to row indices, truncate to max_len, post-pad with PAD."""
    n = len(text.tokens)
    if n < min_len:
        return Rejected(text.source_id, n)
    oov = table.oov_index
    kept = text.tokens[:max_len]
    indices = np.zeros(max_len, dtype=np.int32)
    indices[: len(kept)] = [table.vocab.get(tok, oov) for tok in kept]
    indices.flags.writeable = False
    return EncodedSample(indices, len(kept), int(text.label), text.source_id)


def embed(sample: EncodedSample | np.ndarray, table: EmbeddingTable) -> np.ndarray:
    """Feature matrix (or batch of matrices) by row lookup."""
    idx = sample.indices if isinstance(sample, EncodedSample) else np.asarray(sample)
    if idx.size and (idx.min() < 0 or idx.max() >= table.num_rows):
        raise IndexOutOfRange(
            f"index range [{idx.min()}, {idx.max()}] outside table of {table.num_rows} rows"
        )
    return table.vectors[idx]


def dedupe(samples: Iterable[EncodedSample]) -> list[EncodedSample]:
    """Drop samples whose (indices, label) repeats an earlier one; stable."""
    seen = set()
    out = []
    for s in samples:
        k = s.key()
        if k not in seen:
            seen.add(k)
            out.append(s)
    return out


def stack(samples: list[EncodedSample]) -> tuple[np.ndarray, np.ndarray]:
    """Index matrix (N, max_len) and label vector (N,)."""
    if not samples:
        return np.zeros((0, MAX_LEN), dtype=np.int32), np.zeros(0, dtype=np.int64)
    return (
        np.stack([s.indices for s in samples]),
        np.array([s.label for s in samples], dtype=np.int64),
    )
