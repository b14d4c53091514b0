"""Word vector store: plain-text loading, cosine similarity, exact neighbor scan."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .config import MASK_TOKEN


class EmbeddingStore:
    """Immutable word -> vector map with cached norms.

    Neighbor queries are exact brute-force scans; at desk-scale vocabularies
    that is fast enough and keeps the results usable as test oracles.
    """

    def __init__(self, words: Sequence[str], matrix: np.ndarray):
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[0] != len(words):
            raise ValueError("matrix must have one row per word")
        norms = np.linalg.norm(matrix, axis=1)
        if np.any(norms == 0.0):
            bad = words[int(np.argmax(norms == 0.0))]
            raise ValueError(f"zero-norm vector for word {bad!r}")
        self._words = np.asarray(words, dtype=object)
        self._matrix = matrix
        self._matrix.flags.writeable = False
        self._norms = norms
        self._units = matrix / norms[:, None]
        self._index = {word: i for i, word in enumerate(words)}

    def __contains__(self, word: str) -> bool:
        return word in self._index

    def __len__(self) -> int:
        return len(self._index)

    @property
    def dimension(self) -> int:
        return self._matrix.shape[1]

    def vector(self, word: str) -> np.ndarray:
        return self._matrix[self._index[word]]

    def words(self) -> list[str]:
        return list(self._words)


def load_vectors(source: Iterable[str]) -> EmbeddingStore:
    """Parse whitespace-delimited "word v1 ... vd" lines into a store.

    The dimension is inferred from the first data line. A first line made of
    exactly two integer fields is treated as a "count dim" header and skipped.
    Duplicate words keep their first vector (with a warning); dimension
    mismatches, unparsable or non-finite components, and empty input raise
    ValueError naming the offending line.
    """
    words: list[str] = []
    rows: list[list[float]] = []
    seen: set[str] = set()
    dimension: int | None = None
    first_line = True
    for line_no, raw in enumerate(source, start=1):
        parts = raw.split()
        if not parts:
            continue
        if first_line:
            first_line = False
            if len(parts) == 2 and _is_int(parts[0]) and _is_int(parts[1]):
                continue
        word, components = parts[0], parts[1:]
        if not components:
            raise ValueError(f"line {line_no}: no vector components for {word!r}")
        if dimension is None:
            dimension = len(components)
        elif len(components) != dimension:
            raise ValueError(
                f"line {line_no}: expected {dimension} components, got {len(components)}"
            )
        try:
            values = [float(c) for c in components]
        except ValueError:
            raise ValueError(f"line {line_no}: unparsable vector component") from None
        if not all(np.isfinite(values)):
            raise ValueError(f"line {line_no}: non-finite vector component")
        if word in seen:
            warnings.warn(f"duplicate word {word!r}; keeping the first occurrence")
            continue
        if not any(values):
            raise ValueError(f"line {line_no}: zero-norm vector for word {word!r}")
        seen.add(word)
        words.append(word)
        rows.append(values)
    if not words:
        raise ValueError("no word vectors found in input")
    return EmbeddingStore(words, np.array(rows, dtype=np.float64))


def _is_int(text: str) -> bool:
    try:
        int(text)
    except ValueError:
        return False
    return True


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity in [-1, 1]; zero when either vector has zero norm."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def nearest(store: EmbeddingStore, word: str, m: int) -> list[str]:
    """The m in-vocabulary words closest to `word` by cosine, excluding itself.

    Ordered by non-increasing similarity with exact ties broken
    lexicographically. Out-of-vocabulary queries yield an empty list.
    """
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    if word not in store:
        return []
    query_row = store._index[word]
    sims = store._units @ store._units[query_row]
    order = np.lexsort((store._words, -sims))
    result: list[str] = []
    for idx in order:
        if idx == query_row:
            continue
        result.append(store._words[idx])
        if len(result) == m:
            break
    return result


@dataclass(frozen=True, eq=False)
class SentenceEmbedding:
    vector: np.ndarray
    coverage: float


def sentence_embed(store: EmbeddingStore, tokens: Sequence[str]) -> SentenceEmbedding:
    """Mean of the in-vocabulary token vectors; the mask token is always skipped.

    Order-invariant by construction. With no covered tokens the embedding is
    the zero vector and coverage is 0.
    """
    vectors = [
        store.vector(token)
        for token in tokens
        if token != MASK_TOKEN and token in store
    ]
    coverage = len(vectors) / len(tokens) if tokens else 0.0
    if not vectors:
        return SentenceEmbedding(np.zeros(store.dimension), 0.0)
    return SentenceEmbedding(np.mean(vectors, axis=0), coverage)
