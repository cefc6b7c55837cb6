"""Text embeddings for the asset repository.

The repository only depends on the ``EmbeddingProvider`` protocol; the
bundled provider hashes character trigrams into a fixed-dimension vector
and L2-normalizes, so tests and offline deployments never need a model
service. A real sentence-embedding backend can be swapped in by
implementing the same protocol (the production default dimension of 384
matches the MiniLM family).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

__all__ = [
    "DEFAULT_DIMENSION",
    "EmbeddingVector",
    "EmbeddingProvider",
    "HashingEmbeddingProvider",
    "cosine_similarity",
    "embed",
]

DEFAULT_DIMENSION = 384


@dataclass(frozen=True)
class EmbeddingVector:
    values: tuple[float, ...]
    norm: float = field(init=False)

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise ValueError("embedding values must be finite")
        object.__setattr__(self, "values", tuple(float(v) for v in arr))
        object.__setattr__(self, "norm", float(np.linalg.norm(arr)))

    @property
    def dimension(self) -> int:
        return len(self.values)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=np.float64)


def cosine_similarity(a: EmbeddingVector, b: EmbeddingVector) -> float:
    if a.dimension != b.dimension:
        raise ValueError(f"dimension mismatch: {a.dimension} != {b.dimension}")
    if a.norm == 0.0 or b.norm == 0.0:
        return 0.0
    return float(np.dot(a.as_array(), b.as_array()) / (a.norm * b.norm))


class EmbeddingProvider(Protocol):
    dimension: int

    def embed(self, label: str) -> EmbeddingVector: ...


class HashingEmbeddingProvider:
    """Deterministic character-trigram hashing embedder.

    Each trigram of the normalized label (padded with spaces) is hashed
    with a stable digest; the hash picks a bucket and a sign. Shared
    trigrams between labels produce correlated vectors, so near-duplicate
    phrases score high under cosine similarity.
    """

    def __init__(self, dimension: int = DEFAULT_DIMENSION):
        if dimension < 8:
            raise ValueError("dimension must be at least 8")
        self.dimension = dimension

    def embed(self, label: str) -> EmbeddingVector:
        if not label or not label.strip():
            raise ValueError("label must be non-empty")
        text = " " + " ".join(label.lower().split()) + " "
        acc = np.zeros(self.dimension, dtype=np.float64)
        for i in range(len(text) - 2):
            gram = text[i : i + 3]
            digest = hashlib.md5(gram.encode("utf-8")).digest()
            bucket = int.from_bytes(digest[:4], "little") % self.dimension
            sign = 1.0 if digest[4] & 1 else -1.0
            acc[bucket] += sign
        norm = float(np.linalg.norm(acc))
        if norm > 0.0:
            acc /= norm
        return EmbeddingVector(tuple(acc))


def embed(label: str, provider: EmbeddingProvider) -> EmbeddingVector:
    """Embed a label with the given provider; deterministic per provider."""
    return provider.embed(label)
