"""Syntactic and semantic similarity channels over agent responses.

The syntactic channel is TF-IDF computed over the responses of a single
trace. The semantic channel comes from an :class:`EmbeddingProvider`: either
the built-in feature-hashing encoder or a remote embeddings endpoint.
All cosines are computed with ``math.fsum`` so results are bit-reproducible.
"""

from __future__ import annotations

import hashlib
import logging
import math
import os
import re
import threading
from collections import Counter
from dataclasses import dataclass
from typing import Mapping, Protocol, Sequence

import httpx
import numpy as np

logger = logging.getLogger(__name__)

TermVector = dict[str, float]

_TOKEN = re.compile(r"[^\W_]+")

EMBED_URL_ENV = "GEMMAS_EMBED_URL"
EMBED_KEY_ENV = "GEMMAS_EMBED_API_KEY"


class ProviderError(RuntimeError):
    pass


class ProviderUnavailableError(ProviderError):
    pass


class DimensionMismatchError(ProviderError, ValueError):
    pass


def tokenize(text: str) -> list[str]:
    """Lowercased maximal runs of Unicode letters and digits."""
    return _TOKEN.findall(text.lower())


def tfidf_vectors(responses: Sequence[str]) -> list[TermVector]:
    """TF-IDF with raw counts, smoothed idf ln((1+N)/(1+df)) + 1, L2-normalised rows."""
    counts = [Counter(tokenize(text)) for text in responses]
    n = len(counts)
    df: Counter[str] = Counter()
    for doc in counts:
        df.update(doc.keys())
    idf = {term: math.log((1 + n) / (1 + freq)) + 1.0 for term, freq in df.items()}

    vectors = []
    for doc in counts:
        weights = {term: tf * idf[term] for term, tf in doc.items()}
        norm = math.sqrt(math.fsum(w * w for w in weights.values()))
        if norm > 0:
            weights = {term: w / norm for term, w in weights.items()}
        vectors.append(weights)
    return vectors


class EmbeddingProvider(Protocol):
    def embed(self, texts: Sequence[str]) -> list[list[float]]: ...


class HashingEmbeddingProvider:
    """Deterministic offline encoder: signed feature hashing of the token bag.

    Uses BLAKE2b rather than ``hash()`` so vectors are identical across
    processes and platforms.
    """

    def __init__(self, dimension: int = 256):
        if dimension < 1:
            raise ValueError("dimension must be positive")
        self.dimension = dimension

    def _bucket(self, token: str) -> tuple[int, float]:
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
        value = int.from_bytes(digest, "little")
        return value % self.dimension, (1.0 if (value >> 63) & 1 == 0 else -1.0)

    def embed_one(self, text: str) -> list[float]:
        vector = [0.0] * self.dimension
        for token in tokenize(text):
            index, sign = self._bucket(token)
            vector[index] += sign
        norm = math.sqrt(math.fsum(x * x for x in vector))
        if norm == 0:
            return [0.0] * self.dimension
        return [x / norm for x in vector]

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        return [self.embed_one(text) for text in texts]


_TRANSIENT_STATUS = {408, 425, 429, 500, 502, 503, 504}


class RemoteEmbeddingProvider:
    """Client for an HTTP embeddings endpoint speaking the common
    ``{"input": [...], "model": ...}`` -> ``{"data": [{"index", "embedding"}]}`` shape.

    Safe to share between threads; at most ``max_in_flight`` requests are
    outstanding at once. A transient failure is retried once.
    """

    def __init__(
        self,
        url: str | None = None,
        *,
        model: str = "default",
        api_key: str | None = None,
        timeout: float = 30.0,
        max_in_flight: int = 4,
        transport: httpx.BaseTransport | None = None,
    ):
        url = url or os.environ.get(EMBED_URL_ENV)
        if not url:
            raise ValueError(f"remote embedding provider needs a URL (flag or ${EMBED_URL_ENV})")
        if max_in_flight < 1:
            raise ValueError("max_in_flight must be positive")
        self.url = url
        self.model = model
        api_key = api_key if api_key is not None else os.environ.get(EMBED_KEY_ENV)
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._client = httpx.Client(timeout=timeout, headers=headers, transport=transport)
        self._slots = threading.BoundedSemaphore(max_in_flight)
        self._lock = threading.Lock()
        self.dimension: int | None = None

    def close(self) -> None:
        self._client.close()

    def __enter__(self) -> RemoteEmbeddingProvider:
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()

    def _post(self, texts: list[str]) -> httpx.Response:
        payload = {"input": texts, "model": self.model}
        last_error = ""
        for attempt in range(2):
            try:
                with self._slots:
                    response = self._client.post(self.url, json=payload)
            except httpx.TransportError as exc:
                last_error = f"{type(exc).__name__}: {exc}"
            else:
                if response.status_code < 400:
                    return response
                last_error = f"HTTP {response.status_code}"
                if response.status_code not in _TRANSIENT_STATUS:
                    break
            if attempt == 0:
                logger.info("embedding request failed (%s), retrying once", last_error)
        raise ProviderUnavailableError(f"embedding endpoint {self.url} unavailable: {last_error}")

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        texts = list(texts)
        if not texts:
            return []
        response = self._post(texts)
        try:
            items = response.json()["data"]
            ordered = sorted(items, key=lambda item: item["index"])
            vectors = [[float(x) for x in item["embedding"]] for item in ordered]
        except (ValueError, KeyError, TypeError) as exc:
            raise ProviderError(f"malformed embeddings response: {exc}") from None
        if len(vectors) != len(texts):
            raise ProviderError(f"asked for {len(texts)} embeddings, got {len(vectors)}")
        dims = {len(v) for v in vectors}
        if len(dims) != 1:
            raise DimensionMismatchError(f"provider returned vectors of lengths {sorted(dims)}")
        (dim,) = dims
        with self._lock:
            if self.dimension is None:
                self.dimension = dim
            elif self.dimension != dim:
                raise DimensionMismatchError(
                    f"provider switched dimension from {self.dimension} to {dim}"
                )
        return vectors


def embed(texts: Sequence[str], provider: EmbeddingProvider) -> list[np.ndarray]:
    vectors = provider.embed(list(texts))
    if len(vectors) != len(texts):
        raise ProviderError(f"asked for {len(texts)} embeddings, got {len(vectors)}")
    out = [np.asarray(v, dtype=float) for v in vectors]
    if len({v.shape for v in out}) > 1:
        raise DimensionMismatchError("embedding dimensions disagree within one batch")
    for v in out:
        if not np.all(np.isfinite(v)):
            raise ProviderError("embedding contains non-finite entries")
    return out


def _dense(vectors: Sequence[Mapping[str, float] | Sequence[float] | np.ndarray]) -> list[list[float]]:
    if vectors and all(isinstance(v, Mapping) for v in vectors):
        vocab = sorted(set().union(*(v.keys() for v in vectors)))
        return [[float(v.get(term, 0.0)) for term in vocab] for v in vectors]
    if any(isinstance(v, Mapping) for v in vectors):
        raise TypeError("cannot mix term vectors and dense vectors")
    rows = [[float(x) for x in v] for v in vectors]
    if len({len(r) for r in rows}) > 1:
        raise DimensionMismatchError("vectors have different dimensions")
    return rows


def pairwise_similarity(vectors) -> np.ndarray:
    """Cosine similarity matrix clamped to [0, 1].

    Any pair involving an all-zero vector scores 0, including that vector's
    own diagonal entry.
    """
    rows = _dense(vectors)
    n = len(rows)
    norms = [math.sqrt(math.fsum(x * x for x in row)) for row in rows]
    sim = np.zeros((n, n))
    for i in range(n):
        if norms[i] == 0:
            continue
        sim[i, i] = 1.0
        for j in range(i + 1, n):
            if norms[j] == 0:
                continue
            dot = math.fsum(a * b for a, b in zip(rows[i], rows[j]))
            value = min(1.0, max(0.0, dot / (norms[i] * norms[j])))
            sim[i, j] = sim[j, i] = value
    return sim


@dataclass(frozen=True)
class LambdaWeights:
    """Convex weights for the syntactic and semantic channels."""

    syntactic: float = 0.5
    semantic: float = 0.5

    def __post_init__(self) -> None:
        for value in (self.syntactic, self.semantic):
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"lambda weights must lie in [0, 1], got {value}")
        if abs(self.syntactic + self.semantic - 1.0) > 1e-12:
            raise ValueError("lambda weights must sum to 1")

    @classmethod
    def from_lambda1(cls, lambda1: float) -> LambdaWeights:
        return cls(syntactic=lambda1, semantic=1.0 - lambda1)


def combine_similarity(ss_syn: np.ndarray, ss_sem: np.ndarray, weights: LambdaWeights) -> np.ndarray:
    ss_syn = np.asarray(ss_syn, dtype=float)
    ss_sem = np.asarray(ss_sem, dtype=float)
    if ss_syn.shape != ss_sem.shape:
        raise DimensionMismatchError(f"similarity shapes differ: {ss_syn.shape} vs {ss_sem.shape}")
    return weights.syntactic * ss_syn + weights.semantic * ss_sem


def similarity_channels(responses: Sequence[str], provider: EmbeddingProvider) -> tuple[np.ndarray, np.ndarray]:
    """Both channels for one trace: (TF-IDF similarity, embedding similarity)."""
    ss_syn = pairwise_similarity(tfidf_vectors(responses))
    ss_sem = pairwise_similarity(embed(responses, provider))
    return ss_syn, ss_sem
