"""Text-to-vector mapping through pluggable providers.

Two providers ship: an HTTP JSON endpoint client (for real sentence
embedding services) and a deterministic local hashing embedder used by
offline tests. The hashing embedder only promises one property the rest
of the system relies on: texts sharing more word n-grams get higher
cosine similarity.
"""

from __future__ import annotations

import hashlib
import logging
import time
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from .errors import BackendError, TransportError, ValidationError
from .textproc import tokenize

logger = logging.getLogger(__name__)

DEFAULT_DIM = 1024


@dataclass(frozen=True)
class Embedding:
    """A dense vector with its cached Euclidean norm."""

    values: np.ndarray
    norm: float

    @staticmethod
    def from_values(values: np.ndarray) -> "Embedding":
        values = np.asarray(values, dtype=np.float64)
        return Embedding(values=values, norm=float(np.linalg.norm(values)))

    def normalized(self) -> "Embedding":
        """Unit-norm copy; zero vectors pass through unchanged."""
        if self.norm == 0.0:
            return self
        return Embedding.from_values(self.values / self.norm)

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])


class EmbeddingProvider(Protocol):
    dim: int

    def embed(self, texts: Sequence[str]) -> list[Embedding]: ...


def embed_texts(texts: Sequence[str], provider: EmbeddingProvider) -> list[Embedding]:
    """One L2-normalized embedding per input, order-preserving."""
    for i, t in enumerate(texts):
        if not t:
            raise ValidationError(f"texts[{i}] is empty; embeddings require non-empty text")
    raw = provider.embed(texts)
    if len(raw) != len(texts):
        raise BackendError(
            f"provider returned {len(raw)} embeddings for {len(texts)} inputs"
        )
    out: list[Embedding] = []
    for i, emb in enumerate(raw):
        if emb.dim != provider.dim:
            raise ValidationError(
                f"texts[{i}]: provider returned dimension {emb.dim}, expected {provider.dim}"
            )
        out.append(emb.normalized())
    return out


def _hash_bucket(gram: str, d: int, seed: int) -> tuple[int, float]:
    """Stable (bucket, sign) for one n-gram; independent of PYTHONHASHSEED."""
    digest = hashlib.blake2b(
        gram.encode("utf-8"), digest_size=8, salt=seed.to_bytes(8, "little", signed=True)
    ).digest()
    value = int.from_bytes(digest, "little")
    return (value >> 1) % d, 1.0 if value & 1 else -1.0


def hash_embed(text: str, d: int = DEFAULT_DIM, seed: int = 0) -> Embedding:
    """Signed feature hashing of word unigrams and bigrams, L2-normalized."""
    if not text:
        raise ValidationError("cannot embed empty text")
    if d <= 0:
        raise ValidationError(f"dimension must be positive, got {d}")
    tokens = tokenize(text)
    if not tokens:
        raise ValidationError(f"no extractable tokens in text {text[:50]!r}")
    vec = np.zeros(d, dtype=np.float64)
    for tok in tokens:
        bucket, sign = _hash_bucket(tok, d, seed)
        vec[bucket] += sign
    for a, b in zip(tokens, tokens[1:]):
        bucket, sign = _hash_bucket(a + "\x1f" + b, d, seed)
        vec[bucket] += sign
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        raise ValidationError(f"degenerate zero embedding for text {text[:50]!r}")
    return Embedding.from_values(vec / norm)


class HashingEmbedder:
    """Deterministic local provider built on hash_embed."""

    def __init__(self, dim: int = DEFAULT_DIM, seed: int = 0) -> None:
        if dim <= 0:
            raise ValidationError(f"dimension must be positive, got {dim}")
        self.dim = dim
        self.seed = seed

    def embed(self, texts: Sequence[str]) -> list[Embedding]:
        return [hash_embed(t, self.dim, self.seed) for t in texts]


class HttpEmbeddingBackend:
    """Client for an HTTP endpoint taking {model, input: [strings]}.

    Accepts either a bare JSON array of float arrays or the common
    {"data": [{"embedding": [...]}]} envelope, index-aligned with input.
    """

    def __init__(
        self,
        endpoint: str,
        model: str,
        dim: int,
        api_key: str | None = None,
        batch_size: int = 32,
        timeout: float = 60.0,
        max_retries: int = 3,
        backoff_base: float = 0.5,
        post_fn=None,
    ) -> None:
        self.endpoint = endpoint
        self.model = model
        self.dim = dim
        self.api_key = api_key
        self.batch_size = max(1, batch_size)
        self.timeout = timeout
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self._post = post_fn or self._default_post

    def _default_post(self, payload: dict) -> tuple[int, object]:
        import requests

        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        resp = requests.post(
            self.endpoint, json=payload, headers=headers, timeout=self.timeout
        )
        try:
            body = resp.json()
        except ValueError:
            body = resp.text
        return resp.status_code, body

    def embed(self, texts: Sequence[str]) -> list[Embedding]:
        out: list[Embedding] = []
        for start in range(0, len(texts), self.batch_size):
            batch = list(texts[start : start + self.batch_size])
            rows = self._embed_batch(batch, start // self.batch_size)
            out.extend(Embedding.from_values(np.asarray(r, dtype=np.float64)) for r in rows)
        return out

    def _embed_batch(self, batch: list[str], batch_index: int) -> list[list[float]]:
        payload = {"model": self.model, "input": batch}
        last_error: Exception | None = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                delay = self.backoff_base * (2 ** (attempt - 1))
                logger.warning(
                    "embedding batch %d retry %d/%d after %.2fs: %s",
                    batch_index, attempt, self.max_retries, delay, last_error,
                )
                time.sleep(delay)
            try:
                status, body = self._post(payload)
            except Exception as e:  # transport-level failure
                last_error = e
                continue
            if status == 429 or status >= 500:
                last_error = BackendError(
                    f"embedding endpoint returned {status}", status=status, body=str(body)
                )
                continue
            if status != 200:
                raise BackendError(
                    f"embedding endpoint returned {status} for batch {batch_index}",
                    status=status,
                    body=str(body),
                )
            return self._extract_rows(body, len(batch), batch_index)
        raise TransportError(
            f"embedding batch {batch_index} failed after {self.max_retries} retries: {last_error}"
        )

    @staticmethod
    def _extract_rows(body: object, expected: int, batch_index: int) -> list[list[float]]:
        rows: object
        if isinstance(body, dict) and "data" in body:
            rows = [
                item["embedding"] if isinstance(item, dict) else item
                for item in body["data"]
            ]
        else:
            rows = body
        if not isinstance(rows, list) or len(rows) != expected:
            raise BackendError(
                f"embedding batch {batch_index}: expected {expected} vectors, "
                f"got {type(rows).__name__}"
            )
        return rows
