"""Hashing embedder properties and the HTTP embedding client."""

from __future__ import annotations

import random

import numpy as np
import pytest

from qaea_dr.embed import (
    Embedding,
    HashingEmbedder,
    HttpEmbeddingBackend,
    embed_texts,
    hash_embed,
)
from qaea_dr.errors import BackendError, TransportError, ValidationError
from qaea_dr.vdb import cosine

WORDS_A = [f"alpha{i}" for i in range(200)]
WORDS_B = [f"omega{i}" for i in range(200)]


def random_text(rng: random.Random, vocab: list[str], n: int) -> str:
    return " ".join(rng.choice(vocab) for _ in range(n))


class TestHashEmbed:
    def test_identical_text_identical_vector(self):
        a = hash_embed("a b", 256, 0)
        b = hash_embed("a b", 256, 0)
        assert cosine(a, b) == pytest.approx(1.0, abs=1e-12)
        assert np.array_equal(a.values, b.values)

    def test_unit_norm(self):
        for text in ("short", "a much longer text with many words", "中文 文本 by 字"):
            emb = hash_embed(text, 512, 3)
            assert abs(emb.norm - 1.0) <= 1e-9

    def test_unrelated_texts_low_cosine_d256(self):
        rng = random.Random(13)
        for _ in range(100):
            a = hash_embed(random_text(rng, WORDS_A, 30), 256, 0)
            b = hash_embed(random_text(rng, WORDS_B, 30), 256, 0)
            assert cosine(a, b) < 0.5

    def test_disjoint_vocabulary_near_zero_d1024(self):
        rng = random.Random(29)
        for _ in range(100):
            a = hash_embed(random_text(rng, WORDS_A, 25), 1024, 0)
            b = hash_embed(random_text(rng, WORDS_B, 25), 1024, 0)
            assert abs(cosine(a, b)) < 0.2

    def test_lexical_overlap_monotonicity(self):
        query = "what is the copper manifold"
        superset = "what is the copper manifold it splits the flow into four pipes"
        unrelated = "the evening train departs from platform nine after dark"
        d, seed = 1024, 0
        q = hash_embed(query, d, seed)
        assert cosine(q, hash_embed(superset, d, seed)) > cosine(
            q, hash_embed(unrelated, d, seed)
        )

    def test_seed_changes_vectors(self):
        a = hash_embed("same text", 256, 0)
        b = hash_embed("same text", 256, 1)
        assert not np.array_equal(a.values, b.values)

    def test_cjk_characters_tokenize(self):
        emb = hash_embed("中文", 128, 0)
        assert emb.norm == pytest.approx(1.0, abs=1e-9)

    def test_empty_and_tokenless_rejected(self):
        with pytest.raises(ValidationError):
            hash_embed("", 128, 0)
        with pytest.raises(ValidationError):
            hash_embed("   ", 128, 0)


class TestEmbedTexts:
    def test_order_preserving(self):
        provider = HashingEmbedder(dim=128, seed=0)
        texts = ["one", "two", "three"]
        embeddings = embed_texts(texts, provider)
        for text, emb in zip(texts, embeddings):
            assert np.array_equal(emb.values, hash_embed(text, 128, 0).values)

    def test_empty_string_rejected(self):
        provider = HashingEmbedder(dim=128)
        with pytest.raises(ValidationError, match="empty"):
            embed_texts(["ok", ""], provider)

    def test_normalized_output(self):
        provider = HashingEmbedder(dim=128)
        for emb in embed_texts(["alpha beta", "gamma"], provider):
            assert abs(emb.norm - 1.0) <= 1e-9

    def test_pure_function_of_config(self):
        a = embed_texts(["txt"], HashingEmbedder(dim=64, seed=5))[0]
        b = embed_texts(["txt"], HashingEmbedder(dim=64, seed=5))[0]
        assert np.array_equal(a.values, b.values)


class FakeTransport:
    """Records embedding payloads and replays scripted (status, body) pairs."""

    def __init__(self, script):
        self.script = list(script)
        self.payloads = []

    def __call__(self, payload):
        self.payloads.append(payload)
        item = self.script.pop(0)
        if isinstance(item, Exception):
            raise item
        return item


def rows_for(texts, dim=4):
    return [[float(len(t))] * dim for t in texts]


class TestHttpEmbeddingBackend:
    def make(self, transport, **kwargs):
        kwargs.setdefault("batch_size", 2)
        kwargs.setdefault("backoff_base", 0.0)
        return HttpEmbeddingBackend(
            endpoint="http://test/embed", model="emb", dim=4, post_fn=transport, **kwargs
        )

    def test_batching_and_order(self):
        texts = ["a", "bb", "ccc", "dddd", "eeeee"]
        transport = FakeTransport(
            [
                (200, rows_for(["a", "bb"])),
                (200, rows_for(["ccc", "dddd"])),
                (200, rows_for(["eeeee"])),
            ]
        )
        backend = self.make(transport)
        embeddings = backend.embed(texts)
        assert len(transport.payloads) == 3
        assert transport.payloads[0]["input"] == ["a", "bb"]
        assert [e.values[0] for e in embeddings] == [1.0, 2.0, 3.0, 4.0, 5.0]

    def test_openai_style_envelope(self):
        transport = FakeTransport(
            [(200, {"data": [{"embedding": [1.0, 0.0, 0.0, 0.0]}]})]
        )
        backend = self.make(transport)
        assert backend.embed(["x"])[0].values[0] == 1.0

    def test_retry_then_failure_identifies_batch(self):
        transport = FakeTransport(
            [
                (200, rows_for(["a", "bb"])),
                ConnectionError("down"),
                ConnectionError("down"),
                ConnectionError("down"),
            ]
        )
        backend = self.make(transport, max_retries=2)
        with pytest.raises(TransportError, match="batch 1"):
            backend.embed(["a", "bb", "ccc"])

    def test_wrong_row_count_is_backend_error(self):
        transport = FakeTransport([(200, rows_for(["a"]))])
        backend = self.make(transport)
        with pytest.raises(BackendError, match="expected 2"):
            backend.embed(["a", "bb"])


class TestEmbeddingType:
    def test_norm_cache_matches_recomputation(self):
        values = np.array([3.0, 4.0])
        emb = Embedding.from_values(values)
        assert emb.norm == pytest.approx(5.0, abs=1e-12)

    def test_normalized_zero_vector_passthrough(self):
        z = Embedding.from_values(np.zeros(4))
        assert z.normalized().norm == 0.0
