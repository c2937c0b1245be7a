"""Shared fixtures: the bundled smoke dataset and mock-backed pipelines."""

from __future__ import annotations

from pathlib import Path

import pytest

from qaea_dr.augment import augment_corpus
from qaea_dr.corpus import load_corpus, load_qrels, load_queries
from qaea_dr.embed import HashingEmbedder, embed_texts
from qaea_dr.llm import MockChatBackend, MockEvaluatorBackend
from qaea_dr.pipeline import build_component_stores

SMOKE_DIR = Path(__file__).parent / "data" / "smoke"


@pytest.fixture(scope="session")
def smoke_dir() -> Path:
    return SMOKE_DIR


@pytest.fixture(scope="session")
def smoke_corpus():
    return load_corpus(SMOKE_DIR / "corpus.jsonl")


@pytest.fixture(scope="session")
def smoke_queries():
    return load_queries(SMOKE_DIR / "queries.jsonl")


@pytest.fixture(scope="session")
def smoke_qrels():
    return load_qrels(SMOKE_DIR / "qrels.jsonl")


@pytest.fixture(scope="session")
def provider() -> HashingEmbedder:
    return HashingEmbedder(dim=1024, seed=0)


@pytest.fixture(scope="session")
def echo_records(smoke_corpus):
    return augment_corpus(
        smoke_corpus,
        threshold=9,
        generator=MockChatBackend(),
        evaluator=MockEvaluatorBackend(),
    )


@pytest.fixture(scope="session")
def smoke_stores_tri(smoke_corpus, echo_records, provider):
    return build_component_stores(smoke_corpus, echo_records, provider, "tri")


@pytest.fixture(scope="session")
def smoke_stores_tmo(smoke_corpus, echo_records, provider):
    return build_component_stores(smoke_corpus, echo_records, provider, "tmo")


@pytest.fixture(scope="session")
def smoke_query_embeddings(smoke_queries, provider):
    ordered = sorted(smoke_queries, key=lambda q: q.query_id)
    embeddings = embed_texts([q.text for q in ordered], provider)
    return {q.query_id: e for q, e in zip(ordered, embeddings)}
