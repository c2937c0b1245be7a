"""Retrieval dataset loading: corpus, queries, and relevance judgments.

All three inputs are line-delimited JSON, one object per line:

- corpus.jsonl:  {"doc_id": "d1", "text": "...", "metadata": {...}?}
- queries.jsonl: {"query_id": "q1", "text": "..."}
- qrels.jsonl:   {"query_id": "q1", "doc_id": "d1", "relevance": 1}

Everything is immutable after load and safe to share across threads.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

from .errors import ValidationError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Document:
    doc_id: str
    text: str
    metadata: dict[str, str] | None = None

    def __post_init__(self) -> None:
        if not self.doc_id:
            raise ValidationError("doc_id must be non-empty")
        if not self.text:
            raise ValidationError(f"document {self.doc_id!r}: text must be non-empty")


@dataclass(frozen=True)
class Query:
    query_id: str
    text: str

    def __post_init__(self) -> None:
        if not self.query_id:
            raise ValidationError("query_id must be non-empty")
        if not self.text:
            raise ValidationError(f"query {self.query_id!r}: text must be non-empty")


@dataclass(frozen=True)
class QrelEntry:
    query_id: str
    doc_id: str
    relevance: int

    def __post_init__(self) -> None:
        if self.relevance < 0:
            raise ValidationError(
                f"qrel ({self.query_id!r}, {self.doc_id!r}): relevance must be >= 0"
            )


@dataclass(frozen=True)
class Corpus:
    documents: tuple[Document, ...]
    _by_id: dict[str, Document] = field(repr=False, compare=False, default_factory=dict)

    def __post_init__(self) -> None:
        by_id: dict[str, Document] = {}
        for doc in self.documents:
            if doc.doc_id in by_id:
                raise ValidationError(f"duplicate doc_id {doc.doc_id!r}")
            by_id[doc.doc_id] = doc
        object.__setattr__(self, "_by_id", by_id)

    def __len__(self) -> int:
        return len(self.documents)

    def __iter__(self) -> Iterator[Document]:
        return iter(self.documents)

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self._by_id

    def get(self, doc_id: str) -> Document:
        return self._by_id[doc_id]


@dataclass(frozen=True)
class QuerySet:
    queries: tuple[Query, ...]
    _by_id: dict[str, Query] = field(repr=False, compare=False, default_factory=dict)

    def __post_init__(self) -> None:
        by_id: dict[str, Query] = {}
        for q in self.queries:
            if q.query_id in by_id:
                raise ValidationError(f"duplicate query_id {q.query_id!r}")
            by_id[q.query_id] = q
        object.__setattr__(self, "_by_id", by_id)

    def __len__(self) -> int:
        return len(self.queries)

    def __iter__(self) -> Iterator[Query]:
        return iter(self.queries)

    def get(self, query_id: str) -> Query:
        return self._by_id[query_id]


@dataclass(frozen=True)
class Qrels:
    entries: tuple[QrelEntry, ...]

    def __post_init__(self) -> None:
        seen: set[tuple[str, str]] = set()
        for e in self.entries:
            key = (e.query_id, e.doc_id)
            if key in seen:
                raise ValidationError(f"duplicate qrel pair {key!r}")
            seen.add(key)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[QrelEntry]:
        return iter(self.entries)

    def for_query(self, query_id: str) -> dict[str, int]:
        """Relevance grade per doc_id for one query (empty if unknown)."""
        return {e.doc_id: e.relevance for e in self.entries if e.query_id == query_id}

    def by_query(self) -> dict[str, dict[str, int]]:
        out: dict[str, dict[str, int]] = {}
        for e in self.entries:
            out.setdefault(e.query_id, {})[e.doc_id] = e.relevance
        return out

    def warn_unknown_docs(self, corpus: Corpus) -> list[QrelEntry]:
        """Log qrels pointing outside the corpus; they stay valid.

        Unknown doc_ids are never retrieved, so they only lower recall.
        This keeps subsampled corpora evaluable.
        """
        unknown = [e for e in self.entries if e.doc_id not in corpus]
        if unknown:
            logger.warning(
                "%d qrel entries reference doc_ids absent from the corpus "
                "(first: %r); they will score as non-retrieved",
                len(unknown),
                unknown[0].doc_id,
            )
        return unknown


def _iter_jsonl(path: str | Path) -> Iterator[tuple[int, dict]]:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"file not found: {path}")
    with path.open("r", encoding="utf-8") as f:
        for line_no, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise ValidationError(f"{path}:{line_no}: malformed JSON: {e}") from e
            if not isinstance(obj, dict):
                raise ValidationError(f"{path}:{line_no}: expected a JSON object")
            yield line_no, obj


def _require(obj: dict, key: str, path: Path | str, line_no: int) -> object:
    if key not in obj:
        raise ValidationError(f"{path}:{line_no}: missing required key {key!r}")
    return obj[key]


def load_corpus(path: str | Path) -> Corpus:
    docs: list[Document] = []
    for line_no, obj in _iter_jsonl(path):
        doc_id = _require(obj, "doc_id", path, line_no)
        text = _require(obj, "text", path, line_no)
        if not isinstance(doc_id, str) or not isinstance(text, str):
            raise ValidationError(f"{path}:{line_no}: doc_id and text must be strings")
        metadata = obj.get("metadata")
        try:
            docs.append(Document(doc_id=doc_id, text=text, metadata=metadata))
        except ValidationError as e:
            raise ValidationError(f"{path}:{line_no}: {e}") from e
    try:
        return Corpus(documents=tuple(docs))
    except ValidationError as e:
        raise ValidationError(f"{path}: {e}") from e


def load_queries(path: str | Path) -> QuerySet:
    queries: list[Query] = []
    for line_no, obj in _iter_jsonl(path):
        query_id = _require(obj, "query_id", path, line_no)
        text = _require(obj, "text", path, line_no)
        if not isinstance(query_id, str) or not isinstance(text, str):
            raise ValidationError(f"{path}:{line_no}: query_id and text must be strings")
        try:
            queries.append(Query(query_id=query_id, text=text))
        except ValidationError as e:
            raise ValidationError(f"{path}:{line_no}: {e}") from e
    try:
        return QuerySet(queries=tuple(queries))
    except ValidationError as e:
        raise ValidationError(f"{path}: {e}") from e


def load_qrels(path: str | Path) -> Qrels:
    entries: list[QrelEntry] = []
    for line_no, obj in _iter_jsonl(path):
        query_id = _require(obj, "query_id", path, line_no)
        doc_id = _require(obj, "doc_id", path, line_no)
        relevance = _require(obj, "relevance", path, line_no)
        if not isinstance(query_id, str) or not isinstance(doc_id, str):
            raise ValidationError(f"{path}:{line_no}: query_id and doc_id must be strings")
        if not isinstance(relevance, int) or isinstance(relevance, bool):
            raise ValidationError(f"{path}:{line_no}: relevance must be an integer")
        try:
            entries.append(QrelEntry(query_id=query_id, doc_id=doc_id, relevance=relevance))
        except ValidationError as e:
            raise ValidationError(f"{path}:{line_no}: {e}") from e
    try:
        return Qrels(entries=tuple(entries))
    except ValidationError as e:
        raise ValidationError(f"{path}: {e}") from e


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as f:
        for doc in corpus:
            row: dict = {"doc_id": doc.doc_id, "text": doc.text}
            if doc.metadata is not None:
                row["metadata"] = doc.metadata
            f.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")


def save_queries(queries: QuerySet, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as f:
        for q in queries:
            f.write(
                json.dumps(
                    {"query_id": q.query_id, "text": q.text},
                    ensure_ascii=False,
                    sort_keys=True,
                )
                + "\n"
            )


def save_qrels(qrels: Qrels, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as f:
        for e in qrels:
            f.write(
                json.dumps(
                    {"doc_id": e.doc_id, "query_id": e.query_id, "relevance": e.relevance},
                    ensure_ascii=False,
                    sort_keys=True,
                )
                + "\n"
            )


def sample_subset(corpus: Corpus, size: int, seed: int) -> Corpus:
    """Uniform subsample without replacement, deterministic per seed."""
    if size < 0:
        raise ValidationError(f"sample size must be >= 0, got {size}")
    if size > len(corpus):
        raise ValidationError(f"sample size {size} exceeds corpus size {len(corpus)}")
    rng = random.Random(seed)
    return Corpus(documents=tuple(rng.sample(list(corpus.documents), size)))
