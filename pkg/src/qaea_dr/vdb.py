"""Provenance-tagged flat vector store with exact top-k cosine search.

Component stores (originals, QA texts, event texts) compose into a final
store by disjoint union, so any component subset can be evaluated. Search
is exact (no ANN) and counts similarity computations so retrieval-cost
laws can be asserted as integer identities.

Entries are held as float32 (the persistence precision) and scored in
float64. Search order is deterministic: score descending, then
vector_id ascending; internally entries sit in vector_id order so a
stable sort on scores realizes the id tie-break.
"""

from __future__ import annotations

import json
import struct
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .embed import Embedding
from .errors import StoreLoadError, ValidationError

KINDS = ("original", "qa", "event")
STRATEGIES = ("tri", "tmo", "na")

_MAGIC = b"QVEC"
_VERSION = 1
_HEADER = struct.Struct("<4sIIQ")  # magic, version, dim, count


@dataclass(frozen=True)
class VectorEntry:
    vector_id: str
    embedding: Embedding
    doc_id: str
    kind: str
    strategy: str = "na"
    unit_index: int | None = None

    def __post_init__(self) -> None:
        if not self.vector_id:
            raise ValidationError("vector_id must be non-empty")
        if self.kind not in KINDS:
            raise ValidationError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.strategy not in STRATEGIES:
            raise ValidationError(
                f"strategy must be one of {STRATEGIES}, got {self.strategy!r}"
            )
        if self.kind == "original" and (self.strategy != "na" or self.unit_index is not None):
            raise ValidationError(
                f"original vector {self.vector_id!r} must have strategy 'na' and no unit_index"
            )


@dataclass(frozen=True)
class SearchHit:
    vector_id: str
    doc_id: str
    kind: str
    score: float
    rank: int


def cosine(u: Embedding, v: Embedding) -> float:
    """<u, v> / (|u| |v|), computed in float64."""
    if u.dim != v.dim:
        raise ValidationError(f"dimension mismatch: {u.dim} vs {v.dim}")
    if u.norm == 0.0 or v.norm == 0.0:
        raise ValidationError("cosine is undefined for zero-norm vectors")
    dot = float(np.dot(u.values.astype(np.float64), v.values.astype(np.float64)))
    return dot / (u.norm * v.norm)


class VectorStore:
    """Flat store; single writer while building, concurrent readers after."""

    def __init__(self, dim: int) -> None:
        if dim <= 0:
            raise ValidationError(f"dimension must be positive, got {dim}")
        self.dim = dim
        self._entries: dict[str, VectorEntry] = {}
        self._matrix: np.ndarray | None = None
        self._norms: np.ndarray | None = None
        self._order: list[VectorEntry] | None = None
        self._sim_count = 0
        self._count_lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[VectorEntry]:
        return iter(self._entries.values())

    def __contains__(self, vector_id: str) -> bool:
        return vector_id in self._entries

    def get(self, vector_id: str) -> VectorEntry:
        return self._entries[vector_id]

    def insert(self, entry: VectorEntry) -> None:
        if entry.embedding.dim != self.dim:
            raise ValidationError(
                f"vector {entry.vector_id!r}: dimension {entry.embedding.dim} != store {self.dim}"
            )
        if entry.vector_id in self._entries:
            raise ValidationError(f"duplicate vector_id {entry.vector_id!r}")
        # store at persistence precision so round-trips are bit-exact
        values32 = np.ascontiguousarray(entry.embedding.values, dtype=np.float32)
        emb = Embedding(
            values=values32, norm=float(np.linalg.norm(values32.astype(np.float64)))
        )
        self._entries[entry.vector_id] = VectorEntry(
            vector_id=entry.vector_id,
            embedding=emb,
            doc_id=entry.doc_id,
            kind=entry.kind,
            strategy=entry.strategy,
            unit_index=entry.unit_index,
        )
        self._matrix = None

    def extend(self, entries: Iterable[VectorEntry]) -> None:
        for e in entries:
            self.insert(e)

    def _frozen(self) -> tuple[list[VectorEntry], np.ndarray, np.ndarray]:
        """Entries in vector_id order plus the float64 score matrix."""
        if self._matrix is None:
            order = sorted(self._entries.values(), key=lambda e: e.vector_id)
            if order:
                mat = np.ascontiguousarray(
                    np.stack([e.embedding.values for e in order]).astype(np.float64)
                )
            else:
                mat = np.zeros((0, self.dim), dtype=np.float64)
            self._order = order
            self._matrix = mat
            self._norms = np.array([e.embedding.norm for e in order], dtype=np.float64)
        return self._order, self._matrix, self._norms  # type: ignore[return-value]

    def search(self, query: Embedding, k: int) -> list[SearchHit]:
        """Exact top-k by cosine; k beyond the store size returns everything."""
        if len(self._entries) == 0:
            raise ValidationError("cannot search an empty store")
        if k < 1:
            raise ValidationError(f"k must be >= 1, got {k}")
        if query.dim != self.dim:
            raise ValidationError(f"query dimension {query.dim} != store {self.dim}")
        if query.norm == 0.0:
            raise ValidationError("cannot search with a zero-norm query")

        order, mat, norms = self._frozen()
        with self._count_lock:
            self._sim_count += len(order)

        k = min(k, len(order))
        scores = self._score(mat, norms, query)
        # stable sort of -scores keeps ascending index (= vector_id) order
        # within ties
        idx = np.argsort(-scores, kind="stable")[:k]
        return [
            SearchHit(
                vector_id=order[i].vector_id,
                doc_id=order[i].doc_id,
                kind=order[i].kind,
                score=float(scores[i]),
                rank=rank,
            )
            for rank, i in enumerate(idx, start=1)
        ]

    @staticmethod
    def _score(mat: np.ndarray, norms: np.ndarray, query: Embedding) -> np.ndarray:
        dots = mat @ np.asarray(query.values, dtype=np.float64)
        denom = norms * query.norm
        return np.divide(dots, denom, out=np.zeros_like(dots), where=denom > 0.0)

    def similarities(self, query: Embedding) -> dict[str, float]:
        """Cosine score per vector_id; does not touch the search counter."""
        order, mat, norms = self._frozen()
        scores = self._score(mat, norms, query)
        return {e.vector_id: float(s) for e, s in zip(order, scores)}

    @property
    def sim_count(self) -> int:
        with self._count_lock:
            return self._sim_count

    def reset_sim_count(self) -> None:
        with self._count_lock:
            self._sim_count = 0

    def max_vectors_per_doc(self) -> int:
        counts: dict[str, int] = {}
        for e in self._entries.values():
            counts[e.doc_id] = counts.get(e.doc_id, 0) + 1
        return max(counts.values(), default=0)


def compose(stores: Sequence[VectorStore]) -> VectorStore:
    """Disjoint union of component stores into a fresh store."""
    if not stores:
        raise ValidationError("compose requires at least one store")
    dims = {s.dim for s in stores}
    if len(dims) != 1:
        raise ValidationError(f"cannot compose stores of mixed dimensions {sorted(dims)}")
    out = VectorStore(dim=stores[0].dim)
    for store in stores:
        for entry in store:
            out.insert(entry)
    return out


def persist(store: VectorStore, path: str | Path) -> None:
    """Write index.vec (binary rows) + index.meta.jsonl (provenance)."""
    path = Path(path)
    entries = sorted(store, key=lambda e: e.vector_id)
    with path.open("wb") as f:
        f.write(_HEADER.pack(_MAGIC, _VERSION, store.dim, len(entries)))
        for e in entries:
            f.write(np.ascontiguousarray(e.embedding.values, dtype="<f4").tobytes())
    with _meta_path(path).open("w", encoding="utf-8") as f:
        for row, e in enumerate(entries):
            f.write(
                json.dumps(
                    {
                        "row": row,
                        "vector_id": e.vector_id,
                        "doc_id": e.doc_id,
                        "kind": e.kind,
                        "strategy": e.strategy,
                        "unit_index": e.unit_index,
                    },
                    ensure_ascii=False,
                    sort_keys=True,
                )
                + "\n"
            )


def load(path: str | Path) -> VectorStore:
    path = Path(path)
    if not path.exists():
        raise StoreLoadError(f"index file not found: {path}")
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise StoreLoadError(f"{path}: truncated header", offset=len(raw))
    magic, version, dim, count = _HEADER.unpack_from(raw, 0)
    if magic != _MAGIC:
        raise StoreLoadError(f"{path}: bad magic {magic!r}", offset=0)
    if version != _VERSION:
        raise StoreLoadError(f"{path}: unsupported version {version}", offset=4)
    expected = _HEADER.size + count * dim * 4
    if len(raw) != expected:
        raise StoreLoadError(
            f"{path}: expected {expected} bytes for {count} rows of dim {dim}, "
            f"got {len(raw)}",
            offset=min(len(raw), expected),
        )
    mat = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).reshape(count, dim)

    meta_file = _meta_path(path)
    if not meta_file.exists():
        raise StoreLoadError(f"metadata sidecar not found: {meta_file}")
    store = VectorStore(dim=dim)
    rows_seen = 0
    with meta_file.open("r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                meta = json.loads(line)
            except json.JSONDecodeError as e:
                raise StoreLoadError(f"{meta_file}:{line_no}: malformed JSON: {e}") from e
            row = meta["row"]
            if not 0 <= row < count:
                raise StoreLoadError(f"{meta_file}:{line_no}: row {row} out of range")
            values = np.array(mat[row], dtype=np.float32)
            store.insert(
                VectorEntry(
                    vector_id=meta["vector_id"],
                    embedding=Embedding(
                        values=values,
                        norm=float(np.linalg.norm(values.astype(np.float64))),
                    ),
                    doc_id=meta["doc_id"],
                    kind=meta["kind"],
                    strategy=meta.get("strategy", "na"),
                    unit_index=meta.get("unit_index"),
                )
            )
            rows_seen += 1
    if rows_seen != count:
        raise StoreLoadError(
            f"{meta_file}: {rows_seen} metadata rows for {count} vectors"
        )
    return store


def _meta_path(vec_path: Path) -> Path:
    return vec_path.with_name(vec_path.stem + ".meta.jsonl")
