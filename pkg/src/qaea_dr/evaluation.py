"""Retrieval evaluation: document collapsing, ranking metrics, ablation.

Qrels label documents while the store ranks vectors, so vector hits are
collapsed to documents first (best-ranked vector wins, duplicates drop).
Generated vectors inherit their source document's relevance: a hit on a
QA or event vector counts as retrieving the document it came from.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .corpus import Qrels, Query
from .embed import Embedding
from .errors import ValidationError
from .vdb import SearchHit, VectorStore, compose

COMPONENTS = ("original", "qa", "event")

# §V-B style grid: every non-empty component combination
ABLATION_SCENARIOS: tuple[tuple[str, ...], ...] = (
    ("original",),
    ("qa",),
    ("event",),
    ("original", "qa"),
    ("original", "event"),
    ("qa", "event"),
    ("original", "qa", "event"),
)


@dataclass(frozen=True)
class ScenarioConfig:
    components: tuple[str, ...]
    strategy: str = "tri"
    k_values: tuple[int, ...] = (1, 10)
    gain: str = "exp"  # "exp" -> 2^rel - 1, "linear" -> rel

    def __post_init__(self) -> None:
        if not self.components:
            raise ValidationError("scenario needs at least one component")
        for c in self.components:
            if c not in COMPONENTS:
                raise ValidationError(f"unknown component {c!r}")
        if not self.k_values or any(k < 1 for k in self.k_values):
            raise ValidationError("k_values must be positive")
        if self.gain not in ("exp", "linear"):
            raise ValidationError(f"gain must be 'exp' or 'linear', got {self.gain!r}")

    @property
    def label(self) -> str:
        return "+".join(self.components)


@dataclass
class QueryResult:
    query_id: str
    ranked_docs: list[str]
    metrics: dict[str, float]
    hit_at_1: bool


@dataclass
class EvalReport:
    scenario: ScenarioConfig
    per_query: list[QueryResult]
    aggregates: dict[str, float]
    sim_count: int
    vector_count: int
    skipped_queries: int = 0
    config_hash: str | None = None


def collapse_to_docs(hits: Sequence[SearchHit], k: int) -> list[tuple[str, float]]:
    """First k distinct documents in rank order, each with its best score."""
    seen: set[str] = set()
    out: list[tuple[str, float]] = []
    for hit in hits:
        if hit.doc_id in seen:
            continue
        seen.add(hit.doc_id)
        out.append((hit.doc_id, hit.score))
        if len(out) == k:
            break
    return out


def _gain(rel: int, gain: str) -> float:
    return float(2**rel - 1) if gain == "exp" else float(rel)


def ndcg_at_k(
    ranked_docs: Sequence[str], qrels: Mapping[str, int], k: int, gain: str = "exp"
) -> float:
    """Discounted cumulative gain over the top k, normalized by the ideal."""
    dcg = 0.0
    for i, doc_id in enumerate(ranked_docs[:k], start=1):
        rel = qrels.get(doc_id, 0)
        if rel > 0:
            dcg += _gain(rel, gain) / math.log2(i + 1)
    ideal = sorted((r for r in qrels.values() if r > 0), reverse=True)[:k]
    idcg = sum(_gain(rel, gain) / math.log2(i + 1) for i, rel in enumerate(ideal, start=1))
    if idcg == 0.0:
        return 0.0
    return dcg / idcg


def mrr_at_k(ranked_docs: Sequence[str], qrels: Mapping[str, int], k: int) -> float:
    for i, doc_id in enumerate(ranked_docs[:k], start=1):
        if qrels.get(doc_id, 0) > 0:
            return 1.0 / i
    return 0.0


def recall_at_k(ranked_docs: Sequence[str], qrels: Mapping[str, int], k: int) -> float:
    relevant = {d for d, r in qrels.items() if r > 0}
    if not relevant:
        return 0.0
    retrieved = set(ranked_docs[:k]) & relevant
    return len(retrieved) / len(relevant)


def precision_at_k(ranked_docs: Sequence[str], qrels: Mapping[str, int], k: int) -> float:
    if k <= 0:
        raise ValidationError("k must be positive")
    hits = sum(1 for d in ranked_docs[:k] if qrels.get(d, 0) > 0)
    return hits / k


def run_scenario(
    config: ScenarioConfig,
    stores: Mapping[str, VectorStore],
    queries: Sequence[Query],
    query_embeddings: Mapping[str, Embedding],
    qrels: Qrels,
) -> EvalReport:
    """Compose the selected components and evaluate every query against them."""
    if not queries:
        raise ValidationError("cannot evaluate an empty query set")
    missing = [c for c in config.components if c not in stores]
    if missing:
        raise ValidationError(f"scenario {config.label}: missing stores for {missing}")

    store = compose([stores[c] for c in config.components])
    if len(store) == 0:
        raise ValidationError(f"scenario {config.label}: composed store is empty")
    store.reset_sim_count()

    k_max = max(config.k_values)
    # enough vector hits that k_max distinct documents can survive the collapse
    k_fetch = min(len(store), k_max * max(1, store.max_vectors_per_doc()))

    grades_by_query = qrels.by_query()
    per_query: list[QueryResult] = []
    skipped = 0
    for query in sorted(queries, key=lambda q: q.query_id):
        grades = grades_by_query.get(query.query_id, {})
        if not any(r > 0 for r in grades.values()):
            skipped += 1
            continue
        hits = store.search(query_embeddings[query.query_id], k_fetch)
        ranked = [doc for doc, _ in collapse_to_docs(hits, k_max)]
        metrics: dict[str, float] = {}
        for k in config.k_values:
            metrics[f"ndcg@{k}"] = ndcg_at_k(ranked, grades, k, config.gain)
            metrics[f"mrr@{k}"] = mrr_at_k(ranked, grades, k)
            metrics[f"recall@{k}"] = recall_at_k(ranked, grades, k)
            metrics[f"precision@{k}"] = precision_at_k(ranked, grades, k)
        per_query.append(
            QueryResult(
                query_id=query.query_id,
                ranked_docs=ranked,
                metrics=metrics,
                hit_at_1=bool(ranked) and grades.get(ranked[0], 0) > 0,
            )
        )

    if not per_query:
        raise ValidationError("no query has a positively labeled document")

    aggregates = {
        name: sum(r.metrics[name] for r in per_query) / len(per_query)
        for name in per_query[0].metrics
    }
    return EvalReport(
        scenario=config,
        per_query=per_query,
        aggregates=aggregates,
        sim_count=store.sim_count,
        vector_count=len(store),
        skipped_queries=skipped,
    )


def run_ablation(
    stores: Mapping[str, VectorStore],
    queries: Sequence[Query],
    query_embeddings: Mapping[str, Embedding],
    qrels: Qrels,
    strategy: str = "tri",
    k_values: tuple[int, ...] = (1, 10),
    gain: str = "exp",
) -> list[EvalReport]:
    """All seven component-subset scenarios, in the canonical order."""
    return [
        run_scenario(
            ScenarioConfig(
                components=components, strategy=strategy, k_values=k_values, gain=gain
            ),
            stores,
            queries,
            query_embeddings,
            qrels,
        )
        for components in ABLATION_SCENARIOS
    ]


def recall1_winloss(report_a: EvalReport, report_b: EvalReport) -> tuple[float, float]:
    """Fractions of queries where exactly one report recalls gold at rank 1."""
    a_hits = {r.query_id: r.hit_at_1 for r in report_a.per_query}
    b_hits = {r.query_id: r.hit_at_1 for r in report_b.per_query}
    shared = sorted(set(a_hits) & set(b_hits))
    if not shared:
        raise ValidationError("reports share no evaluated queries")
    wins = sum(1 for q in shared if a_hits[q] and not b_hits[q])
    losses = sum(1 for q in shared if b_hits[q] and not a_hits[q])
    return wins / len(shared), losses / len(shared)


# ---------------------------------------------------------------------------
# Report serialization
# ---------------------------------------------------------------------------


def report_to_json(report: EvalReport) -> dict:
    return {
        "scenario": {
            "components": list(report.scenario.components),
            "strategy": report.scenario.strategy,
            "k_values": list(report.scenario.k_values),
            "gain": report.scenario.gain,
        },
        "aggregates": report.aggregates,
        "sim_count": report.sim_count,
        "vector_count": report.vector_count,
        "evaluated_queries": len(report.per_query),
        "skipped_queries": report.skipped_queries,
        "config_hash": report.config_hash,
    }


def save_report(report: EvalReport, json_path: str | Path, csv_path: str | Path) -> None:
    Path(json_path).write_text(
        json.dumps(report_to_json(report), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    metric_names = sorted(report.per_query[0].metrics) if report.per_query else []
    with Path(csv_path).open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["query_id", *metric_names, "ranked_docs"])
        for row in report.per_query:
            writer.writerow(
                [
                    row.query_id,
                    *[f"{row.metrics[m]:.6f}" for m in metric_names],
                    " ".join(row.ranked_docs),
                ]
            )
