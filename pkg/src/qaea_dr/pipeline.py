"""Stage implementations behind the CLI subcommands.

Each stage reads the previous stage's artifact files from the output
directory and writes its own plus a manifest, so expensive stages are
cached and independently re-runnable. With mock backends and fixed
seeds, rerunning any stage over unchanged inputs is byte-identical.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Mapping, Sequence

from . import vdb
from .augment import GenerationRecord, augment_corpus, load_generations, save_generations
from .config import RunConfig, read_manifest, write_manifest
from .corpus import (
    Corpus,
    Qrels,
    QuerySet,
    load_corpus,
    load_qrels,
    load_queries,
    sample_subset,
    save_corpus,
    save_qrels,
    save_queries,
)
from .embed import Embedding, EmbeddingProvider, embed_texts
from .errors import ValidationError
from .evaluation import (
    EvalReport,
    ScenarioConfig,
    collapse_to_docs,
    run_ablation,
    run_scenario,
    save_report,
)
from .organize import organize
from .vdb import VectorEntry, VectorStore

logger = logging.getLogger(__name__)

COMPONENT_FILES = {
    "original": "original.vec",
    "qa": "qa.vec",
    "event": "event.vec",
}


def stage_ingest(config: RunConfig) -> None:
    """Validate inputs, optionally subsample the corpus, normalize to the
    output directory."""
    out = config.output_dir
    out.mkdir(parents=True, exist_ok=True)

    corpus = load_corpus(config.path("corpus"))
    queries = load_queries(config.path("queries"))
    qrels = load_qrels(config.path("qrels"))

    if config.sample_size is not None:
        corpus = sample_subset(corpus, config.sample_size, config.seed)
        logger.info("sampled %d of the corpus documents", len(corpus))
    qrels.warn_unknown_docs(corpus)

    save_corpus(corpus, out / "corpus.jsonl")
    save_queries(queries, out / "queries.jsonl")
    save_qrels(qrels, out / "qrels.jsonl")
    write_manifest(
        "ingest",
        config,
        inputs={
            "corpus": config.path("corpus"),
            "queries": config.path("queries"),
            "qrels": config.path("qrels"),
        },
        outputs={
            "corpus": out / "corpus.jsonl",
            "queries": out / "queries.jsonl",
            "qrels": out / "qrels.jsonl",
        },
        stats={"documents": len(corpus), "queries": len(queries), "qrels": len(qrels)},
    )


def stage_augment(config: RunConfig, import_generations: Path | None = None) -> None:
    """Generate units for every document, or import pre-generated records."""
    out = config.output_dir
    read_manifest(out, "ingest")
    corpus = load_corpus(out / "corpus.jsonl")

    if import_generations is not None:
        records = load_generations(import_generations)
        unknown = sorted({r.doc_id for r in records if r.doc_id not in corpus})
        if unknown:
            logger.warning(
                "%d imported records reference unknown doc_ids (first: %r)",
                len(unknown), unknown[0],
            )
    else:
        records = augment_corpus(
            corpus,
            threshold=config.threshold,
            generator=config.build_generator(),
            evaluator=config.build_evaluator(),
            language=config.language,
            parallelism=config.parallelism,
        )
    save_generations(records, out / "generations.jsonl")

    regenerated = sum(1 for r in records if r.regenerated)
    failed = sum(1 for r in records if r.failed)
    inputs = {"corpus": out / "corpus.jsonl"}
    if import_generations is not None:
        inputs["imported"] = import_generations
    write_manifest(
        "augment",
        config,
        inputs=inputs,
        outputs={"generations": out / "generations.jsonl"},
        stats={"records": len(records), "regenerated": regenerated, "failed": failed},
    )


def build_component_stores(
    corpus: Corpus,
    records: Sequence[GenerationRecord],
    provider: EmbeddingProvider,
    strategy: str,
) -> dict[str, VectorStore]:
    """Embed originals and organized generated texts into the three
    component stores keyed by kind."""
    stores = {kind: VectorStore(dim=provider.dim) for kind in COMPONENT_FILES}

    doc_texts = [doc.text for doc in corpus]
    for doc, emb in zip(corpus, embed_texts(doc_texts, provider)):
        stores["original"].insert(
            VectorEntry(
                vector_id=f"{doc.doc_id}::original",
                embedding=emb,
                doc_id=doc.doc_id,
                kind="original",
            )
        )

    for record in records:
        if record.failed or not record.units:
            continue
        kind = "qa" if record.task == "qag" else "event"
        texts = organize([u.text for u in record.units], strategy)
        for j, emb in enumerate(embed_texts(texts, provider)):
            stores[kind].insert(
                VectorEntry(
                    vector_id=f"{record.doc_id}::{kind}::{j:04d}",
                    embedding=emb,
                    doc_id=record.doc_id,
                    kind=kind,
                    strategy=strategy,
                    unit_index=j,
                )
            )
    return stores


def stage_embed(config: RunConfig) -> None:
    """Map original and generated texts to vectors (one provenance-tagged
    staging store)."""
    out = config.output_dir
    read_manifest(out, "augment")
    corpus = load_corpus(out / "corpus.jsonl")
    records = load_generations(out / "generations.jsonl")

    stores = build_component_stores(
        corpus, records, config.build_embedder(), config.strategy
    )
    staging = vdb.compose(list(stores.values()))
    vdb.persist(staging, out / "embeddings.vec")
    write_manifest(
        "embed",
        config,
        inputs={
            "corpus": out / "corpus.jsonl",
            "generations": out / "generations.jsonl",
        },
        outputs={
            "embeddings": out / "embeddings.vec",
            "embeddings_meta": out / "embeddings.meta.jsonl",
        },
        stats={"vectors": len(staging), "dim": staging.dim},
    )


def stage_index(config: RunConfig) -> None:
    """Split the staging store into the three component indexes."""
    out = config.output_dir
    read_manifest(out, "embed")
    staging = vdb.load(out / "embeddings.vec")

    index_dir = out / "index"
    index_dir.mkdir(parents=True, exist_ok=True)
    outputs: dict[str, Path] = {}
    stats: dict[str, int] = {}
    for kind, filename in COMPONENT_FILES.items():
        component = VectorStore(dim=staging.dim)
        for entry in staging:
            if entry.kind == kind:
                component.insert(entry)
        vdb.persist(component, index_dir / filename)
        outputs[kind] = index_dir / filename
        outputs[f"{kind}_meta"] = index_dir / filename.replace(".vec", ".meta.jsonl")
        stats[f"{kind}_vectors"] = len(component)
    write_manifest(
        "index", config, inputs={"embeddings": out / "embeddings.vec"}, outputs=outputs,
        stats=stats,
    )


def load_component_stores(
    output_dir: Path, components: Sequence[str]
) -> dict[str, VectorStore]:
    index_dir = output_dir / "index"
    stores = {}
    for kind in components:
        path = index_dir / COMPONENT_FILES[kind]
        if not path.exists():
            raise ValidationError(f"missing {path}: run the 'index' stage first")
        stores[kind] = vdb.load(path)
    return stores


def _query_embeddings(
    queries: QuerySet, provider: EmbeddingProvider
) -> dict[str, Embedding]:
    ordered = sorted(queries, key=lambda q: q.query_id)
    embs = embed_texts([q.text for q in ordered], provider)
    return {q.query_id: e for q, e in zip(ordered, embs)}


def stage_retrieve(config: RunConfig) -> None:
    """Search the configured component subset; write collapsed doc rankings."""
    out = config.output_dir
    read_manifest(out, "index")
    queries = load_queries(out / "queries.jsonl")
    stores = load_component_stores(out, config.components)
    store = vdb.compose([stores[c] for c in config.components])
    provider = config.build_embedder()
    embeddings = _query_embeddings(queries, provider)

    k_max = max(config.k_values)
    k_fetch = min(len(store), k_max * max(1, store.max_vectors_per_doc()))
    store.reset_sim_count()

    with (out / "runs.jsonl").open("w", encoding="utf-8") as f:
        for query in sorted(queries, key=lambda q: q.query_id):
            hits = store.search(embeddings[query.query_id], k_fetch)
            ranked = collapse_to_docs(hits, k_max)
            f.write(
                json.dumps(
                    {
                        "query_id": query.query_id,
                        "docs": [d for d, _ in ranked],
                        "scores": [round(s, 12) for _, s in ranked],
                    },
                    ensure_ascii=False,
                    sort_keys=True,
                )
                + "\n"
            )
    write_manifest(
        "retrieve",
        config,
        inputs={"queries": out / "queries.jsonl"},
        outputs={"runs": out / "runs.jsonl"},
        stats={
            "sim_count": store.sim_count,
            "vector_count": len(store),
            "components": list(config.components),
        },
    )


def stage_eval(config: RunConfig, force: bool = False) -> EvalReport:
    """Score the retrieve stage's rankings against the qrels."""
    from .evaluation import QueryResult, mrr_at_k, ndcg_at_k, precision_at_k, recall_at_k

    out = config.output_dir
    retrieve_manifest = read_manifest(out, "retrieve")
    index_manifest = read_manifest(out, "index")
    hashes = {retrieve_manifest["config_hash"], index_manifest["config_hash"]}
    if len(hashes) > 1 and not force:
        raise ValidationError(
            "input artifacts were produced under different configs "
            f"({sorted(hashes)}); rerun upstream stages or pass --force"
        )

    qrels = load_qrels(out / "qrels.jsonl")
    grades_by_query = qrels.by_query()

    per_query: list[QueryResult] = []
    skipped = 0
    with (out / "runs.jsonl").open("r", encoding="utf-8") as f:
        for line in f:
            row = json.loads(line)
            grades = grades_by_query.get(row["query_id"], {})
            if not any(r > 0 for r in grades.values()):
                skipped += 1
                continue
            ranked = row["docs"]
            metrics = {}
            for k in config.k_values:
                metrics[f"ndcg@{k}"] = ndcg_at_k(ranked, grades, k, config.ndcg_gain)
                metrics[f"mrr@{k}"] = mrr_at_k(ranked, grades, k)
                metrics[f"recall@{k}"] = recall_at_k(ranked, grades, k)
                metrics[f"precision@{k}"] = precision_at_k(ranked, grades, k)
            per_query.append(
                QueryResult(
                    query_id=row["query_id"],
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
    report = EvalReport(
        scenario=ScenarioConfig(
            components=config.components,
            strategy=config.strategy,
            k_values=config.k_values,
            gain=config.ndcg_gain,
        ),
        per_query=per_query,
        aggregates=aggregates,
        sim_count=retrieve_manifest["stats"]["sim_count"],
        vector_count=retrieve_manifest["stats"]["vector_count"],
        skipped_queries=skipped,
        config_hash=config.config_hash(),
    )
    save_report(report, out / "report.json", out / "per_query.csv")
    write_manifest(
        "eval",
        config,
        inputs={"runs": out / "runs.jsonl", "qrels": out / "qrels.jsonl"},
        outputs={"report": out / "report.json", "per_query": out / "per_query.csv"},
        stats={"aggregates": report.aggregates, "evaluated": len(per_query)},
    )
    return report


def stage_ablate(config: RunConfig) -> list[EvalReport]:
    """Run the full seven-scenario component grid and write a summary table."""
    out = config.output_dir
    read_manifest(out, "index")
    queries = load_queries(out / "queries.jsonl")
    qrels = load_qrels(out / "qrels.jsonl")
    stores = load_component_stores(out, list(COMPONENT_FILES))
    embeddings = _query_embeddings(queries, config.build_embedder())

    reports = run_ablation(
        stores,
        list(queries),
        embeddings,
        qrels,
        strategy=config.strategy,
        k_values=config.k_values,
        gain=config.ndcg_gain,
    )

    import csv

    metric_names = sorted(reports[0].aggregates)
    with (out / "ablation.csv").open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["scenario", "vectors", "sim_count", *metric_names])
        for report in reports:
            writer.writerow(
                [
                    report.scenario.label,
                    report.vector_count,
                    report.sim_count,
                    *[f"{report.aggregates[m]:.6f}" for m in metric_names],
                ]
            )
    write_manifest(
        "ablate",
        config,
        inputs={"queries": out / "queries.jsonl", "qrels": out / "qrels.jsonl"},
        outputs={"ablation": out / "ablation.csv"},
        stats={"scenarios": len(reports)},
    )
    return reports


def run_mock_pipeline(config: RunConfig) -> EvalReport:
    """ingest -> augment -> embed -> index -> retrieve -> eval in one call."""
    stage_ingest(config)
    stage_augment(config)
    stage_embed(config)
    stage_index(config)
    stage_retrieve(config)
    return stage_eval(config)
