"""Measure exact-search latency against store size.

Retrieval cost over a flat store is one similarity computation per
stored vector, so per-query latency should grow linearly with the
vector count; this prints the measured latencies and the implied
per-vector cost so the proportionality is visible. Run from the repo
root:

    python3 benchmarks/bench_search.py [--dim 1024] [--k 10]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from qaea_dr.embed import Embedding
from qaea_dr.vdb import VectorEntry, VectorStore


def build_store(n: int, dim: int, rng: np.random.Generator) -> VectorStore:
    store = VectorStore(dim=dim)
    mat = rng.standard_normal((n, dim))
    mat /= np.linalg.norm(mat, axis=1, keepdims=True)
    for i in range(n):
        store.insert(
            VectorEntry(
                vector_id=f"v{i:07d}",
                embedding=Embedding.from_values(mat[i]),
                doc_id=f"d{i:07d}",
                kind="original",
            )
        )
    return store


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--dim", type=int, default=1024)
    parser.add_argument("--k", type=int, default=10)
    parser.add_argument("--queries", type=int, default=10)
    parser.add_argument(
        "--sizes", default="1000,5000,20000,60000", help="comma-separated store sizes"
    )
    args = parser.parse_args()

    rng = np.random.default_rng(11)
    queries = [
        Embedding.from_values(rng.standard_normal(args.dim)).normalized()
        for _ in range(args.queries)
    ]

    print(f"dim={args.dim}, k={args.k}, {args.queries} queries per size")
    print(f"{'vectors':>8}  {'ms/query':>9}  {'ns/vector':>10}  {'sim computations':>17}")
    for size in [int(s) for s in args.sizes.split(",")]:
        store = build_store(size, args.dim, rng)
        store.search(queries[0], args.k)  # warm the frozen matrix
        store.reset_sim_count()
        start = time.perf_counter()
        for q in queries:
            store.search(q, args.k)
        elapsed = time.perf_counter() - start
        per_query = elapsed / args.queries
        print(
            f"{size:>8}  {per_query * 1e3:>9.3f}  {per_query / size * 1e9:>10.1f}"
            f"  {store.sim_count:>17}"
        )


if __name__ == "__main__":
    main()
