#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallback.

Times the two hot paths — batch feature-hash embedding and top-k retrieval —
on synthetic corpora and prints per-backend timings with speedups.

Usage:
    python benchmarks/bench_kernels.py [--chunks 20000] [--dim 256] [--queries 50] [--k 5]

The same selection is also available at runtime through the
OMNIBENCH_KERNELS environment variable (auto | numba | numpy).
"""

import argparse
import random
import time

import numpy as np

from omnibench_rag import kernels
from omnibench_rag.embedding import HashEmbedder
from omnibench_rag.vindex import Hit, KnowledgeBase, search
from omnibench_rag.corpus import Chunk


def make_texts(n: int, tokens_per_text: int, seed: int = 7) -> list[str]:
    rng = random.Random(seed)
    vocab = [f"tok{i:05d}" for i in range(5000)]
    return [" ".join(rng.choice(vocab) for _ in range(tokens_per_text)) for _ in range(n)]


def make_kb(n: int, dim: int, seed: int = 11) -> KnowledgeBase:
    rng = np.random.default_rng(seed)
    matrix = rng.normal(size=(n, dim))
    matrix /= np.linalg.norm(matrix, axis=1, keepdims=True)
    ids = [f"c{i:06d}" for i in range(n)]
    meta = {i: Chunk(id=i, doc_id="bench", seq=k, text="x", char_span=(0, 1)) for k, i in enumerate(ids)}
    return KnowledgeBase(dim=dim, ids=ids, matrix=matrix.astype(np.float32), meta=meta, fingerprint="bench")


def time_call(fn, repeats: int = 3) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--chunks", type=int, default=20000)
    parser.add_argument("--dim", type=int, default=256)
    parser.add_argument("--tokens", type=int, default=64, help="tokens per synthetic chunk")
    parser.add_argument("--queries", type=int, default=50)
    parser.add_argument("--k", type=int, default=5)
    args = parser.parse_args()

    if not kernels.NUMBA_AVAILABLE:
        print("numba not importable; only the numpy fallback can run")

    texts = make_texts(args.chunks, args.tokens)
    embedder = HashEmbedder(dim=args.dim)
    kb = make_kb(args.chunks, args.dim)
    rng = np.random.default_rng(3)
    queries = rng.normal(size=(args.queries, args.dim))
    queries /= np.linalg.norm(queries, axis=1, keepdims=True)

    backends = ["numpy"] + (["numba"] if kernels.NUMBA_AVAILABLE else [])
    results: dict[str, dict[str, float]] = {}
    sanity: dict[str, list[list[Hit]]] = {}
    for backend in backends:
        kernels.set_backend(backend)
        if backend == "numba":  # trigger JIT before timing
            embedder.embed_batch(texts[:2])
            search(kb, queries[0], args.k)
        embed_t = time_call(lambda: embedder.embed_batch(texts))
        search_t = time_call(lambda: [search(kb, q, args.k) for q in queries])
        results[backend] = {"embed": embed_t, "search": search_t}
        sanity[backend] = [search(kb, q, args.k) for q in queries]

    if len(backends) == 2:
        agree = all(
            [h.chunk_id for h in a] == [h.chunk_id for h in b]
            for a, b in zip(sanity["numpy"], sanity["numba"])
        )
        print(f"backend agreement on top-{args.k} ids: {'yes' if agree else 'NO (investigate!)'}")

    print(f"\n{args.chunks} chunks x {args.tokens} tokens, dim {args.dim}, {args.queries} queries, k={args.k}")
    print(f"{'kernel':<22}{'numpy':>12}" + (f"{'numba':>12}{'speedup':>10}" if len(backends) == 2 else ""))
    for op in ("embed", "search"):
        line = f"{op:<22}{results['numpy'][op]:>11.3f}s"
        if len(backends) == 2:
            line += f"{results['numba'][op]:>11.3f}s{results['numpy'][op] / results['numba'][op]:>9.1f}x"
        print(line)
    kernels.set_backend(None)


if __name__ == "__main__":
    main()
