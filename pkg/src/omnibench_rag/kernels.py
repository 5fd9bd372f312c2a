"""Hot numeric kernels with numba-jitted and pure-numpy implementations.

Two inner loops dominate harness runtime: FNV-1a feature-hash accumulation
over token bytes (knowledge-base embedding) and scored top-k selection over
the chunk matrix (retrieval). Both exist in two flavors:

* ``numba`` — ``@njit`` kernels, compiled on first use;
* ``numpy`` — pure numpy/Python fallback, always available.

The active backend is chosen by the ``OMNIBENCH_KERNELS`` environment
variable (``auto`` | ``numba`` | ``numpy``, default ``auto``: numba when
importable). Both flavors are bit-compatible for hashing (accumulation is
exact integer arithmetic in float64) and agree on top-k id order; the
benchmark in ``benchmarks/bench_kernels.py`` compares their throughput.
"""

from __future__ import annotations

import logging
import os

import numpy as np

from .errors import ConfigError

log = logging.getLogger(__name__)

ENV_VAR = "OMNIBENCH_KERNELS"

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_U64_MASK = 0xFFFFFFFFFFFFFFFF

# numba needs uint64-typed constants: the offset basis does not fit in int64
_FNV_OFFSET_U64 = np.uint64(FNV_OFFSET)
_FNV_PRIME_U64 = np.uint64(FNV_PRIME)
_SHIFT63_U64 = np.uint64(63)

try:
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - exercised only on numba-less installs
    njit = None
    NUMBA_AVAILABLE = False


def fnv1a64(data: bytes) -> int:
    """Reference FNV-1a 64-bit hash (Python ints, exact wraparound)."""
    h = FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & _U64_MASK
    return h


# ---------------------------------------------------------------------------
# numpy backend


def _hash_accumulate_numpy(data, token_offsets, text_token_counts, dim):
    n_texts = len(text_token_counts)
    out = np.zeros((n_texts, dim), dtype=np.float64)
    tok = 0
    for t in range(n_texts):
        for _ in range(text_token_counts[t]):
            h = FNV_OFFSET
            for i in range(token_offsets[tok], token_offsets[tok + 1]):
                h ^= int(data[i])
                h = (h * FNV_PRIME) & _U64_MASK
            sign = -1.0 if (h >> 63) else 1.0
            out[t, h % dim] += sign
            tok += 1
    return out


def _topk_numpy(matrix, query, id_rank, k):
    n = matrix.shape[0]
    m = min(k, n)
    # per-row reduction instead of BLAS gemv: gemv kernels unroll row blocks
    # differently by position, so duplicate rows can score apart by an ulp
    # and break the duplicate-vectors-tie-by-id contract
    scores = (matrix.astype(np.float64) * query).sum(axis=1)
    # primary: score descending; secondary: id rank ascending
    order = np.lexsort((id_rank, -scores))[:m]
    return order.astype(np.int64), scores[order]


# ---------------------------------------------------------------------------
# numba backend

if NUMBA_AVAILABLE:

    @njit(cache=True)
    def _hash_accumulate_numba(data, token_offsets, text_token_counts, dim):  # pragma: no cover - jitted
        n_texts = len(text_token_counts)
        out = np.zeros((n_texts, dim), dtype=np.float64)
        dim_u = np.uint64(dim)
        tok = 0
        for t in range(n_texts):
            for _ in range(text_token_counts[t]):
                h = _FNV_OFFSET_U64
                for i in range(token_offsets[tok], token_offsets[tok + 1]):
                    h = (h ^ np.uint64(data[i])) * _FNV_PRIME_U64
                bucket = np.int64(h % dim_u)
                if h >> _SHIFT63_U64:
                    out[t, bucket] -= 1.0
                else:
                    out[t, bucket] += 1.0
                tok += 1
        return out

    @njit(cache=True)
    def _topk_numba(matrix, query, id_rank, k):  # pragma: no cover - jitted
        n, d = matrix.shape
        m = min(k, n)
        best_s = np.empty(m, dtype=np.float64)
        best_r = np.empty(m, dtype=np.int64)
        best_i = np.empty(m, dtype=np.int64)
        count = 0
        for i in range(n):
            s = 0.0
            for j in range(d):
                s += np.float64(matrix[i, j]) * query[j]
            r = id_rank[i]
            if count == m:
                # skip candidates not beating the current worst slot
                if s < best_s[m - 1] or (s == best_s[m - 1] and r > best_r[m - 1]):
                    continue
                pos = m - 1
            else:
                pos = count
                count += 1
            while pos > 0 and (s > best_s[pos - 1] or (s == best_s[pos - 1] and r < best_r[pos - 1])):
                best_s[pos] = best_s[pos - 1]
                best_r[pos] = best_r[pos - 1]
                best_i[pos] = best_i[pos - 1]
                pos -= 1
            best_s[pos] = s
            best_r[pos] = r
            best_i[pos] = i
        return best_i, best_s

else:  # pragma: no cover
    _hash_accumulate_numba = None
    _topk_numba = None


# ---------------------------------------------------------------------------
# backend selection

_active: str | None = None


def _resolve(requested: str) -> str:
    if requested not in ("auto", "numba", "numpy"):
        raise ConfigError(f"unknown kernel backend {requested!r}; expected auto, numba, or numpy")
    if requested == "numpy":
        return "numpy"
    if requested == "numba":
        if not NUMBA_AVAILABLE:
            raise ConfigError("kernel backend 'numba' requested but numba is not importable")
        return "numba"
    return "numba" if NUMBA_AVAILABLE else "numpy"


def active_backend() -> str:
    """Name of the backend currently in use (resolves lazily from env)."""
    global _active
    if _active is None:
        _active = _resolve(os.environ.get(ENV_VAR, "auto").strip().lower() or "auto")
        log.debug("kernel backend: %s", _active)
    return _active


def set_backend(name: str | None) -> str:
    """Force a backend (``numba``/``numpy``), or ``None`` to re-read the env."""
    global _active
    _active = None if name is None else _resolve(name)
    return active_backend()


def hash_accumulate(data: np.ndarray, token_offsets: np.ndarray, text_token_counts: np.ndarray, dim: int) -> np.ndarray:
    """Signed-bucket accumulation of FNV-1a token hashes, one row per text.

    ``data`` is the UTF-8 byte stream of all tokens back to back,
    ``token_offsets`` (len = total tokens + 1) delimits tokens within it, and
    ``text_token_counts`` says how many consecutive tokens belong to each
    text. Rows are un-normalized bucket counts.
    """
    if active_backend() == "numba":
        return _hash_accumulate_numba(data, token_offsets, text_token_counts, dim)
    return _hash_accumulate_numpy(data, token_offsets, text_token_counts, dim)


def topk(matrix: np.ndarray, query: np.ndarray, id_rank: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Indices and scores of the k best rows by (inner product desc, id rank asc)."""
    if matrix.shape[0] == 0 or k <= 0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.float64)
    if active_backend() == "numba":
        return _topk_numba(matrix, query, id_rank, np.int64(k))
    return _topk_numpy(matrix, query, id_rank, k)
