"""Text-to-unit-vector embedders.

Two providers behind one interface: a deterministic feature-hash embedder
(FNV-1a 64-bit, signed buckets, L2 normalization) that keeps the whole
pipeline offline and reproducible, and a remote client speaking the common
``POST /v1/embeddings`` JSON protocol.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigError, ProtocolError, ProviderError

DEFAULT_HASH_DIM = 256
ENV_API_BASE = "OMNIBENCH_API_BASE"
ENV_API_KEY = "OMNIBENCH_API_KEY"

NORM_TOLERANCE = 1e-6


@dataclass
class EmbedderConfig:
    kind: str = "hash"  # "hash" | "remote"
    dim: int = DEFAULT_HASH_DIM
    base_url: str = ""
    model: str = ""
    timeout_s: float = 60.0

    def __post_init__(self):
        if self.kind not in ("hash", "remote"):
            raise ConfigError(f"embedder kind must be 'hash' or 'remote', got {self.kind!r}")
        if self.kind == "hash" and self.dim < 2:
            raise ConfigError(f"embedder dim must be >= 2, got {self.dim}")
        if self.kind == "remote" and not self.model:
            raise ConfigError("remote embedder requires a model name")


def check_vector(vec: np.ndarray, dim: int) -> np.ndarray:
    """Validate the unit-vector invariants; returns the vector unchanged."""
    if vec.shape != (dim,):
        raise ValueError(f"vector has shape {vec.shape}, expected ({dim},)")
    if not np.all(np.isfinite(vec)):
        raise ValueError("vector has non-finite entries")
    norm = float(np.sqrt(np.dot(vec, vec)))
    if abs(norm - 1.0) > NORM_TOLERANCE:
        raise ValueError(f"vector norm {norm} deviates from 1 by more than {NORM_TOLERANCE}")
    return vec


def _normalize_rows(rows: np.ndarray, what: str) -> np.ndarray:
    # exact-integer accumulations make the sum of squares identical across
    # kernel backends, so normalized vectors are bit-for-bit reproducible
    sq = np.sum(rows * rows, axis=1)
    zero = np.flatnonzero(sq == 0.0)
    if zero.size:
        raise ValueError(f"{what} produced a zero vector at index {zero[0]}; refusing to normalize")
    return rows / np.sqrt(sq)[:, None]


class HashEmbedder:
    """Deterministic feature-hash embedder over whitespace tokens."""

    kind = "hash"

    def __init__(self, dim: int = DEFAULT_HASH_DIM):
        if dim < 2:
            raise ConfigError(f"hash embedder dim must be >= 2, got {dim}")
        self.dim = dim

    @property
    def fingerprint(self) -> str:
        return f"hash:fnv1a64:dim={self.dim}"

    def embed(self, text: str) -> np.ndarray:
        return self.embed_batch([text])[0]

    def embed_batch(self, texts: list[str]) -> list[np.ndarray]:
        if not texts:
            return []
        token_lists = []
        for i, text in enumerate(texts):
            tokens = text.split()
            if not tokens:
                raise ValueError(f"cannot embed empty text (batch index {i})")
            token_lists.append(tokens)
        blobs = [tok.encode("utf-8") for tokens in token_lists for tok in tokens]
        offsets = np.zeros(len(blobs) + 1, dtype=np.int64)
        np.cumsum([len(b) for b in blobs], out=offsets[1:])
        data = np.frombuffer(b"".join(blobs), dtype=np.uint8)
        counts = np.array([len(tokens) for tokens in token_lists], dtype=np.int64)
        acc = kernels.hash_accumulate(data, offsets, counts, self.dim)
        try:
            rows = _normalize_rows(acc, "hash embedding")
        except ValueError as exc:
            raise ValueError(f"{exc}; tokens of the offending text cancel out in every bucket") from None
        return [rows[i] for i in range(rows.shape[0])]


class RemoteEmbedder:
    """Client for an OpenAI-compatible ``/v1/embeddings`` endpoint.

    The embedding dimension is provider-reported: it is fixed by the first
    response and later mismatches raise a protocol error. Returned vectors
    are L2-normalized; zero vectors are rejected.
    """

    kind = "remote"

    def __init__(self, model: str, base_url: str | None = None, api_key: str | None = None, timeout_s: float = 60.0):
        if not model:
            raise ConfigError("remote embedder requires a model name")
        self.model = model
        self.base_url = (base_url or os.environ.get(ENV_API_BASE, "")).rstrip("/")
        if not self.base_url:
            raise ConfigError(f"remote embedder needs a base URL (flag/config or {ENV_API_BASE})")
        self.api_key = api_key if api_key is not None else os.environ.get(ENV_API_KEY, "")
        self.timeout_s = timeout_s
        self.dim: int | None = None

    @property
    def fingerprint(self) -> str:
        dim = self.dim if self.dim is not None else "?"
        return f"remote:{self.model}:dim={dim}"

    def _post(self, texts: list[str]) -> list[list[float]]:
        import requests

        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = requests.post(
                f"{self.base_url}/v1/embeddings",
                json={"model": self.model, "input": texts},
                headers=headers,
                timeout=self.timeout_s,
            )
        except requests.RequestException as exc:
            raise ProviderError(f"embeddings request failed: {exc}", retryable=True) from exc
        if resp.status_code != 200:
            retryable = resp.status_code == 429 or resp.status_code >= 500
            raise ProviderError(
                f"embeddings endpoint returned HTTP {resp.status_code}: {resp.text[:200]}",
                status=resp.status_code,
                retryable=retryable,
            )
        try:
            payload = resp.json()
            items = sorted(payload["data"], key=lambda d: d["index"])
            return [item["embedding"] for item in items]
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"malformed embeddings response: {exc}") from exc

    def embed(self, text: str) -> np.ndarray:
        return self.embed_batch([text])[0]

    def embed_batch(self, texts: list[str]) -> list[np.ndarray]:
        if not texts:
            return []
        for i, text in enumerate(texts):
            if not text.strip():
                raise ValueError(f"cannot embed empty text (batch index {i})")
        raw = self._post(texts)
        if len(raw) != len(texts):
            raise ProtocolError(f"embeddings response has {len(raw)} items for {len(texts)} inputs")
        rows = np.asarray(raw, dtype=np.float64)
        if rows.ndim != 2:
            raise ProtocolError("embeddings response items have inconsistent dimensions")
        if self.dim is None:
            if rows.shape[1] < 2:
                raise ProtocolError(f"provider reported dim {rows.shape[1]}, need >= 2")
            self.dim = int(rows.shape[1])
        elif rows.shape[1] != self.dim:
            raise ProtocolError(f"provider returned dim {rows.shape[1]}, expected {self.dim}")
        if not np.all(np.isfinite(rows)):
            raise ProtocolError("embeddings response contains non-finite values")
        rows = _normalize_rows(rows, "remote embedding")
        return [rows[i] for i in range(rows.shape[0])]


def make_embedder(cfg: EmbedderConfig):
    if cfg.kind == "hash":
        return HashEmbedder(dim=cfg.dim)
    return RemoteEmbedder(model=cfg.model, base_url=cfg.base_url or None, timeout_s=cfg.timeout_s)
