"""Exact top-K cosine retrieval over chunk embeddings, with on-disk persistence.

The index is a flat float32 matrix searched exhaustively: at evaluation
scale exactness buys reproducibility, and ties are broken by chunk id so
results are stable across runs and machines.

File format: magic ``OBKB``, u16 version, u32 dim, u64 count, little-endian
float32 vectors, length-prefixed UTF-8 ids, CRC32 trailer. Chunk metadata
and the embedder fingerprint live in a ``<file>.meta.json`` sidecar.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .corpus import Chunk
from .errors import (
    IngestionError,
    KBBadMagicError,
    KBChecksumError,
    KBLoadError,
    KBTruncatedError,
    KBVersionError,
)

MAGIC = b"OBKB"
VERSION = 1
DEFAULT_TOP_K = 5


@dataclass(frozen=True)
class Hit:
    chunk_id: str
    score: float


class KnowledgeBase:
    """Immutable flat index: ids, float32 vectors, and chunk metadata."""

    def __init__(self, dim: int, ids: list[str], matrix: np.ndarray, meta: dict[str, Chunk], fingerprint: str):
        if matrix.shape != (len(ids), dim):
            raise ValueError(f"matrix shape {matrix.shape} does not match {len(ids)} ids x dim {dim}")
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise IngestionError(f"duplicate chunk ids: {dupes[:5]}")
        missing = [i for i in ids if i not in meta]
        if missing:
            raise IngestionError(f"chunks without metadata: {missing[:5]}")
        self.dim = dim
        self.ids = list(ids)
        self.matrix = np.ascontiguousarray(matrix, dtype=np.float32)
        self.meta = dict(meta)
        self.fingerprint = fingerprint
        # rank[i] = position of ids[i] in lexicographic id order; used for tie-breaks
        order = sorted(range(len(ids)), key=lambda i: ids[i])
        self._id_rank = np.empty(len(ids), dtype=np.int64)
        for rank, idx in enumerate(order):
            self._id_rank[idx] = rank

    def __len__(self) -> int:
        return len(self.ids)

    def __eq__(self, other) -> bool:
        if not isinstance(other, KnowledgeBase):
            return NotImplemented
        return (
            self.dim == other.dim
            and self.ids == other.ids
            and np.array_equal(self.matrix, other.matrix)
            and self.meta == other.meta
            and self.fingerprint == other.fingerprint
        )


def build(chunks: list[Chunk], embedder) -> KnowledgeBase:
    """Embed every chunk and assemble the knowledge base."""
    if not chunks:
        raise IngestionError("cannot build a knowledge base from zero chunks")
    vectors = embedder.embed_batch([c.text for c in chunks])
    dim = embedder.dim
    matrix = np.asarray(vectors, dtype=np.float32)
    ids = [c.id for c in chunks]
    meta = {c.id: c for c in chunks}
    return KnowledgeBase(dim=dim, ids=ids, matrix=matrix, meta=meta, fingerprint=embedder.fingerprint)


def search(kb: KnowledgeBase, query: np.ndarray, k: int) -> list[Hit]:
    """Exact top-k hits sorted by (score desc, chunk_id asc)."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    query = np.asarray(query, dtype=np.float64)
    if query.shape != (kb.dim,):
        raise ValueError(f"query has shape {query.shape}, index dim is {kb.dim}")
    if not np.all(np.isfinite(query)):
        raise ValueError("query vector has non-finite entries")
    if len(kb) == 0:
        return []
    idx, scores = kernels.topk(kb.matrix, query, kb._id_rank, k)
    return [Hit(chunk_id=kb.ids[i], score=float(s)) for i, s in zip(idx, scores)]


def _sidecar_path(path: Path) -> Path:
    return path.with_name(path.name + ".meta.json")


def save(kb: KnowledgeBase, path: str | Path) -> None:
    """Write the binary index plus its metadata sidecar."""
    if len(kb) == 0:
        raise ValueError("refusing to save an empty knowledge base")
    path = Path(path)
    body = bytearray()
    body += MAGIC
    body += struct.pack("<HIQ", VERSION, kb.dim, len(kb))
    body += kb.matrix.astype("<f4").tobytes()
    for chunk_id in kb.ids:
        raw = chunk_id.encode("utf-8")
        body += struct.pack("<I", len(raw))
        body += raw
    body += struct.pack("<I", zlib.crc32(bytes(body)) & 0xFFFFFFFF)
    path.write_bytes(bytes(body))
    sidecar = {
        "fingerprint": kb.fingerprint,
        "chunks": {
            c.id: {"doc_id": c.doc_id, "seq": c.seq, "text": c.text, "char_span": list(c.char_span)}
            for c in (kb.meta[i] for i in kb.ids)
        },
    }
    _sidecar_path(path).write_text(json.dumps(sidecar, indent=2, ensure_ascii=False, sort_keys=True) + "\n", encoding="utf-8")


def load(path: str | Path) -> KnowledgeBase:
    """Read an index written by :func:`save`, verifying structure and checksum."""
    path = Path(path)
    if not path.is_file():
        raise KBLoadError(f"knowledge base file not found: {path}")
    blob = path.read_bytes()
    if len(blob) < len(MAGIC) + 14 + 4:
        raise KBTruncatedError(f"{path}: file too short to be a knowledge base ({len(blob)} bytes)")
    if blob[:4] != MAGIC:
        raise KBBadMagicError(f"{path}: bad magic {blob[:4]!r}, expected {MAGIC!r}")
    version, dim, count = struct.unpack_from("<HIQ", blob, 4)
    if version != VERSION:
        raise KBVersionError(f"{path}: unsupported version {version}, expected {VERSION}")
    stored_crc = struct.unpack_from("<I", blob, len(blob) - 4)[0]
    actual_crc = zlib.crc32(blob[:-4]) & 0xFFFFFFFF
    if stored_crc != actual_crc:
        raise KBChecksumError(f"{path}: checksum mismatch (stored {stored_crc:#010x}, computed {actual_crc:#010x})")
    offset = 18
    vec_bytes = count * dim * 4
    if offset + vec_bytes > len(blob) - 4:
        raise KBTruncatedError(f"{path}: vector block extends past end of file")
    matrix = np.frombuffer(blob, dtype="<f4", count=count * dim, offset=offset).reshape(count, dim).copy()
    offset += vec_bytes
    ids: list[str] = []
    for _ in range(count):
        if offset + 4 > len(blob) - 4:
            raise KBTruncatedError(f"{path}: id block extends past end of file")
        (id_len,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        if offset + id_len > len(blob) - 4:
            raise KBTruncatedError(f"{path}: id entry extends past end of file")
        try:
            ids.append(blob[offset : offset + id_len].decode("utf-8"))
        except UnicodeDecodeError as exc:
            raise KBLoadError(f"{path}: id entry is not valid UTF-8: {exc}") from exc
        offset += id_len
    if offset != len(blob) - 4:
        raise KBTruncatedError(f"{path}: {len(blob) - 4 - offset} unexpected trailing bytes before checksum")

    sidecar_path = _sidecar_path(path)
    if not sidecar_path.is_file():
        raise KBLoadError(f"metadata sidecar not found: {sidecar_path}")
    try:
        sidecar = json.loads(sidecar_path.read_text(encoding="utf-8"))
        fingerprint = sidecar["fingerprint"]
        meta = {
            chunk_id: Chunk(
                id=chunk_id,
                doc_id=entry["doc_id"],
                seq=int(entry["seq"]),
                text=entry["text"],
                char_span=(int(entry["char_span"][0]), int(entry["char_span"][1])),
            )
            for chunk_id, entry in sidecar["chunks"].items()
        }
    except (json.JSONDecodeError, KeyError, TypeError, IndexError) as exc:
        raise KBLoadError(f"malformed metadata sidecar {sidecar_path}: {exc}") from exc
    try:
        return KnowledgeBase(dim=dim, ids=ids, matrix=matrix, meta=meta, fingerprint=fingerprint)
    except IngestionError as exc:
        raise KBLoadError(f"{path}: {exc}") from exc
