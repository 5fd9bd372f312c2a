"""Document ingestion: cleaning, deterministic chunking, and the corpus manifest.

Chunking is fixed-size token windows with overlap (token = whitespace-
delimited word after cleaning), so the whole pipeline stays deterministic
and offline. Inputs are plain text or markdown; PDFs must be pre-extracted.
"""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError, IngestionError

DEFAULT_CHUNK_SIZE = 256
DEFAULT_CHUNK_OVERLAP = 32


class DomainTag(enum.Enum):
    """The nine knowledge fields every document and question belongs to."""

    GEOGRAPHY = "Geography"
    HISTORY = "History"
    HEALTH = "Health"
    MATHEMATICS = "Mathematics"
    NATURE = "Nature"
    PEOPLE = "People"
    SOCIETY = "Society"
    TECHNOLOGY = "Technology"
    CULTURE = "Culture"

    def __str__(self) -> str:
        return self.value

    @classmethod
    def parse(cls, name: str) -> "DomainTag":
        """Case-insensitive lookup of a canonical domain name."""
        wanted = name.strip().lower()
        for tag in cls:
            if tag.value.lower() == wanted:
                return tag
        valid = ", ".join(t.value for t in cls)
        raise ConfigError(f"unknown domain {name!r}; expected one of: {valid}")


#: Canonical report row order.
DOMAIN_ORDER = list(DomainTag)


@dataclass(frozen=True)
class Document:
    id: str
    domain: DomainTag
    title: str
    text: str
    source_uri: str = ""


@dataclass(frozen=True)
class Chunk:
    id: str
    doc_id: str
    seq: int
    text: str
    char_span: tuple[int, int]


# all Cc control chars except \t (collapsed as whitespace below) and \n
_CONTROL_RE = re.compile(r"[\x00-\x08\x0b-\x1f\x7f-\x9f]")
_WS_RUN_RE = re.compile(r"[^\S\n]+")


def clean(raw_text: str) -> str:
    """Normalize text: LF line endings, single spaces, no control chars, no blank lines.

    Idempotent: clean(clean(x)) == clean(x).
    """
    text = raw_text.replace("\r\n", "\n").replace("\r", "\n")
    text = _CONTROL_RE.sub("", text)
    lines = []
    for line in text.split("\n"):
        line = _WS_RUN_RE.sub(" ", line).strip()
        if line:
            lines.append(line)
    return "\n".join(lines)


def _token_spans(text: str) -> list[tuple[int, int]]:
    return [(m.start(), m.end()) for m in re.finditer(r"\S+", text)]


def chunk(doc: Document, size: int = DEFAULT_CHUNK_SIZE, overlap: int = DEFAULT_CHUNK_OVERLAP) -> list[Chunk]:
    """Split a document into token windows of `size` with `overlap` shared tokens.

    Window i+1 starts `size - overlap` tokens after window i; the last window
    may be short. Each chunk's text is the exact slice of the cleaned document
    covering its tokens, so char spans stay traceable.
    """
    if size <= 0:
        raise ConfigError(f"chunk size must be positive, got {size}")
    if overlap < 0 or overlap >= size:
        raise ConfigError(f"chunk overlap must satisfy 0 <= overlap < size, got overlap={overlap} size={size}")
    text = clean(doc.text)
    spans = _token_spans(text)
    if not spans:
        raise IngestionError(f"document {doc.id!r} has no text after cleaning")
    n = len(spans)
    stride = size - overlap
    chunks: list[Chunk] = []
    start = 0
    seq = 0
    while True:
        end = min(start + size, n)
        lo, hi = spans[start][0], spans[end - 1][1]
        chunks.append(Chunk(id=f"{doc.id}#{seq}", doc_id=doc.id, seq=seq, text=text[lo:hi], char_span=(lo, hi)))
        if end == n:
            break
        start += stride
        seq += 1
    return chunks


def load_manifest(path: str | Path) -> list[Document]:
    """Read a corpus manifest (JSON array) and the documents it references.

    Entries are {"id", "domain", "title", "path", "source_uri"}; document
    paths are resolved relative to the manifest file.
    """
    path = Path(path)
    if not path.is_file():
        raise IngestionError(f"corpus manifest not found: {path}")
    try:
        entries = json.loads(path.read_text(encoding="utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise IngestionError(f"corpus manifest {path} is not valid JSON: {exc}") from exc
    if not isinstance(entries, list):
        raise IngestionError(f"corpus manifest {path} must be a JSON array")
    docs: list[Document] = []
    seen: set[str] = set()
    for i, entry in enumerate(entries):
        if not isinstance(entry, dict):
            raise IngestionError(f"manifest entry {i} is not an object")
        missing = [key for key in ("id", "domain", "title", "path") if key not in entry]
        if missing:
            raise IngestionError(f"manifest entry {i} is missing {missing}")
        doc_id = str(entry["id"])
        if doc_id in seen:
            raise IngestionError(f"duplicate document id {doc_id!r} in manifest")
        seen.add(doc_id)
        doc_path = path.parent / entry["path"]
        if not doc_path.is_file():
            raise IngestionError(f"document {doc_id!r}: file not found: {doc_path}")
        try:
            raw = doc_path.read_text(encoding="utf-8")
        except UnicodeDecodeError as exc:
            raise IngestionError(f"document {doc_id!r}: invalid UTF-8 in {doc_path}: {exc}") from exc
        text = clean(raw)
        if not text:
            raise IngestionError(f"document {doc_id!r} is empty after cleaning")
        docs.append(
            Document(
                id=doc_id,
                domain=DomainTag.parse(str(entry["domain"])),
                title=str(entry["title"]),
                text=text,
                source_uri=str(entry.get("source_uri", "")),
            )
        )
    return docs
