"""Knowledge ingestion, chunking and BM25-ranked retrieval.

Documents are markdown or plain text. Chunking splits at markdown headings,
then windows long segments; retrieval is Okapi BM25 with hand-checkable
statistics. An optional embedding rerank sits behind an abstract provider and
fails open to the BM25 order.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Protocol

CHUNK_WINDOW_TERMS = 256
CHUNK_OVERLAP_TERMS = 32
BM25_K1 = 1.2
BM25_B = 0.75

# terms are maximal word-character runs, lowercased; no stemming, no stopwords
_TERM_RE = re.compile(r"\w+")
_HEADING_RE = re.compile(r"^(#+)\s*(.*?)\s*$")

KNOWLEDGE_SUFFIXES = (".md", ".txt")


def tokenize(text: str) -> list[str]:
    return _TERM_RE.findall(text.lower())


class KnowledgeError(ValueError):
    pass


class EmptyDocumentError(KnowledgeError):
    def __init__(self, doc_id: str):
        super().__init__(f"document {doc_id!r} has no terms")
        self.doc_id = doc_id


class DuplicateChunkIdError(KnowledgeError):
    def __init__(self, chunk_id: str):
        super().__init__(f"duplicate chunk_id {chunk_id!r}")
        self.chunk_id = chunk_id


@dataclass
class DocChunk:
    doc_id: str
    chunk_id: str
    heading_path: list[str]
    text: str
    term_counts: dict[str, int]
    length_terms: int

    @classmethod
    def make(cls, doc_id: str, ordinal: int, heading_path: list[str], text: str) -> "DocChunk":
        counts = Counter(tokenize(text))
        return cls(
            doc_id=doc_id,
            chunk_id=f"{doc_id}#{ordinal}",
            heading_path=list(heading_path),
            text=text,
            term_counts=dict(counts),
            length_terms=sum(counts.values()),
        )

    def to_dict(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "chunk_id": self.chunk_id,
            "heading_path": self.heading_path,
            "text": self.text,
            "term_counts": self.term_counts,
            "length_terms": self.length_terms,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DocChunk":
        return cls(**d)


def _segment_windows(n_terms: int) -> list[tuple[int, int]]:
    """Term index ranges covering a segment: 256-term windows, 32-term overlap."""
    if n_terms <= CHUNK_WINDOW_TERMS:
        return [(0, n_terms)]
    stride = CHUNK_WINDOW_TERMS - CHUNK_OVERLAP_TERMS
    windows = []
    start = 0
    while start + CHUNK_WINDOW_TERMS < n_terms:
        windows.append((start, start + CHUNK_WINDOW_TERMS))
        start += stride
    windows.append((start, n_terms))
    return windows


def chunk_document(doc_id: str, text: str) -> list[DocChunk]:
    """Split a document into retrieval chunks.

    Markdown headings open a new segment (the heading line stays in the
    segment text, so chunking loses no terms); segments longer than the
    window are split into overlapping windows. heading_path carries the
    enclosing heading chain, ordinals follow document order.
    """
    if not tokenize(text):
        raise EmptyDocumentError(doc_id)

    # (heading_path, segment_text) in document order
    segments: list[tuple[list[str], str]] = []
    heading_stack: list[tuple[int, str]] = []
    lines: list[str] = []

    def flush():
        if lines:
            segments.append(([t for _, t in heading_stack], "\n".join(lines)))
            lines.clear()

    for line in text.splitlines():
        m = _HEADING_RE.match(line)
        if m:
            flush()
            level = len(m.group(1))
            while heading_stack and heading_stack[-1][0] >= level:
                heading_stack.pop()
            heading_stack.append((level, m.group(2)))
        lines.append(line)
    flush()

    chunks: list[DocChunk] = []
    for heading_path, seg_text in segments:
        spans = [m.span() for m in _TERM_RE.finditer(seg_text.lower())]
        if not spans:
            continue
        for lo, hi in _segment_windows(len(spans)):
            chunk_text = seg_text[spans[lo][0] : spans[hi - 1][1]]
            chunks.append(DocChunk.make(doc_id, len(chunks), heading_path, chunk_text))
    return chunks


@dataclass
class Index:
    """Immutable BM25 index over a chunk list."""

    chunks: list[DocChunk]
    doc_freq: dict[str, int]
    avg_chunk_length: float
    k1: float = BM25_K1
    b: float = BM25_B
    _by_id: dict[str, DocChunk] = field(default_factory=dict, repr=False)

    def get(self, chunk_id: str) -> DocChunk:
        return self._by_id[chunk_id]

    def __len__(self) -> int:
        return len(self.chunks)

    def to_dict(self) -> dict:
        return {"k1": self.k1, "b": self.b, "chunks": [c.to_dict() for c in self.chunks]}


def build_index(chunks: list[DocChunk], k1: float = BM25_K1, b: float = BM25_B) -> Index:
    if not chunks:
        raise KnowledgeError("cannot build an index over zero chunks")
    by_id: dict[str, DocChunk] = {}
    doc_freq: Counter[str] = Counter()
    for c in chunks:
        if c.chunk_id in by_id:
            raise DuplicateChunkIdError(c.chunk_id)
        by_id[c.chunk_id] = c
        doc_freq.update(c.term_counts.keys())
    avg = sum(c.length_terms for c in chunks) / len(chunks)
    return Index(chunks=list(chunks), doc_freq=dict(doc_freq), avg_chunk_length=avg, k1=k1, b=b, _by_id=by_id)


def index_from_dict(d: dict) -> Index:
    return build_index([DocChunk.from_dict(c) for c in d["chunks"]], k1=d.get("k1", BM25_K1), b=d.get("b", BM25_B))


def idf(index: Index, term: str) -> float:
    """Non-negative +1 formulation: ln(1 + (N - df + 0.5) / (df + 0.5))."""
    df = index.doc_freq.get(term, 0)
    n = len(index.chunks)
    return math.log(1.0 + (n - df + 0.5) / (df + 0.5))


def bm25_score(index: Index, query_terms: list[str], chunk: DocChunk) -> float:
    score = 0.0
    norm = index.k1 * (1.0 - index.b + index.b * chunk.length_terms / index.avg_chunk_length)
    for term in query_terms:
        tf = chunk.term_counts.get(term, 0)
        if tf == 0:
            continue
        score += idf(index, term) * (index.k1 + 1.0) * tf / (tf + norm)
    return score


def retrieve(index: Index, query: str, k: int) -> list[tuple[str, float]]:
    """Top-k (chunk_id, score) by BM25, score descending, chunk_id ascending
    on ties; zero-score chunks never appear."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    terms = tokenize(query)
    scored = [(c.chunk_id, bm25_score(index, terms, c)) for c in index.chunks]
    scored = [(cid, s) for cid, s in scored if s > 0.0]
    scored.sort(key=lambda pair: (-pair[1], pair[0]))
    return scored[:k]


class EmbeddingProvider(Protocol):
    def embed(self, texts: list[str]) -> list[list[float]]: ...


def _cosine(a: list[float], b: list[float]) -> float:
    dot = sum(x * y for x, y in zip(a, b))
    na = math.sqrt(sum(x * x for x in a))
    nb = math.sqrt(sum(x * x for x in b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return dot / (na * nb)


def embed_rerank(
    index: Index,
    query: str,
    candidates: list[tuple[str, float]],
    provider: EmbeddingProvider,
) -> tuple[list[tuple[str, float]], bool]:
    """Reorder BM25 candidates by cosine similarity to the query vector.

    Fail-open: any provider failure returns the BM25 order unchanged with the
    degradation flag set. Ties keep the incoming order (stable sort).
    """
    try:
        texts = [query] + [index.get(cid).text for cid, _ in candidates]
        vectors = provider.embed(texts)
        if len(vectors) != len(texts):
            raise KnowledgeError("provider returned wrong vector count")
        qv = vectors[0]
        sims = [_cosine(qv, v) for v in vectors[1:]]
    except Exception:
        return list(candidates), True
    order = sorted(range(len(candidates)), key=lambda i: -sims[i])
    return [candidates[i] for i in order], False


def ingest_directory(root: str | Path) -> Index:
    """Walk a knowledge tree and index every markdown/text file.

    doc_id is the path relative to the root, posix-style.
    """
    root = Path(root)
    if not root.is_dir():
        raise KnowledgeError(f"knowledge directory {root} does not exist")
    chunks: list[DocChunk] = []
    for path in sorted(root.rglob("*")):
        if path.suffix.lower() in KNOWLEDGE_SUFFIXES and path.is_file():
            chunks.extend(chunk_document(path.relative_to(root).as_posix(), path.read_text()))
    return build_index(chunks)


def default_knowledge_dir() -> Path:
    """Packaged synthetic operations manual used when no directory is configured."""
    return Path(resources.files("cellops.data") / "manual")
