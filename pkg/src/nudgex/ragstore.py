"""Caption retrieval store: embeddings, exact cosine index, grounded answers.

The index is a flat exact scan (desk-scale corpora need no ANN structure),
persisted as a binary vector file plus a positionally aligned JSONL of
chunk records. The stub embedder is a deterministic hashed bag-of-words
so retrieval tests run fully offline.
"""

from __future__ import annotations

import json
import re
import struct
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import (
    ConfigError,
    DimensionError,
    GroundingUnavailableError,
    ValidationError,
)
from .providers import ChatClient, ChatMessage, ChatRequest, EmbeddingClient, with_retries

DEFAULT_DIM = 384  # matches the MiniLM-class sentence embedding family
UNIT_NORM_TOL = 1e-6

VECTORS_MAGIC = b"NXVC"
VECTORS_VERSION = 1

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_TOKEN_SPLIT = re.compile(r"[^0-9a-z]+")


@dataclass(frozen=True)
class EmbeddingVector:
    values: np.ndarray  # float32, unit L2 norm unless is_empty
    is_empty: bool = False

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float32)
        object.__setattr__(self, "values", arr)
        norm = float(np.linalg.norm(arr.astype(np.float64)))
        if self.is_empty:
            if norm != 0.0:
                raise ValidationError("empty-flagged vector must be all zeros")
        elif abs(norm - 1.0) > UNIT_NORM_TOL:
            raise ValidationError(f"vector norm {norm} deviates from 1 by more than {UNIT_NORM_TOL}")

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])


def _fnv1a64(data: bytes) -> int:
    value = FNV_OFFSET
    for byte in data:
        value ^= byte
        value = (value * FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return value


def stub_embed(text: str, dim: int = DEFAULT_DIM) -> EmbeddingVector:
    """Deterministic hashed bag-of-words embedding (the offline oracle).

    Tokens are lowercased runs of [0-9a-z]; each token lands in bucket
    hash mod dim with sign taken from hash bit 63, then the sum is
    L2-normalized. Word order never matters; empty input is flagged.
    """
    accumulator = np.zeros(dim, dtype=np.float64)
    for token in _TOKEN_SPLIT.split(text.lower()):
        if not token:
            continue
        h = _fnv1a64(token.encode("utf-8"))
        bucket = h % dim
        sign = 1.0 if (h >> 63) & 1 == 0 else -1.0
        accumulator[bucket] += sign
    norm = float(np.linalg.norm(accumulator))
    if norm == 0.0:
        return EmbeddingVector(np.zeros(dim, dtype=np.float32), is_empty=True)
    return EmbeddingVector((accumulator / norm).astype(np.float32))


class StubEmbeddingClient:
    """EmbeddingClient backed by stub_embed."""

    def __init__(self, dim: int = DEFAULT_DIM):
        self.dim = dim

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        return [stub_embed(text, self.dim).values.tolist() for text in texts]


def embed_text(
    text: str,
    client: EmbeddingClient,
    dim: int = DEFAULT_DIM,
    *,
    retries: int = 3,
    backoff_base: float = 0.5,
    sleep: Callable[[float], None] = time.sleep,
) -> EmbeddingVector:
    """Embed one text into a unit vector of the index dimensionality."""
    rows = with_retries(
        lambda: client.embed([text]), attempts=retries, base_delay=backoff_base, sleep=sleep
    )
    raw = np.asarray(rows[0], dtype=np.float64)
    if raw.shape != (dim,):
        raise ConfigError(f"embedding provider returned dim {raw.shape}, index needs ({dim},)")
    norm = float(np.linalg.norm(raw))
    if norm == 0.0:
        return EmbeddingVector(np.zeros(dim, dtype=np.float32), is_empty=True)
    return EmbeddingVector((raw / norm).astype(np.float32))


def identity_chunker(text: str) -> list[str]:
    """Default chunker: captions are single short paragraphs, one chunk each.

    Swap in a splitting chunker here if captions ever grow past what one
    embedding comfortably represents.
    """
    return [text]


@dataclass(frozen=True)
class ChunkRecord:
    chunk_id: str
    caption_id: str
    site_id: str
    country: str
    site_name: str
    text: str
    vector: EmbeddingVector
    payload: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not self.text:
            raise ValidationError("chunk text must be non-empty")

    def to_json(self) -> dict:
        return {
            "chunk_id": self.chunk_id,
            "caption_id": self.caption_id,
            "site_id": self.site_id,
            "country": self.country,
            "site_name": self.site_name,
            "text": self.text,
            "payload": dict(self.payload),
        }

    @classmethod
    def from_json(cls, obj: dict, vector: EmbeddingVector) -> "ChunkRecord":
        return cls(
            chunk_id=obj["chunk_id"],
            caption_id=obj["caption_id"],
            site_id=obj["site_id"],
            country=obj["country"],
            site_name=obj["site_name"],
            text=obj["text"],
            vector=vector,
            payload=dict(obj.get("payload", {})),
        )


@dataclass(frozen=True)
class RetrievalHit:
    chunk: ChunkRecord
    score: float


@dataclass(frozen=True)
class RagAnswer:
    question: str
    hits_used: tuple[RetrievalHit, ...]
    answer_text: str
    cited_site_ids: tuple[str, ...]


class VectorIndex:
    """Flat exact-cosine index persisted under ``<root>/rag``.

    Layout: ``vectors.bin`` holds a header (magic, version, dim, count)
    followed by contiguous float32 rows; ``chunks.jsonl`` holds records in
    insertion order, positionally aligned with the vector rows.
    """

    def __init__(self, root: Path | str, dim: int = DEFAULT_DIM):
        self.root = Path(root)
        self.dim = dim
        self._dir = self.root / "rag"
        self._vectors_path = self._dir / "vectors.bin"
        self._chunks_path = self._dir / "chunks.jsonl"
        self._lock = threading.Lock()
        self._records: list[ChunkRecord] = []
        self._by_id: dict[str, int] = {}
        self.load()

    # -- persistence ----------------------------------------------------

    def load(self) -> None:
        if not (self._vectors_path.exists() and self._chunks_path.exists()):
            return
        blob = self._vectors_path.read_bytes()
        if len(blob) < 16:
            raise ConfigError("vectors.bin truncated header")
        magic, version, dim, count = struct.unpack("<4sIII", blob[:16])
        if magic != VECTORS_MAGIC:
            raise ConfigError(f"vectors.bin bad magic {magic!r}")
        if version != VECTORS_VERSION:
            raise ConfigError(f"vectors.bin unsupported version {version}")
        if dim != self.dim:
            raise ConfigError(f"index on disk has dim {dim}, configured {self.dim}")
        expected = 16 + 4 * dim * count
        if len(blob) != expected:
            raise ConfigError(f"vectors.bin is {len(blob)} bytes, expected {expected}")
        matrix = np.frombuffer(blob[16:], dtype="<f4").reshape(count, dim)

        lines = [ln for ln in self._chunks_path.read_text(encoding="utf-8").splitlines() if ln.strip()]
        if len(lines) != count:
            raise ConfigError(f"chunks.jsonl has {len(lines)} rows, vectors.bin {count}")
        records = []
        for row, line in zip(matrix, lines):
            obj = json.loads(line)
            is_empty = bool(np.all(row == 0.0))
            vector = EmbeddingVector(np.array(row, dtype=np.float32), is_empty=is_empty)
            records.append(ChunkRecord.from_json(obj, vector))
        with self._lock:
            self._records = records
            self._by_id = {r.chunk_id: i for i, r in enumerate(records)}

    def save(self) -> None:
        with self._lock:
            records = list(self._records)
        self._dir.mkdir(parents=True, exist_ok=True)
        header = struct.pack("<4sIII", VECTORS_MAGIC, VECTORS_VERSION, self.dim, len(records))
        body = b"".join(r.vector.values.astype("<f4").tobytes() for r in records)
        tmp_vec = self._vectors_path.with_suffix(".bin.tmp")
        tmp_vec.write_bytes(header + body)
        tmp_vec.replace(self._vectors_path)
        lines = [json.dumps(r.to_json(), sort_keys=True) for r in records]
        tmp_chunks = self._chunks_path.with_suffix(".jsonl.tmp")
        tmp_chunks.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
        tmp_chunks.replace(self._chunks_path)

    # -- mutation ---------------------------------------------------------

    def _validate(self, record: ChunkRecord) -> None:
        if record.vector.dim != self.dim:
            raise DimensionError(
                f"vector dim {record.vector.dim} does not match index dim {self.dim}"
            )
        if not record.vector.is_empty:
            # normalization audit: cosine over unit vectors is a plain dot product
            norm = float(np.linalg.norm(record.vector.values.astype(np.float64)))
            if abs(norm - 1.0) > UNIT_NORM_TOL:
                raise ValidationError(f"vector for {record.chunk_id} is not unit norm")

    def upsert(self, record: ChunkRecord, persist: bool = True) -> int:
        """Insert or replace by chunk_id; returns the stored count."""
        self._validate(record)
        with self._lock:
            index = self._by_id.get(record.chunk_id)
            if index is None:
                self._records.append(record)
                self._by_id[record.chunk_id] = len(self._records) - 1
            else:
                self._records[index] = record
        if persist:
            self.save()
        return self.count

    def upsert_many(self, records: Sequence[ChunkRecord]) -> int:
        for record in records:
            self.upsert(record, persist=False)
        self.save()
        return self.count

    def remove(self, chunk_ids: Sequence[str], persist: bool = True) -> int:
        """Drop chunks by id; returns how many were removed."""
        with self._lock:
            doomed = set(chunk_ids) & set(self._by_id)
            if doomed:
                self._records = [r for r in self._records if r.chunk_id not in doomed]
                self._by_id = {r.chunk_id: i for i, r in enumerate(self._records)}
        if doomed and persist:
            self.save()
        return len(doomed)

    # -- queries ----------------------------------------------------------

    @property
    def count(self) -> int:
        with self._lock:
            return len(self._records)

    def chunk_ids(self) -> set[str]:
        with self._lock:
            return set(self._by_id)

    def records(self) -> list[ChunkRecord]:
        with self._lock:
            return list(self._records)

    def search(
        self,
        query: EmbeddingVector,
        k: int,
        filter_fn: Optional[Callable[[ChunkRecord], bool]] = None,
    ) -> list[RetrievalHit]:
        """Exact top-k by cosine, ties broken by chunk_id ascending."""
        if k < 1:
            raise ValidationError("k must be a positive integer")
        if query.dim != self.dim:
            raise DimensionError(f"query dim {query.dim} does not match index dim {self.dim}")
        with self._lock:
            records = list(self._records)  # snapshot read
        candidates = [r for r in records if filter_fn is None or filter_fn(r)]
        if not candidates:
            return []
        matrix = np.stack([r.vector.values for r in candidates]).astype(np.float64)
        scores = matrix @ query.values.astype(np.float64)
        order = sorted(range(len(candidates)), key=lambda i: (-scores[i], candidates[i].chunk_id))
        return [RetrievalHit(chunk=candidates[i], score=float(scores[i])) for i in order[:k]]


def build_generation_request(question: str, hits: Sequence[RetrievalHit], model_id: str,
                             temperature: float = 0.2) -> ChatRequest:
    system = (
        "You answer questions about mining sites using ONLY the evidence below. "
        "Every claim must come from the evidence. Cite the sites you draw on with "
        "their bracketed ids, for example [some-site-id]. If the evidence does not "
        "cover the question, say so."
    )
    evidence_lines = [
        f"[{hit.chunk.site_id}] {hit.chunk.site_name} ({hit.chunk.country}): {hit.chunk.text}"
        for hit in hits
    ]
    user = f"Question: {question}\n\nEvidence:\n" + "\n".join(evidence_lines)
    return ChatRequest(
        model=model_id,
        temperature=temperature,
        messages=(ChatMessage.text("system", system), ChatMessage.text("user", user)),
    )


_MARKER_RE = re.compile(r"\[([a-z0-9-]{1,64})\]")


def answer(
    question: str,
    index: VectorIndex,
    embed_client: EmbeddingClient,
    chat_client: ChatClient,
    *,
    model_id: str,
    k: int = 5,
    filter_fn: Optional[Callable[[ChunkRecord], bool]] = None,
    retries: int = 3,
    backoff_base: float = 0.5,
    sleep: Callable[[float], None] = time.sleep,
) -> RagAnswer:
    """Retrieve top-k chunks and produce a grounded, cited answer."""
    query = embed_text(question, embed_client, index.dim,
                       retries=retries, backoff_base=backoff_base, sleep=sleep)
    hits = index.search(query, k, filter_fn)
    if not hits:
        raise GroundingUnavailableError(
            "no caption chunks matched the query; refusing to answer without grounding"
        )
    request = build_generation_request(question, hits, model_id)
    text = with_retries(
        lambda: chat_client.complete(request), attempts=retries,
        base_delay=backoff_base, sleep=sleep,
    )
    hit_sites = {hit.chunk.site_id for hit in hits}
    cited: list[str] = []
    for marker in _MARKER_RE.findall(text):
        if marker in hit_sites and marker not in cited:
            cited.append(marker)
    return RagAnswer(
        question=question,
        hits_used=tuple(hits),
        answer_text=text,
        cited_site_ids=tuple(cited),
    )
