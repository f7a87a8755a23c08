"""Dense vector index: exact cosine top-k, metadata filtering, incremental
re-embedding, and checksummed single-file snapshots.

Snapshot layout (UTF-8 JSON):
    {"header": {"format": "hilrag-index-v1", "dimension": D,
                "adapter_digest": str, "entry_count": n},
     "entries": [{"doc_id", "vector", "normalized", "metadata", "version"}...],
     "checksum": sha256 hex of the canonical header+entries JSON}
"""

from __future__ import annotations

import hashlib
import json
import threading
import warnings
from dataclasses import dataclass, field

import numpy as np

from .embedding import EmbeddingVector, embed_text
from .errors import CorruptSnapshot, DigestMismatch, DimensionMismatch


@dataclass(frozen=True)
class IndexEntry:
    doc_id: str
    vector: EmbeddingVector
    metadata: dict[str, str] = field(default_factory=dict)
    version: int = 1


@dataclass(frozen=True)
class MetadataFilter:
    """Conjunction of (field, predicate, value); empty matches everything."""

    clauses: tuple[tuple[str, str, str], ...] = ()

    def matches(self, metadata: dict[str, str]) -> bool:
        for name, predicate, value in self.clauses:
            actual = metadata.get(name)
            if actual is None:
                return False
            if predicate == "equals":
                if actual != value:
                    return False
            elif predicate == "contains-token":
                if value.lower() not in actual.lower().split():
                    return False
            else:
                raise ValueError(f"unknown predicate: {predicate}")
        return True


@dataclass(frozen=True)
class RetrievalHit:
    doc_id: str
    score: float
    metadata: dict[str, str] = field(default_factory=dict)


class VectorIndex:
    """Exact-scan cosine index; many readers or one writer, atomic publishes."""

    def __init__(self, dimension: int, adapter_digest: str = ""):
        self.dimension = dimension
        self.adapter_digest = adapter_digest
        self._entries: dict[str, IndexEntry] = {}
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._entries)

    def entry(self, doc_id: str) -> IndexEntry | None:
        return self._entries.get(doc_id)

    def upsert(self, entry: IndexEntry) -> int | None:
        if entry.vector.dimension != self.dimension:
            raise DimensionMismatch(
                f"entry dimension {entry.vector.dimension} != index {self.dimension}")
        with self._lock:
            previous = self._entries.get(entry.doc_id)
            version = 1 if previous is None else previous.version + 1
            self._entries[entry.doc_id] = IndexEntry(
                doc_id=entry.doc_id, vector=entry.vector,
                metadata=dict(entry.metadata), version=version)
            return None if previous is None else previous.version

    def search_topk(self, query: EmbeddingVector, k: int,
                    metadata_filter: MetadataFilter | None = None) -> list[RetrievalHit]:
        """Exact cosine top-k over filtered entries, ties broken by doc_id."""
        if k < 1:
            raise ValueError("k must be >= 1")
        if query.dimension != self.dimension:
            raise DimensionMismatch(
                f"query dimension {query.dimension} != index {self.dimension}")
        entries = list(self._entries.values())
        if metadata_filter is not None:
            entries = [e for e in entries if metadata_filter.matches(e.metadata)]
        if not entries or query.is_zero:
            return []
        qn = query.values / np.linalg.norm(query.values)
        scores = []
        for e in entries:
            v = e.vector.values
            nv = np.linalg.norm(v)
            scores.append(0.0 if nv == 0.0 else float(np.clip(v @ qn / nv, -1, 1)))
        order = sorted(range(len(entries)),
                       key=lambda i: (-scores[i], entries[i].doc_id))
        return [
            RetrievalHit(doc_id=entries[i].doc_id, score=scores[i],
                         metadata=dict(entries[i].metadata))
            for i in order[:k]
        ]

    def reembed_incremental(self, changed_docs, provider, adapter=None) -> int:
        """Re-embed only the listed docs; the batch publishes all-or-nothing."""
        staged = []
        for doc in changed_docs:
            vec = embed_text(provider, doc.searchable_text, adapter)
            staged.append((doc, vec))
        for doc, vec in staged:
            metadata = {"title": doc.title, "category": doc.category}
            metadata.update({k: str(v) for k, v in doc.metadata.items()})
            self.upsert(IndexEntry(doc_id=doc.id, vector=vec, metadata=metadata))
        return len(staged)

    def _canonical_payload(self) -> tuple[dict, str]:
        entries = [
            {
                "doc_id": e.doc_id,
                "vector": e.vector.values.tolist(),
                "normalized": e.vector.normalized,
                "metadata": e.metadata,
                "version": e.version,
            }
            for e in sorted(self._entries.values(), key=lambda e: e.doc_id)
        ]
        body = {
            "header": {
                "format": "hilrag-index-v1",
                "dimension": self.dimension,
                "adapter_digest": self.adapter_digest,
                "entry_count": len(entries),
            },
            "entries": entries,
        }
        blob = json.dumps(body, sort_keys=True, separators=(",", ":"))
        return body, hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def save_snapshot(self, path):
        body, checksum = self._canonical_payload()
        body["checksum"] = checksum
        with open(path, "w", encoding="utf-8") as f:
            json.dump(body, f)

    @classmethod
    def load_snapshot(cls, path, expected_adapter_digest: str | None = None) -> "VectorIndex":
        try:
            with open(path, encoding="utf-8") as f:
                body = json.load(f)
            checksum = body.pop("checksum")
            header = body["header"]
            entries = body["entries"]
        except (OSError, json.JSONDecodeError, KeyError) as e:
            raise CorruptSnapshot(str(e)) from e
        blob = json.dumps({"header": header, "entries": entries},
                          sort_keys=True, separators=(",", ":"))
        if hashlib.sha256(blob.encode("utf-8")).hexdigest() != checksum:
            raise CorruptSnapshot("checksum mismatch")
        if header.get("format") != "hilrag-index-v1":
            raise CorruptSnapshot(f"unknown format {header.get('format')!r}")
        index = cls(dimension=header["dimension"],
                    adapter_digest=header["adapter_digest"])
        if (expected_adapter_digest is not None
                and expected_adapter_digest != header["adapter_digest"]):
            warnings.warn(
                f"snapshot adapter digest {header['adapter_digest']!r} differs "
                f"from configured {expected_adapter_digest!r}",
                DigestMismatch,
            )
        for obj in entries:
            index._entries[obj["doc_id"]] = IndexEntry(
                doc_id=obj["doc_id"],
                vector=EmbeddingVector(
                    values=np.array(obj["vector"], dtype=np.float64),
                    normalized=obj["normalized"]),
                metadata=dict(obj["metadata"]),
                version=obj["version"],
            )
        return index


def build_index(corpus, provider, adapter=None) -> VectorIndex:
    """Full rebuild: embed every doc's searchable text and index it."""
    digest = adapter.config_digest if adapter is not None else ""
    index = VectorIndex(dimension=provider.dimension, adapter_digest=digest)
    index.reembed_incremental(corpus, provider, adapter)
    return index
