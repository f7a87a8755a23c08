"""Knowledge-base parsing, validation, and checkpointed ingestion.

Corpus files are UTF-8 JSON: a single object, an array of objects, or one
object per line. Triplet files are line-delimited JSON. The ingest
checkpoint is a single JSON file written atomically (write-then-rename).
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

from .errors import (
    CorruptCheckpoint,
    EmptyRequired,
    IoFailure,
    MalformedLine,
    MalformedSyntax,
    MissingField,
)

REQUIRED_FIELDS = ("id", "title", "requirements", "category")
OPTIONAL_FIELDS = ("description", "sequences")

TRIPLET_PROVENANCES = ("heuristic", "hard-negative", "synthetic", "manual")


@dataclass(frozen=True)
class KnowledgeDocument:
    """One retrieval unit of the knowledge base."""

    id: str
    title: str
    requirements: str
    category: str
    description: str | None = None
    sequences: tuple[str, ...] | None = None
    metadata: dict = field(default_factory=dict)

    def to_json_obj(self) -> dict:
        obj = {
            "id": self.id,
            "title": self.title,
            "requirements": self.requirements,
            "category": self.category,
        }
        if self.description is not None:
            obj["description"] = self.description
        if self.sequences is not None:
            obj["sequences"] = list(self.sequences)
        obj.update(self.metadata)
        return obj

    def to_canonical_json(self) -> str:
        return json.dumps(self.to_json_obj(), sort_keys=True, ensure_ascii=False,
                          separators=(",", ":"))

    @property
    def searchable_text(self) -> str:
        parts = [self.title, self.requirements]
        if self.description:
            parts.append(self.description)
        if self.sequences:
            parts.extend(self.sequences)
        return "\n".join(parts)


@dataclass(frozen=True)
class TripletRecord:
    """Anchor/positive/optional-negative training or benchmark item."""

    anchor: str
    positive: str
    negative: str | None = None
    provenance: str = "manual"
    source_ids: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.anchor or not self.positive:
            raise ValueError("anchor and positive must be non-empty")
        if self.anchor == self.positive:
            raise ValueError("anchor must differ from positive")
        if self.negative is not None and self.negative == self.positive:
            raise ValueError("negative must differ from positive")
        if self.provenance not in TRIPLET_PROVENANCES:
            raise ValueError(f"unknown provenance: {self.provenance}")

    def to_json_obj(self) -> dict:
        obj = {"anchor": self.anchor, "positive": self.positive}
        if self.negative is not None:
            obj["negative"] = self.negative
        obj["provenance"] = self.provenance
        if self.source_ids:
            obj["source_ids"] = list(self.source_ids)
        return obj


@dataclass
class ValidationReport:
    total: int = 0
    accepted: int = 0
    rejected: list[tuple[str, str]] = field(default_factory=list)

    def check(self):
        assert self.accepted + len(self.rejected) == self.total
        return self


def _build_document(obj: dict) -> KnowledgeDocument:
    for name in REQUIRED_FIELDS:
        if name not in obj:
            raise MissingField(name)
        if not isinstance(obj[name], str) or obj[name] == "":
            raise EmptyRequired(name)
    sequences = obj.get("sequences")
    if sequences is not None:
        if not isinstance(sequences, list) or any(
            not isinstance(s, str) or s == "" for s in sequences
        ):
            raise EmptyRequired("sequences")
        sequences = tuple(sequences)
    metadata = {
        k: v
        for k, v in obj.items()
        if k not in REQUIRED_FIELDS and k not in OPTIONAL_FIELDS
    }
    return KnowledgeDocument(
        id=obj["id"],
        title=obj["title"],
        requirements=obj["requirements"],
        category=obj["category"],
        description=obj.get("description"),
        sequences=sequences,
        metadata=metadata,
    )


def parse_document(raw: str) -> KnowledgeDocument:
    """Parse one JSON object into a document; unknown fields land in metadata."""
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError as e:
        raise MalformedSyntax(e.pos, e.msg) from e
    if not isinstance(obj, dict):
        raise MalformedSyntax(0, "expected a JSON object")
    return _build_document(obj)


def validate_corpus(docs) -> tuple[ValidationReport, list[KnowledgeDocument]]:
    """Reject duplicate ids (first occurrence wins); nothing is thrown."""
    report = ValidationReport()
    seen: set[str] = set()
    accepted: list[KnowledgeDocument] = []
    for i, doc in enumerate(docs):
        report.total += 1
        if doc.id in seen:
            report.rejected.append((f"#{i} id={doc.id}", "DuplicateId"))
        else:
            seen.add(doc.id)
            accepted.append(doc)
            report.accepted += 1
    return report.check(), accepted


def _parse_corpus_file(path: Path) -> list[dict]:
    text = path.read_text(encoding="utf-8")
    stripped = text.lstrip()
    if not stripped:
        return []
    if stripped.startswith("["):
        parsed = json.loads(text)
        if not isinstance(parsed, list):
            raise MalformedSyntax(0, "expected array")
        return parsed
    # single object or line-delimited objects
    try:
        one = json.loads(text)
        if isinstance(one, dict):
            return [one]
    except json.JSONDecodeError:
        pass
    objs = []
    for line in text.splitlines():
        if line.strip():
            objs.append(json.loads(line))
    return objs


@dataclass
class IngestCheckpoint:
    source_path: str
    processed_ids: set[str] = field(default_factory=set)
    processed_files: list[str] = field(default_factory=list)
    last_offset: int = 0
    timestamp: float = 0.0

    def to_json_obj(self) -> dict:
        return {
            "source_path": self.source_path,
            "processed_ids": sorted(self.processed_ids),
            "processed_files": self.processed_files,
            "last_offset": self.last_offset,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "IngestCheckpoint":
        try:
            return cls(
                source_path=obj["source_path"],
                processed_ids=set(obj["processed_ids"]),
                processed_files=list(obj["processed_files"]),
                last_offset=int(obj["last_offset"]),
                timestamp=float(obj["timestamp"]),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise CorruptCheckpoint(str(e)) from e


def _atomic_write(path: Path, data: str):
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(data, encoding="utf-8")
    os.replace(tmp, path)


def load_checkpoint(path: Path) -> IngestCheckpoint | None:
    if not path.exists():
        return None
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise CorruptCheckpoint(str(e)) from e
    return IngestCheckpoint.from_json_obj(obj)


def dump_corpus(docs, path: Path):
    _atomic_write(path, "".join(d.to_canonical_json() + "\n" for d in docs))


def load_corpus(path: Path) -> list[KnowledgeDocument]:
    docs = []
    if path.exists():
        for line in path.read_text(encoding="utf-8").splitlines():
            if line.strip():
                docs.append(parse_document(line))
    return docs


def ingest_directory(
    root, checkpoint_path, output_path, reset: bool = False,
    interrupt_after: int | None = None,
) -> ValidationReport:
    """Ingest every corpus file under root exactly once, checkpointing per file.

    The canonical output (line-delimited canonical JSON) and the checkpoint
    are each written atomically after every file, output first; a crash at
    any point leaves a resumable state whose final output is identical to an
    uninterrupted run. ``interrupt_after`` aborts after that many newly
    processed files (crash-injection hook for tests).
    """
    root = Path(root)
    checkpoint_path = Path(checkpoint_path)
    output_path = Path(output_path)
    if not root.is_dir():
        raise IoFailure(root, "not a directory")

    if reset:
        checkpoint_path.unlink(missing_ok=True)
        output_path.unlink(missing_ok=True)
    ckpt = load_checkpoint(checkpoint_path)
    if ckpt is None:
        ckpt = IngestCheckpoint(source_path=str(root))

    # Checkpoint is authoritative: drop output docs from a file whose
    # output write landed but whose checkpoint write did not.
    docs = [d for d in load_corpus(output_path) if d.id in ckpt.processed_ids]
    seen = {d.id for d in docs}

    report = ValidationReport()
    files = sorted(p for p in root.rglob("*.json") if p.is_file())
    newly_processed = 0
    for path in files:
        rel = str(path.relative_to(root))
        if rel in ckpt.processed_files:
            continue
        try:
            objs = _parse_corpus_file(path)
        except (OSError, json.JSONDecodeError) as e:
            raise IoFailure(path, str(e)) from e
        for i, obj in enumerate(objs):
            report.total += 1
            try:
                doc = _build_document(obj)
            except (MissingField, EmptyRequired) as e:
                report.rejected.append((f"{rel}#{i}", type(e).__name__))
                continue
            if doc.id in seen:
                report.rejected.append((f"{rel}#{i} id={doc.id}", "DuplicateId"))
                continue
            seen.add(doc.id)
            docs.append(doc)
            report.accepted += 1
        ckpt.processed_files.append(rel)
        ckpt.processed_ids = set(seen)
        ckpt.last_offset += path.stat().st_size
        ckpt.timestamp = time.time()
        dump_corpus(docs, output_path)
        _atomic_write(checkpoint_path, json.dumps(ckpt.to_json_obj(), indent=1))
        newly_processed += 1
        if interrupt_after is not None and newly_processed >= interrupt_after:
            raise KeyboardInterrupt(f"injected interruption after {rel}")
    return report.check()


def load_triplets(path) -> list[TripletRecord]:
    """Load a line-delimited JSON triplet file; order preserved."""
    path = Path(path)
    records: list[TripletRecord] = []
    text = path.read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            rec = TripletRecord(
                anchor=obj["anchor"],
                positive=obj["positive"],
                negative=obj.get("negative"),
                provenance=obj.get("provenance", "manual"),
                source_ids=tuple(obj.get("source_ids", ())),
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            raise MalformedLine(lineno, str(e)) from e
        records.append(rec)
    return records


def save_triplets(records, path):
    path = Path(path)
    _atomic_write(
        path,
        "".join(
            json.dumps(r.to_json_obj(), ensure_ascii=False, sort_keys=True) + "\n"
            for r in records
        ),
    )
