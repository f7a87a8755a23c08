"""HTTP/WebSocket front door: query handling with an audit-first rule,
append-only feedback persistence, and feedback aggregation.

Audit and feedback records live in append-only line-delimited JSON
journals; appends are serialized through a single writer lock and flushed
per record, and journals reload losslessly on restart.
"""

import json
import secrets
import threading
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .errors import ClientFailure, RatingOutOfRange, UnknownInference

RATING_DIMENSIONS = ("completeness", "truthfulness", "naturalness", "satisfaction")
MODES = ("support", "interactive-control")


@dataclass(frozen=True)
class AuditRecord:
    inference_id: str
    timestamp: float
    raw_query: str
    normalized_tokens: tuple[str, ...]
    retrieved: tuple[tuple[str, float], ...]
    prompt_digest: str
    tool_trace: tuple[dict, ...]
    answer: str
    attributed_doc_id: str | None
    mode: str
    status: str = "ok"  # ok | client_failure | degenerate

    def to_json_obj(self) -> dict:
        obj = asdict(self)
        obj["normalized_tokens"] = list(self.normalized_tokens)
        obj["retrieved"] = [list(t) for t in self.retrieved]
        obj["tool_trace"] = list(self.tool_trace)
        return obj

    @classmethod
    def from_json_obj(cls, obj: dict) -> "AuditRecord":
        return cls(
            inference_id=obj["inference_id"], timestamp=obj["timestamp"],
            raw_query=obj["raw_query"],
            normalized_tokens=tuple(obj["normalized_tokens"]),
            retrieved=tuple((d, s) for d, s in obj["retrieved"]),
            prompt_digest=obj["prompt_digest"],
            tool_trace=tuple(obj["tool_trace"]),
            answer=obj["answer"], attributed_doc_id=obj["attributed_doc_id"],
            mode=obj["mode"], status=obj.get("status", "ok"),
        )


@dataclass(frozen=True)
class FeedbackRecord:
    inference_id: str
    ratings: dict[str, int] = field(default_factory=dict)
    helpful: bool | None = None
    free_text: str | None = None
    flagged_inaccurate: bool = False
    timestamp: float = 0.0

    def validate(self):
        for dim, value in self.ratings.items():
            if dim not in RATING_DIMENSIONS:
                raise RatingOutOfRange(f"unknown rating dimension: {dim}")
            if not isinstance(value, int) or not (1 <= value <= 5):
                raise RatingOutOfRange(f"{dim}={value!r} outside 1-5")
        return self

    def to_json_obj(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json_obj(cls, obj: dict) -> "FeedbackRecord":
        return cls(
            inference_id=obj["inference_id"], ratings=dict(obj["ratings"]),
            helpful=obj.get("helpful"), free_text=obj.get("free_text"),
            flagged_inaccurate=obj.get("flagged_inaccurate", False),
            timestamp=obj.get("timestamp", 0.0),
        )


class Journal:
    """Append-only JSONL journal with a single serialized writer."""

    def __init__(self, path):
        self.path = Path(path)
        self._lock = threading.Lock()

    def append(self, obj: dict):
        line = json.dumps(obj, ensure_ascii=False, sort_keys=True)
        with self._lock:
            with open(self.path, "a", encoding="utf-8") as f:
                f.write(line + "\n")
                f.flush()

    def load(self) -> list[dict]:
        if not self.path.exists():
            return []
        out = []
        for line in self.path.read_text(encoding="utf-8").splitlines():
            if line.strip():
                out.append(json.loads(line))
        return out


class ServiceState:
    """Pipeline plus persistent audit/feedback stores."""

    def __init__(self, pipeline, audit_path, feedback_path):
        self.pipeline = pipeline
        self.audit_journal = Journal(audit_path)
        self.feedback_journal = Journal(feedback_path)
        self._audit: dict[str, AuditRecord] = {
            r["inference_id"]: AuditRecord.from_json_obj(r)
            for r in self.audit_journal.load()
        }
        self._feedback: list[FeedbackRecord] = [
            FeedbackRecord.from_json_obj(r) for r in self.feedback_journal.load()
        ]
        self._lock = threading.Lock()

    def handle_query(self, text: str, k: int | None = None,
                     mode: str = "support") -> dict:
        """Run the pipeline and persist the audit record before returning.

        Raises ClientFailure after writing a failure-status record.
        """
        inference_id = secrets.token_hex(16)
        now = time.time()
        try:
            result = self.pipeline.answer(text, k=k)
        except ClientFailure:
            record = AuditRecord(
                inference_id=inference_id, timestamp=now, raw_query=text,
                normalized_tokens=(), retrieved=(), prompt_digest="",
                tool_trace=(), answer="", attributed_doc_id=None,
                mode=mode, status="client_failure")
            self._store_audit(record)
            raise
        gen = result.generation
        record = AuditRecord(
            inference_id=inference_id, timestamp=now, raw_query=text,
            normalized_tokens=result.query.tokens,
            retrieved=tuple((h.doc_id, h.score) for h in result.hits),
            prompt_digest=gen.prompt_digest,
            tool_trace=tuple(
                {"tool": c.name, "call_id": c.call_id, "status": r.status}
                for c, r in gen.tool_trace),
            answer=gen.answer, attributed_doc_id=gen.attributed_doc_id,
            mode=mode,
            status="degenerate" if result.notice == "QueryDegenerate" else "ok")
        self._store_audit(record)
        titles = self.pipeline.doc_titles
        return {
            "answer": gen.answer,
            "sources": [
                {"doc_id": h.doc_id, "title": titles.get(h.doc_id, ""),
                 "score": h.score}
                for h in result.hits
            ],
            "inference_id": inference_id,
            "tool_trace_summary": [
                {"tool": c.name, "status": r.status} for c, r in gen.tool_trace
            ],
        }

    def _store_audit(self, record: AuditRecord):
        self.audit_journal.append(record.to_json_obj())
        with self._lock:
            self._audit[record.inference_id] = record

    def handle_feedback(self, record: FeedbackRecord) -> str:
        record.validate()
        if record.inference_id not in self._audit:
            raise UnknownInference(record.inference_id)
        if record.timestamp == 0.0:
            record = FeedbackRecord(
                inference_id=record.inference_id, ratings=record.ratings,
                helpful=record.helpful, free_text=record.free_text,
                flagged_inaccurate=record.flagged_inaccurate,
                timestamp=time.time())
        self.feedback_journal.append(record.to_json_obj())
        with self._lock:
            self._feedback.append(record)
        return record.inference_id

    def get_audit(self, inference_id: str) -> AuditRecord:
        record = self._audit.get(inference_id)
        if record is None:
            raise UnknownInference(inference_id)
        return record

    def aggregate_feedback(self, since: float | None = None,
                           until: float | None = None,
                           mode: str | None = None) -> dict:
        """Per-dimension rating means plus helpful counts; an empty match
        set yields an explicit marker rather than NaN means."""
        with self._lock:
            records = list(self._feedback)
        matched = []
        for r in records:
            if since is not None and r.timestamp < since:
                continue
            if until is not None and r.timestamp > until:
                continue
            if mode is not None:
                audit = self._audit.get(r.inference_id)
                if audit is None or audit.mode != mode:
                    continue
            matched.append(r)
        if not matched:
            return {"empty": True, "count": 0}
        means = {}
        for dim in RATING_DIMENSIONS:
            values = [r.ratings[dim] for r in matched if dim in r.ratings]
            if values:
                means[dim] = sum(values) / len(values)
        helpful_yes = sum(1 for r in matched if r.helpful is True)
        helpful_no = sum(1 for r in matched if r.helpful is False)
        return {
            "empty": False,
            "count": len(matched),
            "rating_means": means,
            "helpful": {"yes": helpful_yes, "no": helpful_no},
            "flagged_inaccurate": sum(1 for r in matched if r.flagged_inaccurate),
        }


def build_app(state: ServiceState):
    """FastAPI application over a ServiceState."""
    from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
    from pydantic import BaseModel

    class QueryRequest(BaseModel):
        text: str
        k: int | None = None
        mode: str = "support"

    class FeedbackRequest(BaseModel):
        inference_id: str
        ratings: dict[str, int] = {}
        helpful: bool | None = None
        free_text: str | None = None
        flagged_inaccurate: bool = False

    app = FastAPI(title="hilrag")
    app.state.service = state

    @app.get("/health")
    def health():
        return {"status": "ok", "indexed": len(state.pipeline.index)}

    @app.post("/v1/query")
    def query(req: QueryRequest):
        if not req.text.strip():
            raise HTTPException(status_code=422, detail="empty query text")
        if req.mode not in MODES:
            raise HTTPException(status_code=422, detail=f"unknown mode {req.mode}")
        try:
            return state.handle_query(req.text, k=req.k, mode=req.mode)
        except ClientFailure as e:
            raise HTTPException(status_code=503, detail=str(e))

    @app.post("/v1/feedback")
    def feedback(req: FeedbackRequest):
        record = FeedbackRecord(
            inference_id=req.inference_id, ratings=req.ratings,
            helpful=req.helpful, free_text=req.free_text,
            flagged_inaccurate=req.flagged_inaccurate)
        try:
            stored = state.handle_feedback(record)
        except UnknownInference as e:
            raise HTTPException(status_code=404, detail=str(e))
        except RatingOutOfRange as e:
            raise HTTPException(status_code=422, detail=str(e))
        return {"stored": stored}

    @app.get("/v1/audit/{inference_id}")
    def audit(inference_id: str):
        try:
            return state.get_audit(inference_id).to_json_obj()
        except UnknownInference as e:
            raise HTTPException(status_code=404, detail=str(e))

    @app.get("/v1/metrics/feedback")
    def metrics(since: float | None = None, until: float | None = None,
                mode: str | None = None):
        return state.aggregate_feedback(since=since, until=until, mode=mode)

    @app.websocket("/ws/chat")
    async def ws_chat(websocket: WebSocket):
        await websocket.accept()
        try:
            while True:
                msg = await websocket.receive_json()
                text = msg.get("text", "")
                if not text.strip():
                    await websocket.send_json(
                        {"error": "empty query text", "code": 422})
                    continue
                try:
                    response = state.handle_query(
                        text, k=msg.get("k"), mode=msg.get("mode", "support"))
                except ClientFailure as e:
                    await websocket.send_json({"error": str(e), "code": 503})
                    continue
                await websocket.send_json(response)
        except WebSocketDisconnect:
            pass

    return app
