"""Online pipeline: query preprocessing, retrieval with identifier
promotion, token-budgeted context assembly, prompt rendering, the bounded
tool-call generation loop, and source-attribution parsing.
"""

from __future__ import annotations

import concurrent.futures
import hashlib
import json
import math
import re
import time
from dataclasses import dataclass, field

from .embedding import embed_text
from .errors import BudgetTooSmall, ClientFailure, ToolDepthExceeded

# Fixed token overhead reserved for the prompt template scaffolding.
TEMPLATE_OVERHEAD_TOKENS = 64
MIN_TRUNCATED_TOKENS = 32

_WORD_SPLIT = re.compile(r"[^0-9A-Za-z_]+")
_TOKEN_SPLIT = re.compile(r"[^0-9A-Za-z]+")


@dataclass(frozen=True)
class NormalizedQuery:
    raw: str
    tokens: tuple[str, ...]
    extracted_metadata: dict = field(default_factory=dict)
    timestamp: float = 0.0

    @property
    def identifiers(self) -> tuple[str, ...]:
        return tuple(self.extracted_metadata.get("identifiers", ()))


@dataclass(frozen=True)
class RetrievalConfig:
    k: int = 5
    token_budget: int = 8192
    reserved_response_tokens: int = 1024

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.reserved_response_tokens >= self.token_budget:
            raise ValueError("reserved tokens must be below the budget")

    @property
    def available_context_tokens(self) -> int:
        return (self.token_budget - self.reserved_response_tokens
                - TEMPLATE_OVERHEAD_TOKENS)


@dataclass(frozen=True)
class ContextEntry:
    doc_id: str
    included_text: str
    est_tokens: int
    truncated: bool


@dataclass(frozen=True)
class ContextBundle:
    entries: tuple[ContextEntry, ...]
    total_est_tokens: int


@dataclass(frozen=True)
class ToolCall:
    name: str
    arguments: dict
    call_id: str


@dataclass(frozen=True)
class ToolResult:
    call_id: str
    status: str  # ok | error | timeout
    payload: str


@dataclass(frozen=True)
class GenerationResult:
    answer: str
    attributed_doc_id: str | None
    tool_trace: tuple[tuple[ToolCall, ToolResult], ...]
    prompt_digest: str
    status: str = "ok"  # ok | malformed_tool_request


def estimate_tokens(text: str) -> int:
    return math.ceil(len(text) / 4)


def preprocess_query(raw: str, timestamp: float | None = None) -> NormalizedQuery:
    """Lowercase tokenization plus identifier extraction.

    A word is an identifier when its original form contains an underscore
    or at least two uppercase letters (e.g. ECU_12, VehSpd).
    """
    tokens = tuple(t for t in _TOKEN_SPLIT.split(raw.lower()) if t)
    identifiers = []
    for word in _WORD_SPLIT.split(raw):
        if not word:
            continue
        if "_" in word or sum(1 for c in word if c.isupper()) >= 2:
            if word not in identifiers:
                identifiers.append(word)
    metadata = {"identifiers": identifiers} if identifiers else {}
    return NormalizedQuery(
        raw=raw, tokens=tokens, extracted_metadata=metadata,
        timestamp=time.time() if timestamp is None else timestamp)


def _metadata_contains_identifier(metadata: dict, identifiers) -> bool:
    for value in metadata.values():
        value_tokens = {t for t in _TOKEN_SPLIT.split(str(value).lower()) if t}
        for ident in identifiers:
            ident_tokens = [t for t in _TOKEN_SPLIT.split(ident.lower()) if t]
            if ident_tokens and all(t in value_tokens for t in ident_tokens):
                return True
    return False


def retrieve(query: NormalizedQuery, index, provider, adapter=None,
             config: RetrievalConfig = RetrievalConfig()):
    """Dense top-k with stable promotion of identifier-matching hits.

    Returns (hits, notice); notice is "QueryDegenerate" for zero-embedding
    queries, which yield no hits.
    """
    qvec = embed_text(provider, query.raw, adapter)
    if qvec.is_zero:
        return [], "QueryDegenerate"
    hits = index.search_topk(qvec, config.k)
    if query.identifiers:
        matched = [h for h in hits
                   if _metadata_contains_identifier(h.metadata, query.identifiers)]
        unmatched = [h for h in hits if h not in matched]
        hits = matched + unmatched
    return hits, None


def assemble_context(hits, doc_texts: dict[str, str],
                     config: RetrievalConfig = RetrievalConfig()) -> ContextBundle:
    """Greedy rank-order packing under the available token budget; at most
    the last included doc is truncated (to >= 32 estimated tokens)."""
    available = config.available_context_tokens
    entries: list[ContextEntry] = []
    total = 0
    for rank, hit in enumerate(hits):
        text = doc_texts[hit.doc_id]
        est = estimate_tokens(text)
        remaining = available - total
        if est <= remaining:
            entries.append(ContextEntry(hit.doc_id, text, est, False))
            total += est
            continue
        # largest prefix whose estimate fits
        prefix_chars = remaining * 4
        prefix = text[:prefix_chars]
        prefix_est = estimate_tokens(prefix)
        if prefix_est >= MIN_TRUNCATED_TOKENS:
            entries.append(ContextEntry(hit.doc_id, prefix, prefix_est, True))
            total += prefix_est
        elif rank == 0:
            raise BudgetTooSmall(
                f"budget {available} cannot fit even a {MIN_TRUNCATED_TOKENS}-token "
                f"prefix of the top document")
        break
    return ContextBundle(entries=tuple(entries), total_est_tokens=total)


PROMPT_TEMPLATE = (
    "You are a specialized assistant supporting automotive HIL testing. "
    "Using only the following provided information, accurately answer the "
    "engineer's query:\n"
    "---\n"
    "{documents}\n"
    "---\n"
    'Engineer’s Query: "{question}"\n'
    "End your answer with a line of the form: SOURCE: <doc_id>\n"
    "Response:"
)


def render_prompt(bundle: ContextBundle, query: NormalizedQuery,
                  doc_titles: dict[str, str] | None = None) -> str:
    doc_titles = doc_titles or {}
    if bundle.entries:
        blocks = []
        for entry in bundle.entries:
            title = doc_titles.get(entry.doc_id, "")
            header = f"[{entry.doc_id}] {title}".rstrip()
            blocks.append(f"{header}\n{entry.included_text}")
        documents = "\n\n".join(blocks)
    else:
        documents = "No documents retrieved."
    return PROMPT_TEMPLATE.format(documents=documents, question=query.raw)


def prompt_digest(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


_SOURCE_LINE = re.compile(r"^\s*SOURCE:\s*(\S.*?)\s*$")


def parse_attribution(answer: str) -> str | None:
    """Last 'SOURCE: <id>' line wins; absence yields None."""
    found = None
    for line in answer.splitlines():
        m = _SOURCE_LINE.match(line)
        if m and m.group(1):
            found = m.group(1)
    return found


@dataclass(frozen=True)
class Tool:
    name: str
    parameters: dict[str, type]
    handler: object  # callable(**kwargs) -> str
    timeout: float = 5.0


class ToolRegistry:
    def __init__(self):
        self._tools: dict[str, Tool] = {}

    def register(self, tool: Tool):
        self._tools[tool.name] = tool

    def get(self, name: str) -> Tool | None:
        return self._tools.get(name)

    def names(self) -> list[str]:
        return sorted(self._tools)


def dispatch_tool(call: ToolCall, registry: ToolRegistry) -> ToolResult:
    """Standardized execution wrapper: never raises across the boundary;
    every failure mode lands in ToolResult.status."""
    tool = registry.get(call.name)
    if tool is None:
        return ToolResult(call.call_id, "error", f"UnknownTool: {call.name}")
    unknown = set(call.arguments) - set(tool.parameters)
    missing = set(tool.parameters) - set(call.arguments)
    if unknown or missing:
        return ToolResult(
            call.call_id, "error",
            f"InvalidArguments: unknown={sorted(unknown)} missing={sorted(missing)}")
    pool = concurrent.futures.ThreadPoolExecutor(max_workers=1)
    future = pool.submit(lambda: tool.handler(**call.arguments))
    try:
        payload = future.result(timeout=tool.timeout)
    except concurrent.futures.TimeoutError:
        future.cancel()
        return ToolResult(call.call_id, "timeout",
                          f"timed out after {tool.timeout}s")
    except Exception as e:
        return ToolResult(call.call_id, "error", f"{type(e).__name__}: {e}")
    finally:
        # do not wait for a stuck handler; the worker thread is abandoned
        pool.shutdown(wait=False)
    return ToolResult(call.call_id, "ok", str(payload))


def default_tool_registry(corpus=None, signal_db: dict | None = None) -> ToolRegistry:
    """Fixture-backed tools: sequence lookup, CAN signal metadata, and
    procedural action triggering."""
    docs = {d.id: d for d in corpus} if corpus else {}
    signal_db = signal_db or {}

    def lookup_sequence(id: str) -> str:
        doc = docs.get(id)
        if doc is None or not doc.sequences:
            raise KeyError(f"no sequence for {id}")
        return "\n".join(doc.sequences)

    def signal_metadata(name: str) -> str:
        meta = signal_db.get(name)
        if meta is None:
            raise KeyError(f"unknown signal {name}")
        return json.dumps(meta, sort_keys=True)

    def trigger_action(action: str) -> str:
        return f"action queued: {action}"

    registry = ToolRegistry()
    registry.register(Tool("lookup_sequence", {"id": str}, lookup_sequence))
    registry.register(Tool("signal_metadata", {"name": str}, signal_metadata))
    registry.register(Tool("trigger_action", {"action": str}, trigger_action))
    return registry


def run_generation(client, prompt: str, tool_registry: ToolRegistry,
                   max_depth: int = 3) -> GenerationResult:
    """Generation loop with bounded tool dispatch.

    The client consumes a chat-style messages list and returns either a
    final answer string or a structured tool request
    {"tool": name, "arguments": {...}}.
    """
    messages = [{"role": "user", "content": prompt}]
    trace: list[tuple[ToolCall, ToolResult]] = []
    status = "ok"
    for depth in range(max_depth + 1):
        try:
            reply = client.complete(messages)
        except ClientFailure:
            raise
        except Exception as e:
            raise ClientFailure(str(e)) from e
        if isinstance(reply, str):
            return GenerationResult(
                answer=reply,
                attributed_doc_id=parse_attribution(reply),
                tool_trace=tuple(trace),
                prompt_digest=prompt_digest(prompt),
                status=status,
            )
        if depth == max_depth:
            raise ToolDepthExceeded(f"tool depth {max_depth} exceeded")
        call_id = f"call-{len(trace) + 1}"
        if (not isinstance(reply, dict) or "tool" not in reply
                or not isinstance(reply.get("arguments", {}), dict)):
            status = "malformed_tool_request"
            result = ToolResult(call_id, "error",
                                f"MalformedToolRequest: {reply!r}")
            call = ToolCall(name="<malformed>", arguments={}, call_id=call_id)
        else:
            call = ToolCall(name=reply["tool"],
                            arguments=dict(reply.get("arguments", {})),
                            call_id=call_id)
            result = dispatch_tool(call, tool_registry)
        trace.append((call, result))
        messages.append({
            "role": "tool",
            "content": json.dumps({
                "call_id": result.call_id, "tool": call.name,
                "status": result.status, "payload": result.payload,
            }),
        })
    raise ToolDepthExceeded(f"tool depth {max_depth} exceeded")


class ScriptedClient:
    """Replayable client: maps prompt digests to responses, with an optional
    ordered fallback sequence; used in all tests."""

    def __init__(self, by_digest: dict | None = None, sequence: list | None = None,
                 default=None):
        self.by_digest = dict(by_digest or {})
        self.sequence = list(sequence or [])
        self.default = default

    @classmethod
    def load(cls, path) -> "ScriptedClient":
        with open(path, encoding="utf-8") as f:
            obj = json.load(f)
        return cls(by_digest=obj.get("by_digest"), sequence=obj.get("sequence"),
                   default=obj.get("default"))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            json.dump({"by_digest": self.by_digest, "sequence": self.sequence,
                       "default": self.default}, f, indent=1)

    def complete(self, messages):
        digest = prompt_digest(messages[0]["content"])
        if digest in self.by_digest:
            return self.by_digest[digest]
        if self.sequence:
            return self.sequence.pop(0)
        if self.default is not None:
            return self.default
        raise ClientFailure(f"no scripted response for digest {digest}")


class EchoClient:
    """Answers with the first context document's id as the SOURCE line;
    realizes the grounding-closure property exactly."""

    def complete(self, messages):
        prompt = messages[0]["content"]
        m = re.search(r"^\[([^\]]+)\]", prompt, flags=re.MULTILINE)
        if m:
            return f"See the referenced document.\nSOURCE: {m.group(1)}"
        return "No documents retrieved."


class HttpChatClient:
    """Chat-completion-style HTTP client; structured tool requests come back
    as a JSON object {"tool": ..., "arguments": {...}}."""

    def __init__(self, endpoint: str, token: str | None = None, timeout: float = 60.0):
        self.endpoint = endpoint
        self._token = token  # never logged
        self.timeout = timeout

    def complete(self, messages):
        import httpx

        headers = {}
        if self._token:
            headers["Authorization"] = f"Bearer {self._token}"
        try:
            resp = httpx.post(self.endpoint, json={"messages": messages},
                              headers=headers, timeout=self.timeout)
            resp.raise_for_status()
            content = resp.json()["content"]
        except Exception as e:
            raise ClientFailure(str(e)) from e
        if isinstance(content, str):
            stripped = content.strip()
            if stripped.startswith("{"):
                try:
                    obj = json.loads(stripped)
                    if isinstance(obj, dict) and "tool" in obj:
                        return obj
                except json.JSONDecodeError:
                    pass
        return content


@dataclass
class PipelineResult:
    query: NormalizedQuery
    hits: list
    bundle: ContextBundle
    prompt: str
    generation: GenerationResult | None
    notice: str | None = None


class RagPipeline:
    """Immutable composition of index, embedder, client, and tools."""

    def __init__(self, index, provider, client, tool_registry: ToolRegistry,
                 adapter=None, config: RetrievalConfig = RetrievalConfig(),
                 doc_texts: dict[str, str] | None = None,
                 doc_titles: dict[str, str] | None = None, max_tool_depth: int = 3):
        self.index = index
        self.provider = provider
        self.adapter = adapter
        self.client = client
        self.tool_registry = tool_registry
        self.config = config
        self.doc_texts = doc_texts or {}
        self.doc_titles = doc_titles or {}
        self.max_tool_depth = max_tool_depth

    @classmethod
    def from_corpus(cls, corpus, provider, client, adapter=None,
                    config: RetrievalConfig = RetrievalConfig(),
                    tool_registry: ToolRegistry | None = None,
                    index=None) -> "RagPipeline":
        from .vindex import build_index

        corpus = list(corpus)
        if index is None:
            index = build_index(corpus, provider, adapter)
        return cls(
            index=index, provider=provider, client=client,
            tool_registry=tool_registry or default_tool_registry(corpus),
            adapter=adapter, config=config,
            doc_texts={d.id: d.searchable_text for d in corpus},
            doc_titles={d.id: d.title for d in corpus},
        )

    def answer(self, raw_query: str, k: int | None = None) -> PipelineResult:
        config = self.config if k is None else RetrievalConfig(
            k=k, token_budget=self.config.token_budget,
            reserved_response_tokens=self.config.reserved_response_tokens)
        query = preprocess_query(raw_query)
        hits, notice = retrieve(query, self.index, self.provider, self.adapter,
                                config)
        bundle = assemble_context(hits, self.doc_texts, config)
        prompt = render_prompt(bundle, query, self.doc_titles)
        generation = run_generation(self.client, prompt, self.tool_registry,
                                    self.max_tool_depth)
        return PipelineResult(query=query, hits=hits, bundle=bundle,
                              prompt=prompt, generation=generation,
                              notice=notice)
