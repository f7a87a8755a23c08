import time

import pytest
from hypothesis import given, settings, strategies as st

from hilrag import HashProvider, RagPipeline, RetrievalConfig, build_index
from hilrag.errors import BudgetTooSmall, ClientFailure, ToolDepthExceeded
from hilrag.pipeline import (
    ContextBundle,
    ContextEntry,
    EchoClient,
    ScriptedClient,
    TEMPLATE_OVERHEAD_TOKENS,
    Tool,
    ToolCall,
    ToolRegistry,
    assemble_context,
    default_tool_registry,
    dispatch_tool,
    parse_attribution,
    preprocess_query,
    prompt_digest,
    render_prompt,
    retrieve,
    run_generation,
)
from hilrag.vindex import RetrievalHit


class TestPreprocess:
    def test_identifier_extraction(self):
        q = preprocess_query("Verify CAN signal VehSpd on ECU_12")
        assert list(q.identifiers) == ["CAN", "VehSpd", "ECU_12"]

    def test_no_identifiers(self):
        q = preprocess_query("wiper speed test")
        assert q.identifiers == ()
        assert q.tokens == ("wiper", "speed", "test")

    def test_empty(self):
        q = preprocess_query("")
        assert q.tokens == () and q.extracted_metadata == {}

    def test_tokens_lowercased_split(self):
        q = preprocess_query("ECU_12 check")
        assert q.tokens == ("ecu", "12", "check")


class TestRetrieve:
    def build(self, docs):
        provider = HashProvider(64)
        return build_index(docs, provider), provider

    def test_plain_topk_without_identifiers(self, docs):
        index, provider = self.build(docs)
        q = preprocess_query(docs[0].requirements)
        hits, notice = retrieve(q, index, provider)
        assert notice is None
        assert hits[0].doc_id == docs[0].id

    def test_identifier_promotion_is_stable(self):
        index = build_index([], HashProvider(64))
        # hand-build hits by stubbing the index search
        class Stub:
            def search_topk(self, q, k):
                return [
                    RetrievalHit("A", 0.9, {"title": "nothing"}),
                    RetrievalHit("B", 0.8, {"title": "also nothing"}),
                    RetrievalHit("C", 0.7, {"title": "mentions ECU_12 here"}),
                ]
        q = preprocess_query("check ECU_12 now please")
        hits, _ = retrieve(q, Stub(), HashProvider(64))
        assert [h.doc_id for h in hits] == ["C", "A", "B"]

    def test_degenerate_query(self, docs):
        index, provider = self.build(docs)
        hits, notice = retrieve(preprocess_query("!!!"), index, provider)
        assert hits == [] and notice == "QueryDegenerate"


def hit(doc_id, score=0.5):
    return RetrievalHit(doc_id, score, {})


class TestAssembleContext:
    def config(self, budget, reserved=0):
        # available = budget - reserved - TEMPLATE_OVERHEAD_TOKENS
        return RetrievalConfig(
            k=5, token_budget=budget + reserved + TEMPLATE_OVERHEAD_TOKENS,
            reserved_response_tokens=max(reserved, 1)
            if reserved else TEMPLATE_OVERHEAD_TOKENS)

    def test_greedy_truncation(self):
        config = RetrievalConfig(k=5, token_budget=100 + 1024 + TEMPLATE_OVERHEAD_TOKENS,
                                 reserved_response_tokens=1024)
        texts = {"A": "a" * 200, "B": "b" * 240, "C": "c" * 400}
        bundle = assemble_context([hit("A"), hit("B"), hit("C")], texts, config)
        assert [e.doc_id for e in bundle.entries] == ["A", "B"]
        assert not bundle.entries[0].truncated
        assert bundle.entries[1].truncated
        assert bundle.entries[1].est_tokens == 50
        assert bundle.total_est_tokens == 100

    def test_all_fit(self):
        config = RetrievalConfig()
        texts = {"A": "a" * 100, "B": "b" * 100}
        bundle = assemble_context([hit("A"), hit("B")], texts, config)
        assert all(not e.truncated for e in bundle.entries)

    def test_paper_budget_split(self):
        config = RetrievalConfig()
        assert config.token_budget == 8192
        assert config.reserved_response_tokens == 1024
        assert config.available_context_tokens == 7168 - TEMPLATE_OVERHEAD_TOKENS

    def test_budget_too_small(self):
        config = RetrievalConfig(k=5, token_budget=TEMPLATE_OVERHEAD_TOKENS + 20,
                                 reserved_response_tokens=10)
        with pytest.raises(BudgetTooSmall):
            assemble_context([hit("A")], {"A": "a" * 4000}, config)

    @settings(max_examples=200, deadline=None)
    @given(
        lengths=st.lists(st.integers(min_value=0, max_value=5000), max_size=8),
        budget=st.integers(min_value=200, max_value=4000),
    )
    def test_budget_safety_property(self, lengths, budget):
        config = RetrievalConfig(k=8, token_budget=budget + 64,
                                 reserved_response_tokens=32)
        hits = [hit(f"D{i}") for i in range(len(lengths))]
        texts = {f"D{i}": "x" * n for i, n in enumerate(lengths)}
        try:
            bundle = assemble_context(hits, texts, config)
        except BudgetTooSmall:
            return
        assert bundle.total_est_tokens <= config.available_context_tokens
        truncated = [e for e in bundle.entries if e.truncated]
        assert len(truncated) <= 1
        if truncated:
            assert truncated[0] is bundle.entries[-1]
        # rank order preserved
        ids = [e.doc_id for e in bundle.entries]
        assert ids == [h.doc_id for h in hits][: len(ids)]


GOLDEN_PROMPT = (
    "You are a specialized assistant supporting automotive HIL testing. "
    "Using only the following provided information, accurately answer the "
    "engineer's query:\n---\n"
    "[REQ-001] Wiper\nWiper activates above zero speed.\n\n"
    "[REQ-002] Lamp\nLamp test sequence for door open.\n---\n"
    "Engineer’s Query: \"How is the wiper tested?\"\n"
    "End your answer with a line of the form: SOURCE: <doc_id>\nResponse:"
)


class TestRenderPrompt:
    def bundle(self):
        return ContextBundle(entries=(
            ContextEntry("REQ-001", "Wiper activates above zero speed.", 9, False),
            ContextEntry("REQ-002", "Lamp test sequence for door open.", 9, False),
        ), total_est_tokens=18)

    def test_golden_two_doc_prompt(self):
        q = preprocess_query("How is the wiper tested?", timestamp=0.0)
        prompt = render_prompt(self.bundle(), q,
                               {"REQ-001": "Wiper", "REQ-002": "Lamp"})
        assert prompt == GOLDEN_PROMPT

    def test_single_block_per_doc(self):
        q = preprocess_query("q", timestamp=0.0)
        bundle = ContextBundle(entries=(
            ContextEntry("REQ-1", "text", 1, False),), total_est_tokens=1)
        prompt = render_prompt(bundle, q)
        assert prompt.count("[REQ-1]") == 1

    def test_empty_bundle_marker(self):
        q = preprocess_query("q", timestamp=0.0)
        prompt = render_prompt(ContextBundle(entries=(), total_est_tokens=0), q)
        assert "No documents retrieved." in prompt


class TestAttribution:
    def test_basic(self):
        assert parse_attribution("answer\nSOURCE: REQ-042") == "REQ-042"

    def test_absent(self):
        assert parse_attribution("no source here") is None

    def test_last_wins(self):
        assert parse_attribution("SOURCE: A\ntext\nSOURCE: B") == "B"


class TestDispatchTool:
    def test_lookup_sequence_fixture(self, docs):
        registry = default_tool_registry(docs)
        result = dispatch_tool(
            ToolCall("lookup_sequence", {"id": docs[0].id}, "c1"), registry)
        assert result.status == "ok"
        assert "step one" in result.payload

    def test_unknown_tool(self):
        result = dispatch_tool(ToolCall("reboot_bench", {}, "c1"),
                               ToolRegistry())
        assert result.status == "error" and "UnknownTool" in result.payload

    def test_timeout(self):
        registry = ToolRegistry()
        registry.register(Tool("slow", {}, lambda: time.sleep(2), timeout=0.2))
        start = time.monotonic()
        result = dispatch_tool(ToolCall("slow", {}, "c1"), registry)
        assert result.status == "timeout"
        assert time.monotonic() - start < 1.0

    def test_handler_exception_becomes_error(self, docs):
        registry = default_tool_registry(docs)
        result = dispatch_tool(
            ToolCall("signal_metadata", {"name": "NoSuchSignal"}, "c1"), registry)
        assert result.status == "error"

    def test_bad_arguments(self, docs):
        registry = default_tool_registry(docs)
        result = dispatch_tool(
            ToolCall("lookup_sequence", {"wrong": "x"}, "c1"), registry)
        assert result.status == "error" and "InvalidArguments" in result.payload


class TestRunGeneration:
    def test_immediate_answer(self):
        client = ScriptedClient(default="done\nSOURCE: REQ-1")
        result = run_generation(client, "prompt", ToolRegistry())
        assert result.tool_trace == ()
        assert result.attributed_doc_id == "REQ-1"
        assert result.prompt_digest == prompt_digest("prompt")

    def test_tool_then_answer(self, docs):
        registry = default_tool_registry(docs)
        client = ScriptedClient(sequence=[
            {"tool": "lookup_sequence", "arguments": {"id": docs[0].id}},
            "used the sequence\nSOURCE: " + docs[0].id,
        ])
        result = run_generation(client, "prompt", registry)
        assert len(result.tool_trace) == 1
        call, tool_result = result.tool_trace[0]
        assert call.name == "lookup_sequence" and tool_result.status == "ok"

    def test_tool_result_fed_back(self, docs):
        seen = []

        class Capture:
            def complete(self, messages):
                seen.append(len(messages))
                if len(messages) == 1:
                    return {"tool": "lookup_sequence",
                            "arguments": {"id": docs[0].id}}
                assert messages[-1]["role"] == "tool"
                return "ok\nSOURCE: X"

        run_generation(Capture(), "prompt", default_tool_registry(docs))
        assert seen == [1, 2]

    def test_depth_exceeded(self, docs):
        registry = default_tool_registry(docs)
        request = {"tool": "trigger_action", "arguments": {"action": "a"}}
        client = ScriptedClient(sequence=[request] * 4, default=request)
        with pytest.raises(ToolDepthExceeded):
            run_generation(client, "prompt", registry, max_depth=3)

    def test_malformed_request_recorded(self, docs):
        client = ScriptedClient(sequence=[{"no_tool_key": 1}, "fine"])
        result = run_generation(client, "prompt", default_tool_registry(docs))
        assert result.status == "malformed_tool_request"
        assert result.tool_trace[0][1].status == "error"

    def test_client_failure(self):
        with pytest.raises(ClientFailure):
            run_generation(ScriptedClient(), "prompt", ToolRegistry())


class TestPipelineEndToEnd:
    def test_grounding_closure_with_echo_client(self, docs):
        provider = HashProvider(64)
        pipeline = RagPipeline.from_corpus(docs, provider, EchoClient())
        for d in docs:
            result = pipeline.answer(d.requirements)
            assert result.hits[0].doc_id == d.id
            assert result.generation.attributed_doc_id == d.id

    def test_scripted_client_by_digest(self, docs):
        provider = HashProvider(64)
        probe = RagPipeline.from_corpus(docs, provider, EchoClient())
        rendered = probe.answer(docs[0].requirements)
        client = ScriptedClient(by_digest={
            rendered.generation.prompt_digest: "scripted\nSOURCE: Z"})
        pipeline = RagPipeline.from_corpus(docs, provider, client)
        result = pipeline.answer(docs[0].requirements)
        assert result.generation.answer.startswith("scripted")

    def test_script_file_round_trip(self, tmp_path):
        client = ScriptedClient(by_digest={"d1": "r1"}, default="fallback")
        client.save(tmp_path / "script.json")
        loaded = ScriptedClient.load(tmp_path / "script.json")
        assert loaded.by_digest == {"d1": "r1"}
        assert loaded.default == "fallback"
