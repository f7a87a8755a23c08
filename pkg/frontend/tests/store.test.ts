import { describe, expect, it } from "vitest";

import { ChatSession } from "../src/session.js";
import { MessageStore } from "../src/store.js";
import type { QueryResponse } from "../src/types.js";

function sessionWith(
  respond: (text: string) => unknown,
): { session: ChatSession; flush: () => void } {
  let onmessage: ((event: { data: string }) => void) | null = null;
  const queued: string[] = [];
  const session = new ChatSession("ws://test", {
    socketFactory: () => {
      const socket = {
        send(data: string) {
          queued.push(JSON.stringify(respond(JSON.parse(data).text)));
        },
        close() {},
        onopen: null as (() => void) | null,
        onmessage: null as ((event: { data: string }) => void) | null,
        onclose: null,
        onerror: null,
      };
      queueMicrotask(() => {
        socket.onopen?.();
        onmessage = (e) => socket.onmessage?.(e);
      });
      return socket;
    },
  });
  return {
    session,
    flush: () => {
      while (queued.length) onmessage?.({ data: queued.shift()! });
    },
  };
}

function response(overrides: Partial<QueryResponse> = {}): QueryResponse {
  return {
    answer: "lamp sequence runs on door open",
    sources: [
      { doc_id: "REQ-002", title: "Lamp", score: 0.91 },
      { doc_id: "REQ-005", title: "Door", score: 0.64 },
      { doc_id: "REQ-001", title: "Wiper", score: 0.4 },
    ],
    inference_id: "id-1",
    tool_trace_summary: [],
    ...overrides,
  };
}

async function roundTrip(respond: (text: string) => unknown, text: string) {
  const { session, flush } = sessionWith(respond);
  await Promise.resolve(); // let the fake socket open
  const store = new MessageStore();
  const promise = store.sendQueryAndRender(session, text);
  flush();
  const bubble = await promise;
  return { store, bubble };
}

describe("sendQueryAndRender", () => {
  it("renders the answer with the server's exact source list", async () => {
    const served = response();
    const { store, bubble } = await roundTrip(() => served, "lamp?");
    expect(store.messages).toHaveLength(2);
    expect(store.messages[0]).toMatchObject({ role: "user", text: "lamp?" });
    expect(bubble.pending).toBe(false);
    expect(bubble.text).toBe(served.answer);
    expect(bubble.sources).toEqual(served.sources);
    expect(bubble.inferenceId).toBe("id-1");
  });

  it("user bubble appears optimistically with a pending assistant bubble", () => {
    const { session } = sessionWith(() => response());
    const store = new MessageStore();
    void store.sendQueryAndRender(session, "q").catch(() => {});
    expect(store.messages).toHaveLength(2);
    expect(store.messages[1]).toMatchObject({ role: "assistant", pending: true });
  });

  it("a coded failure lands inline and keeps the query for retry", async () => {
    const { bubble } = await roundTrip(
      () => ({ error: "backend down", code: 503 }),
      "lamp?",
    );
    expect(bubble.pending).toBe(false);
    expect(bubble.error).toBe("503: backend down");
    expect(bubble.retryText).toBe("lamp?");
    expect(bubble.inferenceId).toBeNull();
  });

  it("sources never appear on user or failed messages", async () => {
    const { store } = await roundTrip(
      () => ({ error: "empty query text", code: 422 }),
      "q",
    );
    for (const message of store.messages) {
      if (message.role !== "assistant" || message.error) {
        expect(message.sources).toEqual([]);
      }
    }
  });
});

describe("tool badge", () => {
  it("is absent without tool actions", async () => {
    const { store, bubble } = await roundTrip(() => response(), "q");
    expect(store.toolBadge(bubble)).toBeNull();
  });

  it("counts actions and expands to call plus status", async () => {
    const served = response({
      tool_trace_summary: [{ tool: "lookup_sequence", status: "ok" }],
    });
    const { store, bubble } = await roundTrip(() => served, "q");
    expect(store.toolBadge(bubble)).toBe("1 tool action");
    expect(bubble.toolActions).toEqual([
      { tool: "lookup_sequence", status: "ok" },
    ]);
  });

  it("pluralizes", async () => {
    const served = response({
      tool_trace_summary: [
        { tool: "lookup_sequence", status: "ok" },
        { tool: "signal_metadata", status: "error" },
      ],
    });
    const { store, bubble } = await roundTrip(() => served, "q");
    expect(store.toolBadge(bubble)).toBe("2 tool actions");
  });
});
