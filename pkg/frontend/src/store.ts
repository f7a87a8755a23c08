import type { ChatSession } from "./session.js";
import { QueryRejected } from "./session.js";
import type { QueryResponse, ViewMessage } from "./types.js";

function userBubble(text: string): ViewMessage {
  return {
    role: "user",
    text,
    sources: [],
    toolActions: [],
    inferenceId: null,
    pending: false,
    error: null,
    retryText: null,
  };
}

function pendingBubble(): ViewMessage {
  return {
    role: "assistant",
    text: "",
    sources: [],
    toolActions: [],
    inferenceId: null,
    pending: true,
    error: null,
    retryText: null,
  };
}

/**
 * Conversation render model. A query pushes an optimistic user bubble and
 * a pending assistant bubble; the pending bubble is replaced in place by
 * the answer (with the server's source list verbatim) or by an inline
 * failure that keeps the query text for retry.
 */
export class MessageStore {
  readonly messages: ViewMessage[] = [];

  async sendQueryAndRender(
    session: ChatSession,
    text: string,
  ): Promise<ViewMessage> {
    this.messages.push(userBubble(text));
    const bubble = pendingBubble();
    this.messages.push(bubble);
    let response: QueryResponse;
    try {
      response = await session.sendQuery(text);
    } catch (err) {
      bubble.pending = false;
      bubble.error =
        err instanceof QueryRejected
          ? `${err.code}: ${err.message}`
          : String(err instanceof Error ? err.message : err);
      bubble.retryText = text;
      return bubble;
    }
    bubble.pending = false;
    bubble.text = response.answer;
    bubble.sources = response.sources;
    bubble.toolActions = response.tool_trace_summary;
    bubble.inferenceId = response.inference_id;
    return bubble;
  }

  /** Badge label for the tool-trace disclosure, e.g. "2 tool actions". */
  toolBadge(message: ViewMessage): string | null {
    const n = message.toolActions.length;
    if (n === 0) return null;
    return n === 1 ? "1 tool action" : `${n} tool actions`;
  }
}
