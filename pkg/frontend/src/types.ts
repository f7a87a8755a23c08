export interface Source {
  doc_id: string;
  title: string;
  score: number;
}

export interface ToolAction {
  tool: string;
  status: string;
}

export interface QueryResponse {
  answer: string;
  sources: Source[];
  inference_id: string;
  tool_trace_summary: ToolAction[];
}

export interface ServerError {
  error: string;
  code: number;
}

export type MessageRole = "user" | "assistant" | "tool";

export interface ViewMessage {
  role: MessageRole;
  text: string;
  /** Exactly the server's source list, order preserved; assistant only. */
  sources: Source[];
  toolActions: ToolAction[];
  inferenceId: string | null;
  pending: boolean;
  /** Inline error shown on a failed assistant bubble (422/503/transport). */
  error: string | null;
  /** Original query text kept on a failed bubble so it can be retried. */
  retryText: string | null;
}

export interface FeedbackPayload {
  inference_id: string;
  ratings: Record<string, number>;
  helpful: boolean | null;
  free_text: string | null;
  flagged_inaccurate: boolean;
}

export const RATING_DIMENSIONS = [
  "completeness",
  "truthfulness",
  "naturalness",
  "satisfaction",
] as const;

export type RatingDimension = (typeof RATING_DIMENSIONS)[number];
