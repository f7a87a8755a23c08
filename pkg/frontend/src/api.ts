import type { FeedbackPayload, QueryResponse } from "./types.js";

export class ApiError extends Error {
  readonly status: number;
  constructor(status: number, detail: string) {
    super(detail);
    this.status = status;
  }
}

type FetchLike = typeof fetch;

/** Thin typed wrapper over the service's HTTP JSON endpoints. */
export class ApiClient {
  private readonly baseUrl: string;
  private readonly fetchFn: FetchLike;

  constructor(baseUrl: string, fetchFn: FetchLike = fetch) {
    this.baseUrl = baseUrl.replace(/\/$/, "");
    this.fetchFn = fetchFn;
  }

  private async request(path: string, init?: RequestInit): Promise<unknown> {
    const response = await this.fetchFn(`${this.baseUrl}${path}`, init);
    const body = await response.json().catch(() => ({}));
    if (!response.ok) {
      const detail =
        typeof (body as { detail?: unknown }).detail === "string"
          ? (body as { detail: string }).detail
          : `HTTP ${response.status}`;
      throw new ApiError(response.status, detail);
    }
    return body;
  }

  health(): Promise<unknown> {
    return this.request("/health");
  }

  query(text: string, k?: number, mode?: string): Promise<QueryResponse> {
    return this.request("/v1/query", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ text, k, mode }),
    }) as Promise<QueryResponse>;
  }

  submitFeedback(payload: FeedbackPayload): Promise<{ stored: string }> {
    return this.request("/v1/feedback", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(payload),
    }) as Promise<{ stored: string }>;
  }

  audit(inferenceId: string): Promise<Record<string, unknown>> {
    return this.request(`/v1/audit/${inferenceId}`) as Promise<
      Record<string, unknown>
    >;
  }

  feedbackMetrics(params: {
    since?: number;
    until?: number;
    mode?: string;
  } = {}): Promise<Record<string, unknown>> {
    const search = new URLSearchParams();
    if (params.since !== undefined) search.set("since", String(params.since));
    if (params.until !== undefined) search.set("until", String(params.until));
    if (params.mode !== undefined) search.set("mode", params.mode);
    const qs = search.toString();
    return this.request(`/v1/metrics/feedback${qs ? `?${qs}` : ""}`) as Promise<
      Record<string, unknown>
    >;
  }
}

/** Deep link from a rendered inference_id to its audit record. */
export function auditUrl(baseUrl: string, inferenceId: string): string {
  return `${baseUrl.replace(/\/$/, "")}/v1/audit/${inferenceId}`;
}
