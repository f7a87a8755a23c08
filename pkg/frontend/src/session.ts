import type { QueryResponse, ServerError } from "./types.js";

/** Minimal browser-style WebSocket surface so tests can inject fakes. */
export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: (() => void) | null;
  onmessage: ((event: { data: string }) => void) | null;
  onclose: (() => void) | null;
  onerror: (() => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

export type ConnectionState =
  | "connecting"
  | "connected"
  | "reconnecting"
  | "closed";

export interface SessionOptions {
  socketFactory: SocketFactory;
  /** Base reconnect delay; doubles per failed attempt up to maxBackoffMs. */
  backoffMs?: number;
  maxBackoffMs?: number;
  scheduler?: (fn: () => void, ms: number) => unknown;
}

interface Pending {
  resolve: (response: QueryResponse) => void;
  reject: (error: Error) => void;
}

export class QueryRejected extends Error {
  readonly code: number;
  constructor(detail: ServerError) {
    super(detail.error);
    this.code = detail.code;
  }
}

/**
 * WebSocket chat session: one in-flight query at a time, automatic
 * reconnect with exponential backoff, and a banner string for any
 * connection problem so failures are never silent.
 */
export class ChatSession {
  readonly url: string;
  state: ConnectionState = "connecting";
  banner: string | null = null;
  /** Delay of the currently scheduled reconnect, for a retry countdown. */
  retryInMs: number | null = null;

  private socket: SocketLike | null = null;
  private pending: Pending | null = null;
  private attempts = 0;
  private closedByUser = false;
  private readonly backoffMs: number;
  private readonly maxBackoffMs: number;
  private readonly makeSocket: SocketFactory;
  private readonly schedule: (fn: () => void, ms: number) => unknown;

  constructor(url: string, options: SessionOptions) {
    this.url = url;
    this.makeSocket = options.socketFactory;
    this.backoffMs = options.backoffMs ?? 500;
    this.maxBackoffMs = options.maxBackoffMs ?? 15000;
    this.schedule = options.scheduler ?? ((fn, ms) => setTimeout(fn, ms));
    this.open();
  }

  private open(): void {
    this.state = this.attempts === 0 ? "connecting" : "reconnecting";
    let socket: SocketLike;
    try {
      socket = this.makeSocket(this.url);
    } catch (err) {
      this.handleDrop(`connection failed: ${String(err)}`);
      return;
    }
    this.socket = socket;
    socket.onopen = () => {
      this.state = "connected";
      this.banner = null;
      this.retryInMs = null;
      this.attempts = 0;
    };
    socket.onmessage = (event) => this.handleMessage(event.data);
    socket.onerror = () => {
      this.banner = "connection error";
    };
    socket.onclose = () => {
      if (!this.closedByUser) this.handleDrop("connection lost");
    };
  }

  private handleDrop(reason: string): void {
    this.socket = null;
    if (this.pending) {
      this.pending.reject(new Error(reason));
      this.pending = null;
    }
    const delay = Math.min(
      this.backoffMs * 2 ** this.attempts,
      this.maxBackoffMs,
    );
    this.attempts += 1;
    this.state = "reconnecting";
    this.banner = `${reason}; retrying in ${delay} ms`;
    this.retryInMs = delay;
    this.schedule(() => {
      if (!this.closedByUser) this.open();
    }, delay);
  }

  private handleMessage(data: string): void {
    const pending = this.pending;
    if (!pending) return; // unsolicited frame; nothing is waiting on it
    this.pending = null;
    let parsed: QueryResponse | ServerError;
    try {
      parsed = JSON.parse(data);
    } catch {
      pending.reject(new Error("malformed server frame"));
      return;
    }
    if ("error" in parsed) {
      pending.reject(new QueryRejected(parsed));
    } else {
      pending.resolve(parsed);
    }
  }

  sendQuery(
    text: string,
    extra: { k?: number; mode?: string } = {},
  ): Promise<QueryResponse> {
    if (!text.trim()) {
      return Promise.reject(new Error("query text is empty"));
    }
    if (this.pending) {
      return Promise.reject(new Error("a query is already in flight"));
    }
    if (this.state !== "connected" || !this.socket) {
      return Promise.reject(new Error("not connected"));
    }
    return new Promise((resolve, reject) => {
      this.pending = { resolve, reject };
      this.socket!.send(JSON.stringify({ text, ...extra }));
    });
  }

  close(): void {
    this.closedByUser = true;
    this.state = "closed";
    this.socket?.close();
    this.socket = null;
  }
}
