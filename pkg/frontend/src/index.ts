export { ApiClient, ApiError, auditUrl } from "./api.js";
export { FeedbackWidget } from "./feedback.js";
export { ChatSession, QueryRejected } from "./session.js";
export type {
  ConnectionState,
  SessionOptions,
  SocketFactory,
  SocketLike,
} from "./session.js";
export { MessageStore } from "./store.js";
export * from "./types.js";
