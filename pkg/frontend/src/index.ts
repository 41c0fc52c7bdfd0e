export * from "./types.js";
export { ApiError, createApi, type ConsoleApi, type FetchLike } from "./api.js";
export { SseParser, streamEvents, type SseMessage, type StreamHandle, type StreamHandlers } from "./sse.js";
export { ConsoleSession, attach, type ConnectionState } from "./session.js";
export { buildTimeline, phaseOfStage, type StageCard, type Timeline } from "./timeline.js";
export {
  escapeHtml,
  exportRatingFragment,
  renderAdjudications,
  renderRejection,
  renderRunNotFound,
  renderSession,
  renderTimeline,
} from "./render.js";
