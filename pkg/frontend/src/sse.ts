/**
 * Server-sent events: incremental parser plus a fetch-based subscriber.
 *
 * The service emits three event types on /runs/{id}/events:
 *   trace  - one trace event, id: header carries its seq
 *   status - interactive pause/resume notices
 *   done   - final run snapshot, then the stream ends
 * Comment lines (": keep-alive") are heartbeats and are dropped.
 */

import type { RunSummary, StatusEvent, TraceEvent } from "./types.js";
import type { FetchLike } from "./api.js";

export interface SseMessage {
  id: number | null;
  event: string;
  data: unknown;
}

/**
 * Incremental SSE block parser. Feed it raw text chunks in arrival order;
 * it returns the messages completed by each chunk and buffers the rest,
 * so block boundaries may fall anywhere inside a chunk.
 */
export class SseParser {
  private buffer = "";

  push(chunk: string): SseMessage[] {
    this.buffer += chunk;
    const blocks = this.buffer.split("\n\n");
    this.buffer = blocks.pop() ?? "";
    const out: SseMessage[] = [];
    for (const block of blocks) {
      const msg = parseBlock(block);
      if (msg) out.push(msg);
    }
    return out;
  }
}

function parseBlock(block: string): SseMessage | null {
  let id: number | null = null;
  let event = "message";
  let data: string | null = null;
  for (const line of block.split("\n")) {
    if (!line || line.startsWith(":")) continue;
    if (line.startsWith("id: ")) {
      id = Number(line.slice(4));
    } else if (line.startsWith("event: ")) {
      event = line.slice(7);
    } else if (line.startsWith("data: ")) {
      // the service sends single-line JSON payloads
      data = line.slice(6);
    }
  }
  if (data === null) return null;
  let parsed: unknown;
  try {
    parsed = JSON.parse(data);
  } catch {
    return null;
  }
  return { id, event, data: parsed };
}

export interface StreamHandlers {
  onTrace?: (event: TraceEvent) => void;
  onStatus?: (status: StatusEvent) => void;
  onDone?: (summary: RunSummary) => void;
  onError?: (err: unknown) => void;
}

export interface StreamHandle {
  close(): void;
  finished: Promise<void>;
}

/**
 * Subscribe to a run's event stream. Resolves handlers per message and
 * ends on the done event, a closed connection, or close(). Callers that
 * reconnect pass a fresh cursor-bearing URL; dedupe happens in the session.
 */
export function streamEvents(
  url: string,
  handlers: StreamHandlers,
  fetchImpl: FetchLike = fetch,
): StreamHandle {
  const controller = new AbortController();

  const finished = (async () => {
    const resp = await fetchImpl(url, { signal: controller.signal });
    if (!resp.ok || !resp.body) {
      throw new Error(`event stream failed: HTTP ${resp.status}`);
    }
    const reader = resp.body.getReader();
    const decoder = new TextDecoder("utf-8");
    const parser = new SseParser();
    while (true) {
      const { done, value } = await reader.read();
      if (done) return;
      for (const msg of parser.push(decoder.decode(value, { stream: true }))) {
        if (msg.event === "trace") {
          handlers.onTrace?.(msg.data as TraceEvent);
        } else if (msg.event === "status") {
          handlers.onStatus?.(msg.data as StatusEvent);
        } else if (msg.event === "done") {
          handlers.onDone?.(msg.data as RunSummary);
          controller.abort();
          return;
        }
      }
    }
  })().catch((err) => {
    if (!controller.signal.aborted) handlers.onError?.(err);
  });

  return {
    close: () => controller.abort(),
    finished,
  };
}
