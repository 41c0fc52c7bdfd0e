/**
 * Per-run console session state.
 *
 * The session is derived solely from the event stream and API responses.
 * Its cursor never decreases, and replayed events (reconnects resume from
 * the stored cursor) are deduped by seq so nothing renders twice.
 */

import type { ConsoleApi, FetchLike } from "./api.js";
import { streamEvents, type StreamHandle } from "./sse.js";
import type { HumanDirective, RunSummary, StatusEvent, TraceEvent } from "./types.js";

export type ConnectionState = "idle" | "connecting" | "live" | "closed";

export class ConsoleSession {
  readonly runId: string;
  readonly events: TraceEvent[] = [];
  connection: ConnectionState = "idle";
  waitingAt: string | null = null;
  summary: RunSummary | null = null;
  pendingDirective: HumanDirective | null = null;

  private highWater = 0;
  private seen = new Set<number>();

  constructor(runId: string) {
    this.runId = runId;
  }

  /** Highest seq ingested so far; the resume cursor for reconnects. */
  get cursor(): number {
    return this.highWater;
  }

  /** Returns true when the event was new; duplicates are dropped. */
  ingest(event: TraceEvent): boolean {
    if (this.seen.has(event.seq)) return false;
    this.seen.add(event.seq);
    const last = this.events[this.events.length - 1];
    this.events.push(event);
    if (last && event.seq < last.seq) {
      this.events.sort((a, b) => a.seq - b.seq);
    }
    if (event.seq > this.highWater) this.highWater = event.seq;
    return true;
  }

  ingestStatus(status: StatusEvent): void {
    this.waitingAt = status.waiting_at;
  }

  finish(summary: RunSummary): void {
    this.summary = summary;
    this.waitingAt = summary.waiting_at;
    this.connection = "closed";
  }

  draftDirective(directive: HumanDirective): void {
    this.pendingDirective = directive;
  }

  clearDraft(): void {
    this.pendingDirective = null;
  }
}

/**
 * Wire a session to the live stream, resuming from its cursor. Safe to
 * call again after a drop: the server replays only seq > cursor and the
 * session drops anything it has already seen.
 */
export function attach(
  session: ConsoleSession,
  api: ConsoleApi,
  fetchImpl?: FetchLike,
): StreamHandle {
  session.connection = "connecting";
  const handle = streamEvents(
    api.eventsUrl(session.runId, session.cursor),
    {
      onTrace: (event) => {
        session.connection = "live";
        session.ingest(event);
      },
      onStatus: (status) => {
        session.connection = "live";
        session.ingestStatus(status);
      },
      onDone: (summary) => session.finish(summary),
      onError: () => {
        session.connection = "closed";
      },
    },
    fetchImpl,
  );
  return handle;
}
