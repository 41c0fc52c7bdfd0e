import { describe, expect, it } from "vitest";

import { createApi } from "../src/api.js";
import { ConsoleSession, attach } from "../src/session.js";
import type { RunSummary, TraceEvent } from "../src/types.js";

function ev(seq: number, kind: TraceEvent["kind"] = "StageStart", payload = {}): TraceEvent {
  return { seq, kind, payload };
}

const DONE_SUMMARY: RunSummary = {
  run_id: "run-0001",
  case_id: "case-photo-01",
  mode: "u2f",
  phase: "Done",
  done: true,
  interactive: false,
  waiting_at: null,
  event_count: 4,
  error: null,
};

describe("ConsoleSession", () => {
  it("ingests events once and reports duplicates", () => {
    const s = new ConsoleSession("run-0001");
    expect(s.ingest(ev(1))).toBe(true);
    expect(s.ingest(ev(2))).toBe(true);
    expect(s.ingest(ev(2))).toBe(false);
    expect(s.events.map((e) => e.seq)).toEqual([1, 2]);
  });

  it("never lets the cursor decrease", () => {
    const s = new ConsoleSession("run-0001");
    s.ingest(ev(5));
    expect(s.cursor).toBe(5);
    s.ingest(ev(3));
    expect(s.cursor).toBe(5);
    expect(s.events.map((e) => e.seq)).toEqual([3, 5]);
  });

  it("renders nothing twice across a reconnect replay", () => {
    const s = new ConsoleSession("run-0001");
    for (const n of [1, 2, 3, 4]) s.ingest(ev(n));
    // reconnect from a stale cursor replays an overlapping window
    for (const n of [3, 4, 5, 6]) s.ingest(ev(n));
    expect(s.events.map((e) => e.seq)).toEqual([1, 2, 3, 4, 5, 6]);
    expect(s.cursor).toBe(6);
  });

  it("tracks the intervention window from status events", () => {
    const s = new ConsoleSession("run-0001");
    s.ingestStatus({ type: "status", waiting_at: "discovery.refine" });
    expect(s.waitingAt).toBe("discovery.refine");
    s.ingestStatus({ type: "status", waiting_at: null });
    expect(s.waitingAt).toBeNull();
  });

  it("stores the final summary and closes on finish", () => {
    const s = new ConsoleSession("run-0001");
    s.finish(DONE_SUMMARY);
    expect(s.summary?.phase).toBe("Done");
    expect(s.connection).toBe("closed");
  });

  it("keeps a pending directive draft until cleared", () => {
    const s = new ConsoleSession("run-0001");
    s.draftDirective({ kind: "OptimizationGoal", content: "innovation first" });
    expect(s.pendingDirective?.content).toBe("innovation first");
    s.clearDraft();
    expect(s.pendingDirective).toBeNull();
  });
});

function sseResponse(body: string): Response {
  const stream = new ReadableStream({
    start(controller) {
      controller.enqueue(new TextEncoder().encode(body));
      controller.close();
    },
  });
  return new Response(stream, { status: 200 });
}

describe("attach", () => {
  it("streams from the session cursor and dedupes replays", async () => {
    const urls: string[] = [];
    const wire =
      'id: 1\nevent: trace\ndata: {"seq": 1, "kind": "StageStart", "payload": {}}\n\n' +
      'id: 2\nevent: trace\ndata: {"seq": 2, "kind": "StageEnd", "payload": {}}\n\n' +
      `event: done\ndata: ${JSON.stringify(DONE_SUMMARY)}\n\n`;
    const fakeFetch = async (url: string) => {
      urls.push(url);
      return sseResponse(wire);
    };
    const api = createApi("http://svc", fakeFetch);

    const session = new ConsoleSession("run-0001");
    session.ingest(ev(1));
    const handle = attach(session, api, fakeFetch);
    await handle.finished;

    expect(urls).toEqual(["http://svc/runs/run-0001/events?cursor=1"]);
    // seq 1 was already known; the replayed copy must not duplicate it
    expect(session.events.map((e) => e.seq)).toEqual([1, 2]);
    expect(session.cursor).toBe(2);
    expect(session.connection).toBe("closed");
    expect(session.summary?.done).toBe(true);
  });

  it("closes the connection state on transport errors", async () => {
    const api = createApi("http://svc", async () => new Response("x", { status: 500 }));
    const session = new ConsoleSession("run-0001");
    const handle = attach(session, api, async () => new Response("x", { status: 500 }));
    await handle.finished;
    expect(session.connection).toBe("closed");
    expect(session.events).toEqual([]);
  });
});
