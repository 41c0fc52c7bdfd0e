/**
 * Fold a run's trace events into stage cards.
 *
 * A card is one contiguous visit to a pipeline phase: every stage tag is
 * "<phase>.<step>", so a phase change in the StageStart stream opens a new
 * card. Reset signals (ResetToDiscovery, StrategicReset) mark the following
 * card so the view can show a reset badge between visits.
 */

import type { TraceEvent } from "./types.js";

export interface StepEntry {
  seq: number;
  stage: string;
  output: unknown;
}

export interface SearchEntry {
  seq: number;
  query: string;
  resultCount: number;
}

export interface DirectiveEntry {
  seq: number;
  kind: string;
  content: string;
  source: string;
}

export interface SignalEntry {
  seq: number;
  signal: string;
  detail: string;
  reason: string;
}

export interface ErrorEntry {
  seq: number;
  stage: string;
  type: string;
  error: string;
}

export interface StageCard {
  phase: string;
  visit: number;
  firstSeq: number;
  lastSeq: number;
  resetBefore: boolean;
  steps: StepEntry[];
  searches: SearchEntry[];
  directives: DirectiveEntry[];
  signal: SignalEntry | null;
  errors: ErrorEntry[];
  providerCalls: number;
}

export interface Timeline {
  cards: StageCard[];
  placeholder: boolean;
}

const PHASE_BY_PREFIX: Record<string, string> = {
  discovery: "Discovery",
  exploration: "Exploration",
  integration: "Integration",
  baseline: "Baseline",
};

export function phaseOfStage(stage: string): string {
  const prefix = stage.split(".", 1)[0] ?? "";
  return PHASE_BY_PREFIX[prefix] ?? prefix;
}

const RESET_SIGNALS = new Set(["ResetToDiscovery", "StrategicReset"]);

export function buildTimeline(events: TraceEvent[]): Timeline {
  const cards: StageCard[] = [];
  const visits: Record<string, number> = {};
  let current: StageCard | null = null;
  let resetPending = false;
  let pendingDirectives: DirectiveEntry[] = [];

  const touch = (seq: number) => {
    if (current && seq > current.lastSeq) current.lastSeq = seq;
  };

  for (const event of events) {
    const p = event.payload;
    switch (event.kind) {
      case "StageStart": {
        const stage = String(p["stage"] ?? "");
        const phase = phaseOfStage(stage);
        if (!current || current.phase !== phase) {
          visits[phase] = (visits[phase] ?? 0) + 1;
          current = {
            phase,
            visit: visits[phase],
            firstSeq: event.seq,
            lastSeq: event.seq,
            resetBefore: resetPending,
            steps: [],
            searches: [],
            directives: pendingDirectives,
            signal: null,
            errors: [],
            providerCalls: 0,
          };
          cards.push(current);
          resetPending = false;
          pendingDirectives = [];
        } else {
          touch(event.seq);
        }
        break;
      }
      case "StageEnd": {
        if (current) {
          current.steps.push({
            seq: event.seq,
            stage: String(p["stage"] ?? ""),
            output: p["output"],
          });
          touch(event.seq);
        }
        break;
      }
      case "ProviderCall": {
        if (current) {
          current.providerCalls += 1;
          touch(event.seq);
        }
        break;
      }
      case "SearchCall": {
        if (current) {
          const results = p["results"];
          current.searches.push({
            seq: event.seq,
            query: String(p["query"] ?? ""),
            resultCount: Array.isArray(results) ? results.length : 0,
          });
          touch(event.seq);
        }
        break;
      }
      case "Directive": {
        const d = (p["directive"] ?? {}) as Record<string, unknown>;
        const entry: DirectiveEntry = {
          seq: event.seq,
          kind: String(d["kind"] ?? ""),
          content: String(d["content"] ?? ""),
          source: String(p["source"] ?? ""),
        };
        if (current) {
          current.directives.push(entry);
          touch(event.seq);
        } else {
          pendingDirectives.push(entry);
        }
        break;
      }
      case "ControlSignal": {
        const signal = String(p["signal"] ?? "");
        if (current) {
          current.signal = {
            seq: event.seq,
            signal,
            detail: String(p["detail"] ?? ""),
            reason: String(p["reason"] ?? ""),
          };
          touch(event.seq);
        }
        if (RESET_SIGNALS.has(signal)) resetPending = true;
        break;
      }
      case "Error": {
        if (current) {
          current.errors.push({
            seq: event.seq,
            stage: String(p["stage"] ?? ""),
            type: String(p["type"] ?? ""),
            error: String(p["error"] ?? ""),
          });
          touch(event.seq);
        }
        break;
      }
    }
  }

  return { cards, placeholder: cards.length === 0 };
}
