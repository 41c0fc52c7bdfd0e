import { describe, expect, it } from "vitest";

import { buildTimeline, phaseOfStage } from "../src/timeline.js";
import type { TraceEvent } from "../src/types.js";

let seq = 0;

function ev(kind: TraceEvent["kind"], payload: Record<string, unknown>): TraceEvent {
  seq += 1;
  return { seq, kind, payload };
}

function reset() {
  seq = 0;
}

function stage(tag: string): TraceEvent[] {
  return [
    ev("StageStart", { stage: tag }),
    ev("ProviderCall", { request: { stage_tag: tag }, response: {} }),
    ev("StageEnd", { stage: tag, output: { stage: tag } }),
  ];
}

function signal(phase: string, name: string): TraceEvent {
  return ev("ControlSignal", { phase, signal: name, detail: "", reason: "" });
}

describe("phaseOfStage", () => {
  it("maps stage tags to their pipeline phase", () => {
    expect(phaseOfStage("discovery.baseline")).toBe("Discovery");
    expect(phaseOfStage("exploration.validate")).toBe("Exploration");
    expect(phaseOfStage("integration.plan")).toBe("Integration");
    expect(phaseOfStage("baseline.zeroshot")).toBe("Baseline");
  });
});

describe("buildTimeline", () => {
  it("folds a three-phase run into one card per phase visit", () => {
    reset();
    const events = [
      ...stage("discovery.refine"),
      ...stage("discovery.baseline"),
      signal("Discovery", "Continue"),
      ...stage("exploration.generate"),
      ev("SearchCall", { query: "silent shutter parity", results: [{}, {}] }),
      ...stage("exploration.validate"),
      signal("Exploration", "Continue"),
      ...stage("integration.plan"),
      signal("Integration", "Done"),
    ];
    const t = buildTimeline(events);
    expect(t.placeholder).toBe(false);
    expect(t.cards.map((c) => c.phase)).toEqual(["Discovery", "Exploration", "Integration"]);
    expect(t.cards.map((c) => c.steps.length)).toEqual([2, 2, 1]);
    expect(t.cards.map((c) => c.providerCalls)).toEqual([2, 2, 1]);
    const [d, e, i] = t.cards;
    expect(d!.signal?.signal).toBe("Continue");
    expect(e!.searches).toEqual([
      { seq: expect.any(Number), query: "silent shutter parity", resultCount: 2 },
    ]);
    expect(i!.signal?.signal).toBe("Done");
    // cards occupy disjoint ascending seq ranges
    expect(d!.lastSeq).toBeLessThan(e!.firstSeq);
    expect(e!.lastSeq).toBeLessThan(i!.firstSeq);
  });

  it("marks the card that follows a reset signal", () => {
    reset();
    const events = [
      ...stage("discovery.refine"),
      signal("Discovery", "Continue"),
      ...stage("exploration.generate"),
      signal("Exploration", "ResetToDiscovery"),
      ...stage("discovery.refine"),
    ];
    const t = buildTimeline(events);
    expect(t.cards.map((c) => c.phase)).toEqual(["Discovery", "Exploration", "Discovery"]);
    expect(t.cards.map((c) => c.resetBefore)).toEqual([false, false, true]);
    expect(t.cards.map((c) => c.visit)).toEqual([1, 1, 2]);
  });

  it("marks strategic resets from integration the same way", () => {
    reset();
    const events = [
      ...stage("integration.plan"),
      signal("Integration", "StrategicReset"),
      ...stage("discovery.refine"),
    ];
    const t = buildTimeline(events);
    expect(t.cards.map((c) => c.resetBefore)).toEqual([false, true]);
  });

  it("returns a placeholder timeline for an empty event list", () => {
    reset();
    const t = buildTimeline([]);
    expect(t.placeholder).toBe(true);
    expect(t.cards).toEqual([]);
  });

  it("attaches directives to the open card and defers boundary ones", () => {
    reset();
    const early = ev("Directive", {
      directive: { kind: "OptimizationGoal", content: "innovation first" },
      source: "human",
    });
    const events = [
      early,
      ...stage("discovery.refine"),
      ev("Directive", {
        directive: { kind: "Taboo", content: "no vendor lock-in" },
        source: "human",
      }),
      ...stage("discovery.baseline"),
    ];
    const t = buildTimeline(events);
    expect(t.cards).toHaveLength(1);
    expect(t.cards[0]!.directives.map((d) => d.content)).toEqual([
      "innovation first",
      "no vendor lock-in",
    ]);
    expect(t.cards[0]!.directives[0]!.kind).toBe("OptimizationGoal");
    expect(t.cards[0]!.directives[0]!.source).toBe("human");
  });

  it("collects stage errors on the owning card", () => {
    reset();
    const events = [
      ...stage("discovery.refine"),
      ev("Error", { stage: "discovery.refine", type: "ExtractionFailed", error: "missing: overview" }),
    ];
    const t = buildTimeline(events);
    expect(t.cards[0]!.errors).toHaveLength(1);
    expect(t.cards[0]!.errors[0]!.type).toBe("ExtractionFailed");
  });

  it("keeps consecutive same-phase stages in a single card", () => {
    reset();
    const events = [
      ...stage("discovery.refine"),
      ...stage("discovery.baseline"),
      ...stage("discovery.defects"),
    ];
    const t = buildTimeline(events);
    expect(t.cards).toHaveLength(1);
    expect(t.cards[0]!.steps.map((s) => s.stage)).toEqual([
      "discovery.refine",
      "discovery.baseline",
      "discovery.defects",
    ]);
  });
});
