/**
 * Wire types for the u2f service API.
 *
 * Everything here mirrors the JSON the HTTP endpoints return; the console
 * never invents state of its own beyond these shapes plus the event cursor.
 */

export type Phase = "Discovery" | "Exploration" | "Integration" | "Done" | "Failed";

export type EventKind =
  | "StageStart"
  | "StageEnd"
  | "ProviderCall"
  | "SearchCall"
  | "Directive"
  | "ControlSignal"
  | "Error";

export type ControlSignalName =
  | "Continue"
  | "ResetToDiscovery"
  | "DeferToIntegration"
  | "DemandDeeperExploration"
  | "StrategicReset"
  | "Done";

export type DirectiveKind =
  | "Preference"
  | "Taboo"
  | "OptimizationGoal"
  | "FreeTextFeedback"
  | "RedirectPath";

export interface TraceEvent {
  seq: number;
  kind: EventKind;
  payload: Record<string, unknown>;
}

/** GET /runs list entry and the base of the run detail. */
export interface RunSummary {
  run_id: string;
  case_id: string;
  mode: string;
  phase: Phase;
  done: boolean;
  interactive: boolean;
  waiting_at: string | null;
  event_count: number;
  error: string | null;
}

export interface RunDetail extends RunSummary {
  result: CaseResult | null;
}

export interface CaseResult {
  case_id: string;
  mode: string;
  final_phase: Phase;
  failure_reason: string;
  result_text: string;
  accepted_uus: UnknownUnknown[];
  brief: Record<string, unknown> | null;
  solution: Record<string, unknown> | null;
  [extra: string]: unknown;
}

export interface UnknownUnknown {
  uu_id: string;
  name: string;
  overview: string;
  [extra: string]: unknown;
}

export interface TraceDocument {
  case_id: string;
  story: Record<string, unknown>;
  config: Record<string, unknown>;
  events: TraceEvent[];
}

export interface HumanDirective {
  kind: DirectiveKind;
  content: string;
  target_phase?: string;
  custom_goal?: boolean;
  timestamp?: string;
}

export interface DirectiveAck {
  status: "accepted";
  directive: Required<HumanDirective>;
}

export interface AdjudicationRecord {
  uu_id: string;
  approved: boolean;
  note: string;
  timestamp: number;
}

export interface UuApproval {
  uu_id: string;
  approved: boolean;
}

/** Export fragment consumed by the evaluation harness as a rating record. */
export interface RatingFragment {
  case_id: string;
  rater_id: string;
  rater_kind: string;
  uu_approvals: UuApproval[];
}

export interface AdjudicationReport {
  judgments: AdjudicationRecord[];
  history: AdjudicationRecord[];
  approval_rate: number | null;
  rating_fragment: RatingFragment;
}

/** SSE status block sent while an interactive run waits at a boundary. */
export interface StatusEvent {
  type: "status";
  waiting_at: string | null;
}
