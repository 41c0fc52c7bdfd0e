/**
 * Thin fetch client for the u2f service.
 *
 * All methods resolve to parsed JSON or throw ApiError carrying the HTTP
 * status and the server's {"error": ...} message, so callers can surface
 * rejections (terminal run, unknown UU) directly in the UI.
 */

import type {
  AdjudicationReport,
  DirectiveAck,
  HumanDirective,
  RunDetail,
  RunSummary,
  TraceDocument,
} from "./types.js";

export class ApiError extends Error {
  readonly status: number;

  constructor(status: number, message: string) {
    super(message);
    this.name = "ApiError";
    this.status = status;
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export interface ConsoleApi {
  startRun(
    story: Record<string, unknown>,
    config?: Record<string, unknown>,
    interactive?: boolean,
  ): Promise<{ run_id: string; case_id: string }>;
  listRuns(): Promise<RunSummary[]>;
  getRun(runId: string): Promise<RunDetail>;
  getTrace(runId: string): Promise<TraceDocument>;
  submitDirective(runId: string, directive: HumanDirective): Promise<DirectiveAck>;
  resume(runId: string): Promise<void>;
  adjudicate(
    runId: string,
    uuId: string,
    approved: boolean,
    note?: string,
  ): Promise<{ recorded: unknown; approval_rate: number | null }>;
  adjudications(runId: string): Promise<AdjudicationReport>;
  eventsUrl(runId: string, cursor: number): string;
}

export function createApi(baseUrl: string, fetchImpl: FetchLike = fetch): ConsoleApi {
  const base = baseUrl.replace(/\/+$/, "");

  async function request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await fetchImpl(base + path, init);
    const text = await resp.text();
    let body: unknown = null;
    try {
      body = text ? JSON.parse(text) : null;
    } catch {
      // fall through; non-JSON bodies only matter for the error message
    }
    if (!resp.ok) {
      const message =
        body && typeof body === "object" && "error" in body
          ? String((body as { error: unknown }).error)
          : `HTTP ${resp.status}`;
      throw new ApiError(resp.status, message);
    }
    return body as T;
  }

  function post<T>(path: string, payload?: unknown): Promise<T> {
    return request<T>(path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload ?? {}),
    });
  }

  return {
    async startRun(story, config, interactive = false) {
      return post("/runs", { story, config: config ?? {}, interactive });
    },

    async listRuns() {
      const data = await request<{ runs: RunSummary[] }>("/runs");
      return data.runs;
    },

    getRun(runId) {
      return request<RunDetail>(`/runs/${runId}`);
    },

    getTrace(runId) {
      return request<TraceDocument>(`/runs/${runId}/trace`);
    },

    submitDirective(runId, directive) {
      return post(`/runs/${runId}/directive`, directive);
    },

    async resume(runId) {
      await post(`/runs/${runId}/resume`);
    },

    adjudicate(runId, uuId, approved, note = "") {
      return post(`/runs/${runId}/adjudications`, {
        uu_id: uuId,
        approved,
        note,
      });
    },

    adjudications(runId) {
      return request<AdjudicationReport>(`/runs/${runId}/adjudications`);
    },

    eventsUrl(runId, cursor) {
      return `${base}/runs/${runId}/events?cursor=${cursor}`;
    },
  };
}
