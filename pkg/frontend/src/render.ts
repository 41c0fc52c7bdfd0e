/** HTML views: timeline, banners, adjudication export. All text escaped. */

import type { ConsoleSession } from "./session.js";
import type { StageCard, Timeline } from "./timeline.js";
import type { AdjudicationReport } from "./types.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

function renderValue(value: unknown, limit = 400): string {
  const text = typeof value === "string" ? value : JSON.stringify(value);
  if (text === undefined) return "";
  const cut = text.length > limit ? text.slice(0, limit) + "…" : text;
  return escapeHtml(cut);
}

function renderCard(card: StageCard): string {
  const parts: string[] = [];
  if (card.resetBefore) {
    parts.push(`<div class="reset-badge">reset to ${escapeHtml(card.phase)}</div>`);
  }
  parts.push(`<section class="stage-card" data-phase="${escapeHtml(card.phase)}" data-first-seq="${card.firstSeq}">`);
  parts.push(`<h2>${escapeHtml(card.phase)}${card.visit > 1 ? ` (visit ${card.visit})` : ""}</h2>`);
  for (const d of card.directives) {
    parts.push(
      `<div class="directive directive-${escapeHtml(d.source)}">[${escapeHtml(d.kind)}] ${escapeHtml(d.content)}</div>`,
    );
  }
  parts.push("<ol class=\"steps\">");
  for (const step of card.steps) {
    parts.push(
      `<li data-seq="${step.seq}"><code>${escapeHtml(step.stage)}</code> ${renderValue(step.output)}</li>`,
    );
  }
  parts.push("</ol>");
  if (card.searches.length) {
    parts.push("<ul class=\"searches\">");
    for (const s of card.searches) {
      parts.push(`<li>search: ${escapeHtml(s.query)} (${s.resultCount} results)</li>`);
    }
    parts.push("</ul>");
  }
  for (const e of card.errors) {
    parts.push(`<div class="stage-error">${escapeHtml(e.type)}: ${escapeHtml(e.error)}</div>`);
  }
  if (card.signal) {
    parts.push(
      `<footer class="control-signal">${escapeHtml(card.signal.signal)}` +
        (card.signal.reason ? ` — ${escapeHtml(card.signal.reason)}` : "") +
        "</footer>",
    );
  }
  parts.push("</section>");
  return parts.join("\n");
}

export function renderTimeline(timeline: Timeline): string {
  if (timeline.placeholder) {
    return `<div class="placeholder">no stage output yet</div>`;
  }
  return timeline.cards.map(renderCard).join("\n");
}

/** Full run view: connection banner, intervention window, timeline. */
export function renderSession(session: ConsoleSession, timeline: Timeline): string {
  const parts: string[] = [];
  parts.push(`<header class="run-header" data-connection="${session.connection}">`);
  parts.push(`<h1>${escapeHtml(session.runId)}</h1>`);
  if (session.summary) {
    const s = session.summary;
    parts.push(
      `<span class="run-state">${escapeHtml(s.phase)}${s.error ? " — " + escapeHtml(s.error) : ""}</span>`,
    );
  }
  parts.push("</header>");
  if (session.waitingAt) {
    parts.push(
      `<div class="intervention-banner">paused at ${escapeHtml(session.waitingAt)} — submit a directive or resume</div>`,
    );
  }
  parts.push(renderTimeline(timeline));
  return parts.join("\n");
}

export function renderRejection(message: string): string {
  return `<div class="rejection-banner">${escapeHtml(message)}</div>`;
}

export function renderRunNotFound(runId: string): string {
  return `<div class="not-found">run ${escapeHtml(runId)} was not found</div>`;
}

export function renderAdjudications(report: AdjudicationReport): string {
  const parts: string[] = ["<div class=\"adjudications\">"];
  for (const row of report.judgments) {
    parts.push(
      `<div class="judgment">${escapeHtml(row.uu_id)}: ${row.approved ? "approved" : "rejected"}` +
        (row.note ? ` — ${escapeHtml(row.note)}` : "") +
        "</div>",
    );
  }
  const rate = report.approval_rate;
  parts.push(
    `<div class="approval-rate">approval rate: ${rate === null ? "n/a" : rate.toFixed(2)}</div>`,
  );
  parts.push("</div>");
  return parts.join("\n");
}

/** Serialize the server's rating fragment for the evaluation harness. */
export function exportRatingFragment(report: AdjudicationReport): string {
  return JSON.stringify(report.rating_fragment, null, 2);
}
