/** Pure renderers: response payload in, HTML/SVG strings out.
 *
 * Everything shown comes straight from the API response; nothing is
 * rescored client-side. Boxplots are drawn from the server's five-number
 * summaries, with the patient's own score overlaid as a marker that gets
 * outlier styling when it falls outside the whisker range.
 */

import type { ApiError } from "./api.js";
import type { CohortSummary, Recommendation, RecommendResponse } from "./types.js";

const BOX_W = 620;
const ROW_H = 34;
const PLOT_X0 = 150;
const PLOT_X1 = 600;

function esc(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function fmt(x: number, digits = 4): string {
  return x.toFixed(digits);
}

/** Ranked table of the recommended drugs, in payload order. */
export function renderTopTable(response: RecommendResponse): string {
  const rows = response.recommendations.map((r) => {
    const z = r.robust_z === null ? (r.degenerate_iqr ? "degenerate IQR" : "-")
      : fmt(r.robust_z, 2);
    return `<tr data-drug="${esc(r.drug_id)}">` +
      `<td>${r.rank}</td>` +
      `<td><a href="${esc(r.aux_link)}">${esc(r.name)}</a></td>` +
      `<td>${fmt(r.probability)}</td>` +
      `<td>${esc(z)}</td>` +
      `</tr>`;
  });
  return `<table class="top-drugs">` +
    `<thead><tr><th>rank</th><th>drug</th><th>score</th><th>robust z</th></tr></thead>` +
    `<tbody>${rows.join("")}</tbody></table>`;
}

function xScale(v: number, lo: number, hi: number): number {
  const span = hi - lo || 1;
  const x = PLOT_X0 + ((v - lo) / span) * (PLOT_X1 - PLOT_X0);
  return Math.round(x * 100) / 100;
}

function boxRow(r: Recommendation, s: CohortSummary, y: number, lo: number, hi: number): string {
  const cy = y + ROW_H / 2;
  const parts = [
    `<text x="8" y="${cy + 4}" class="drug-label">${esc(r.name)}</text>`,
    `<line x1="${xScale(s.min, lo, hi)}" y1="${cy}" x2="${xScale(s.max, lo, hi)}" y2="${cy}" class="whisker"/>`,
    `<rect x="${xScale(s.q1, lo, hi)}" y="${cy - 8}" width="${Math.max(1, xScale(s.q3, lo, hi) - xScale(s.q1, lo, hi))}" height="16" class="box${r.degenerate_iqr ? " degenerate" : ""}"/>`,
    `<line x1="${xScale(s.median, lo, hi)}" y1="${cy - 8}" x2="${xScale(s.median, lo, hi)}" y2="${cy + 8}" class="median"/>`,
  ];
  const outlier = r.probability < s.min || r.probability > s.max;
  parts.push(
    `<text x="${xScale(r.probability, lo, hi)}" y="${cy + 5}" class="patient-marker${outlier ? " outlier" : ""}">*</text>`,
  );
  if (r.degenerate_iqr) {
    parts.push(`<text x="${PLOT_X1 + 6}" y="${cy + 4}" class="flag">degenerate IQR</text>`);
  }
  return parts.join("");
}

/** Per-drug cohort boxplots with the patient's score overlaid. */
export function renderBoxplots(response: RecommendResponse): string {
  const withCohort = response.recommendations.filter((r) => r.cohort_summary !== null);
  if (withCohort.length === 0) {
    return `<div class="no-cohort-notice">no reference cohort for this request; ` +
      `cohort evidence unavailable</div>`;
  }
  const values: number[] = [];
  for (const r of withCohort) {
    const s = r.cohort_summary as CohortSummary;
    values.push(s.min, s.max, r.probability);
  }
  const lo = Math.min(...values);
  const hi = Math.max(...values);
  const height = withCohort.length * ROW_H + 10;
  const rows = withCohort.map((r, i) =>
    boxRow(r, r.cohort_summary as CohortSummary, 5 + i * ROW_H, lo, hi));
  return `<svg class="cohort-boxplots" viewBox="0 0 ${BOX_W + 120} ${height}" ` +
    `role="img" aria-label="cohort score distributions">${rows.join("")}</svg>`;
}

/** All-drug swarm of the patient's scores, with the low-confidence banner. */
export function renderSwarm(response: RecommendResponse): string {
  const entries = Object.entries(response.swarm).sort(([a], [b]) => a.localeCompare(b));
  const lo = Math.min(...entries.map(([, v]) => v));
  const hi = Math.max(...entries.map(([, v]) => v));
  const dots = entries.map(([drug, v], i) => {
    const y = 30 + (i % 7) * 6; // deterministic vertical spread
    return `<circle cx="${xScale(v, lo, hi)}" cy="${y}" r="4" class="swarm-dot">` +
      `<title>${esc(drug)}: ${fmt(v)}</title></circle>`;
  });
  const banner = response.dispersion.low_confidence
    ? `<div class="banner low-confidence">scores are nearly identical across all drugs ` +
      `(IQR ${fmt(response.dispersion.iqr)} &lt; ${response.dispersion.threshold}); ` +
      `treat this ranking with low confidence</div>`
    : "";
  return `${banner}<svg class="swarm" viewBox="0 0 ${BOX_W + 120} 90" role="img" ` +
    `aria-label="patient scores across all drugs">${dots.join("")}</svg>`;
}

/** Inline field errors and request errors, by kind. */
export function renderErrors(fieldErrors: { row: number; field: string; message: string }[],
                             requestError: ApiError | null): string {
  const items = fieldErrors.map((e) =>
    `<li class="field-error" data-row="${e.row}" data-field="${esc(e.field)}">` +
    `row ${e.row + 1}, ${esc(e.field)}: ${esc(e.message)}</li>`);
  let request = "";
  if (requestError !== null) {
    const label = { network: "network problem", validation: "rejected by the server",
                    server: "service failure" }[requestError.kind];
    request = `<div class="request-error ${requestError.kind}">${label}: ` +
      `${esc(requestError.message)}</div>`;
  }
  const list = items.length > 0 ? `<ul class="field-errors">${items.join("")}</ul>` : "";
  return list + request;
}

/** Whole evidence panel: table, boxplots, swarm. */
export function renderEvidence(response: RecommendResponse): string {
  return [
    renderTopTable(response),
    renderBoxplots(response),
    renderSwarm(response),
    `<div class="model-line">model ${esc(response.model_version)} ` +
    `(${esc(response.model_hash.slice(0, 12))})` +
    (response.cohort_id ? `, cohort ${esc(response.cohort_id)}` : "") + `</div>`,
  ].join("\n");
}
