/**
 * Pure HTML renderers: AppState in, markup string out. No DOM access here,
 * so every view is unit-testable as a string. All server-supplied text goes
 * through escapeHtml, and every number shown is the server's own value.
 */

import type { AppState } from "./app.js";
import type { Candidate, CandidatesPage, FinalPayload } from "./types.js";

const HTML_ENTITIES: Record<string, string> = {
  "&": "&amp;",
  "<": "&lt;",
  ">": "&gt;",
  '"': "&quot;",
  "'": "&#39;",
};

export function escapeHtml(text: string): string {
  return text.replace(/[&<>"']/g, (ch) => HTML_ENTITIES[ch] as string);
}

const PROMPT_PREVIEW_CHARS = 140;

export function promptPreview(prompt: string): string {
  if (prompt.length <= PROMPT_PREVIEW_CHARS) return prompt;
  return prompt.slice(0, PROMPT_PREVIEW_CHARS - 1).trimEnd() + "…";
}

export function statusBadge(status: string): string {
  return `<span class="badge badge-${escapeHtml(status)}">${escapeHtml(status)}</span>`;
}

/** True when every mutating control must be inert. */
function frozen(state: AppState): boolean {
  return (state.health?.finalized ?? false) || state.pending !== null || state.loading;
}

function disabledAttr(state: AppState): string {
  return frozen(state) ? " disabled" : "";
}

export function renderApp(state: AppState): string {
  return [
    '<div class="review">',
    renderHeader(state),
    renderError(state.error),
    renderControls(state),
    renderTable(state),
    renderFinal(state.final),
    "</div>",
  ].join("\n");
}

export function renderHeader(state: AppState): string {
  const health = state.health;
  if (!health) return '<header class="bar"><h1>Class review</h1><p>Connecting…</p></header>';
  const finalized = health.finalized
    ? '<span class="badge badge-final">finalized</span>'
    : '<span class="badge badge-open">in review</span>';
  return [
    '<header class="bar">',
    "<h1>Class review</h1>",
    `<p>${escapeHtml(health.pipeline_kind)} &middot; ${health.decisions} decisions ${finalized}</p>`,
    '<span class="spacer"></span>',
    '<button data-action="refresh">Refresh</button>',
    `<button data-action="finalize" class="danger"${disabledAttr(state)}>Finalize</button>`,
    "</header>",
  ].join("");
}

export function renderError(error: string | null): string {
  if (!error) return "";
  return `<div class="error" role="alert">${escapeHtml(error)}</div>`;
}

const STATUS_FILTERS = ["all", "live", "proposed", "kept", "discarded", "merged", "reserved"];
const SORTS: Array<[string, string]> = [
  ["count_desc", "count ↓"],
  ["name", "name"],
  ["batch", "batch"],
];

export function renderControls(state: AppState): string {
  const { query, page } = state;
  const statusOptions = STATUS_FILTERS.map(
    (s) => `<option value="${s}"${s === query.status ? " selected" : ""}>${s}</option>`,
  ).join("");
  const sortOptions = SORTS.map(
    ([value, label]) =>
      `<option value="${value}"${value === query.sort ? " selected" : ""}>${label}</option>`,
  ).join("");
  const total = page ? page.total : 0;
  const lastPage = page !== null && query.page * page.page_size >= page.total;
  return [
    '<nav class="controls">',
    `<label>status <select data-query="status">${statusOptions}</select></label>`,
    `<label>sort <select data-query="sort">${sortOptions}</select></label>`,
    `<button data-action="page-prev"${query.page <= 1 ? " disabled" : ""}>&laquo;</button>`,
    `<span>page ${query.page} &middot; ${total} classes</span>`,
    `<button data-action="page-next"${lastPage ? " disabled" : ""}>&raquo;</button>`,
    "</nav>",
  ].join("");
}

export function renderTable(state: AppState): string {
  const page = state.page;
  if (!page) return '<p class="empty">Loading…</p>';
  if (page.classes.length === 0) return '<p class="empty">No classes match this filter.</p>';
  const rows = page.classes.map((c) => renderRow(c, state, page)).join("\n");
  const warnings = page.warnings.length
    ? `<p class="warnings">${page.warnings.map(escapeHtml).join("<br>")}</p>`
    : "";
  return [
    '<table class="candidates">',
    "<thead><tr><th>class</th><th>count</th><th>status</th><th>prompt</th><th>examples</th><th>actions</th></tr></thead>",
    `<tbody>${rows}</tbody>`,
    "</table>",
    warnings,
  ].join("\n");
}

export function renderRow(candidate: Candidate, state: AppState, page: CandidatesPage): string {
  const id = escapeHtml(candidate.class_id);
  const mergedNote = candidate.merged_into
    ? `<div class="note">merged into ${escapeHtml(candidate.merged_into)}</div>`
    : "";
  const examples = renderExamples(candidate);
  return [
    `<tr data-id="${id}" class="row-${escapeHtml(candidate.status)}">`,
    `<td class="name">${escapeHtml(candidate.name)}<div class="note">${id}</div>${mergedNote}</td>`,
    `<td class="count">${candidate.count}</td>`,
    `<td>${statusBadge(candidate.status)}</td>`,
    `<td class="prompt">${escapeHtml(promptPreview(candidate.prompt))}</td>`,
    `<td>${examples}</td>`,
    `<td class="actions">${renderActions(candidate, state, page)}</td>`,
    "</tr>",
  ].join("");
}

export function renderExamples(candidate: Candidate): string {
  const examples = candidate.examples ?? [];
  if (examples.length === 0) return '<span class="note">none</span>';
  const items = examples
    .map((ex) => {
      const text = ex.text === null ? '<em>text unavailable</em>' : escapeHtml(ex.text);
      return `<li><span class="note">${escapeHtml(ex.unit_id)}</span> ${text}</li>`;
    })
    .join("");
  return `<ul class="examples">${items}</ul>`;
}

export function renderActions(candidate: Candidate, state: AppState, page: CandidatesPage): string {
  if (candidate.status === "merged") {
    return '<span class="note">folded</span>';
  }
  const id = escapeHtml(candidate.class_id);
  const off = disabledAttr(state);
  const targets = page.classes.filter(
    (c) => c.status !== "merged" && c.class_id !== candidate.class_id,
  );
  const targetOptions = targets
    .map(
      (c) =>
        `<option value="${escapeHtml(c.class_id)}">${escapeHtml(c.name)}</option>`,
    )
    .join("");
  const keepLabel = candidate.status === "kept" ? "Keep ✓" : "Keep";
  return [
    `<button data-action="keep" data-id="${id}"${off}>${keepLabel}</button>`,
    `<button data-action="discard" data-id="${id}"${off}>Discard</button>`,
    targets.length
      ? `<span class="merge"><select data-merge-target="${id}">${targetOptions}</select>` +
        `<button data-action="merge" data-id="${id}"${off}>Merge into</button></span>`
      : "",
    `<span class="rename"><input data-rename-value="${id}" placeholder="new name">` +
      `<button data-action="rename" data-id="${id}"${off}>Rename</button></span>`,
    `<details><summary>prompt</summary>` +
      `<textarea data-prompt-value="${id}" rows="3">${escapeHtml(candidate.prompt)}</textarea>` +
      `<button data-action="edit-prompt" data-id="${id}"${off}>Save prompt</button></details>`,
  ]
    .filter(Boolean)
    .join(" ");
}

export function renderFinal(final: FinalPayload | null): string {
  if (!final) return "";
  const rows = final.classes
    .map(
      (c) =>
        `<tr><td>${c.final_rank}</td><td>${escapeHtml(c.name)}</td>` +
        `<td class="count">${c.count}</td><td class="prompt">${escapeHtml(c.prompt)}</td></tr>`,
    )
    .join("");
  return [
    '<section class="final">',
    `<h2>Final classes (${final.classes.length})</h2>`,
    `<p class="note">none-class: ${escapeHtml(final.none_class)} &middot; finalized ${escapeHtml(final.finalized_at)}</p>`,
    "<table><thead><tr><th>rank</th><th>name</th><th>count</th><th>prompt</th></tr></thead>",
    `<tbody>${rows}</tbody></table>`,
    "</section>",
  ].join("\n");
}
