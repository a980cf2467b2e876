// Pure renderers: API payload in, HTML string out. Nothing here computes a
// number the server did not send, so contract tests can replay recorded
// exchanges and compare rendered values against payload values directly.

import type {
  Discrepancy,
  KappaEntry,
  ReportDoc,
  ReviewItem,
  Suggestion,
} from './types.js'
import { BREADTH_VALUES, GAIN_VALUES, GROUNDEDNESS_VALUES, SOURCE_VALUES } from './types.js'
import type { CardState } from './state.js'

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;')
}

export function similarityBar(similarity: number): string {
  const clamped = Math.max(0, Math.min(1, similarity))
  const percent = (clamped * 100).toFixed(1)
  return (
    `<span class="simbar" title="cosine similarity ${similarity.toFixed(3)}">` +
    `<span class="simbar-fill" style="width: ${percent}%"></span>` +
    `<span class="simbar-num">${similarity.toFixed(3)}</span></span>`
  )
}

export function renderSuggestion(suggestion: Suggestion): string {
  const childMark = suggestion.is_child
    ? '<span class="child-mark" title="merged from this code">&#9679; child</span>'
    : ''
  return (
    `<li class="suggestion" data-code-id="${escapeHtml(suggestion.code_id)}">` +
    `<span class="suggestion-label">${escapeHtml(suggestion.label)}</span> ` +
    similarityBar(suggestion.similarity) +
    childMark +
    `<div class="suggestion-def">${escapeHtml(suggestion.definition)}</div></li>`
  )
}

export function renderSuggestionColumn(coderId: string, ranked: Suggestion[]): string {
  const rows = ranked.map(renderSuggestion).join('')
  return (
    `<div class="codebook-column" data-coder="${escapeHtml(coderId)}">` +
    `<h4>${escapeHtml(coderId)}</h4><ol>${rows}</ol></div>`
  )
}

export function renderCoverageToggle(
  coderId: string,
  index: number,
  covered: boolean,
): string {
  const state = covered ? 'covered' : 'not-covered'
  const pressed = covered ? 'true' : 'false'
  return (
    `<button class="coverage-toggle ${state}" data-coder="${escapeHtml(coderId)}" ` +
    `aria-pressed="${pressed}" data-key="${index + 1}">` +
    `<kbd>${index + 1}</kbd> ${escapeHtml(coderId)}: ${covered ? 'covered' : 'not covered'}</button>`
  )
}

export function renderAlgorithmRow(coverage: Record<string, boolean>): string {
  const cells = Object.entries(coverage)
    .map(
      ([coder, flag]) =>
        `<span class="algo-cell" data-coder="${escapeHtml(coder)}">` +
        `${escapeHtml(coder)}: ${flag ? '&#10003; covered' : '&#10007; not covered'}</span>`,
    )
    .join('')
  return `<div class="algorithm-row"><h4>Algorithm</h4>${cells}</div>`
}

export function renderContext(item: ReviewItem): string {
  if (!item.context) return ''
  const rows = item.context.messages
    .map(
      (message) =>
        `<div class="ctx-message${message.highlight ? ' highlight' : ''}">` +
        `<span class="ctx-author">${escapeHtml(message.author)} (${escapeHtml(message.role)})</span> ` +
        `${escapeHtml(message.text)}</div>`,
    )
    .join('')
  return (
    `<details class="context-panel"><summary>Conversation ` +
    `${escapeHtml(item.context.chunk_id)}</summary>${rows}</details>`
  )
}

export function renderReviewCard(item: ReviewItem, state: CardState): string {
  const toggles = state.coderIds
    .map((coderId, index) =>
      renderCoverageToggle(coderId, index, state.covered[coderId] ?? false),
    )
    .join('')
  const columns = Object.entries(item.suggestions)
    .map(([coderId, ranked]) => renderSuggestionColumn(coderId, ranked))
    .join('')
  // The algorithm row exists only when the server included the flags; on a
  // blind session that is after this reviewer's first save for the item.
  const algorithm = item.algorithmic_coverage
    ? renderAlgorithmRow(item.algorithmic_coverage)
    : ''
  return (
    `<article class="review-card" data-merged-id="${escapeHtml(item.merged_code_id)}">` +
    `<header><span class="position">#${item.position}</span>` +
    `<span class="round-tag">round ${item.round}</span>` +
    `<h3>${escapeHtml(item.label)}</h3>` +
    `<p class="definition">${escapeHtml(item.definition)}</p></header>` +
    renderContext(item) +
    `<section class="suggestions">${columns}</section>` +
    `<section class="toggles">${toggles}</section>` +
    algorithm +
    `<textarea class="memo" placeholder="Analytic memo (rationale, observations)">` +
    `${escapeHtml(state.memo)}</textarea>` +
    `<footer><button class="save" data-action="save"><kbd>s</kbd> Save decisions</button></footer>` +
    `</article>`
  )
}

export function renderProgress(
  decided: number,
  total: number,
  round: number,
  roundDecided: number,
  roundTotal: number,
): string {
  return (
    `<div class="progress">Round ${round}: ${roundDecided}/${roundTotal} decided ` +
    `<span class="overall">(${decided}/${total} overall)</span></div>`
  )
}

export function renderKappaBadge(entry: KappaEntry | undefined, caption: string): string {
  if (!entry) {
    return `<span class="kappa-badge empty">${escapeHtml(caption)}: n/a</span>`
  }
  // The badge text is the server's formatted "0.68 (substantial)" string.
  return (
    `<span class="kappa-badge band-${escapeHtml(entry.band)}">` +
    `${escapeHtml(caption)}: ${escapeHtml(entry.text)} <small>n=${entry.n}</small></span>`
  )
}

export function renderDiscrepancy(row: Discrepancy): string {
  const reviewers = Object.keys(row.values)
  const sides = reviewers
    .map(
      (reviewer) =>
        `<div class="side" data-reviewer="${escapeHtml(reviewer)}">` +
        `<strong>${escapeHtml(reviewer)}</strong>: ` +
        `${row.values[reviewer] ? 'covered' : 'not covered'}` +
        `<blockquote class="memo-quote">${escapeHtml(row.memos[reviewer] ?? '')}</blockquote></div>`,
    )
    .join('')
  const consensus =
    row.consensus === null
      ? `<div class="consensus-actions">` +
        `<button data-action="consensus" data-covered="true">Consensus: covered</button>` +
        `<button data-action="consensus" data-covered="false">Consensus: not covered</button></div>`
      : `<div class="consensus-done">consensus: ${row.consensus ? 'covered' : 'not covered'}</div>`
  return (
    `<article class="discrepancy" data-merged-id="${escapeHtml(row.merged_code_id)}" ` +
    `data-coder="${escapeHtml(row.coder_id)}">` +
    `<h4>${escapeHtml(row.merged_code_id)} / ${escapeHtml(row.coder_id)}</h4>` +
    `<div class="sides">${sides}</div>${consensus}</article>`
  )
}

export function renderDiscrepancyList(rows: Discrepancy[]): string {
  if (rows.length === 0) {
    return '<p class="all-reconciled">No discrepancies in this round.</p>'
  }
  return rows.map(renderDiscrepancy).join('')
}

export function renderBlockingBanner(code: string, detail: string): string {
  return (
    `<div class="banner blocking" role="alert"><strong>${escapeHtml(code)}</strong> ` +
    `${escapeHtml(detail)}</div>`
  )
}

export function renderInlineError(detail: string): string {
  return `<div class="inline-error" role="alert">${escapeHtml(detail)}</div>`
}

function options(values: readonly string[], selected: string | null): string {
  const blank = `<option value=""${selected ? '' : ' selected'}></option>`
  return (
    blank +
    values
      .map(
        (value) =>
          `<option value="${value}"${value === selected ? ' selected' : ''}>${value}</option>`,
      )
      .join('')
  )
}

export function renderLabelPanel(
  item: ReviewItem,
  existing: Partial<Record<string, string>> = {},
): string {
  const childCodes: Suggestion[] = Object.values(item.suggestions)
    .flat()
    .filter((suggestion) => suggestion.is_child)
  const childRows = childCodes
    .map(
      (code) =>
        `<div class="code-labels" data-code-id="${escapeHtml(code.code_id)}">` +
        `<span>${escapeHtml(code.label)}</span>` +
        `<select data-dimension="groundedness">${options(GROUNDEDNESS_VALUES, null)}</select>` +
        `<select data-dimension="breadth">${options(BREADTH_VALUES, null)}</select></div>`,
    )
    .join('')
  return (
    `<article class="label-panel" data-merged-id="${escapeHtml(item.merged_code_id)}">` +
    `<h3>${escapeHtml(item.label)}</h3>` +
    `<label>Gain <select data-dimension="gain">${options(GAIN_VALUES, existing['gain'] ?? null)}</select></label>` +
    `<label>Source <select data-dimension="source">${options(SOURCE_VALUES, existing['source'] ?? null)}</select></label>` +
    `<div class="child-code-labels">${childRows}</div>` +
    `<button data-action="save-labels">Save labels</button></article>`
  )
}

export function renderReportTable(doc: ReportDoc): string {
  const head = `<tr><th></th>${doc.columns.map((c) => `<th>${escapeHtml(c)}</th>`).join('')}</tr>`
  const body = doc.rows
    .map(
      (row) =>
        `<tr>${row.map((cell, i) => (i === 0 ? `<th>${escapeHtml(cell)}</th>` : `<td>${escapeHtml(cell)}</td>`)).join('')}</tr>`,
    )
    .join('')
  return (
    `<section class="report"><h3>${escapeHtml(doc.title)}</h3>` +
    `<table>${head}${body}</table></section>`
  )
}
