// Browser bootstrap: wires the pure renderers and card state to the review
// API. One reviewer per browser session; saves are optimistic with the
// server as arbiter, and any API error surfaces inline without losing the
// card state.

import { ApiRequestError, ReviewApi } from './api.js'
import {
  renderBlockingBanner,
  renderDiscrepancyList,
  renderInlineError,
  renderKappaBadge,
  renderLabelPanel,
  renderProgress,
  renderReportTable,
  renderReviewCard,
} from './render.js'
import {
  CardState,
  decisionsForSave,
  emptyCoverageConfirmation,
  initialCardState,
  keyAction,
  progressCounts,
  toggleCoverage,
} from './state.js'
import type { LabelBody, ReviewItem, Session } from './types.js'

interface AppState {
  api: ReviewApi
  reviewer: string
  session: Session
  items: ReviewItem[]
  coderIds: string[]
  position: number
  card: CardState | null
  tab: 'review' | 'reconcile' | 'labels'
  round: number
}

let app: AppState | null = null

function $(selector: string): HTMLElement {
  const node = document.querySelector(selector)
  if (!node) throw new Error(`missing element ${selector}`)
  return node as HTMLElement
}

function coderIdsFrom(items: ReviewItem[]): string[] {
  const ids = new Set<string>()
  for (const item of items) {
    for (const coderId of Object.keys(item.suggestions)) ids.add(coderId)
  }
  return [...ids].sort()
}

async function connect(event: Event): Promise<void> {
  event.preventDefault()
  const project = (document.getElementById('project') as HTMLInputElement).value.trim()
  const reviewer = (document.getElementById('reviewer') as HTMLInputElement).value.trim()
  const sessionInput = (document.getElementById('session') as HTMLInputElement).value.trim()
  const token = (document.getElementById('token') as HTMLInputElement).value.trim() || null
  const api = new ReviewApi(project, fetch.bind(globalThis), token)
  try {
    let session: Session
    if (sessionInput) {
      session = await api.getSession(sessionInput)
    } else {
      const size = Number((document.getElementById('sample-size') as HTMLInputElement).value)
      const seed = Number((document.getElementById('seed') as HTMLInputElement).value)
      session = await api.createSession({
        sample_size: size,
        seed,
        blind: true,
        reviewers: reviewer.split(',').map((r) => r.trim()).filter(Boolean),
      })
    }
    const items = await api.getItems(session.id, reviewer)
    app = {
      api,
      reviewer,
      session,
      items: items.items,
      coderIds: coderIdsFrom(items.items),
      position: 0,
      card: null,
      tab: 'review',
      round: 1,
    }
    $('#connect-panel').hidden = true
    $('#workbench').hidden = false
    $('#session-label').textContent = `${session.id} · ${reviewer}`
    renderCurrent()
  } catch (error) {
    $('#connect-error').innerHTML = renderInlineError(describe(error))
  }
}

function describe(error: unknown): string {
  if (error instanceof ApiRequestError) return `${error.code}: ${error.message}`
  return String(error)
}

function currentItem(): ReviewItem {
  if (!app) throw new Error('not connected')
  return app.items[app.position]
}

function ensureCard(): CardState {
  if (!app) throw new Error('not connected')
  if (!app.card) app.card = initialCardState(currentItem(), app.coderIds)
  return app.card
}

function savedIds(): Set<string> {
  if (!app) return new Set()
  return new Set(app.items.filter((item) => item.saved).map((item) => item.merged_code_id))
}

function renderCurrent(): void {
  if (!app) return
  const main = $('#main')
  if (app.tab === 'review') {
    const item = currentItem()
    const card = ensureCard()
    const counts = progressCounts(app.items, savedIds(), item.round)
    main.innerHTML =
      renderProgress(counts.decided, counts.total, counts.round, counts.roundDecided, counts.roundTotal) +
      renderReviewCard(item, card)
    wireCard()
  } else if (app.tab === 'reconcile') {
    void renderReconcile()
  } else {
    void renderLabels()
  }
}

function wireCard(): void {
  if (!app) return
  for (const button of document.querySelectorAll<HTMLButtonElement>('.coverage-toggle')) {
    button.addEventListener('click', () => {
      if (!app) return
      app.card = toggleCoverage(ensureCard(), button.dataset.coder ?? '')
      renderCurrent()
    })
  }
  const memo = document.querySelector<HTMLTextAreaElement>('.memo')
  memo?.addEventListener('input', () => {
    if (app?.card && memo) app.card = { ...app.card, memo: memo.value }
  })
  document.querySelector<HTMLButtonElement>('button[data-action="save"]')
    ?.addEventListener('click', () => void saveCard())
}

async function saveCard(): Promise<void> {
  if (!app) return
  const item = currentItem()
  const card = ensureCard()
  const confirmation = emptyCoverageConfirmation(card)
  if (confirmation && !window.confirm(confirmation)) return
  try {
    await app.api.postDecisions(
      app.session.id,
      decisionsForSave(card, item, app.reviewer),
    )
    // Reload from the server: it is the arbiter, and a first save on a
    // blind session reveals the algorithm row for this item.
    const refreshed = await app.api.getItems(app.session.id, app.reviewer)
    app.items = refreshed.items
    app.card = null
    if (confirmation === null && app.position < app.items.length - 1) {
      app.position += 1
    }
    renderCurrent()
  } catch (error) {
    // Keep the card state; surface the problem inline. A stale write means
    // someone superseded us: reload just this card's server state.
    const main = $('#main')
    main.insertAdjacentHTML('afterbegin', renderInlineError(describe(error)))
    if (error instanceof ApiRequestError && error.status === 409) {
      const refreshed = await app.api.getItems(app.session.id, app.reviewer)
      app.items = refreshed.items
      renderCurrent()
    }
  }
}

async function renderReconcile(): Promise<void> {
  if (!app) return
  const main = $('#main')
  try {
    const [discrepancies, roundKappa, cumulative] = await Promise.all([
      app.api.getDiscrepancies(app.session.id, app.round),
      app.api.getKappa(app.session.id, app.round),
      app.api.getKappa(app.session.id),
    ])
    const roundPicker =
      `<label>Round <input id="round-picker" type="number" min="1" ` +
      `max="${app.session.rounds.length}" value="${app.round}"></label>`
    main.innerHTML =
      `<div class="reconcile-head">${roundPicker}` +
      renderKappaBadge(roundKappa.primary, `round ${app.round}`) +
      renderKappaBadge(cumulative.primary, 'cumulative') +
      `</div>` +
      renderDiscrepancyList(discrepancies.discrepancies)
    document.getElementById('round-picker')?.addEventListener('change', (event) => {
      if (!app) return
      app.round = Number((event.target as HTMLInputElement).value)
      renderCurrent()
    })
    for (const button of document.querySelectorAll<HTMLButtonElement>(
      'button[data-action="consensus"]',
    )) {
      button.addEventListener('click', () => void saveConsensus(button))
    }
  } catch (error) {
    if (error instanceof ApiRequestError && error.code === 'RoundIncomplete') {
      main.innerHTML = renderBlockingBanner(error.code, error.message)
    } else {
      main.innerHTML = renderInlineError(describe(error))
    }
  }
}

async function saveConsensus(button: HTMLButtonElement): Promise<void> {
  if (!app) return
  const article = button.closest('.discrepancy') as HTMLElement
  try {
    await app.api.postDecisions(app.session.id, [
      {
        merged_code_id: article.dataset.mergedId ?? '',
        reviewer: app.reviewer,
        coder_id: article.dataset.coder ?? '',
        covered: button.dataset.covered === 'true',
        is_consensus: true,
      },
    ])
    renderCurrent()
  } catch (error) {
    article.insertAdjacentHTML('beforeend', renderInlineError(describe(error)))
  }
}

async function renderLabels(): Promise<void> {
  if (!app) return
  const main = $('#main')
  const panels = app.items
    .map((item) => renderLabelPanel(item))
    .join('')
  main.innerHTML = `<div class="labels-grid">${panels}</div>`
  for (const button of document.querySelectorAll<HTMLButtonElement>(
    'button[data-action="save-labels"]',
  )) {
    button.addEventListener('click', () => void saveLabels(button))
  }
}

async function saveLabels(button: HTMLButtonElement): Promise<void> {
  if (!app) return
  const panel = button.closest('.label-panel') as HTMLElement
  const mergedId = panel.dataset.mergedId ?? ''
  const labels: LabelBody[] = []
  for (const select of panel.querySelectorAll<HTMLSelectElement>('select')) {
    if (!select.value) continue
    const dimension = select.dataset.dimension as LabelBody['dimension']
    const codeRow = select.closest('.code-labels') as HTMLElement | null
    labels.push({
      target_id: codeRow ? codeRow.dataset.codeId ?? '' : mergedId,
      dimension,
      value: select.value,
      reviewer: app.reviewer,
    })
  }
  if (labels.length === 0) return
  try {
    await app.api.postLabels(app.session.id, labels)
    panel.insertAdjacentHTML('beforeend', '<span class="saved-tick">saved</span>')
  } catch (error) {
    panel.insertAdjacentHTML('beforeend', renderInlineError(describe(error)))
  }
}

function onKey(event: KeyboardEvent): void {
  if (!app) return
  const target = event.target as HTMLElement
  if (target.tagName === 'TEXTAREA' || target.tagName === 'INPUT' || target.tagName === 'SELECT') {
    if (!(event.ctrlKey && event.key === 'Enter')) return
  }
  const action = keyAction(event.key, event.ctrlKey)
  if (!action) return
  event.preventDefault()
  if (action.kind === 'next' && app.position < app.items.length - 1) {
    app.position += 1
    app.card = null
  } else if (action.kind === 'previous' && app.position > 0) {
    app.position -= 1
    app.card = null
  } else if (action.kind === 'toggle' && app.tab === 'review') {
    const coderId = app.coderIds[action.index]
    if (coderId) app.card = toggleCoverage(ensureCard(), coderId)
  } else if (action.kind === 'save' && app.tab === 'review') {
    void saveCard()
    return
  } else if (action.kind === 'focus-memo') {
    document.querySelector<HTMLTextAreaElement>('.memo')?.focus()
    return
  } else if (action.kind === 'tab') {
    app.tab = action.tab
  }
  renderCurrent()
}

async function showReports(): Promise<void> {
  if (!app) return
  const main = $('#main')
  try {
    const docs = await Promise.all([
      app.api.getReport('table2'),
      app.api.getReport('table4'),
      app.api.getReport('table5'),
    ])
    main.innerHTML = docs.map(renderReportTable).join('')
  } catch (error) {
    main.innerHTML = renderInlineError(describe(error))
  }
}

export function start(): void {
  document.getElementById('connect-form')?.addEventListener('submit', (e) => void connect(e))
  document.addEventListener('keydown', onKey)
  for (const button of document.querySelectorAll<HTMLButtonElement>('[data-tab]')) {
    button.addEventListener('click', () => {
      if (!app) return
      const tab = button.dataset.tab
      if (tab === 'reports') {
        void showReports()
        return
      }
      app.tab = tab as AppState['tab']
      renderCurrent()
    })
  }
}

if (typeof document !== 'undefined') {
  start()
}
