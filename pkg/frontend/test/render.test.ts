// Contract tests: replay recorded API exchanges through the renderers and
// assert the rendered values equal the payload values. The UI computes
// nothing itself, so every coverage flag, badge text, and suggestion rank
// shown must be traceable to a payload field.

import { readFileSync } from 'node:fs'
import { dirname, join } from 'node:path'
import { fileURLToPath } from 'node:url'
import { describe, expect, it } from 'vitest'

import {
  renderDiscrepancyList,
  renderKappaBadge,
  renderLabelPanel,
  renderReportTable,
  renderReviewCard,
  renderSuggestionColumn,
} from '../src/render'
import {
  decisionsForSave,
  emptyCoverageConfirmation,
  initialCardState,
  keyAction,
  progressCounts,
  toggleCoverage,
} from '../src/state'
import type {
  DiscrepanciesResponse,
  ItemsResponse,
  KappaResponse,
  ReportDoc,
  ReviewItem,
  Session,
} from '../src/types'

const here = dirname(fileURLToPath(import.meta.url))
const exchanges = JSON.parse(
  readFileSync(join(here, 'fixtures', 'exchanges.json'), 'utf-8'),
)

const session: Session = exchanges.session_create.response
const preSave: ItemsResponse = exchanges.items_blind_pre_save.response
const postSave: ItemsResponse = exchanges.items_after_save.response
const kappa: KappaResponse = exchanges.kappa_cumulative.response
const kappaRound: KappaResponse = exchanges.kappa_round1.response
const discrepancies: DiscrepanciesResponse = exchanges.discrepancies_round1.response
const reportTable2: ReportDoc = exchanges.report_table2.response

const COMPARE_CODERS = Object.keys(preSave.items[0].suggestions).sort()

function cardHtml(item: ReviewItem): string {
  return renderReviewCard(item, initialCardState(item, COMPARE_CODERS))
}

describe('blind review cards', () => {
  it('renders no algorithm row and no child marks before the first save', () => {
    for (const item of preSave.items) {
      const html = cardHtml(item)
      expect(html).not.toContain('algorithm-row')
      expect(html).not.toContain('child-mark')
    }
  })

  it('starts every coverage toggle as not covered', () => {
    const html = cardHtml(preSave.items[0])
    const pressed = [...html.matchAll(/aria-pressed="(\w+)"/g)].map((m) => m[1])
    expect(pressed).toHaveLength(COMPARE_CODERS.length)
    expect(new Set(pressed)).toEqual(new Set(['false']))
  })

  it('renders the merged label and definition from the payload', () => {
    for (const item of preSave.items) {
      const html = cardHtml(item)
      expect(html).toContain(item.label)
      expect(html).toContain(item.definition)
    }
  })
})

describe('revealed cards after save', () => {
  const revealed = postSave.items.filter((item) => item.algorithmic_coverage)
  const hidden = postSave.items.filter((item) => !item.algorithmic_coverage)

  it('the saved item now carries the algorithm row with payload flags', () => {
    expect(revealed).toHaveLength(1)
    const item = revealed[0]
    const html = cardHtml(item)
    expect(html).toContain('algorithm-row')
    for (const [coder, flag] of Object.entries(item.algorithmic_coverage!)) {
      const cell = new RegExp(
        `data-coder="${coder}">${coder}: ${flag ? '&#10003; covered' : '&#10007; not covered'}`,
      )
      expect(html).toMatch(cell)
    }
  })

  it('unsaved items stay hidden for the same reviewer', () => {
    for (const item of hidden) {
      expect(cardHtml(item)).not.toContain('algorithm-row')
    }
  })

  it('marks exactly the child suggestions the payload marks', () => {
    const item = revealed[0]
    for (const [coder, ranked] of Object.entries(item.suggestions)) {
      const html = renderSuggestionColumn(coder, ranked)
      const childCount = (html.match(/child-mark/g) ?? []).length
      expect(childCount).toBe(ranked.filter((s) => s.is_child).length)
    }
  })
})

describe('suggestion ordering and similarity values', () => {
  it('renders suggestions in exactly the payload order', () => {
    for (const item of preSave.items) {
      for (const [coder, ranked] of Object.entries(item.suggestions)) {
        const html = renderSuggestionColumn(coder, ranked)
        const ids = [...html.matchAll(/data-code-id="([^"]+)"/g)].map((m) => m[1])
        expect(ids).toEqual(ranked.map((s) => s.code_id))
      }
    }
  })

  it('renders each similarity number from the payload', () => {
    const item = preSave.items[0]
    for (const ranked of Object.values(item.suggestions)) {
      for (const suggestion of ranked) {
        const html = renderSuggestionColumn('x', [suggestion])
        expect(html).toContain(suggestion.similarity.toFixed(3))
      }
    }
  })

  it('suggestions are similarity-sorted in blind pre-save payloads', () => {
    for (const item of preSave.items) {
      for (const ranked of Object.values(item.suggestions)) {
        const sims = ranked.map((s) => s.similarity)
        expect([...sims].sort((a, b) => b - a)).toEqual(sims)
      }
    }
  })
})

describe('kappa badge', () => {
  it('renders exactly the text the service formatted', () => {
    const html = renderKappaBadge(kappa.primary, 'cumulative')
    expect(html).toContain(`cumulative: ${kappa.primary!.text}`)
    expect(html).toContain(`n=${kappa.primary!.n}`)
    const roundHtml = renderKappaBadge(kappaRound.primary, 'round 1')
    expect(roundHtml).toContain(`round 1: ${kappaRound.primary!.text}`)
  })

  it('renders n/a when no pair exists yet', () => {
    expect(renderKappaBadge(undefined, 'round 2')).toContain('round 2: n/a')
  })
})

describe('reconciliation view', () => {
  it('shows each discrepancy side by side with per-reviewer values and memos', () => {
    const html = renderDiscrepancyList(discrepancies.discrepancies)
    for (const row of discrepancies.discrepancies) {
      expect(html).toContain(row.merged_code_id)
      expect(html).toContain(row.coder_id)
      for (const [reviewer, value] of Object.entries(row.values)) {
        const side = new RegExp(
          `data-reviewer="${reviewer}">` +
            `<strong>${reviewer}</strong>: ${value ? 'covered' : 'not covered'}`,
        )
        expect(html).toMatch(side)
        expect(html).toContain(row.memos[reviewer])
      }
      expect(html).toContain('data-action="consensus"')
    }
  })

  it('renders the empty state when a round has no discrepancies', () => {
    expect(renderDiscrepancyList([])).toContain('No discrepancies')
  })
})

describe('labeling pass', () => {
  it('offers the three gain values and both sources', () => {
    const html = renderLabelPanel(postSave.items[0])
    for (const value of ['little', 'minor', 'substantial']) {
      expect(html).toContain(`<option value="${value}"`)
    }
    for (const value of ['content', 'conversational_dynamics']) {
      expect(html).toContain(`<option value="${value}"`)
    }
  })

  it('lists groundedness/breadth selectors for revealed child codes', () => {
    const revealed = postSave.items.find((item) => item.algorithmic_coverage)!
    const html = renderLabelPanel(revealed)
    const childIds = Object.values(revealed.suggestions)
      .flat()
      .filter((s) => s.is_child)
      .map((s) => s.code_id)
    for (const codeId of childIds) {
      expect(html).toContain(`data-code-id="${codeId}"`)
    }
    expect(html).toContain('data-dimension="groundedness"')
    expect(html).toContain('data-dimension="breadth"')
  })
})

describe('report rendering', () => {
  it('renders every payload cell verbatim', () => {
    const html = renderReportTable(reportTable2)
    expect(html).toContain(reportTable2.title)
    for (const column of reportTable2.columns) expect(html).toContain(column)
    for (const row of reportTable2.rows) {
      for (const cell of row) {
        if (cell) expect(html).toContain(cell)
      }
    }
  })
})

describe('card state', () => {
  const item = preSave.items[0]

  it('builds one decision per codebook on save', () => {
    let state = initialCardState(item, COMPARE_CODERS)
    state = toggleCoverage(state, COMPARE_CODERS[0])
    const body = decisionsForSave(state, item, preSave.reviewer)
    expect(body).toHaveLength(COMPARE_CODERS.length)
    expect(body[0]).toMatchObject({
      merged_code_id: item.merged_code_id,
      reviewer: preSave.reviewer,
      coder_id: COMPARE_CODERS[0],
      covered: true,
    })
    expect(body.slice(1).every((d) => d.covered === false)).toBe(true)
  })

  it('asks for confirmation only when the coverage set is empty', () => {
    const empty = initialCardState(item, COMPARE_CODERS)
    expect(emptyCoverageConfirmation(empty)).toMatch(/not covered by any/)
    const one = toggleCoverage(empty, COMPARE_CODERS[1])
    expect(emptyCoverageConfirmation(one)).toBeNull()
  })

  it('restores saved decisions when reopening a card', () => {
    const revealed = postSave.items.find((i) => i.saved)!
    const state = initialCardState(revealed, COMPARE_CODERS)
    for (const coder of COMPARE_CODERS) {
      expect(state.covered[coder]).toBe(revealed.decisions[coder].covered)
    }
  })

  it('keyboard map covers navigation, toggles, save, and tabs', () => {
    expect(keyAction('j')).toEqual({ kind: 'next' })
    expect(keyAction('ArrowUp')).toEqual({ kind: 'previous' })
    expect(keyAction('s')).toEqual({ kind: 'save' })
    expect(keyAction('Enter', true)).toEqual({ kind: 'save' })
    expect(keyAction('3')).toEqual({ kind: 'toggle', index: 2 })
    expect(keyAction('m')).toEqual({ kind: 'focus-memo' })
    expect(keyAction('r')).toEqual({ kind: 'tab', tab: 'reconcile' })
    expect(keyAction('x')).toBeNull()
  })

  it('progress counts follow saved state', () => {
    const saved = new Set(postSave.items.filter((i) => i.saved).map((i) => i.merged_code_id))
    const counts = progressCounts(postSave.items, saved, 1)
    expect(counts.total).toBe(session.size)
    expect(counts.decided).toBe(1)
    expect(counts.roundTotal).toBe(session.size)
  })
})
