// Card-local editing state and the keyboard map. Pure data and pure
// transitions; the app layer owns DOM wiring and network calls.

import type { DecisionBody, ReviewItem } from './types.js'

export interface CardState {
  coderIds: string[]
  covered: Record<string, boolean>
  memo: string
}

export function initialCardState(item: ReviewItem, coderIds: string[]): CardState {
  // Blind protocol: every option starts as "not covered" unless this
  // reviewer already saved a decision for it.
  const covered: Record<string, boolean> = {}
  let memo = ''
  for (const coderId of coderIds) {
    const existing = item.decisions[coderId]
    covered[coderId] = existing ? existing.covered : false
    if (existing && existing.memo) memo = existing.memo
  }
  return { coderIds: [...coderIds], covered, memo }
}

export function toggleCoverage(state: CardState, coderId: string): CardState {
  if (!(coderId in state.covered)) return state
  return {
    ...state,
    covered: { ...state.covered, [coderId]: !state.covered[coderId] },
  }
}

export function decisionsForSave(
  state: CardState,
  item: ReviewItem,
  reviewer: string,
): DecisionBody[] {
  return state.coderIds.map((coderId) => ({
    merged_code_id: item.merged_code_id,
    reviewer,
    coder_id: coderId,
    covered: state.covered[coderId] ?? false,
    memo: state.memo,
  }))
}

export function emptyCoverageConfirmation(state: CardState): string | null {
  const any = state.coderIds.some((coderId) => state.covered[coderId])
  if (any) return null
  return 'No codebook is marked as covering this merged code. Save as "not covered by any"?'
}

export type KeyAction =
  | { kind: 'next' }
  | { kind: 'previous' }
  | { kind: 'save' }
  | { kind: 'toggle'; index: number }
  | { kind: 'focus-memo' }
  | { kind: 'tab'; tab: 'review' | 'reconcile' | 'labels' }
  | null

export function keyAction(key: string, modifier = false): KeyAction {
  if (key === 'j' || key === 'ArrowDown') return { kind: 'next' }
  if (key === 'k' || key === 'ArrowUp') return { kind: 'previous' }
  if (key === 's' || (modifier && key === 'Enter')) return { kind: 'save' }
  if (key === 'm') return { kind: 'focus-memo' }
  if (key === 'v') return { kind: 'tab', tab: 'review' }
  if (key === 'r') return { kind: 'tab', tab: 'reconcile' }
  if (key === 'l') return { kind: 'tab', tab: 'labels' }
  if (/^[1-9]$/.test(key)) return { kind: 'toggle', index: Number(key) - 1 }
  return null
}

export interface ProgressCounts {
  decided: number
  total: number
  round: number
  roundDecided: number
  roundTotal: number
}

export function progressCounts(
  items: ReviewItem[],
  savedIds: Set<string>,
  currentRound: number,
): ProgressCounts {
  const inRound = items.filter((item) => item.round === currentRound)
  return {
    decided: items.filter((item) => savedIds.has(item.merged_code_id)).length,
    total: items.length,
    round: currentRound,
    roundDecided: inRound.filter((item) => savedIds.has(item.merged_code_id)).length,
    roundTotal: inRound.length,
  }
}
