// Payload shapes of the review API. The UI renders these verbatim and holds
// no business logic of its own.

export interface Session {
  id: string
  merged_code_ids: string[]
  seed: number
  blind: boolean
  reviewers: string[]
  rounds: [number, number][] // 1-based inclusive ranges
  size: number
}

export interface Suggestion {
  code_id: string
  label: string
  definition: string
  similarity: number
  // Present only once the server reveals algorithmic state (post-save or
  // non-blind session); its absence IS the blind guarantee.
  is_child?: boolean
}

export interface ContextMessage {
  id: string
  author: string
  role: string
  text: string
  highlight: boolean
}

export interface ReviewItem {
  merged_code_id: string
  position: number
  round: number
  label: string
  definition: string
  blind: boolean
  saved: boolean
  suggestions: Record<string, Suggestion[]>
  decisions: Record<string, { covered: boolean; memo: string }>
  context: { chunk_id: string; messages: ContextMessage[] } | null
  algorithmic_coverage?: Record<string, boolean>
}

export interface ItemsResponse {
  session_id: string
  reviewer: string
  items: ReviewItem[]
}

export interface KappaEntry {
  kappa: number
  band: string
  n: number
  text: string
}

export interface KappaResponse {
  session_id: string
  round: number | null
  pairs: (KappaEntry & { reviewers: string[] })[]
  vs_algorithm: (KappaEntry & { rater: string })[]
  primary?: KappaEntry & { reviewers: string[] }
}

export interface Discrepancy {
  merged_code_id: string
  coder_id: string
  values: Record<string, boolean>
  memos: Record<string, string>
  consensus: boolean | null
}

export interface DiscrepanciesResponse {
  session_id: string
  round: number
  discrepancies: Discrepancy[]
}

export interface ApiError {
  error: string
  detail: string
}

export type GainValue = 'little' | 'minor' | 'substantial'
export type SourceValue = 'content' | 'conversational_dynamics'

export const GAIN_VALUES: GainValue[] = ['little', 'minor', 'substantial']
export const SOURCE_VALUES: SourceValue[] = ['content', 'conversational_dynamics']
export const GROUNDEDNESS_VALUES = ['grounded', 'ungrounded'] as const
export const BREADTH_VALUES = ['specific', 'overly_broad'] as const

export interface DecisionBody {
  merged_code_id: string
  reviewer: string
  coder_id: string
  covered: boolean
  memo?: string
  is_consensus?: boolean
}

export interface LabelBody {
  target_id: string
  dimension: 'groundedness' | 'breadth' | 'gain' | 'source'
  value: string
  reviewer: string
  memo?: string
  is_consensus?: boolean
}

export interface ReportDoc {
  key: string
  title: string
  columns: string[]
  rows: string[][]
  text: string
}
