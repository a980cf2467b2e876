// Thin typed client for the review service. All state lives server-side;
// the client never caches across calls.

import type {
  DecisionBody,
  DiscrepanciesResponse,
  ItemsResponse,
  KappaResponse,
  LabelBody,
  ReportDoc,
  Session,
} from './types.js'

export class ApiRequestError extends Error {
  constructor(
    public status: number,
    public code: string,
    detail: string,
  ) {
    super(detail)
  }
}

export class ReviewApi {
  constructor(
    private project: string,
    private fetcher: typeof fetch = fetch.bind(globalThis),
    private token: string | null = null,
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const headers: Record<string, string> = { 'Content-Type': 'application/json' }
    if (this.token) headers['X-Project-Token'] = this.token
    const response = await this.fetcher(path, {
      method,
      headers,
      body: body === undefined ? undefined : JSON.stringify(body),
    })
    const payload = await response.json()
    if (!response.ok) {
      throw new ApiRequestError(
        response.status,
        typeof payload.error === 'string' ? payload.error : 'HTTPError',
        typeof payload.detail === 'string' ? payload.detail : response.statusText,
      )
    }
    return payload as T
  }

  base(path: string): string {
    return `/projects/${encodeURIComponent(this.project)}${path}`
  }

  createSession(body: {
    sample_size: number
    seed: number
    blind: boolean
    reviewers: string[]
    rounds?: [number, number][]
  }): Promise<Session> {
    return this.request('POST', this.base('/sessions'), body)
  }

  getSession(sessionId: string): Promise<Session> {
    return this.request('GET', this.base(`/sessions/${sessionId}`))
  }

  getItems(sessionId: string, reviewer: string): Promise<ItemsResponse> {
    const query = new URLSearchParams({ reviewer })
    return this.request('GET', this.base(`/sessions/${sessionId}/items?${query}`))
  }

  postDecisions(sessionId: string, decisions: DecisionBody[]): Promise<unknown> {
    return this.request('POST', this.base(`/sessions/${sessionId}/decisions`), {
      decisions,
    })
  }

  getDiscrepancies(sessionId: string, round: number): Promise<DiscrepanciesResponse> {
    return this.request(
      'GET',
      this.base(`/sessions/${sessionId}/discrepancies?round=${round}`),
    )
  }

  getKappa(sessionId: string, round?: number): Promise<KappaResponse> {
    const suffix = round === undefined ? '' : `?round=${round}`
    return this.request('GET', this.base(`/sessions/${sessionId}/kappa${suffix}`))
  }

  postLabels(sessionId: string, labels: LabelBody[]): Promise<unknown> {
    return this.request('POST', this.base(`/sessions/${sessionId}/labels`), { labels })
  }

  getReport(key: 'table2' | 'table4' | 'table5'): Promise<ReportDoc> {
    return this.request('GET', this.base(`/reports/${key}`))
  }
}
