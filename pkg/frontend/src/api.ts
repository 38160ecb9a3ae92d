// Thin fetch client over the three documented service endpoints.

import type {
  FeedbackRequest,
  FeedbackResponse,
  HealthResponse,
  QueryRequest,
  QueryResponse,
} from './types.js';

export class ApiError extends Error {
  constructor(readonly status: number, readonly detail: string) {
    super(`HTTP ${status}: ${detail}`);
    this.name = 'ApiError';
  }
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: typeof fetch = fetch,
  ) {}

  async query(request: QueryRequest): Promise<QueryResponse> {
    return this.post<QueryResponse>('/api/query', request);
  }

  async feedback(request: FeedbackRequest): Promise<FeedbackResponse> {
    return this.post<FeedbackResponse>('/api/feedback', request);
  }

  async health(): Promise<HealthResponse> {
    const response = await this.fetchFn(`${this.baseUrl}/api/health`);
    return this.decode<HealthResponse>(response);
  }

  private async post<T>(path: string, body: unknown): Promise<T> {
    const response = await this.fetchFn(`${this.baseUrl}${path}`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(body),
    });
    return this.decode<T>(response);
  }

  private async decode<T>(response: Response): Promise<T> {
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const body = await response.json();
        if (body && typeof body.detail === 'string') detail = body.detail;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(response.status, detail);
    }
    return (await response.json()) as T;
  }
}
