// Typed client for the gateway. Every path used here is a documented
// endpoint; the contract test enumerates them against this list.

import type { Caption, RagAnswer, Scene, Site, SiteDetail, Verdict } from './types';

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export const DOCUMENTED_ENDPOINTS = [
  'GET /api/health',
  'GET /api/sites',
  'GET /api/sites/{id}',
  'GET /api/sites/{id}/scenes',
  'GET /api/sites/{id}/captions',
  'GET /api/scenes/{id}/rgb.png',
  'GET /api/scenes/{id}/indices/{name}.png',
  'POST /api/scenes/{id}/review',
  'POST /api/captions/{id}/review',
  'POST /api/rag/query',
] as const;

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly code: string,
    detail: string,
  ) {
    super(detail);
  }
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string = '',
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchImpl(this.baseUrl + path, init);
    } catch (err) {
      throw new ApiError(0, 'NetworkError', err instanceof Error ? err.message : String(err));
    }
    if (!response.ok) {
      let code = 'HttpError';
      let detail = `${response.status}`;
      try {
        const body = (await response.json()) as { error?: string; detail?: string };
        code = body.error ?? code;
        detail = body.detail ?? detail;
      } catch {
        // non-JSON error body: keep status text
      }
      throw new ApiError(response.status, code, detail);
    }
    return (await response.json()) as T;
  }

  health(): Promise<{ status: string }> {
    return this.request('/api/health');
  }

  listSites(): Promise<Site[]> {
    return this.request('/api/sites');
  }

  getSite(siteId: string): Promise<SiteDetail> {
    return this.request(`/api/sites/${encodeURIComponent(siteId)}`);
  }

  siteScenes(siteId: string): Promise<Scene[]> {
    return this.request(`/api/sites/${encodeURIComponent(siteId)}/scenes`);
  }

  siteCaptions(siteId: string): Promise<Caption[]> {
    return this.request(`/api/sites/${encodeURIComponent(siteId)}/captions`);
  }

  reviewScene(sceneId: string, verdict: Verdict, reviewer: string): Promise<Scene> {
    return this.request(`/api/scenes/${encodeURIComponent(sceneId)}/review`, {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify({ verdict, reviewer }),
    });
  }

  reviewCaption(captionId: string, verdict: Verdict, reviewer: string): Promise<Caption> {
    return this.request(`/api/captions/${encodeURIComponent(captionId)}/review`, {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify({ verdict, reviewer }),
    });
  }

  query(question: string, k?: number, country?: string): Promise<RagAnswer> {
    return this.request('/api/rag/query', {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify({ question, k: k ?? null, country: country ?? null }),
    });
  }

  sceneRgbUrl(sceneId: string): string {
    return `${this.baseUrl}/api/scenes/${encodeURIComponent(sceneId)}/rgb.png`;
  }

  sceneIndexUrl(sceneId: string, indexName: string): string {
    return `${this.baseUrl}/api/scenes/${encodeURIComponent(sceneId)}/indices/${encodeURIComponent(indexName)}.png`;
  }
}
