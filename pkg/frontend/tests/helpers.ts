// In-memory mock of the gateway contract for frontend tests.

import type { FetchLike } from '../src/api';
import type { Caption, RagAnswer, Scene, Site } from '../src/types';

export interface MockState {
  sites: Site[];
  scenes: Scene[];
  captions: Caption[];
  failNetwork?: boolean;
}

export function makeSite(siteId: string, overrides: Partial<Site> = {}): Site {
  return {
    site_id: siteId,
    name: siteId.replace(/-/g, ' '),
    latitude: 10,
    longitude: 20,
    country: 'CA',
    commodities: ['copper'],
    created_at: '2025-01-15T12:00:00+00:00',
    has_accepted_caption: false,
    ...overrides,
  };
}

export function makeScene(sceneId: string, siteId: string, overrides: Partial<Scene> = {}): Scene {
  return {
    scene_id: sceneId,
    site_id: siteId,
    sensed_at: '2024-06-15T10:30:00+00:00',
    bands: ['B02', 'B03', 'B04'],
    resolution_m: 150,
    review_state: 'pending',
    reviewer: null,
    reviewed_at: null,
    quality: { cloud_fraction: 0.02, valid_fraction: 1, contrast: 0.2, auto_pass: true },
    ...overrides,
  };
}

export function makeCaption(captionId: string, siteId: string, overrides: Partial<Caption> = {}): Caption {
  return {
    caption_id: captionId,
    site_id: siteId,
    scene_id: `s2-${siteId}`,
    text: `caption for ${siteId}`,
    model_id: 'llama-4-maverick',
    prompt_hash: 'abc123',
    created_at: '2025-01-15T12:00:00+00:00',
    status: 'accepted',
    reviewer: null,
    ...overrides,
  };
}

function json(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { 'content-type': 'application/json' },
  });
}

export interface MockApi {
  fetchImpl: FetchLike;
  calls: string[];
  state: MockState;
}

export function mockApi(state: MockState): MockApi {
  const calls: string[] = [];

  const fetchImpl: FetchLike = async (input, init) => {
    const method = init?.method ?? 'GET';
    const path = input.replace(/^https?:\/\/[^/]+/, '');
    calls.push(`${method} ${path}`);
    if (state.failNetwork) throw new TypeError('network down');

    let match: RegExpMatchArray | null;

    if (method === 'GET' && path === '/api/sites') return json(state.sites);

    if (method === 'GET' && (match = path.match(/^\/api\/sites\/([^/]+)$/))) {
      const site = state.sites.find((s) => s.site_id === match![1]);
      return site
        ? json({ ...site, dossier: null })
        : json({ error: 'NotFoundError', detail: `unknown site_id: ${match[1]}` }, 404);
    }

    if (method === 'GET' && (match = path.match(/^\/api\/sites\/([^/]+)\/scenes$/))) {
      return json(state.scenes.filter((s) => s.site_id === match![1]));
    }

    if (method === 'GET' && (match = path.match(/^\/api\/sites\/([^/]+)\/captions$/))) {
      return json(state.captions.filter((c) => c.site_id === match![1]));
    }

    if (method === 'POST' && (match = path.match(/^\/api\/scenes\/([^/]+)\/review$/))) {
      const body = JSON.parse(String(init?.body)) as { verdict: 'approved' | 'rejected'; reviewer: string };
      const scene = state.scenes.find((s) => s.scene_id === match![1]);
      if (!scene) return json({ error: 'NotFoundError', detail: 'unknown scene' }, 404);
      if (scene.review_state !== 'pending') {
        return json({ error: 'ConflictError', detail: `scene already ${scene.review_state}` }, 409);
      }
      scene.review_state = body.verdict;
      scene.reviewer = body.reviewer;
      return json(scene);
    }

    if (method === 'POST' && (match = path.match(/^\/api\/captions\/([^/]+)\/review$/))) {
      const body = JSON.parse(String(init?.body)) as { verdict: 'approved' | 'rejected'; reviewer: string };
      const caption = state.captions.find((c) => c.caption_id === match![1]);
      if (!caption) return json({ error: 'NotFoundError', detail: 'unknown caption' }, 404);
      if (caption.status !== 'accepted' || caption.reviewer !== null) {
        return json({ error: 'ConflictError', detail: 'not awaiting human review' }, 409);
      }
      caption.status = body.verdict === 'approved' ? 'accepted' : 'rejected_by_human';
      caption.reviewer = body.reviewer;
      return json(caption);
    }

    if (method === 'POST' && path === '/api/rag/query') {
      const body = JSON.parse(String(init?.body)) as { question: string; k?: number; country?: string };
      const eligible = state.captions.filter(
        (c) =>
          c.status === 'accepted' &&
          (!body.country ||
            state.sites.find((s) => s.site_id === c.site_id)?.country === body.country),
      );
      if (eligible.length === 0) {
        return json({ error: 'GroundingUnavailableError', detail: 'no caption chunks matched' }, 422);
      }
      const hits = eligible.slice(0, body.k ?? 5);
      const answer: RagAnswer = {
        question: body.question,
        answer_text: `Grounded answer citing ${hits.map((h) => `[${h.site_id}]`).join(', ')}.`,
        cited_site_ids: hits.map((h) => h.site_id),
        hits_used: hits.map((h, i) => ({
          chunk_id: `chunk-${h.caption_id}`,
          site_id: h.site_id,
          site_name: h.site_id,
          country: state.sites.find((s) => s.site_id === h.site_id)?.country ?? 'CA',
          score: 1 - i * 0.05,
          text: h.text,
        })),
      };
      return json(answer);
    }

    return json({ error: 'NotFoundError', detail: `no route ${method} ${path}` }, 404);
  };

  return { fetchImpl, calls, state };
}

/** Normalize a recorded call to its documented endpoint pattern. */
export function normalizeCall(call: string): string {
  return call
    .replace(/\/api\/sites\/[^/ ]+\/scenes$/, '/api/sites/{id}/scenes')
    .replace(/\/api\/sites\/[^/ ]+\/captions$/, '/api/sites/{id}/captions')
    .replace(/\/api\/sites\/[^/ ]+$/, '/api/sites/{id}')
    .replace(/\/api\/scenes\/[^/ ]+\/review$/, '/api/scenes/{id}/review')
    .replace(/\/api\/scenes\/[^/ ]+\/rgb\.png$/, '/api/scenes/{id}/rgb.png')
    .replace(/\/api\/scenes\/[^/ ]+\/indices\/[^/ ]+\.png$/, '/api/scenes/{id}/indices/{name}.png')
    .replace(/\/api\/captions\/[^/ ]+\/review$/, '/api/captions/{id}/review');
}
