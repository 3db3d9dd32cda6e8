// Review queue: API round-trips, conflict handling, endpoint discipline.

import { describe, expect, it } from 'vitest';

import { ApiClient, DOCUMENTED_ENDPOINTS } from '../src/api';
import { ReviewQueueController } from '../src/queue';
import { makeCaption, makeScene, makeSite, mockApi, normalizeCall, type MockState } from './helpers';

function setup() {
  const state: MockState = {
    sites: [makeSite('thompson-mine'), makeSite('super-pit', { country: 'AU' })],
    scenes: [
      makeScene('s2-pending', 'thompson-mine'),
      makeScene('s2-done', 'thompson-mine', { review_state: 'approved', reviewer: 'artist' }),
      makeScene('s2-au', 'super-pit'),
    ],
    captions: [
      makeCaption('cap-unreviewed', 'super-pit'),
      makeCaption('cap-human-ok', 'super-pit', { reviewer: 'curator' }),
      makeCaption('cap-rejected', 'thompson-mine', { status: 'rejected_by_judge' }),
    ],
  };
  const mock = mockApi(state);
  const api = new ApiClient('', mock.fetchImpl);
  return { state, mock, api, queue: new ReviewQueueController(api, 'web-reviewer') };
}

describe('review queue', () => {
  it('lists only pending scenes and unreviewed accepted captions', async () => {
    const { queue } = setup();
    await queue.refresh();
    const ids = queue.items.map((item) => `${item.kind}:${item.id}`).sort();
    expect(ids).toEqual(['caption:cap-unreviewed', 'scene:s2-au', 'scene:s2-pending']);
  });

  it('approving a pending scene posts the verdict and removes the item', async () => {
    const { queue, mock, state } = setup();
    await queue.refresh();
    const item = queue.items.find((i) => i.id === 's2-pending')!;
    const result = await queue.submit(item, 'approved');
    expect(result).toBe('done');
    expect(mock.calls).toContain('POST /api/scenes/s2-pending/review');
    expect(state.scenes.find((s) => s.scene_id === 's2-pending')?.review_state).toBe('approved');
    expect(queue.items.some((i) => i.id === 's2-pending')).toBe(false);
    await queue.refresh();
    expect(queue.items.some((i) => i.id === 's2-pending')).toBe(false);
  });

  it('caption rejection flows through the caption endpoint', async () => {
    const { queue, mock, state } = setup();
    await queue.refresh();
    const item = queue.items.find((i) => i.id === 'cap-unreviewed')!;
    await queue.submit(item, 'rejected');
    expect(mock.calls).toContain('POST /api/captions/cap-unreviewed/review');
    expect(state.captions.find((c) => c.caption_id === 'cap-unreviewed')?.status).toBe(
      'rejected_by_human',
    );
  });

  it('double submission from another tab surfaces a conflict notice and refreshes', async () => {
    const { queue, api } = setup();
    await queue.refresh();
    const item = queue.items.find((i) => i.id === 's2-pending')!;
    // someone else reviews it first
    await api.reviewScene('s2-pending', 'rejected', 'other-tab');
    const result = await queue.submit(item, 'approved');
    expect(result).toBe('conflict');
    expect(queue.notice).toMatch(/already reviewed/);
    expect(queue.items.some((i) => i.id === 's2-pending')).toBe(false);
  });

  it('network failure keeps the item queued with a retry notice', async () => {
    const { queue, state } = setup();
    await queue.refresh();
    const before = queue.items.length;
    state.failNetwork = true;
    const item = queue.items.find((i) => i.id === 's2-pending')!;
    const result = await queue.submit(item, 'approved');
    expect(result).toBe('retry');
    expect(queue.items.length).toBe(before);
    expect(queue.notice).toMatch(/retry/);
  });

  it('issues only documented gateway endpoints', async () => {
    const { queue, mock } = setup();
    await queue.refresh();
    const item = queue.items[0]!;
    await queue.submit(item, 'approved');
    const documented = new Set<string>(DOCUMENTED_ENDPOINTS);
    for (const call of mock.calls.map(normalizeCall)) {
      expect(documented.has(call), `undocumented endpoint used: ${call}`).toBe(true);
    }
  });
});
