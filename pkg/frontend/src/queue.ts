// One worklist for both human checks: pending scenes (image review) and
// judge-accepted captions awaiting the human pass (text review).

import { ApiClient, ApiError } from './api';
import type { Caption, Scene, Verdict } from './types';

export interface ReviewItem {
  kind: 'scene' | 'caption';
  id: string;
  siteId: string;
  /** PNG URL for scenes, caption text for captions. */
  preview: string;
  state: string;
}

export function sceneItem(scene: Scene, api: ApiClient): ReviewItem {
  return {
    kind: 'scene',
    id: scene.scene_id,
    siteId: scene.site_id,
    preview: api.sceneRgbUrl(scene.scene_id),
    state: scene.review_state,
  };
}

export function captionItem(caption: Caption): ReviewItem {
  return {
    kind: 'caption',
    id: caption.caption_id,
    siteId: caption.site_id,
    preview: caption.text,
    state: caption.status,
  };
}

export function buildQueue(scenes: Scene[], captions: Caption[], api: ApiClient): ReviewItem[] {
  const items: ReviewItem[] = [];
  for (const scene of scenes) {
    if (scene.review_state === 'pending') items.push(sceneItem(scene, api));
  }
  for (const caption of captions) {
    if (caption.status === 'accepted' && caption.reviewer === null) {
      items.push(captionItem(caption));
    }
  }
  return items;
}

export type SubmitResult = 'done' | 'conflict' | 'retry';

export class ReviewQueueController {
  items: ReviewItem[] = [];
  notice: string | null = null;

  constructor(
    private readonly api: ApiClient,
    private readonly reviewer: string,
  ) {}

  async refresh(): Promise<void> {
    const sites = await this.api.listSites();
    const scenes: Scene[] = [];
    const captions: Caption[] = [];
    for (const site of sites) {
      scenes.push(...(await this.api.siteScenes(site.site_id)));
      captions.push(...(await this.api.siteCaptions(site.site_id)));
    }
    this.items = buildQueue(scenes, captions, this.api);
  }

  /** Submit a verdict; the item leaves the queue only when the API accepts it. */
  async submit(item: ReviewItem, verdict: Verdict): Promise<SubmitResult> {
    try {
      if (item.kind === 'scene') {
        await this.api.reviewScene(item.id, verdict, this.reviewer);
      } else {
        await this.api.reviewCaption(item.id, verdict, this.reviewer);
      }
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        this.notice = `${item.kind} ${item.id} was already reviewed elsewhere`;
        await this.refresh();
        return 'conflict';
      }
      this.notice = `could not submit review for ${item.id}; it stays queued - retry`;
      return 'retry';
    }
    this.items = this.items.filter((queued) => queued.id !== item.id);
    this.notice = null;
    return 'done';
  }
}
