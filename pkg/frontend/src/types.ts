// Data shapes mirroring the gateway's JSON responses.

export interface Site {
  site_id: string;
  name: string;
  latitude: number;
  longitude: number;
  country: string;
  commodities: string[];
  created_at: string;
  has_accepted_caption: boolean;
}

export interface Dossier {
  geology: string;
  history: string;
  controversies: string;
  sources: string[];
}

export interface SiteDetail extends Site {
  dossier: Dossier | null;
}

export interface Quality {
  cloud_fraction: number;
  valid_fraction: number;
  contrast: number;
  auto_pass: boolean;
}

export interface Scene {
  scene_id: string;
  site_id: string;
  sensed_at: string;
  bands: string[];
  resolution_m: number;
  review_state: 'pending' | 'approved' | 'rejected';
  reviewer: string | null;
  reviewed_at: string | null;
  quality: Quality | null;
}

export interface Caption {
  caption_id: string;
  site_id: string;
  scene_id: string;
  text: string;
  model_id: string;
  prompt_hash: string;
  created_at: string;
  status: 'candidate' | 'accepted' | 'rejected_by_judge' | 'rejected_by_human';
  reviewer: string | null;
}

export interface RetrievalHit {
  chunk_id: string;
  site_id: string;
  site_name: string;
  country: string;
  score: number;
  text: string;
}

export interface RagAnswer {
  question: string;
  answer_text: string;
  cited_site_ids: string[];
  hits_used: RetrievalHit[];
}

export type Verdict = 'approved' | 'rejected';

export interface SiteMarker {
  site_id: string;
  latitude: number;
  longitude: number;
  name: string;
  has_accepted_caption: boolean;
}

export function toMarker(site: Site): SiteMarker {
  return {
    site_id: site.site_id,
    latitude: site.latitude,
    longitude: site.longitude,
    name: site.name,
    has_accepted_caption: site.has_accepted_caption,
  };
}
