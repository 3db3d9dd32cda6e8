// Browser wiring: renderer, panels, and event flow between the modules.

import * as THREE from 'three';
import { ApiClient } from './api';
import { buildGlobe, GlobeRotation } from './globe';
import { QueryConsole } from './query';
import { ReviewQueueController } from './queue';
import { toMarker } from './types';
import type { Caption, Scene, SiteDetail, SiteMarker } from './types';

const api = new ApiClient('');

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function setBanner(message: string | null, retry?: () => void): void {
  const banner = el<HTMLDivElement>('banner');
  banner.innerHTML = '';
  if (!message) {
    banner.hidden = true;
    return;
  }
  banner.hidden = false;
  banner.append(message);
  if (retry) {
    const button = document.createElement('button');
    button.textContent = 'retry';
    button.addEventListener('click', retry);
    banner.append(' ', button);
  }
}

async function showSite(siteId: string): Promise<void> {
  const panel = el<HTMLDivElement>('site-panel');
  panel.innerHTML = '<p class="muted">loading...</p>';
  let detail: SiteDetail;
  let scenes: Scene[];
  let captions: Caption[];
  try {
    [detail, scenes, captions] = await Promise.all([
      api.getSite(siteId),
      api.siteScenes(siteId),
      api.siteCaptions(siteId),
    ]);
  } catch (err) {
    panel.innerHTML = `<p class="error">could not load ${siteId}: ${String(err)}</p>`;
    return;
  }
  panel.innerHTML = '';
  const heading = document.createElement('h2');
  heading.textContent = `${detail.name} (${detail.country})`;
  panel.append(heading);
  const meta = document.createElement('p');
  meta.className = 'muted';
  meta.textContent = `${detail.latitude.toFixed(3)}, ${detail.longitude.toFixed(3)} - ${detail.commodities.join(', ')}`;
  panel.append(meta);

  for (const scene of scenes.filter((s) => s.review_state === 'approved')) {
    const figure = document.createElement('figure');
    const image = document.createElement('img');
    image.src = api.sceneRgbUrl(scene.scene_id);
    image.alt = `satellite view ${scene.scene_id}`;
    figure.append(image);
    const caption = captions.find(
      (c) => c.scene_id === scene.scene_id && c.status === 'accepted',
    );
    const figcaption = document.createElement('figcaption');
    figcaption.textContent = caption ? caption.text : 'no accepted caption yet';
    figure.append(figcaption);
    panel.append(figure);
  }

  if (detail.dossier) {
    for (const [label, text] of [
      ['geology', detail.dossier.geology],
      ['history', detail.dossier.history],
      ['controversies', detail.dossier.controversies],
    ] as const) {
      if (!text.trim()) continue;
      const section = document.createElement('details');
      const summary = document.createElement('summary');
      summary.textContent = label;
      section.append(summary);
      const body = document.createElement('p');
      body.textContent = text;
      section.append(body);
      panel.append(section);
    }
  }
}

function renderQueue(queue: ReviewQueueController): void {
  const list = el<HTMLDivElement>('queue-list');
  list.innerHTML = '';
  const notice = el<HTMLParagraphElement>('queue-notice');
  notice.textContent = queue.notice ?? '';
  if (queue.items.length === 0) {
    list.innerHTML = '<p class="muted">nothing awaiting review</p>';
    return;
  }
  for (const item of queue.items) {
    const row = document.createElement('div');
    row.className = 'queue-item';
    if (item.kind === 'scene') {
      const image = document.createElement('img');
      image.src = item.preview;
      image.alt = `scene ${item.id}`;
      row.append(image);
    } else {
      const text = document.createElement('p');
      text.textContent = item.preview;
      row.append(text);
    }
    const label = document.createElement('span');
    label.className = 'muted';
    label.textContent = `${item.kind} ${item.id} (${item.siteId})`;
    row.append(label);
    for (const verdict of ['approved', 'rejected'] as const) {
      const button = document.createElement('button');
      button.textContent = verdict === 'approved' ? 'approve' : 'reject';
      button.addEventListener('click', async () => {
        await queue.submit(item, verdict);
        renderQueue(queue);
      });
      row.append(button);
    }
    list.append(row);
  }
}

async function boot(): Promise<void> {
  const container = el<HTMLDivElement>('globe-container');
  const scene = new THREE.Scene();
  const camera = new THREE.PerspectiveCamera(
    45,
    container.clientWidth / container.clientHeight,
    0.1,
    100,
  );
  camera.position.set(0, 0, 3.2);
  const renderer = new THREE.WebGLRenderer({ antialias: true, alpha: true });
  renderer.setSize(container.clientWidth, container.clientHeight);
  container.append(renderer.domElement);

  const globe = buildGlobe();
  scene.add(globe.group);
  const rotation = new GlobeRotation(globe.group);

  const raycaster = new THREE.Raycaster();
  const pointer = new THREE.Vector2();
  let markers: SiteMarker[] = [];

  renderer.domElement.addEventListener('pointermove', (event) => {
    const bounds = renderer.domElement.getBoundingClientRect();
    pointer.x = ((event.clientX - bounds.left) / bounds.width) * 2 - 1;
    pointer.y = -((event.clientY - bounds.top) / bounds.height) * 2 + 1;
    raycaster.setFromCamera(pointer, camera);
    const hits = raycaster.intersectObjects([...globe.markers.values()]);
    rotation.paused = hits.length > 0;
    renderer.domElement.style.cursor = hits.length ? 'pointer' : 'default';
  });

  renderer.domElement.addEventListener('click', () => {
    raycaster.setFromCamera(pointer, camera);
    const hits = raycaster.intersectObjects([...globe.markers.values()]);
    const first = hits[0];
    if (first) {
      const siteId = first.object.userData.siteId as string;
      globe.highlight(siteId);
      void showSite(siteId);
    }
  });

  const queue = new ReviewQueueController(api, 'web-reviewer');
  const navigate = (siteId: string): void => {
    const marker = markers.find((m) => m.site_id === siteId);
    if (marker) {
      rotation.focusOn(marker.latitude, marker.longitude);
      globe.highlight(siteId);
    }
    void showSite(siteId);
  };
  const consoleCtl = new QueryConsole(api, navigate);

  async function loadSites(): Promise<void> {
    try {
      const sites = await api.listSites();
      markers = sites.map(toMarker);
      globe.setSites(markers);
      setBanner(null);
      el<HTMLParagraphElement>('globe-empty').hidden = markers.length > 0;
      await queue.refresh();
      renderQueue(queue);
    } catch (err) {
      setBanner(`API unreachable: ${String(err)}`, () => void loadSites());
    }
  }

  el<HTMLFormElement>('query-form').addEventListener('submit', (event) => {
    event.preventDefault();
    const question = el<HTMLInputElement>('query-question').value.trim();
    if (!question) return;
    const kRaw = el<HTMLInputElement>('query-k').value;
    const country = el<HTMLInputElement>('query-country').value.trim() || undefined;
    void consoleCtl
      .submit(question, kRaw ? Number(kRaw) : undefined, country)
      .then(() => renderSessions());
  });

  function renderSessions(): void {
    const scrollback = el<HTMLDivElement>('query-scrollback');
    scrollback.innerHTML = '';
    for (const session of consoleCtl.sessions) {
      const block = document.createElement('div');
      block.className = 'session';
      const question = document.createElement('p');
      question.className = 'question';
      question.textContent = `Q: ${session.question}`;
      block.append(question);
      if (session.error) {
        const error = document.createElement('p');
        error.className = 'error';
        error.textContent = session.error;
        block.append(error);
      } else if (session.answer) {
        const answer = document.createElement('p');
        answer.textContent = session.answer.answer_text;
        block.append(answer);
        const cites = document.createElement('p');
        cites.append('cited: ');
        for (const siteId of consoleCtl.citations(session)) {
          const link = document.createElement('button');
          link.className = 'citation';
          link.textContent = siteId;
          link.addEventListener('click', () => consoleCtl.clickCitation(siteId));
          cites.append(link);
        }
        block.append(cites);
      }
      scrollback.append(block);
    }
    scrollback.scrollTop = scrollback.scrollHeight;
  }

  const clock = new THREE.Clock();
  function animate(): void {
    requestAnimationFrame(animate);
    rotation.tick(clock.getDelta());
    renderer.render(scene, camera);
  }

  window.addEventListener('resize', () => {
    camera.aspect = container.clientWidth / container.clientHeight;
    camera.updateProjectionMatrix();
    renderer.setSize(container.clientWidth, container.clientHeight);
  });

  animate();
  await loadSites();
}

void boot();
