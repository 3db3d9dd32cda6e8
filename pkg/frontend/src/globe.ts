// The rotating-earth scene: grey sphere, one orange disk per mining site.
// Scene-graph construction is renderer-free so tests can assert on it in node.

import * as THREE from 'three';
import type { SiteMarker } from './types';

export const GLOBE_RADIUS = 1.0;
export const MARKER_RADIUS = 0.02;
export const ROTATION_SPEED = 0.15; // radians per second, solemn

const EARTH_GREY = 0x5a5e63;
const GRID_GREY = 0x7a8088;
const MARKER_ORANGE = 0xf28322;
const MARKER_HIGHLIGHT = 0xffc04d;

export function latLonToVector3(latitude: number, longitude: number, radius = GLOBE_RADIUS): THREE.Vector3 {
  const lat = THREE.MathUtils.degToRad(latitude);
  const lon = THREE.MathUtils.degToRad(longitude);
  return new THREE.Vector3(
    radius * Math.cos(lat) * Math.cos(lon),
    radius * Math.sin(lat),
    -radius * Math.cos(lat) * Math.sin(lon),
  );
}

/** Euler angles (order XYZ, z = 0) that bring a site to face the +Z camera. */
export function focusRotationForSite(latitude: number, longitude: number): { x: number; y: number } {
  const v = latLonToVector3(latitude, longitude, 1);
  return {
    x: THREE.MathUtils.degToRad(latitude),
    y: -Math.atan2(v.x, v.z),
  };
}

export interface GlobeHandle {
  group: THREE.Group;
  sphere: THREE.Mesh;
  markerGroup: THREE.Group;
  markers: Map<string, THREE.Mesh>;
  setSites(sites: SiteMarker[]): void;
  highlight(siteId: string | null): void;
  dispose(): void;
}

export function buildGlobe(sites: SiteMarker[] = []): GlobeHandle {
  const group = new THREE.Group();
  group.rotation.order = 'XYZ';

  const sphere = new THREE.Mesh(
    new THREE.SphereGeometry(GLOBE_RADIUS, 48, 32),
    new THREE.MeshBasicMaterial({ color: EARTH_GREY }),
  );
  sphere.name = 'earth';
  group.add(sphere);

  const grid = new THREE.LineSegments(
    new THREE.WireframeGeometry(new THREE.SphereGeometry(GLOBE_RADIUS * 1.001, 18, 12)),
    new THREE.LineBasicMaterial({ color: GRID_GREY, transparent: true, opacity: 0.25 }),
  );
  grid.name = 'graticule';
  group.add(grid);

  const markerGroup = new THREE.Group();
  markerGroup.name = 'markers';
  group.add(markerGroup);

  const markers = new Map<string, THREE.Mesh>();

  function setSites(next: SiteMarker[]): void {
    for (const mesh of markers.values()) {
      markerGroup.remove(mesh);
      mesh.geometry.dispose();
      (mesh.material as THREE.Material).dispose();
    }
    markers.clear();
    for (const site of next) {
      const disk = new THREE.Mesh(
        new THREE.CircleGeometry(MARKER_RADIUS, 20),
        new THREE.MeshBasicMaterial({ color: MARKER_ORANGE, side: THREE.DoubleSide }),
      );
      const position = latLonToVector3(site.latitude, site.longitude, GLOBE_RADIUS * 1.005);
      disk.position.copy(position);
      disk.lookAt(position.clone().multiplyScalar(2));
      disk.name = `marker:${site.site_id}`;
      disk.userData = { siteId: site.site_id, siteName: site.name };
      markerGroup.add(disk);
      markers.set(site.site_id, disk);
    }
  }

  function highlight(siteId: string | null): void {
    for (const [id, mesh] of markers) {
      const material = mesh.material as THREE.MeshBasicMaterial;
      material.color.setHex(id === siteId ? MARKER_HIGHLIGHT : MARKER_ORANGE);
    }
  }

  function dispose(): void {
    setSites([]);
    sphere.geometry.dispose();
    (sphere.material as THREE.Material).dispose();
    grid.geometry.dispose();
    (grid.material as THREE.Material).dispose();
  }

  setSites(sites);
  return { group, sphere, markerGroup, markers, setSites, highlight, dispose };
}

/** Rotation state: steady spin, paused on hover, eased focus on citation clicks. */
export class GlobeRotation {
  paused = false;
  private focusTarget: { x: number; y: number } | null = null;

  constructor(private readonly group: THREE.Group) {}

  focusOn(latitude: number, longitude: number): void {
    this.focusTarget = focusRotationForSite(latitude, longitude);
  }

  clearFocus(): void {
    this.focusTarget = null;
  }

  get focusing(): boolean {
    return this.focusTarget !== null;
  }

  tick(deltaSeconds: number): void {
    if (this.focusTarget) {
      const ease = Math.min(1, deltaSeconds * 4);
      this.group.rotation.y += (this.focusTarget.y - this.group.rotation.y) * ease;
      this.group.rotation.x += (this.focusTarget.x - this.group.rotation.x) * ease;
      const done =
        Math.abs(this.focusTarget.y - this.group.rotation.y) < 1e-3 &&
        Math.abs(this.focusTarget.x - this.group.rotation.x) < 1e-3;
      if (done) this.focusTarget = null;
      return;
    }
    if (!this.paused) {
      this.group.rotation.y += ROTATION_SPEED * deltaSeconds;
    }
  }
}
