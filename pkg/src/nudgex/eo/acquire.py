"""Scene acquisition: provider clients, constraint filtering, quality metrics, review.

Two provider implementations sit behind one interface: a fixture provider
reading a local JSONL manifest plus raster files (used by every test), and
a live HTTP search client exercised only manually against a real endpoint.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Optional, Protocol

import httpx
import numpy as np

from ..errors import ConflictError, NotFoundError, TransportError, ValidationError
from ..raster import RasterGrid, read_geotiff
from .geometry import AcquisitionPlan

CLOUD_SCL_CLASSES = (8, 9, 10)  # cloud medium/high probability, thin cirrus
BRIGHTNESS_CLOUD_THRESHOLD = 0.30
REVIEW_STATES = ("pending", "approved", "rejected")

Clock = Callable[[], datetime]


def utc_now() -> datetime:
    return datetime.now(timezone.utc)


def _parse_dt(value: str) -> datetime:
    dt = datetime.fromisoformat(value.replace("Z", "+00:00"))
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt


@dataclass(frozen=True)
class QualityReport:
    cloud_fraction: float
    valid_fraction: float
    contrast: float
    auto_pass: bool

    def to_json(self) -> dict:
        return {
            "cloud_fraction": self.cloud_fraction,
            "valid_fraction": self.valid_fraction,
            "contrast": self.contrast,
            "auto_pass": self.auto_pass,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "QualityReport":
        return cls(
            cloud_fraction=obj["cloud_fraction"],
            valid_fraction=obj["valid_fraction"],
            contrast=obj["contrast"],
            auto_pass=obj["auto_pass"],
        )


@dataclass(frozen=True)
class SceneCandidate:
    """What a provider search returns before any raster is fetched."""

    scene_id: str
    sensed_at: datetime
    cloud_estimate: float
    raster_ref: str
    site_id: Optional[str] = None


@dataclass(frozen=True)
class SceneAsset:
    scene_id: str
    site_id: str
    sensed_at: datetime
    bands: tuple[str, ...]
    resolution_m: float
    raster_ref: str
    quality: Optional[QualityReport]
    review_state: str = "pending"
    reviewer: Optional[str] = None
    reviewed_at: Optional[datetime] = None

    def to_json(self) -> dict:
        return {
            "scene_id": self.scene_id,
            "site_id": self.site_id,
            "sensed_at": self.sensed_at.isoformat(),
            "bands": list(self.bands),
            "resolution_m": self.resolution_m,
            "raster_ref": self.raster_ref,
            "quality": self.quality.to_json() if self.quality else None,
            "review_state": self.review_state,
            "reviewer": self.reviewer,
            "reviewed_at": self.reviewed_at.isoformat() if self.reviewed_at else None,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SceneAsset":
        return cls(
            scene_id=obj["scene_id"],
            site_id=obj["site_id"],
            sensed_at=datetime.fromisoformat(obj["sensed_at"]),
            bands=tuple(obj["bands"]),
            resolution_m=obj["resolution_m"],
            raster_ref=obj["raster_ref"],
            quality=QualityReport.from_json(obj["quality"]) if obj.get("quality") else None,
            review_state=obj["review_state"],
            reviewer=obj.get("reviewer"),
            reviewed_at=datetime.fromisoformat(obj["reviewed_at"]) if obj.get("reviewed_at") else None,
        )


class EOProvider(Protocol):
    def search(self, plan: AcquisitionPlan) -> list[SceneCandidate]: ...

    def read_raster(self, candidate: SceneCandidate) -> bytes: ...


class FixtureProvider:
    """Offline provider: JSONL manifest rows of
    {scene_id, sensed_at, cloud_estimate, raster_path[, site_id]}."""

    def __init__(self, manifest_path: Path | str):
        self.manifest_path = Path(manifest_path)
        self._base = self.manifest_path.parent

    def search(self, plan: AcquisitionPlan) -> list[SceneCandidate]:
        if not self.manifest_path.exists():
            raise TransportError(f"fixture manifest missing: {self.manifest_path}")
        candidates = []
        for line in self.manifest_path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            row = json.loads(line)
            candidates.append(
                SceneCandidate(
                    scene_id=row["scene_id"],
                    sensed_at=_parse_dt(row["sensed_at"]),
                    cloud_estimate=float(row["cloud_estimate"]),
                    raster_ref=row["raster_path"],
                    site_id=row.get("site_id"),
                )
            )
        return candidates

    def read_raster(self, candidate: SceneCandidate) -> bytes:
        path = self._base / candidate.raster_ref
        if not path.exists():
            raise TransportError(f"fixture raster missing: {path}")
        return path.read_bytes()


class HttpSearchProvider:
    """Live scene-search client; holds a bearer token from the environment."""

    def __init__(
        self,
        base_url: str,
        token_env: str = "NUDGEX_EO_TOKEN",
        client: Optional[httpx.Client] = None,
        timeout: float = 30.0,
    ):
        self.base_url = base_url.rstrip("/")
        headers = {}
        token = os.environ.get(token_env, "")
        if token:
            headers["Authorization"] = f"Bearer {token}"
        self._client = client or httpx.Client(timeout=timeout, headers=headers)

    def search(self, plan: AcquisitionPlan) -> list[SceneCandidate]:
        payload = {
            "bbox": [list(part) for part in plan.bbox.parts()],
            "date_start": plan.date_start.isoformat(),
            "date_end": plan.date_end.isoformat(),
            "max_cloud_fraction": plan.max_cloud_fraction,
            "months": sorted(plan.allowed_months),
        }
        try:
            response = self._client.post(f"{self.base_url}/search", json=payload)
            response.raise_for_status()
        except httpx.HTTPError as exc:
            raise TransportError(f"scene search failed: {exc}") from exc
        scenes = response.json().get("scenes", [])
        return [
            SceneCandidate(
                scene_id=row["scene_id"],
                sensed_at=_parse_dt(row["sensed_at"]),
                cloud_estimate=float(row["cloud_estimate"]),
                raster_ref=row["raster_url"],
                site_id=row.get("site_id"),
            )
            for row in scenes
        ]

    def read_raster(self, candidate: SceneCandidate) -> bytes:
        try:
            response = self._client.get(candidate.raster_ref)
            response.raise_for_status()
        except httpx.HTTPError as exc:
            raise TransportError(f"raster fetch failed: {exc}") from exc
        return response.content


def assess_quality(grid: RasterGrid, max_cloud_fraction: float) -> QualityReport:
    """Cloud/valid/contrast metrics from the SCL plane (brightness fallback)."""
    total = grid.width * grid.height
    if grid.has_band("SCL"):
        scl = grid.band("SCL")
        valid = scl != 0  # masked pixels are normalized to class 0
    else:
        valid = grid.valid_mask
    n_valid = int(valid.sum())
    valid_fraction = n_valid / total if total else 0.0

    if n_valid == 0:
        cloud_fraction = 0.0
    elif grid.has_band("SCL"):
        cloudy = np.isin(grid.band("SCL"), CLOUD_SCL_CLASSES) & valid
        cloud_fraction = float(cloudy.sum()) / n_valid
    else:
        bright = valid.copy()
        for band in ("B02", "B03", "B04"):
            bright &= grid.band(band) > BRIGHTNESS_CLOUD_THRESHOLD
        cloud_fraction = float(bright.sum()) / n_valid

    red = grid.band("B04")
    red_values = red[valid & ~np.isnan(red)]
    if red_values.size:
        p2, p98 = np.percentile(red_values.astype(np.float64), [2.0, 98.0])
        contrast = float(max(p98 - p2, 0.0))
    else:
        contrast = 0.0

    return QualityReport(
        cloud_fraction=cloud_fraction,
        valid_fraction=valid_fraction,
        contrast=contrast,
        auto_pass=(cloud_fraction <= max_cloud_fraction) and (valid_fraction >= 0.95),
    )


class SceneStore:
    """File-backed scene storage: ``scenes/<id>/bands.tif`` + ``meta.json``."""

    def __init__(self, root: Path | str, clock: Clock = utc_now):
        self.root = Path(root)
        self.clock = clock
        self._dir = self.root / "scenes"
        self._lock = threading.Lock()

    def _scene_dir(self, scene_id: str) -> Path:
        return self._dir / scene_id

    def exists(self, scene_id: str) -> bool:
        return (self._scene_dir(scene_id) / "meta.json").exists()

    def add_scene(self, asset: SceneAsset, raster_bytes: bytes) -> None:
        with self._lock:
            scene_dir = self._scene_dir(asset.scene_id)
            scene_dir.mkdir(parents=True, exist_ok=True)
            (scene_dir / "bands.tif").write_bytes(raster_bytes)
            self._write_meta(asset)

    def _write_meta(self, asset: SceneAsset) -> None:
        scene_dir = self._scene_dir(asset.scene_id)
        tmp = scene_dir / ".meta.json.tmp"
        tmp.write_text(json.dumps(asset.to_json(), sort_keys=True, indent=2) + "\n", encoding="utf-8")
        tmp.replace(scene_dir / "meta.json")

    def get_scene(self, scene_id: str) -> SceneAsset:
        path = self._scene_dir(scene_id) / "meta.json"
        if not path.exists():
            raise NotFoundError(f"unknown scene: {scene_id}")
        return SceneAsset.from_json(json.loads(path.read_text(encoding="utf-8")))

    def load_grid(self, scene_id: str) -> RasterGrid:
        path = self._scene_dir(scene_id) / "bands.tif"
        if not path.exists():
            raise NotFoundError(f"raster missing for scene: {scene_id}")
        return read_geotiff(path.read_bytes())

    def list_scenes(
        self, site_id: Optional[str] = None, review_state: Optional[str] = None
    ) -> list[SceneAsset]:
        if not self._dir.exists():
            return []
        assets = []
        for meta in sorted(self._dir.glob("*/meta.json")):
            asset = SceneAsset.from_json(json.loads(meta.read_text(encoding="utf-8")))
            if site_id is not None and asset.site_id != site_id:
                continue
            if review_state is not None and asset.review_state != review_state:
                continue
            assets.append(asset)
        return sorted(assets, key=lambda a: a.scene_id)

    def review(self, scene_id: str, verdict: str, reviewer: str) -> SceneAsset:
        """Single pending -> approved/rejected transition (compare-and-set)."""
        if verdict not in ("approved", "rejected"):
            raise ValidationError(f"verdict must be approved or rejected, got {verdict!r}")
        if not reviewer:
            raise ValidationError("reviewer must be non-empty")
        with self._lock:
            asset = self.get_scene(scene_id)
            if asset.review_state != "pending":
                raise ConflictError(
                    f"scene {scene_id} already reviewed ({asset.review_state})"
                )
            updated = replace(
                asset, review_state=verdict, reviewer=reviewer, reviewed_at=self.clock()
            )
            self._write_meta(updated)
            return updated


def fetch_scenes(
    plan: AcquisitionPlan,
    provider: EOProvider,
    store: SceneStore,
) -> list[SceneAsset]:
    """Fetch, filter, quality-score and persist candidate scenes (pending review).

    Already-stored scenes are returned as-is, which keeps repeated
    acquisition runs from rewriting bytes.
    """
    candidates = provider.search(plan)
    assets: list[SceneAsset] = []
    for candidate in sorted(candidates, key=lambda c: c.scene_id):
        if candidate.site_id is not None and candidate.site_id != plan.site_id:
            continue
        sensed_date = candidate.sensed_at.date()
        if not plan.date_start <= sensed_date <= plan.date_end:
            continue
        if sensed_date.month not in plan.allowed_months:
            continue
        if candidate.cloud_estimate > plan.max_cloud_fraction:
            continue

        if store.exists(candidate.scene_id):
            assets.append(store.get_scene(candidate.scene_id))
            continue

        raster_bytes = provider.read_raster(candidate)
        grid = read_geotiff(raster_bytes)
        quality = assess_quality(grid, plan.max_cloud_fraction)
        asset = SceneAsset(
            scene_id=candidate.scene_id,
            site_id=plan.site_id,
            sensed_at=candidate.sensed_at,
            bands=tuple(sorted(grid.bands)),
            resolution_m=grid.resolution_m,
            raster_ref=f"scenes/{candidate.scene_id}/bands.tif",
            quality=quality,
            review_state="pending",
        )
        store.add_scene(asset, raster_bytes)
        assets.append(asset)
    return assets
