"""Builds complete offline fixture workspaces: catalog, dossiers, manifest, config."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from nudgex.config import load_config
from nudgex.eo import compute_bbox
from nudgex.pipeline import Pipeline
from nudgex.raster import GeoTransform, RasterGrid, write_geotiff

THREE_SITES = [
    {"site_id": "thompson-mine", "name": "Thompson Mine", "lat": 55.0, "lon": -98.0,
     "country": "CA", "commodities": "nickel"},
    {"site_id": "escondida", "name": "Escondida", "lat": -24.3, "lon": -69.1,
     "country": "CL", "commodities": "copper"},
    {"site_id": "super-pit", "name": "Super Pit", "lat": -30.8, "lon": 121.5,
     "country": "AU", "commodities": "gold"},
]

AUSTRALIAN_SITES = [
    {"site_id": "elliots-no-1-open-cut", "name": "Elliots No. 1 Open Cut", "lat": -32.5,
     "lon": 148.2, "country": "AU", "commodities": "zinc;lead;copper;silver;gold"},
    {"site_id": "northparkes", "name": "Northparkes Mine Project", "lat": -32.9,
     "lon": 148.1, "country": "AU", "commodities": "copper;gold"},
    {"site_id": "mary-kathleen", "name": "Mary Kathleen Mine", "lat": -20.8,
     "lon": 140.0, "country": "AU", "commodities": "uranium"},
]

DISTRACTOR_SITES = [
    {"site_id": f"distractor-{i}", "name": f"Distractor Mine {i}", "lat": 40.0 + i,
     "lon": -100.0 - i, "country": "US", "commodities": "coal"}
    for i in range(5)
]


def scene_grid(scene_id: str, site: dict, size: int = 48) -> RasterGrid:
    """Deterministic synthetic Sentinel-2 style raster seeded by scene id."""
    seed = int.from_bytes(hashlib.sha256(scene_id.encode()).digest()[:4], "little")
    rng = np.random.default_rng(seed)
    box = compute_bbox(site["lat"], site["lon"], 100.0)
    geo = GeoTransform(
        west=box.west,
        north=box.north,
        pixel_width=(box.north - box.south) / size,  # close enough for fixtures
        pixel_height=(box.north - box.south) / size,
    )
    bands = {
        band: rng.uniform(0.02, 0.6, (size, size)).astype(np.float32)
        for band in ("B02", "B03", "B04", "B08", "B11")
    }
    bands["SCL"] = np.full((size, size), 4, dtype=np.uint16)  # vegetation class
    return RasterGrid(bands, geo=geo)


@dataclass
class Workspace:
    base: Path
    data_root: Path
    sites_csv: Path
    dossier_dir: Path
    manifest: Path
    config_path: Path
    site_ids: list[str]
    scene_ids: dict[str, str]  # site_id -> the in-window scene id


def build_workspace(base: Path, sites: list[dict] | None = None, name: str = "data") -> Workspace:
    sites = sites if sites is not None else THREE_SITES
    base.mkdir(parents=True, exist_ok=True)
    data_root = base / name

    lines = ["site_id,name,lat,lon,country,commodities"]
    for s in sites:
        lines.append(f"{s['site_id']},{s['name']},{s['lat']},{s['lon']},{s['country']},{s['commodities']}")
    sites_csv = base / "sites.csv"
    sites_csv.write_text("\n".join(lines) + "\n", encoding="utf-8")

    dossier_dir = base / "dossiers"
    dossier_dir.mkdir(exist_ok=True)
    for s in sites:
        (dossier_dir / f"{s['site_id']}.md").write_text(
            f"## geology\nHost rock notes for {s['name']}.\n"
            f"## history\nProduction history of {s['name']}.\n"
            f"## controversies\nRecorded disputes near {s['name']}.\n"
            f"## sources\nhttps://example.org/{s['site_id']}\n",
            encoding="utf-8",
        )

    eo_dir = base / "eo"
    eo_dir.mkdir(exist_ok=True)
    manifest_rows = []
    scene_ids: dict[str, str] = {}
    for s in sites:
        good_id = f"s2-{s['site_id']}-good"
        cloudy_id = f"s2-{s['site_id']}-cloudy"
        scene_ids[s["site_id"]] = good_id
        for scene_id, cloud in ((good_id, 0.02), (cloudy_id, 0.40)):
            raster_name = f"{scene_id}.tif"
            (eo_dir / raster_name).write_bytes(write_geotiff(scene_grid(scene_id, s)))
            manifest_rows.append(json.dumps({
                "scene_id": scene_id,
                "sensed_at": "2024-06-15T10:30:00Z",
                "cloud_estimate": cloud,
                "raster_path": raster_name,
                "site_id": s["site_id"],
            }))
    manifest = eo_dir / "manifest.jsonl"
    manifest.write_text("\n".join(manifest_rows) + "\n", encoding="utf-8")

    config_path = base / "config.toml"
    config_path.write_text(
        "[data]\n"
        f'root = "{data_root.as_posix()}"\n\n'
        "[eo]\n"
        'provider = "fixture"\n'
        f'manifest = "{manifest.as_posix()}"\n',
        encoding="utf-8",
    )

    return Workspace(
        base=base,
        data_root=data_root,
        sites_csv=sites_csv,
        dossier_dir=dossier_dir,
        manifest=manifest,
        config_path=config_path,
        site_ids=[s["site_id"] for s in sites],
        scene_ids=scene_ids,
    )


def build_pipeline(workspace: Workspace, clock=None, **overrides) -> Pipeline:
    config = load_config(workspace.config_path)
    kwargs = {}
    if clock is not None:
        kwargs["clock"] = clock
    kwargs.update(overrides)
    return Pipeline(config, **kwargs)


def run_full_pipeline(pipeline: Pipeline, workspace: Workspace, reviewer: str = "fixture-artist"):
    """ingest -> acquire -> approve pending scenes -> caption -> judge -> index."""
    runs = [pipeline.ingest(workspace.sites_csv, workspace.dossier_dir)]
    runs.append(pipeline.acquire())
    for scene in pipeline.scenes.list_scenes(review_state="pending"):
        pipeline.review_scene(scene.scene_id, "approved", reviewer)
    runs.append(pipeline.caption())
    runs.append(pipeline.judge())
    runs.append(pipeline.rag_index())
    return runs


def tree_hash(root: Path) -> dict[str, str]:
    """Content hash per file under root (relative paths)."""
    hashes = {}
    for path in sorted(root.rglob("*")):
        if path.is_file():
            hashes[str(path.relative_to(root))] = hashlib.sha256(path.read_bytes()).hexdigest()
    return hashes
