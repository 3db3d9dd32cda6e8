"""Acceptance suite: one test per release criterion, each printing PASS/FAIL.

Run with ``pytest -v -s tests/test_acceptance.py`` to see the per-criterion
lines. Every check runs fully offline against stub providers, at the
scale and tolerance the criterion states.
"""

import itertools
import math
import random
import time
from contextlib import contextmanager
from datetime import datetime, timezone

import numpy as np
import pytest

from nudgex.eo import compute_bbox
from nudgex.judge import gate
from nudgex.providers import StubRagChatClient
from nudgex.raster import RasterGrid, compute_index, read_geotiff, write_geotiff
from nudgex.ragstore import (
    ChunkRecord,
    EmbeddingVector,
    StubEmbeddingClient,
    VectorIndex,
    answer,
    stub_embed,
)

from conftest import make_grid
from fixture_workspace import (
    AUSTRALIAN_SITES,
    DISTRACTOR_SITES,
    build_pipeline,
    build_workspace,
    run_full_pipeline,
    tree_hash,
)

R_KM = 6371.0088
FIXED = datetime(2025, 1, 15, 12, 0, 0, tzinfo=timezone.utc)


@contextmanager
def criterion(name: str, budget_s: float):
    start = time.perf_counter()
    try:
        yield
    except BaseException:
        print(f"[acceptance] {name}: FAIL")
        raise
    elapsed = time.perf_counter() - start
    assert elapsed < budget_s, f"{name} took {elapsed:.2f}s, budget {budget_s}s"
    print(f"[acceptance] {name}: PASS ({elapsed:.2f}s)")


def haversine_km(lat1, lon1, lat2, lon2):
    p1, p2 = math.radians(lat1), math.radians(lat2)
    a = (
        math.sin((p2 - p1) / 2) ** 2
        + math.cos(p1) * math.cos(p2) * math.sin(math.radians(lon2 - lon1) / 2) ** 2
    )
    return 2 * R_KM * math.asin(math.sqrt(a))


def test_bounding_box_geodesy():
    with criterion("bounding-box geodesy", budget_s=1.0):
        for lat in (0.0, 30.0, -30.0, 55.0, -55.0, 65.0, -65.0):
            box = compute_bbox(lat, 17.5, 100.0)
            parts = box.parts()
            sides = []
            for edge_lat in (box.north, box.south):
                sides.append(sum(haversine_km(edge_lat, w, edge_lat, e) for w, _s, e, _n in parts))
            for lon in (parts[0][0], parts[-1][2]):
                sides.append(haversine_km(box.south, lon, box.north, lon))
            for side in sides:
                assert abs(side - 10.0) <= 0.1, (lat, side)
            area = sum(
                R_KM**2 * math.radians(e - w)
                * (math.sin(math.radians(n)) - math.sin(math.radians(s)))
                for w, s, e, n in parts
            )
            assert abs(area - 100.0) <= 1.0, (lat, area)


def test_index_formula_oracle():
    with criterion("index oracle (1000 random pixels)", budget_s=1.0):
        rng = np.random.default_rng(7)
        shape = (25, 40)  # 1000 pixels
        planes = {
            band: rng.uniform(0.01, 1.0, shape).astype(np.float32)
            for band in ("B02", "B03", "B04", "B08", "B11")
        }
        grid = RasterGrid(dict(planes))

        def nd(a, b):
            return None if a + b == 0 else (a - b) / (a + b)

        oracles = {
            "NDVI": lambda p: nd(p["B08"], p["B04"]),
            "NDWI": lambda p: nd(p["B03"], p["B08"]),
            "NDBI": lambda p: nd(p["B11"], p["B08"]),
            "BSI": lambda p: nd(p["B11"] + p["B04"], p["B08"] + p["B02"]),
            "IRONOX": lambda p: None if p["B02"] == 0 else p["B04"] / p["B02"],
        }
        for name, oracle in oracles.items():
            product = compute_index(grid, name)
            lo, hi = product.valid_range
            plane = product.plane
            for row in range(shape[0]):
                for col in range(shape[1]):
                    px = {b: float(planes[b][row, col]) for b in planes}
                    expected = oracle(px)
                    if expected is None or not lo <= expected <= hi:
                        assert np.isnan(plane[row, col])
                    else:
                        assert abs(float(plane[row, col]) - expected) <= 1e-6

        # singular and nodata pixels propagate to nodata
        zeros = np.zeros((4, 4), dtype=np.float32)
        singular = RasterGrid({"B08": zeros, "B04": zeros})
        assert np.isnan(compute_index(singular, "NDVI").plane).all()
        mask = np.zeros((4, 4), dtype=bool)
        mask[0] = True
        masked = make_grid(size=4, nodata_mask=mask)
        assert np.isnan(compute_index(masked, "NDVI").plane[0]).all()


def test_geotiff_round_trip():
    with criterion("GeoTIFF round-trip (50 grids)", budget_s=5.0):
        for seed in range(50):
            rng = np.random.default_rng(seed)
            size = int(rng.integers(4, 40))
            mask = rng.random((size, size)) < 0.15 if seed % 2 == 0 else None
            grid = make_grid(size=size, seed=seed, nodata_mask=mask)
            again = read_geotiff(write_geotiff(grid))
            assert again == grid  # bit-level plane equality + mask + geo
            assert np.array_equal(again.nodata_mask, grid.nodata_mask)


def test_judge_gate_truth_table():
    with criterion("judge gate truth table (3125 vectors)", budget_s=1.0):
        def brute_force(scores):
            return sum(scores) / 5 >= 4.0 and min(scores) >= 3

        for scores in itertools.product(range(1, 6), repeat=5):
            expected = brute_force(scores)
            assert gate(list(scores)) == expected, scores
            if expected:
                continue
        for scores in itertools.product(range(1, 6), repeat=5):
            if gate(list(scores)):
                for i in range(5):
                    if scores[i] < 5:
                        bumped = list(scores)
                        bumped[i] += 1
                        assert gate(bumped), (scores, i)


def _random_unit(rng: np.random.Generator, dim: int) -> EmbeddingVector:
    values = rng.standard_normal(dim)
    values = values / np.linalg.norm(values)
    v32 = values.astype(np.float32)
    v32 = (v32 / np.linalg.norm(v32.astype(np.float64))).astype(np.float32)
    return EmbeddingVector(v32)


def test_retrieval_exactness(tmp_path):
    with criterion("retrieval exactness (1000 vectors, 100 queries)", budget_s=10.0):
        rng = np.random.default_rng(2024)
        index = VectorIndex(tmp_path / "rag-root", dim=384)
        records = [
            ChunkRecord(
                chunk_id=f"c{i:04d}", caption_id=f"cap{i:04d}", site_id=f"site-{i % 37}",
                country="AU" if i % 3 == 0 else "CA", site_name=f"Site {i}",
                text=f"caption {i}", vector=_random_unit(rng, 384),
            )
            for i in range(1000)
        ]
        index.upsert_many(records)

        def brute_force(query: EmbeddingVector, k: int):
            q64 = query.values.astype(np.float64)
            scored = [
                (float(np.dot(r.vector.values.astype(np.float64), q64)), r.chunk_id)
                for r in records
            ]
            scored.sort(key=lambda pair: (-pair[0], pair[1]))
            return scored[:k]

        queries = [_random_unit(rng, 384) for _ in range(100)]
        for query in queries:
            for k in (1, 5, 10):
                hits = index.search(query, k)
                oracle = brute_force(query, k)
                assert [h.chunk.chunk_id for h in hits] == [cid for _s, cid in oracle]
                for hit, (score, _cid) in zip(hits, oracle):
                    assert abs(hit.score - score) <= 1e-6

        reloaded = VectorIndex(tmp_path / "rag-root", dim=384)
        for query in queries:
            original = index.search(query, 10)
            again = reloaded.search(query, 10)
            assert [h.chunk.chunk_id for h in again] == [h.chunk.chunk_id for h in original]
            for a, b in zip(again, original):
                assert abs(a.score - b.score) <= 1e-6


def test_end_to_end_pipeline_reproduction(tmp_path):
    with criterion("end-to-end fixture pipeline (two identical runs)", budget_s=30.0):
        hashes = []
        for name in ("run-one", "run-two"):
            workspace = build_workspace(tmp_path / name)
            pipeline = build_pipeline(workspace, clock=lambda: FIXED)
            runs = run_full_pipeline(pipeline, workspace)
            assert not any(run.errored for run in runs)
            for site_id in workspace.site_ids:
                approved = pipeline.scenes.list_scenes(site_id=site_id, review_state="approved")
                assert len(approved) == 1, f"{site_id}: expected one approved scene"
                accepted = pipeline.captions.list(site_id=site_id, status="accepted")
                assert len(accepted) == 1, f"{site_id}: expected one accepted caption"
                pair_dir = pipeline.data_root / "pairs" / site_id / approved[0].scene_id
                assert (pair_dir / "image.png").exists()
                assert (pair_dir / "caption.txt").exists()
            assert pipeline.index.count == len(workspace.site_ids)
            hashes.append(tree_hash(pipeline.data_root))
        assert hashes[0] == hashes[1], "two runs must yield byte-identical outputs"


def test_australia_query_structure(tmp_path):
    with criterion("Australia query reproduction", budget_s=5.0):
        index = VectorIndex(tmp_path / "au-root", dim=384)
        records = []
        for spec in AUSTRALIAN_SITES + DISTRACTOR_SITES:
            text = (
                f"{spec['name']} shows disturbed ground from "
                f"{spec['commodities'].replace(';', ', ')} extraction."
            )
            records.append(ChunkRecord(
                chunk_id=f"chunk-{spec['site_id']}",
                caption_id=f"cap-{spec['site_id']}",
                site_id=spec["site_id"],
                country=spec["country"],
                site_name=spec["name"],
                text=text,
                vector=stub_embed(text),
            ))
        index.upsert_many(records)
        assert index.count == 8

        result = answer(
            "How do mining operations in Australia impact the environment? "
            "Elaborate on specific examples.",
            index,
            StubEmbeddingClient(),
            StubRagChatClient(),
            model_id="deepseek-chat",
            k=3,
            filter_fn=lambda record: record.country == "AU",
        )
        expected = {s["site_id"] for s in AUSTRALIAN_SITES}
        assert {h.chunk.site_id for h in result.hits_used} == expected
        assert set(result.cited_site_ids) == expected
        assert len(result.hits_used) == 3


def test_stage_idempotence(tmp_path):
    with criterion("stage idempotence (tree-hash equality)", budget_s=30.0):
        workspace = build_workspace(tmp_path / "idem")
        pipeline = build_pipeline(workspace, clock=lambda: FIXED)
        run_full_pipeline(pipeline, workspace)
        before = tree_hash(pipeline.data_root)

        fresh = build_pipeline(workspace, clock=lambda: FIXED)
        fresh.ingest(workspace.sites_csv, workspace.dossier_dir)
        fresh.acquire()
        fresh.caption()
        fresh.judge()
        fresh.rag_index()
        after = tree_hash(fresh.data_root)
        assert after == before, "re-running stages must change zero bytes"
