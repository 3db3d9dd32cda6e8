"""Shared fixtures: deterministic clock, synthetic grids, fixture data roots."""

from __future__ import annotations

from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import pytest

from nudgex.raster import GeoTransform, RasterGrid

FIXED_TIME = datetime(2025, 1, 15, 12, 0, 0, tzinfo=timezone.utc)


@pytest.fixture
def fixed_clock():
    return lambda: FIXED_TIME


def make_grid(
    size: int = 16,
    bands: dict[str, float] | None = None,
    scl_class: int = 4,
    nodata_mask: np.ndarray | None = None,
    seed: int | None = None,
    geo: GeoTransform | None = None,
) -> RasterGrid:
    """Small synthetic grid; constant bands unless a seed asks for random ones."""
    shape = (size, size)
    if bands is None:
        bands = {"B02": 0.08, "B03": 0.10, "B04": 0.12, "B08": 0.30, "B11": 0.20}
    planes: dict[str, np.ndarray] = {}
    rng = np.random.default_rng(seed) if seed is not None else None
    for band_id, value in bands.items():
        if rng is not None:
            planes[band_id] = rng.uniform(0.0, 1.0, shape).astype(np.float32)
        else:
            planes[band_id] = np.full(shape, value, dtype=np.float32)
    planes["SCL"] = np.full(shape, scl_class, dtype=np.uint16)
    return RasterGrid(
        planes,
        nodata_mask=nodata_mask,
        geo=geo or GeoTransform(west=10.0, north=50.0, pixel_width=0.001, pixel_height=0.001),
    )


@pytest.fixture
def data_root(tmp_path: Path) -> Path:
    root = tmp_path / "data"
    root.mkdir()
    return root
