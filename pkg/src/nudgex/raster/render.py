"""Deterministic raster rendering for the RGB-only captioning model and the UI."""

from __future__ import annotations

import io

import numpy as np
from PIL import Image

from .grid import RasterGrid
from .indices import IndexProduct

RGB_BANDS = ("B04", "B03", "B02")


def _stretch_channel(plane: np.ndarray, valid: np.ndarray, stretch: tuple[float, float]) -> np.ndarray:
    """Percentile stretch of one band to uint8; nodata and degenerate spread map to 0."""
    out = np.zeros(plane.shape, dtype=np.uint8)
    values = plane[valid]
    if values.size == 0:
        return out
    p_lo, p_hi = np.percentile(values.astype(np.float64), stretch)
    if p_hi <= p_lo:
        return out
    scaled = (plane.astype(np.float64) - p_lo) / (p_hi - p_lo)
    scaled = np.clip(scaled, 0.0, 1.0) * 255.0
    out[valid] = np.round(scaled[valid]).astype(np.uint8)
    return out


def render_rgb(grid: RasterGrid, stretch: tuple[float, float] = (2.0, 98.0)) -> bytes:
    """True-color PNG from B04/B03/B02 with a per-band percentile stretch."""
    valid = grid.valid_mask
    channels = [_stretch_channel(grid.band(b), valid, stretch) for b in RGB_BANDS]
    rgb = np.stack(channels, axis=-1)
    image = Image.fromarray(rgb, mode="RGB")
    buf = io.BytesIO()
    image.save(buf, format="PNG")
    return buf.getvalue()


def render_index_png(product: IndexProduct) -> bytes:
    """Grayscale PNG of an index plane, valid_range mapped to 0..255, nodata black."""
    lo, hi = product.valid_range
    plane = product.plane.astype(np.float64)
    valid = ~np.isnan(plane)
    out = np.zeros(plane.shape, dtype=np.uint8)
    if valid.any() and hi > lo:
        scaled = np.clip((plane - lo) / (hi - lo), 0.0, 1.0) * 255.0
        out[valid] = np.round(scaled[valid]).astype(np.uint8)
    image = Image.fromarray(out, mode="L")
    buf = io.BytesIO()
    image.save(buf, format="PNG")
    return buf.getvalue()
