"""In-memory multi-band raster with a shared nodata mask and geo placement."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np

from ..errors import DimensionError, MissingBandError, ValidationError

# Sentinel-2 scene classification band: kept as class codes, never scaled.
SCL_BAND = "SCL"
# Class-code planes that stay uint16 (everything else is float32 reflectance).
CLASS_BANDS = frozenset({SCL_BAND})

EARTH_RADIUS_M = 6371008.8


@dataclass(frozen=True)
class GeoTransform:
    """Pixel grid placement: origin at the top-left corner, north-up."""

    west: float           # longitude of the left edge, degrees
    north: float          # latitude of the top edge, degrees
    pixel_width: float    # degrees per pixel, positive eastward
    pixel_height: float   # degrees per pixel, positive southward

    def __post_init__(self):
        if self.pixel_width <= 0 or self.pixel_height <= 0:
            raise ValidationError("pixel sizes must be positive")


class RasterGrid:
    """Band planes sharing one shape, one nodata mask and one geotransform.

    Reflectance planes are float32 (nominal [0, 1] after DN/10000 scaling);
    class-code planes (SCL) are uint16. Pixels under the nodata mask are
    normalized to the sentinel (NaN for float planes, 0 for class planes)
    so serialization is reproducible.
    """

    def __init__(
        self,
        bands: Mapping[str, np.ndarray],
        nodata_mask: Optional[np.ndarray] = None,
        geo: Optional[GeoTransform] = None,
        crs_epsg: int = 4326,
    ):
        if not bands:
            raise ValidationError("grid needs at least one band")
        planes: dict[str, np.ndarray] = {}
        shape: Optional[tuple[int, int]] = None
        for band_id, plane in bands.items():
            arr = np.asarray(plane)
            if arr.ndim != 2:
                raise DimensionError(f"band {band_id} is not a 2-D plane")
            if shape is None:
                shape = arr.shape
            elif arr.shape != shape:
                raise DimensionError(
                    f"band {band_id} shape {arr.shape} differs from {shape}"
                )
            if band_id in CLASS_BANDS:
                planes[band_id] = arr.astype(np.uint16, copy=True)
            else:
                planes[band_id] = arr.astype(np.float32, copy=True)

        assert shape is not None
        self.height, self.width = int(shape[0]), int(shape[1])

        if nodata_mask is None:
            mask = np.zeros(shape, dtype=bool)
        else:
            mask = np.asarray(nodata_mask)
            if mask.shape != shape:
                raise DimensionError(f"nodata_mask shape {mask.shape} differs from {shape}")
            mask = mask.astype(bool, copy=True)

        for band_id, plane in planes.items():
            if plane.dtype == np.float32 and np.isnan(plane[~mask]).any():
                raise ValidationError(f"band {band_id} has NaN outside the nodata mask")

        # normalize masked pixels to the declared sentinel values
        if mask.any():
            for plane in planes.values():
                if plane.dtype == np.float32:
                    plane[mask] = np.float32(np.nan)
                else:
                    plane[mask] = 0

        self.bands = planes
        self.nodata_mask = mask
        self.geo = geo or GeoTransform(west=0.0, north=0.0, pixel_width=1e-4, pixel_height=1e-4)
        self.crs_epsg = int(crs_epsg)

    def band(self, band_id: str) -> np.ndarray:
        try:
            return self.bands[band_id]
        except KeyError:
            raise MissingBandError(f"band {band_id} not present (have: {sorted(self.bands)})") from None

    def has_band(self, band_id: str) -> bool:
        return band_id in self.bands

    @property
    def band_ids(self) -> tuple[str, ...]:
        return tuple(self.bands)

    @property
    def resolution_m(self) -> float:
        """Approximate meters per pixel along the latitude axis."""
        return self.geo.pixel_height * math.pi / 180.0 * EARTH_RADIUS_M

    @property
    def valid_mask(self) -> np.ndarray:
        return ~self.nodata_mask

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RasterGrid):
            return NotImplemented
        if set(self.bands) != set(other.bands):
            return False
        for band_id, plane in self.bands.items():
            theirs = other.bands[band_id]
            if plane.dtype != theirs.dtype:
                return False
            # bit-level comparison; NaN sentinel pixels must match too
            if not np.array_equal(plane.view(np.uint8), theirs.view(np.uint8)):
                return False
        return (
            np.array_equal(self.nodata_mask, other.nodata_mask)
            and self.geo == other.geo
            and self.crs_epsg == other.crs_epsg
        )
