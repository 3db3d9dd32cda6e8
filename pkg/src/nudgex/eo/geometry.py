"""Acquisition geometry: bounding boxes, seasonal month windows, horizon clamping.

All geometry is spherical (R = 6371.0088 km), which keeps the target-area
error well under 1% for center latitudes up to the configured limit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import date
from typing import Optional

from ..catalog import MiningSite
from ..errors import EmptyWindowError, UnsupportedLatitudeError, ValidationError

EARTH_RADIUS_KM = 6371.0088

NORTHERN_SNOW_MONTHS = frozenset({5, 6, 7, 8, 9})
SOUTHERN_SNOW_MONTHS = frozenset({11, 12, 1, 2, 3})
ALL_MONTHS = frozenset(range(1, 13))


def _wrap_lon(lon: float) -> float:
    wrapped = ((lon + 180.0) % 360.0) - 180.0
    return wrapped


@dataclass(frozen=True)
class BoundingBox:
    """Geographic box; ``west > east`` means it crosses the antimeridian."""

    west: float
    south: float
    east: float
    north: float
    target_area_km2: float

    def __post_init__(self):
        if not (-90.0 <= self.south < self.north <= 90.0):
            raise ValidationError(f"latitude bounds invalid: south={self.south}, north={self.north}")
        for lon in (self.west, self.east):
            if not -180.0 <= lon <= 180.0:
                raise ValidationError(f"longitude {lon} outside [-180, 180]")
        if self.target_area_km2 <= 0:
            raise ValidationError("target_area_km2 must be positive")

    @property
    def crosses_dateline(self) -> bool:
        return self.west > self.east

    def parts(self) -> list[tuple[float, float, float, float]]:
        """(west, south, east, north) tuples with west < east in each part."""
        if not self.crosses_dateline:
            return [(self.west, self.south, self.east, self.north)]
        return [
            (self.west, self.south, 180.0, self.north),
            (-180.0, self.south, self.east, self.north),
        ]

    def geodesic_area_km2(self) -> float:
        """Spherical zone area summed over dateline parts."""
        total = 0.0
        for west, south, east, north in self.parts():
            dlon = math.radians(east - west)
            band = math.sin(math.radians(north)) - math.sin(math.radians(south))
            total += EARTH_RADIUS_KM**2 * dlon * band
        return total


def compute_bbox(latitude: float, longitude: float, area_km2: float = 100.0,
                 latitude_limit: float = 66.0) -> BoundingBox:
    """Square box of ``area_km2`` centered on the point.

    Half-extents: dlat = (side/2 / R) in degrees, dlon = dlat / cos(lat).
    Longitude wraps across the antimeridian; latitudes beyond the limit are
    rejected because the cos-scaling degenerates toward the poles.
    """
    if area_km2 <= 0:
        raise ValidationError("area_km2 must be positive")
    if abs(latitude) > latitude_limit:
        raise UnsupportedLatitudeError(
            f"|latitude| = {abs(latitude)} exceeds supported limit {latitude_limit}"
        )

    side_km = math.sqrt(area_km2)
    dlat = math.degrees((side_km / 2.0) / EARTH_RADIUS_KM)
    dlon = dlat / math.cos(math.radians(latitude))

    south = latitude - dlat
    north = latitude + dlat
    if south < -90.0 or north > 90.0:
        raise ValidationError("box extends past a pole; reduce area or latitude")

    west = _wrap_lon(longitude - dlon)
    east = _wrap_lon(longitude + dlon)
    if east == -180.0:
        east = 180.0

    box = BoundingBox(west=west, south=south, east=east, north=north, target_area_km2=area_km2)

    area = box.geodesic_area_km2()
    if abs(area - area_km2) > 0.01 * area_km2:
        raise ValidationError(
            f"geodesic area {area:.4f} km2 deviates more than 1% from target {area_km2} km2"
        )
    return box


def allowed_months(latitude: float, snow_latitude_cut: float = 35.0) -> frozenset[int]:
    """Snow-free month window: boreal summer in the north, austral in the south."""
    if not -90.0 <= latitude <= 90.0:
        raise ValidationError(f"latitude {latitude} outside [-90, 90]")
    if latitude > snow_latitude_cut:
        return NORTHERN_SNOW_MONTHS
    if latitude < -snow_latitude_cut:
        return SOUTHERN_SNOW_MONTHS
    return ALL_MONTHS


def clamp_horizon(date_start: date, date_end: date, horizon_cutoff: date) -> tuple[date, date]:
    """Clip the window to the model's knowledge horizon."""
    if date_start > date_end:
        raise ValidationError(f"date_start {date_start} after date_end {date_end}")
    if date_start > horizon_cutoff:
        raise EmptyWindowError(
            f"window starts {date_start}, entirely past horizon cutoff {horizon_cutoff}"
        )
    return date_start, min(date_end, horizon_cutoff)


@dataclass(frozen=True)
class AcquisitionConfig:
    area_km2: float = 100.0
    max_cloud_fraction: float = 0.10
    date_start: date = date(2024, 1, 1)
    date_end: date = date(2024, 12, 31)
    horizon_cutoff: date = date(2024, 12, 31)  # Llama-4 knowledge horizon
    snow_latitude_cut: float = 35.0
    bbox_latitude_limit: float = 66.0


@dataclass(frozen=True)
class AcquisitionPlan:
    site_id: str
    bbox: BoundingBox
    date_start: date
    date_end: date
    max_cloud_fraction: float
    allowed_months: frozenset[int]
    horizon_cutoff: date

    def __post_init__(self):
        if not self.date_start <= self.date_end <= self.horizon_cutoff:
            raise ValidationError("plan dates must satisfy start <= end <= horizon_cutoff")
        if not self.allowed_months:
            raise ValidationError("allowed_months must be non-empty")
        if not 0.0 <= self.max_cloud_fraction <= 1.0:
            raise ValidationError("max_cloud_fraction must be in [0, 1]")


def plan_acquisition(site: MiningSite, config: Optional[AcquisitionConfig] = None) -> AcquisitionPlan:
    """Compose box, month window and horizon clamp into one plan."""
    cfg = config or AcquisitionConfig()
    bbox = compute_bbox(site.latitude, site.longitude, cfg.area_km2, cfg.bbox_latitude_limit)
    months = allowed_months(site.latitude, cfg.snow_latitude_cut)
    start, end = clamp_horizon(cfg.date_start, cfg.date_end, cfg.horizon_cutoff)
    return AcquisitionPlan(
        site_id=site.site_id,
        bbox=bbox,
        date_start=start,
        date_end=end,
        max_cloud_fraction=cfg.max_cloud_fraction,
        allowed_months=months,
        horizon_cutoff=cfg.horizon_cutoff,
    )
