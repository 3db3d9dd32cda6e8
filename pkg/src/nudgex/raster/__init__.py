from .grid import GeoTransform, RasterGrid
from .geotiff import read_geotiff, write_geotiff
from .indices import (
    INDEX_REGISTRY,
    IndexDefinition,
    IndexProduct,
    compute_index,
    index_product_to_geotiff,
    index_summary,
    normalized_difference,
    register_index,
)
from .render import render_index_png, render_rgb

__all__ = [
    "GeoTransform",
    "INDEX_REGISTRY",
    "IndexDefinition",
    "IndexProduct",
    "RasterGrid",
    "compute_index",
    "index_product_to_geotiff",
    "index_summary",
    "normalized_difference",
    "read_geotiff",
    "register_index",
    "render_index_png",
    "render_rgb",
    "write_geotiff",
]
