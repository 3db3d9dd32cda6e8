"""GeoTIFF subset reader/writer for multi-band rasters.

Supported subset: classic little-endian TIFF, striped or tiled layout,
uncompressed or DEFLATE, one sample per pixel of uint16 or float32, one
page (IFD) per band. Anything else fails loudly with the offending tag.

Multi-band grids are written as multi-page files: each band is a page
whose PageName carries the band id. When the grid has nodata pixels an
extra uint16 page named NODATA_MASK (NewSubfileType = 4, 1 = nodata) is
appended and the per-band GDAL nodata sentinel is declared. Geo placement
uses ModelPixelScale + ModelTiepoint and a minimal GeoKey directory.
"""

from __future__ import annotations

import json
import struct
import zlib
from typing import Optional

import numpy as np

from ..errors import TiffParseError, UnsupportedFeatureError
from .grid import CLASS_BANDS, GeoTransform, RasterGrid

# TIFF tag ids used by this subset
TAG_NEW_SUBFILE_TYPE = 254
TAG_IMAGE_WIDTH = 256
TAG_IMAGE_LENGTH = 257
TAG_BITS_PER_SAMPLE = 258
TAG_COMPRESSION = 259
TAG_PHOTOMETRIC = 262
TAG_IMAGE_DESCRIPTION = 270
TAG_STRIP_OFFSETS = 273
TAG_SAMPLES_PER_PIXEL = 277
TAG_ROWS_PER_STRIP = 278
TAG_STRIP_BYTE_COUNTS = 279
TAG_PLANAR_CONFIG = 284
TAG_PAGE_NAME = 285
TAG_PREDICTOR = 317
TAG_TILE_WIDTH = 322
TAG_TILE_LENGTH = 323
TAG_TILE_OFFSETS = 324
TAG_TILE_BYTE_COUNTS = 325
TAG_SAMPLE_FORMAT = 339
TAG_MODEL_PIXEL_SCALE = 33550
TAG_MODEL_TIEPOINT = 33922
TAG_GEO_KEY_DIRECTORY = 34735
TAG_GDAL_NODATA = 42113

COMPRESSION_NONE = 1
COMPRESSION_DEFLATE = 8
COMPRESSION_DEFLATE_OLD = 32946
COMPRESSION_NAMES = {2: "CCITT", 3: "CCITT-T4", 4: "CCITT-T6", 5: "LZW", 6: "old-JPEG", 7: "JPEG", 34712: "JPEG2000"}

SAMPLE_FORMAT_UINT = 1
SAMPLE_FORMAT_FLOAT = 3

MASK_PAGE_NAME = "NODATA_MASK"

# TIFF field types: code -> (struct letter, byte size)
_FIELD_TYPES = {
    1: ("B", 1),   # BYTE
    2: ("c", 1),   # ASCII
    3: ("H", 2),   # SHORT
    4: ("L", 4),   # LONG
    5: ("LL", 8),  # RATIONAL
    6: ("b", 1),   # SBYTE
    7: ("c", 1),   # UNDEFINED
    8: ("h", 2),   # SSHORT
    9: ("l", 4),   # SLONG
    10: ("ll", 8),  # SRATIONAL
    11: ("f", 4),  # FLOAT
    12: ("d", 8),  # DOUBLE
}

TYPE_ASCII = 2
TYPE_SHORT = 3
TYPE_LONG = 4
TYPE_DOUBLE = 12


# ---------------------------------------------------------------------------
# reading
# ---------------------------------------------------------------------------

class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        if len(data) < 8:
            raise TiffParseError("file shorter than TIFF header", offset=len(data))
        order = data[:2]
        if order == b"MM":
            raise UnsupportedFeatureError("big-endian (MM) byte order not supported")
        if order != b"II":
            raise TiffParseError(f"not a TIFF file (byte-order mark {order!r})", offset=0)
        magic = struct.unpack_from("<H", data, 2)[0]
        if magic == 43:
            raise UnsupportedFeatureError("BigTIFF (magic 43) not supported")
        if magic != 42:
            raise TiffParseError(f"bad TIFF magic {magic}", offset=2)
        self.first_ifd = struct.unpack_from("<L", data, 4)[0]

    def _require(self, offset: int, size: int) -> None:
        if offset + size > len(self.data):
            raise TiffParseError("truncated file", offset=offset)

    def read_pages(self) -> list[dict[int, tuple]]:
        pages = []
        offset = self.first_ifd
        seen: set[int] = set()
        while offset:
            if offset in seen:
                raise TiffParseError("IFD chain loops", offset=offset)
            seen.add(offset)
            entries, offset = self._read_ifd(offset)
            pages.append(entries)
        return pages

    def _read_ifd(self, offset: int) -> tuple[dict[int, tuple], int]:
        self._require(offset, 2)
        count = struct.unpack_from("<H", self.data, offset)[0]
        self._require(offset, 2 + count * 12 + 4)
        entries: dict[int, tuple] = {}
        for i in range(count):
            base = offset + 2 + i * 12
            tag, typ, n = struct.unpack_from("<HHL", self.data, base)
            if typ not in _FIELD_TYPES:
                continue  # unknown field type: skip tag, per TIFF 6 guidance
            letter, size = _FIELD_TYPES[typ]
            total = size * n
            if total <= 4:
                raw = self.data[base + 8: base + 8 + total]
            else:
                value_offset = struct.unpack_from("<L", self.data, base + 8)[0]
                self._require(value_offset, total)
                raw = self.data[value_offset: value_offset + total]
            entries[tag] = (typ, self._decode(typ, letter, n, raw))
        next_ifd = struct.unpack_from("<L", self.data, offset + 2 + count * 12)[0]
        return entries, next_ifd

    @staticmethod
    def _decode(typ: int, letter: str, n: int, raw: bytes) -> tuple:
        if typ in (TYPE_ASCII, 7):
            return (raw,)
        if typ in (5, 10):  # rationals: pairs
            flat = struct.unpack("<" + letter * n, raw)
            return tuple(flat)
        return struct.unpack("<" + letter * n, raw)


def _tag_scalar(entries: dict, tag: int, default=None):
    if tag not in entries:
        return default
    return entries[tag][1][0]


def _tag_values(entries: dict, tag: int, default=()):
    if tag not in entries:
        return default
    return entries[tag][1]


def _tag_ascii(entries: dict, tag: int) -> Optional[str]:
    if tag not in entries:
        return None
    raw = entries[tag][1][0]
    return raw.split(b"\0", 1)[0].decode("utf-8", errors="replace")


def _page_dtype(entries: dict) -> np.dtype:
    bits = _tag_scalar(entries, TAG_BITS_PER_SAMPLE, 1)
    fmt = _tag_scalar(entries, TAG_SAMPLE_FORMAT, SAMPLE_FORMAT_UINT)
    if fmt == SAMPLE_FORMAT_UINT and bits == 16:
        return np.dtype("<u2")
    if fmt == SAMPLE_FORMAT_FLOAT and bits == 32:
        return np.dtype("<f4")
    raise UnsupportedFeatureError(
        f"sample type not in supported subset (BitsPerSample={bits}, SampleFormat={fmt}); "
        "only uint16 and float32 are handled"
    )


def _decompress(reader: _Reader, offset: int, count: int, compression: int) -> bytes:
    reader._require(offset, count)
    chunk = reader.data[offset: offset + count]
    if compression == COMPRESSION_NONE:
        return chunk
    try:
        return zlib.decompress(chunk)
    except zlib.error as exc:
        raise TiffParseError(f"DEFLATE stream corrupt: {exc}", offset=offset) from None


def _read_plane(reader: _Reader, entries: dict) -> np.ndarray:
    width = _tag_scalar(entries, TAG_IMAGE_WIDTH)
    height = _tag_scalar(entries, TAG_IMAGE_LENGTH)
    if not width or not height:
        raise TiffParseError("page missing ImageWidth/ImageLength")

    compression = _tag_scalar(entries, TAG_COMPRESSION, COMPRESSION_NONE)
    if compression not in (COMPRESSION_NONE, COMPRESSION_DEFLATE, COMPRESSION_DEFLATE_OLD):
        name = COMPRESSION_NAMES.get(compression, "unknown")
        raise UnsupportedFeatureError(f"Compression={compression} ({name}) not supported")

    predictor = _tag_scalar(entries, TAG_PREDICTOR, 1)
    if predictor != 1:
        raise UnsupportedFeatureError(f"Predictor={predictor} not supported")

    spp = _tag_scalar(entries, TAG_SAMPLES_PER_PIXEL, 1)
    if spp != 1:
        raise UnsupportedFeatureError(f"SamplesPerPixel={spp} not supported (one band per page)")

    dtype = _page_dtype(entries)
    itemsize = dtype.itemsize

    if TAG_TILE_OFFSETS in entries:
        tw = _tag_scalar(entries, TAG_TILE_WIDTH)
        th = _tag_scalar(entries, TAG_TILE_LENGTH)
        offsets = _tag_values(entries, TAG_TILE_OFFSETS)
        counts = _tag_values(entries, TAG_TILE_BYTE_COUNTS)
        if not tw or not th or len(offsets) != len(counts):
            raise TiffParseError("inconsistent tile tags")
        tiles_across = (width + tw - 1) // tw
        plane = np.zeros((height, width), dtype=dtype)
        for idx, (off, cnt) in enumerate(zip(offsets, counts)):
            raw = _decompress(reader, off, cnt, compression)
            expected = tw * th * itemsize
            if len(raw) < expected:
                raise TiffParseError(f"tile {idx} short: {len(raw)} < {expected}", offset=off)
            tile = np.frombuffer(raw[:expected], dtype=dtype).reshape(th, tw)
            row0 = (idx // tiles_across) * th
            col0 = (idx % tiles_across) * tw
            rows = min(th, height - row0)
            cols = min(tw, width - col0)
            plane[row0: row0 + rows, col0: col0 + cols] = tile[:rows, :cols]
        return plane

    offsets = _tag_values(entries, TAG_STRIP_OFFSETS)
    counts = _tag_values(entries, TAG_STRIP_BYTE_COUNTS)
    if not offsets:
        raise TiffParseError("page has neither strip nor tile offsets")
    if len(offsets) != len(counts):
        raise TiffParseError("StripOffsets/StripByteCounts length mismatch")
    rows_per_strip = max(1, min(int(_tag_scalar(entries, TAG_ROWS_PER_STRIP, height)), height))

    raw = bytearray()
    for strip_idx, (off, cnt) in enumerate(zip(offsets, counts)):
        chunk = _decompress(reader, off, cnt, compression)
        rows = min(rows_per_strip, height - strip_idx * rows_per_strip)
        expected = rows * width * itemsize
        if len(chunk) < expected:
            raise TiffParseError(f"strip {strip_idx} short: {len(chunk)} < {expected}", offset=off)
        raw.extend(chunk[:expected])
    total = height * width * itemsize
    if len(raw) != total:
        raise TiffParseError(f"pixel data is {len(raw)} bytes, expected {total}")
    return np.frombuffer(bytes(raw), dtype=dtype).reshape(height, width)


def _read_geo(entries: dict) -> tuple[Optional[GeoTransform], int]:
    epsg = 4326
    geokeys = _tag_values(entries, TAG_GEO_KEY_DIRECTORY)
    for i in range(4, len(geokeys), 4):
        key_id, location, _count, value = geokeys[i: i + 4]
        if key_id in (2048, 3072) and location == 0:
            epsg = int(value)
    scale = _tag_values(entries, TAG_MODEL_PIXEL_SCALE)
    tie = _tag_values(entries, TAG_MODEL_TIEPOINT)
    if len(scale) >= 2 and len(tie) >= 6:
        i, j, _k, x, y, _z = tie[:6]
        geo = GeoTransform(
            west=x - i * scale[0],
            north=y + j * scale[1],
            pixel_width=scale[0],
            pixel_height=scale[1],
        )
        return geo, epsg
    return None, epsg


def read_geotiff(data: bytes) -> RasterGrid:
    """Parse a GeoTIFF in the supported subset into a RasterGrid.

    uint16 pages other than SCL are treated as Sentinel-2 digital numbers
    and scaled by 1/10000 to float32 reflectance; SCL keeps its class codes.
    """
    reader = _Reader(data)
    pages = reader.read_pages()
    if not pages:
        raise TiffParseError("no IFD in file", offset=reader.first_ifd)

    planes: dict[str, np.ndarray] = {}
    mask_plane: Optional[np.ndarray] = None
    sentinel_masks: list[np.ndarray] = []
    geo: Optional[GeoTransform] = None
    epsg = 4326

    for index, entries in enumerate(pages):
        name = _tag_ascii(entries, TAG_PAGE_NAME) or f"BAND{index + 1}"
        plane = _read_plane(reader, entries)
        if geo is None:
            geo, epsg = _read_geo(entries)

        subfile = _tag_scalar(entries, TAG_NEW_SUBFILE_TYPE, 0)
        if name == MASK_PAGE_NAME or subfile == 4:
            mask_plane = plane.astype(bool)
            continue

        nodata_text = _tag_ascii(entries, TAG_GDAL_NODATA)
        if plane.dtype == np.dtype("<u2") and name not in CLASS_BANDS:
            # Sentinel-2 DN ingestion path
            if nodata_text is not None:
                sentinel_masks.append(plane == int(float(nodata_text)))
            plane = plane.astype(np.float32) / 10000.0
        elif plane.dtype == np.dtype("<f4"):
            sentinel_masks.append(np.isnan(plane))
        elif nodata_text is not None:
            sentinel_masks.append(plane == int(float(nodata_text)))
        planes[name] = plane

    if not planes:
        raise TiffParseError("file contains only mask pages")

    shape = next(iter(planes.values())).shape
    if mask_plane is not None:
        if mask_plane.shape != shape:
            raise TiffParseError("mask page shape differs from band planes")
        mask = mask_plane
    else:
        mask = np.zeros(shape, dtype=bool)
        for m in sentinel_masks:
            mask |= m

    # foreign files may carry NaN outside the declared mask; absorb it
    for plane in planes.values():
        if plane.dtype.kind == "f":
            mask |= np.isnan(plane)

    return RasterGrid(planes, nodata_mask=mask, geo=geo, crs_epsg=epsg)


# ---------------------------------------------------------------------------
# writing
# ---------------------------------------------------------------------------

def _encode_ascii(text: str) -> bytes:
    return text.encode("utf-8") + b"\0"


def _pack_values(typ: int, values) -> bytes:
    if typ == TYPE_ASCII:
        return values  # already bytes with NUL
    letter, _ = _FIELD_TYPES[typ]
    return struct.pack("<" + letter * len(values), *values)


class _PageSpec:
    def __init__(self, band_id: str, plane: np.ndarray, is_mask: bool, nodata_text: Optional[str]):
        self.band_id = band_id
        self.plane = plane
        self.is_mask = is_mask
        self.nodata_text = nodata_text


def write_geotiff(grid: RasterGrid, compression: str = "deflate") -> bytes:
    """Serialize the grid as a multi-page GeoTIFF (one band per page)."""
    if compression not in ("deflate", "none"):
        raise UnsupportedFeatureError(f"writer compression {compression!r} not supported")
    comp_code = COMPRESSION_DEFLATE if compression == "deflate" else COMPRESSION_NONE

    has_nodata = bool(grid.nodata_mask.any())
    specs: list[_PageSpec] = []
    for band_id in sorted(grid.bands):
        plane = grid.bands[band_id]
        nodata_text = None
        if has_nodata:
            nodata_text = "0" if plane.dtype.kind == "u" else "nan"
        specs.append(_PageSpec(band_id, plane, is_mask=False, nodata_text=nodata_text))
    if has_nodata:
        specs.append(_PageSpec(
            MASK_PAGE_NAME, grid.nodata_mask.astype("<u2"), is_mask=True, nodata_text=None,
        ))

    geo = grid.geo
    pixel_scale = (float(geo.pixel_width), float(geo.pixel_height), 0.0)
    tiepoint = (0.0, 0.0, 0.0, float(geo.west), float(geo.north), 0.0)
    # 4000-4999 is the EPSG geographic-CRS block; everything else projected
    geokey_id = 2048 if 4000 <= grid.crs_epsg <= 4999 else 3072
    model_type = 2 if geokey_id == 2048 else 1
    geokeys = (
        1, 1, 0, 3,
        1024, 0, 1, model_type,   # GTModelType: geographic / projected
        1025, 0, 1, 1,            # GTRasterType: PixelIsArea
        geokey_id, 0, 1, grid.crs_epsg,
    )

    out = bytearray()
    out += struct.pack("<2sHL", b"II", 42, 0)  # first-IFD offset backpatched below
    prev_next_ptr = 4

    for spec in specs:
        plane = np.ascontiguousarray(spec.plane)
        if plane.dtype == np.uint16:
            plane = plane.astype("<u2", copy=False)
            bits, fmt = 16, SAMPLE_FORMAT_UINT
        else:
            plane = plane.astype("<f4", copy=False)
            bits, fmt = 32, SAMPLE_FORMAT_FLOAT
        pixel_bytes = plane.tobytes()
        if comp_code == COMPRESSION_DEFLATE:
            pixel_bytes = zlib.compress(pixel_bytes, 6)

        if len(out) % 2:
            out += b"\0"
        strip_offset = len(out)
        out += pixel_bytes

        height, width = spec.plane.shape
        entries: list[tuple[int, int, tuple | bytes]] = [
            (TAG_NEW_SUBFILE_TYPE, TYPE_LONG, (4 if spec.is_mask else 0,)),
            (TAG_IMAGE_WIDTH, TYPE_LONG, (width,)),
            (TAG_IMAGE_LENGTH, TYPE_LONG, (height,)),
            (TAG_BITS_PER_SAMPLE, TYPE_SHORT, (bits,)),
            (TAG_COMPRESSION, TYPE_SHORT, (comp_code,)),
            (TAG_PHOTOMETRIC, TYPE_SHORT, (1,)),
            (TAG_STRIP_OFFSETS, TYPE_LONG, (strip_offset,)),
            (TAG_SAMPLES_PER_PIXEL, TYPE_SHORT, (1,)),
            (TAG_ROWS_PER_STRIP, TYPE_LONG, (height,)),
            (TAG_STRIP_BYTE_COUNTS, TYPE_LONG, (len(pixel_bytes),)),
            (TAG_PAGE_NAME, TYPE_ASCII, _encode_ascii(spec.band_id)),
            (TAG_SAMPLE_FORMAT, TYPE_SHORT, (fmt,)),
            (TAG_MODEL_PIXEL_SCALE, TYPE_DOUBLE, pixel_scale),
            (TAG_MODEL_TIEPOINT, TYPE_DOUBLE, tiepoint),
            (TAG_GEO_KEY_DIRECTORY, TYPE_SHORT, geokeys),
        ]
        if spec.nodata_text is not None:
            entries.append((TAG_GDAL_NODATA, TYPE_ASCII, _encode_ascii(spec.nodata_text)))
        entries.sort(key=lambda e: e[0])

        # out-of-line values first, then the IFD itself
        encoded: list[tuple[int, int, int, bytes, Optional[int]]] = []
        for tag, typ, values in entries:
            payload = _pack_values(typ, values)
            count = len(values)
            if len(payload) <= 4:
                encoded.append((tag, typ, count, payload.ljust(4, b"\0"), None))
            else:
                if len(out) % 2:
                    out += b"\0"
                encoded.append((tag, typ, count, b"", len(out)))
                out += payload

        if len(out) % 2:
            out += b"\0"
        ifd_offset = len(out)
        struct.pack_into("<L", out, prev_next_ptr, ifd_offset)
        out += struct.pack("<H", len(encoded))
        for tag, typ, count, inline, value_offset in encoded:
            out += struct.pack("<HHL", tag, typ, count)
            out += struct.pack("<L", value_offset) if value_offset is not None else inline
        next_ptr_at = len(out)
        out += struct.pack("<L", 0)
        prev_next_ptr = next_ptr_at

    return bytes(out)


def grid_metadata_json(grid: RasterGrid) -> str:
    """Compact JSON sidecar describing the grid (band ids, shape, geo)."""
    return json.dumps(
        {
            "width": grid.width,
            "height": grid.height,
            "bands": sorted(grid.bands),
            "crs_epsg": grid.crs_epsg,
            "west": grid.geo.west,
            "north": grid.geo.north,
            "pixel_width": grid.geo.pixel_width,
            "pixel_height": grid.geo.pixel_height,
        },
        sort_keys=True,
    )
