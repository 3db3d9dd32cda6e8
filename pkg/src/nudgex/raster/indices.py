"""Band arithmetic: normalized differences, the index registry, prompt summaries.

Index definitions are expression strings over Sentinel-2 band ids using
``+ - * /`` and parentheses, evaluated per pixel with shared nodata rules:
any nodata input, any zero denominator, and any out-of-range result all
propagate to nodata.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import DimensionError, MissingBandError, ValidationError
from .grid import RasterGrid

BAND_NAME_RE = re.compile(r"^B(0[1-9]|1[0-2]|8A)$")


# ---------------------------------------------------------------------------
# expression parser (bands, numbers, + - * /, parentheses)
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(r"\s*(?:(B(?:0[1-9]|1[0-2]|8A))|(\d+(?:\.\d+)?)|([-+*/()]))")


def _tokenize(expression: str) -> list[tuple[str, str]]:
    tokens = []
    pos = 0
    while pos < len(expression):
        m = _TOKEN_RE.match(expression, pos)
        if not m or m.end() == pos:
            raise ValidationError(f"bad index expression near {expression[pos:pos + 12]!r}")
        band, number, op = m.groups()
        if band:
            tokens.append(("band", band))
        elif number:
            tokens.append(("num", number))
        else:
            tokens.append(("op", op))
        pos = m.end()
    return tokens


class _Parser:
    """Recursive-descent parser producing a tuple AST."""

    def __init__(self, expression: str):
        self.tokens = _tokenize(expression)
        self.pos = 0

    def parse(self) -> tuple:
        node = self._expr()
        if self.pos != len(self.tokens):
            raise ValidationError("trailing tokens in index expression")
        return node

    def _peek(self) -> Optional[tuple[str, str]]:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def _take(self) -> tuple[str, str]:
        tok = self._peek()
        if tok is None:
            raise ValidationError("index expression ends unexpectedly")
        self.pos += 1
        return tok

    def _expr(self) -> tuple:
        node = self._term()
        while self._peek() in (("op", "+"), ("op", "-")):
            _, op = self._take()
            node = ("add" if op == "+" else "sub", node, self._term())
        return node

    def _term(self) -> tuple:
        node = self._factor()
        while self._peek() in (("op", "*"), ("op", "/")):
            _, op = self._take()
            node = ("mul" if op == "*" else "div", node, self._factor())
        return node

    def _factor(self) -> tuple:
        kind, text = self._take()
        if kind == "band":
            return ("band", text)
        if kind == "num":
            return ("num", float(text))
        if (kind, text) == ("op", "-"):
            return ("neg", self._factor())
        if (kind, text) == ("op", "("):
            node = self._expr()
            closing = self._take()
            if closing != ("op", ")"):
                raise ValidationError("unbalanced parentheses in index expression")
            return node
        raise ValidationError(f"unexpected token {text!r} in index expression")


def parse_expression(expression: str) -> tuple:
    return _Parser(expression).parse()


def expression_bands(ast: tuple) -> set[str]:
    if ast[0] == "band":
        return {ast[1]}
    if ast[0] == "num":
        return set()
    return set().union(*(expression_bands(child) for child in ast[1:]))


def _evaluate(ast: tuple, planes: dict[str, np.ndarray], invalid: np.ndarray) -> np.ndarray:
    """Evaluate in float64; division by zero marks pixels invalid in place."""
    op = ast[0]
    if op == "band":
        return planes[ast[1]]
    if op == "num":
        return np.float64(ast[1])
    if op == "neg":
        return -_evaluate(ast[1], planes, invalid)
    left = _evaluate(ast[1], planes, invalid)
    right = _evaluate(ast[2], planes, invalid)
    if op == "add":
        return left + right
    if op == "sub":
        return left - right
    if op == "mul":
        return left * right
    zero = right == 0.0
    invalid |= np.broadcast_to(zero, invalid.shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(zero, 0.0, left / np.where(zero, 1.0, right))


# ---------------------------------------------------------------------------
# registry
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IndexDefinition:
    name: str
    expression: str
    valid_range: tuple[float, float]
    threshold: Optional[float] = None
    threshold_label: Optional[str] = None


INDEX_REGISTRY: dict[str, IndexDefinition] = {}


def register_index(definition: IndexDefinition) -> None:
    ast = parse_expression(definition.expression)
    for band in expression_bands(ast):
        if not BAND_NAME_RE.match(band):
            raise ValidationError(f"index {definition.name}: unknown band {band}")
    lo, hi = definition.valid_range
    if not lo < hi:
        raise ValidationError(f"index {definition.name}: empty valid_range")
    INDEX_REGISTRY[definition.name] = definition


for _defn in (
    IndexDefinition("NDVI", "(B08 - B04) / (B08 + B04)", (-1.0, 1.0), 0.4, "vegetated"),
    IndexDefinition("NDWI", "(B03 - B08) / (B03 + B08)", (-1.0, 1.0), 0.2, "water"),
    IndexDefinition("NDBI", "(B11 - B08) / (B11 + B08)", (-1.0, 1.0), 0.0, "built-up"),
    IndexDefinition(
        "BSI",
        "((B11 + B04) - (B08 + B02)) / ((B11 + B04) + (B08 + B02))",
        (-1.0, 1.0),
        0.1,
        "bare soil",
    ),
    IndexDefinition("IRONOX", "B04 / B02", (0.0, 10.0), 2.0, "iron-oxide-rich"),
):
    register_index(_defn)


# ---------------------------------------------------------------------------
# products
# ---------------------------------------------------------------------------

@dataclass
class IndexStats:
    mean: Optional[float]
    std: Optional[float]
    min: Optional[float]
    max: Optional[float]
    valid_fraction: float
    fraction_above: dict[float, float] = field(default_factory=dict)


@dataclass
class IndexProduct:
    name: str
    plane: np.ndarray            # float32, NaN at nodata
    valid_range: tuple[float, float]
    stats: IndexStats
    out_of_range_count: int


def normalized_difference(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """(a - b) / (a + b) with nodata (NaN) where a + b = 0 or inputs are NaN.

    Results outside [-1, 1] (possible with negative inputs) also become NaN.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"plane shapes differ: {a.shape} vs {b.shape}")
    denom = a + b
    bad = np.isnan(a) | np.isnan(b) | (denom == 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (a - b) / np.where(bad, 1.0, denom)
    out[bad] = np.nan
    out[(out < -1.0) | (out > 1.0)] = np.nan
    return out.astype(np.float32)


def compute_stats(plane: np.ndarray, thresholds: dict[float, str] | list[float] | None = None) -> IndexStats:
    """Straightforward stats over the valid (non-NaN) pixels of a plane."""
    valid = ~np.isnan(plane)
    total = plane.size
    n_valid = int(valid.sum())
    valid_fraction = n_valid / total if total else 0.0
    if n_valid == 0:
        return IndexStats(None, None, None, None, valid_fraction, {})
    values = plane[valid].astype(np.float64)
    fraction_above = {}
    for thr in (thresholds or []):
        fraction_above[float(thr)] = float((values > thr).sum() / n_valid)
    return IndexStats(
        mean=float(values.mean()),
        std=float(values.std()),
        min=float(values.min()),
        max=float(values.max()),
        valid_fraction=valid_fraction,
        fraction_above=fraction_above,
    )


def compute_index(grid: RasterGrid, name: str) -> IndexProduct:
    """Evaluate a registered index over the grid with shared nodata rules."""
    try:
        defn = INDEX_REGISTRY[name]
    except KeyError:
        raise ValidationError(f"unknown index {name!r} (registered: {sorted(INDEX_REGISTRY)})") from None

    ast = parse_expression(defn.expression)
    needed = sorted(expression_bands(ast))
    planes: dict[str, np.ndarray] = {}
    for band in needed:
        if not grid.has_band(band):
            raise MissingBandError(f"index {name} requires band {band}")
        planes[band] = grid.band(band).astype(np.float64)

    invalid = grid.nodata_mask.copy()
    for plane in planes.values():
        invalid |= np.isnan(plane)

    values = _evaluate(ast, planes, invalid)
    values = np.broadcast_to(values, invalid.shape).astype(np.float64, copy=True)

    lo, hi = defn.valid_range
    out_of_range = ~invalid & ((values < lo) | (values > hi))
    invalid |= out_of_range

    values[invalid] = np.nan
    plane = values.astype(np.float32)

    thresholds = [defn.threshold] if defn.threshold is not None else []
    stats = compute_stats(plane, thresholds)
    return IndexProduct(
        name=name,
        plane=plane,
        valid_range=defn.valid_range,
        stats=stats,
        out_of_range_count=int(out_of_range.sum()),
    )


def index_product_to_geotiff(product: IndexProduct, geo=None, crs_epsg: int = 4326) -> bytes:
    """Export an index plane as a single-band float32 GeoTIFF."""
    from .geotiff import write_geotiff
    from .grid import RasterGrid

    grid = RasterGrid(
        {product.name: product.plane},
        nodata_mask=np.isnan(product.plane),
        geo=geo,
        crs_epsg=crs_epsg,
    )
    return write_geotiff(grid)


def index_summary(product: IndexProduct) -> str:
    """Deterministic one-paragraph snippet used as MLLM prompt context."""
    stats = product.stats
    if stats.mean is None:
        return f"{product.name}: no valid pixels."
    text = (
        f"{product.name} mean {stats.mean:.3f}, std {stats.std:.3f}, "
        f"valid fraction {stats.valid_fraction:.3f}"
    )
    defn = INDEX_REGISTRY.get(product.name)
    if defn and defn.threshold is not None and defn.threshold in stats.fraction_above:
        label = defn.threshold_label or "above threshold"
        text += (
            f"; fraction above {defn.threshold:g} ({label}): "
            f"{stats.fraction_above[defn.threshold]:.3f}"
        )
    return text + "."
