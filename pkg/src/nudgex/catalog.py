"""Mining-site registry: tabular site ingestion, metadata dossiers, filtered listing.

Persistence is file-based under ``<root>/catalog``: sites live in an
append-only ``sites.jsonl`` with an in-memory index, dossiers in one JSON
file per site. Reads are snapshot-consistent; ingestion holds the single
writer lock.
"""

from __future__ import annotations

import csv
import json
import re
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterable, Optional
from urllib.parse import urlparse

from .errors import FormatError, NotFoundError, ValidationError

SITE_ID_RE = re.compile(r"^[a-z0-9-]{1,64}$")
COUNTRY_RE = re.compile(r"^[A-Z]{2}$")

DOSSIER_SECTIONS = ("geology", "history", "controversies")

Clock = Callable[[], datetime]


def utc_now() -> datetime:
    return datetime.now(timezone.utc)


@dataclass(frozen=True)
class MiningSite:
    site_id: str
    name: str
    latitude: float
    longitude: float
    country: str
    commodities: tuple[str, ...]
    created_at: datetime

    def to_json(self) -> dict:
        return {
            "site_id": self.site_id,
            "name": self.name,
            "latitude": self.latitude,
            "longitude": self.longitude,
            "country": self.country,
            "commodities": list(self.commodities),
            "created_at": self.created_at.isoformat(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "MiningSite":
        return cls(
            site_id=obj["site_id"],
            name=obj["name"],
            latitude=float(obj["latitude"]),
            longitude=float(obj["longitude"]),
            country=obj["country"],
            commodities=tuple(obj["commodities"]),
            created_at=datetime.fromisoformat(obj["created_at"]),
        )


@dataclass
class SiteDossier:
    site_id: str
    geology: str
    history: str
    controversies: str
    sources: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "site_id": self.site_id,
            "geology": self.geology,
            "history": self.history,
            "controversies": self.controversies,
            "sources": list(self.sources),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SiteDossier":
        return cls(
            site_id=obj["site_id"],
            geology=obj["geology"],
            history=obj["history"],
            controversies=obj["controversies"],
            sources=list(obj.get("sources", [])),
        )


@dataclass
class IngestReport:
    accepted: int = 0
    accepted_ids: list[str] = field(default_factory=list)
    rejections: list[tuple[int, str]] = field(default_factory=list)
    duplicates: list[tuple[int, str]] = field(default_factory=list)  # (row, site_id)

    @property
    def rejected(self) -> int:
        return len(self.rejections) + len(self.duplicates)


def _validate_site_row(row: dict, created_at: datetime) -> MiningSite:
    """Turn one raw row into a MiningSite or raise ValidationError."""
    missing = [k for k in ("site_id", "name", "lat", "lon", "country") if not str(row.get(k, "")).strip()]
    if missing:
        raise ValidationError(f"missing fields: {', '.join(missing)}")

    site_id = str(row["site_id"]).strip()
    if not SITE_ID_RE.match(site_id):
        raise ValidationError(f"site_id {site_id!r} does not match [a-z0-9-]{{1,64}}")

    try:
        lat = float(row["lat"])
        lon = float(row["lon"])
    except (TypeError, ValueError):
        raise ValidationError("lat/lon not numeric")
    if not -90.0 <= lat <= 90.0:
        raise ValidationError(f"latitude {lat} outside [-90, 90]")
    if not -180.0 <= lon <= 180.0:
        raise ValidationError(f"longitude {lon} outside [-180, 180]")

    country = str(row["country"]).strip().upper()
    if not COUNTRY_RE.match(country):
        raise ValidationError(f"country {row['country']!r} is not an ISO 3166-1 alpha-2 code")

    raw = row.get("commodities", "")
    if isinstance(raw, str):
        commodities = tuple(c.strip().lower() for c in raw.split(";") if c.strip())
    else:
        commodities = tuple(str(c).strip().lower() for c in raw if str(c).strip())

    return MiningSite(
        site_id=site_id,
        name=str(row["name"]).strip(),
        latitude=lat,
        longitude=lon,
        country=country,
        commodities=commodities,
        created_at=created_at,
    )


def _iter_rows(path: Path) -> Iterable[tuple[int, dict | Exception]]:
    """Yield (row_number, parsed row or the per-row parse error)."""
    text = path.read_text(encoding="utf-8")
    stripped = text.lstrip()
    is_jsonl = path.suffix.lower() in (".jsonl", ".ndjson") or stripped.startswith("{")
    if is_jsonl:
        n = 0
        for line in text.splitlines():
            if not line.strip():
                continue
            n += 1
            try:
                obj = json.loads(line)
                if not isinstance(obj, dict):
                    raise ValueError("row is not a JSON object")
                yield n, obj
            except ValueError as exc:
                yield n, ValidationError(f"malformed JSON line: {exc}")
    else:
        reader = csv.DictReader(text.splitlines())
        if reader.fieldnames is None:
            return
        for n, row in enumerate(reader, start=1):
            yield n, {k: v for k, v in row.items() if k is not None}


def parse_dossier_document(site_id: str, text: str) -> tuple[SiteDossier, list[str]]:
    """Parse a sectioned dossier document into a SiteDossier plus warnings.

    The document must contain ``## geology``, ``## history`` and
    ``## controversies`` headers (any order); ``## sources`` is optional,
    one absolute URL per line. Empty sections warn but do not fail.
    """
    text = text.replace("\r\n", "\n").replace("\r", "\n")
    header_re = re.compile(r"^##\s*(geology|history|controversies|sources)\s*$", re.IGNORECASE | re.MULTILINE)

    sections: dict[str, str] = {}
    matches = list(header_re.finditer(text))
    for i, m in enumerate(matches):
        name = m.group(1).lower()
        if name in sections:
            raise FormatError(f"duplicate section header: ## {name}")
        start = m.end()
        end = matches[i + 1].start() if i + 1 < len(matches) else len(text)
        body = text[start:end]
        # drop the newline terminating the header line and the one that
        # precedes the next header; inner blank lines are preserved
        if body.startswith("\n"):
            body = body[1:]
        if body.endswith("\n"):
            body = body[:-1]
        sections[name] = body

    missing = [s for s in DOSSIER_SECTIONS if s not in sections]
    if missing:
        raise FormatError(f"missing section header(s): {', '.join('## ' + s for s in missing)}")

    warnings = [f"section '{s}' is empty" for s in DOSSIER_SECTIONS if not sections[s].strip()]

    sources: list[str] = []
    for line in sections.get("sources", "").splitlines():
        line = line.strip()
        if not line:
            continue
        parsed = urlparse(line)
        if not parsed.scheme or not parsed.netloc:
            raise FormatError(f"sources entry is not an absolute URL: {line!r}")
        sources.append(line)

    dossier = SiteDossier(
        site_id=site_id,
        geology=sections["geology"],
        history=sections["history"],
        controversies=sections["controversies"],
        sources=sources,
    )
    return dossier, warnings


def export_dossier_document(dossier: SiteDossier) -> str:
    """Rebuild the sectioned document; inverse of parse_dossier_document."""
    parts = [
        f"## geology\n{dossier.geology}\n",
        f"## history\n{dossier.history}\n",
        f"## controversies\n{dossier.controversies}\n",
    ]
    if dossier.sources:
        parts.append("## sources\n" + "\n".join(dossier.sources) + "\n")
    return "".join(parts)


class CatalogStore:
    """Append-only site catalog with an in-memory index and dossier files."""

    def __init__(self, root: Path | str, clock: Clock = utc_now):
        self.root = Path(root)
        self.clock = clock
        self._dir = self.root / "catalog"
        self._sites_path = self._dir / "sites.jsonl"
        self._dossier_dir = self._dir / "dossiers"
        self._lock = threading.RLock()
        self._sites: dict[str, MiningSite] = {}
        self._load()

    def _load(self) -> None:
        if not self._sites_path.exists():
            return
        for line in self._sites_path.read_text(encoding="utf-8").splitlines():
            if line.strip():
                site = MiningSite.from_json(json.loads(line))
                self._sites[site.site_id] = site

    # -- sites ---------------------------------------------------------

    def ingest_sites(self, path: Path | str) -> IngestReport:
        """Ingest a CSV/JSONL site file; per-row errors reject the row only."""
        path = Path(path)
        if not path.exists():
            raise ValidationError(f"site file not readable: {path}")
        report = IngestReport()
        created_at = self.clock()
        with self._lock:
            accepted: list[MiningSite] = []
            seen_in_file: set[str] = set()
            for n, row in _iter_rows(path):
                if isinstance(row, Exception):
                    report.rejections.append((n, str(row)))
                    continue
                try:
                    site = _validate_site_row(row, created_at)
                except ValidationError as exc:
                    report.rejections.append((n, str(exc)))
                    continue
                if site.site_id in self._sites or site.site_id in seen_in_file:
                    report.duplicates.append((n, site.site_id))
                    continue
                seen_in_file.add(site.site_id)
                accepted.append(site)

            if accepted:
                self._dir.mkdir(parents=True, exist_ok=True)
                with self._sites_path.open("a", encoding="utf-8") as fh:
                    for site in accepted:
                        fh.write(json.dumps(site.to_json(), sort_keys=True) + "\n")
                for site in accepted:
                    self._sites[site.site_id] = site
            report.accepted = len(accepted)
            report.accepted_ids = [site.site_id for site in accepted]
        return report

    def get_site(self, site_id: str) -> MiningSite:
        with self._lock:
            try:
                return self._sites[site_id]
            except KeyError:
                raise NotFoundError(f"unknown site_id: {site_id}") from None

    def list_sites(self, country: Optional[str] = None, commodity: Optional[str] = None) -> list[MiningSite]:
        """All sites in site_id order, optionally filtered (conjunctive)."""
        with self._lock:
            sites = list(self._sites.values())
        if country is not None:
            sites = [s for s in sites if s.country == country.upper()]
        if commodity is not None:
            sites = [s for s in sites if commodity.lower() in s.commodities]
        return sorted(sites, key=lambda s: s.site_id)

    # -- dossiers ------------------------------------------------------

    def ingest_dossier(self, site_id: str, document_path: Path | str) -> tuple[SiteDossier, list[str]]:
        self.get_site(site_id)  # raises NotFoundError for unknown sites
        text = Path(document_path).read_text(encoding="utf-8")
        dossier, warnings = parse_dossier_document(site_id, text)
        with self._lock:
            self._dossier_dir.mkdir(parents=True, exist_ok=True)
            tmp = self._dossier_dir / f".{site_id}.json.tmp"
            tmp.write_text(json.dumps(dossier.to_json(), sort_keys=True, indent=2) + "\n", encoding="utf-8")
            tmp.replace(self._dossier_dir / f"{site_id}.json")
        return dossier, warnings

    def get_dossier(self, site_id: str) -> Optional[SiteDossier]:
        path = self._dossier_dir / f"{site_id}.json"
        if not path.exists():
            return None
        return SiteDossier.from_json(json.loads(path.read_text(encoding="utf-8")))
