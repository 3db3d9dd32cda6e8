"""Catalog ingestion, filtering, and dossier parsing."""

import json
from pathlib import Path

import pytest

from nudgex.catalog import (
    CatalogStore,
    export_dossier_document,
    parse_dossier_document,
)
from nudgex.errors import FormatError, NotFoundError, ValidationError

SITES_CSV = """site_id,name,lat,lon,country,commodities
thompson-mine,Thompson Mine,55.0,-98.0,CA,nickel
elliots-no-1-open-cut,Elliots No. 1 Open Cut,-32.5,148.2,AU,zinc;lead;copper;silver;gold
northparkes,Northparkes Mine Project,-32.9,148.1,AU,copper;gold
mary-kathleen,Mary Kathleen Mine,-20.8,140.0,AU,uranium
"""

DOSSIER_DOC = """## geology
Sulphide-rich ore body in volcanic host rock.
## history
Opened in 1961; expanded twice.
## controversies
Tailings seepage reported downstream.
## sources
https://example.org/geology-report
https://example.org/annual-review
"""


@pytest.fixture
def store(data_root, fixed_clock):
    return CatalogStore(data_root, clock=fixed_clock)


def write_sites(tmp_path: Path, text: str = SITES_CSV, name: str = "sites.csv") -> Path:
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def test_ingest_accepts_valid_rows(store, tmp_path):
    report = store.ingest_sites(write_sites(tmp_path))
    assert report.accepted == 4
    assert report.rejections == []
    site = store.get_site("thompson-mine")
    assert site.name == "Thompson Mine"
    assert site.commodities == ("nickel",)


def test_out_of_range_latitude_rejected(store, tmp_path):
    csv = "site_id,name,lat,lon,country,commodities\nbad-site,Bad,95.0,10.0,CA,gold\n"
    report = store.ingest_sites(write_sites(tmp_path, csv))
    assert report.accepted == 0
    assert len(report.rejections) == 1
    assert "latitude" in report.rejections[0][1]


def test_double_ingest_reports_duplicates(store, tmp_path):
    path = write_sites(tmp_path)
    first = store.ingest_sites(path)
    second = store.ingest_sites(path)
    assert first.accepted == 4
    assert second.accepted == 0
    assert second.rejected == 4
    assert [site_id for _n, site_id in second.duplicates] == [
        "thompson-mine", "elliots-no-1-open-cut", "northparkes", "mary-kathleen",
    ]


def test_accepted_plus_rejected_equals_row_count(store, tmp_path):
    csv = (
        "site_id,name,lat,lon,country,commodities\n"
        "ok-one,One,10.0,10.0,BR,iron\n"
        "BAD_SLUG,Two,10.0,10.0,BR,iron\n"
        "ok-three,Three,10.0,200.0,BR,iron\n"
        "ok-four,Four,10.0,10.0,Brazil,iron\n"
        "ok-five,Five,-10.0,-52.0,BR,iron;bauxite\n"
    )
    report = store.ingest_sites(write_sites(tmp_path, csv))
    assert report.accepted + report.rejected == 5
    assert report.accepted == 2


def test_ingest_jsonl(store, tmp_path):
    rows = [
        {"site_id": "json-mine", "name": "Json Mine", "lat": 1.0, "lon": 2.0,
         "country": "br", "commodities": ["Gold", "copper"]},
        "not json at all",
    ]
    path = tmp_path / "sites.jsonl"
    path.write_text(json.dumps(rows[0]) + "\n" + rows[1] + "\n", encoding="utf-8")
    report = store.ingest_sites(path)
    assert report.accepted == 1
    assert report.rejected == 1
    assert store.get_site("json-mine").commodities == ("gold", "copper")
    assert store.get_site("json-mine").country == "BR"


def test_unreadable_file_is_whole_call_error(store, tmp_path):
    with pytest.raises(ValidationError):
        store.ingest_sites(tmp_path / "missing.csv")


def test_list_sites_empty_catalog(store):
    assert store.list_sites() == []


def test_list_sites_country_filter_australian_fixture(store, tmp_path):
    store.ingest_sites(write_sites(tmp_path))
    australian = store.list_sites(country="AU")
    assert [s.site_id for s in australian] == [
        "elliots-no-1-open-cut", "mary-kathleen", "northparkes",
    ]


def test_list_sites_conjunctive_filter(store, tmp_path):
    store.ingest_sites(write_sites(tmp_path))
    hits = store.list_sites(country="AU", commodity="gold")
    assert [s.site_id for s in hits] == ["elliots-no-1-open-cut", "northparkes"]


def test_list_sites_stable_serialization(store, tmp_path):
    store.ingest_sites(write_sites(tmp_path))
    one = json.dumps([s.to_json() for s in store.list_sites()], sort_keys=True)
    two = json.dumps([s.to_json() for s in store.list_sites()], sort_keys=True)
    assert one == two
    assert [s.site_id for s in store.list_sites()] == sorted(s.site_id for s in store.list_sites())


def test_catalog_reload_from_disk(data_root, fixed_clock, tmp_path):
    store = CatalogStore(data_root, clock=fixed_clock)
    store.ingest_sites(write_sites(tmp_path))
    reloaded = CatalogStore(data_root, clock=fixed_clock)
    assert [s.site_id for s in reloaded.list_sites()] == [s.site_id for s in store.list_sites()]


def test_dossier_happy_path(store, tmp_path):
    store.ingest_sites(write_sites(tmp_path))
    doc = tmp_path / "thompson.md"
    doc.write_text(DOSSIER_DOC, encoding="utf-8")
    dossier, warnings = store.ingest_dossier("thompson-mine", doc)
    assert warnings == []
    assert dossier.geology == "Sulphide-rich ore body in volcanic host rock."
    assert dossier.sources == [
        "https://example.org/geology-report",
        "https://example.org/annual-review",
    ]
    assert store.get_dossier("thompson-mine") == dossier


def test_dossier_missing_section_is_format_error(store, tmp_path):
    store.ingest_sites(write_sites(tmp_path))
    doc = tmp_path / "broken.md"
    doc.write_text("## geology\nrocks\n## history\nthings\n", encoding="utf-8")
    with pytest.raises(FormatError, match="controversies"):
        store.ingest_dossier("thompson-mine", doc)


def test_dossier_empty_section_warns(store, tmp_path):
    store.ingest_sites(write_sites(tmp_path))
    doc = tmp_path / "thin.md"
    doc.write_text("## geology\n## history\nsome history\n## controversies\nnone known\n", encoding="utf-8")
    dossier, warnings = store.ingest_dossier("thompson-mine", doc)
    assert len(warnings) == 1
    assert "geology" in warnings[0]
    assert dossier.geology == ""


def test_dossier_unknown_site(store, tmp_path):
    doc = tmp_path / "doc.md"
    doc.write_text(DOSSIER_DOC, encoding="utf-8")
    with pytest.raises(NotFoundError):
        store.ingest_dossier("nope", doc)


def test_dossier_bad_source_url(store, tmp_path):
    store.ingest_sites(write_sites(tmp_path))
    doc = tmp_path / "bad.md"
    doc.write_text(
        "## geology\ng\n## history\nh\n## controversies\nc\n## sources\nnot-a-url\n",
        encoding="utf-8",
    )
    with pytest.raises(FormatError, match="absolute URL"):
        store.ingest_dossier("thompson-mine", doc)


def test_dossier_round_trip_preserves_section_text():
    dossier, _ = parse_dossier_document("x-mine", DOSSIER_DOC)
    exported = export_dossier_document(dossier)
    reparsed, _ = parse_dossier_document("x-mine", exported)
    assert reparsed.geology == dossier.geology
    assert reparsed.history == dossier.history
    assert reparsed.controversies == dossier.controversies
    assert reparsed.sources == dossier.sources


def test_dossier_round_trip_normalizes_crlf():
    doc = DOSSIER_DOC.replace("\n", "\r\n")
    dossier, _ = parse_dossier_document("x-mine", doc)
    assert dossier.geology == "Sulphide-rich ore body in volcanic host rock."


def test_dossier_multiline_sections_kept_byte_exact():
    doc = "## geology\nline one\n\n  indented line\n## history\nh\n## controversies\nc\n"
    dossier, _ = parse_dossier_document("m", doc)
    assert dossier.geology == "line one\n\n  indented line"
    exported = export_dossier_document(dossier)
    reparsed, _ = parse_dossier_document("m", exported)
    assert reparsed.geology == dossier.geology
