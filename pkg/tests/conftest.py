from __future__ import annotations

import io
import zipfile
from datetime import datetime, timezone

import pytest
from PIL import Image

from samalign.captions import CaptionRecord, PromptKind
from samalign.geo import GeoPoint, SiteRecord, SiteSource
from samalign.imagery import ImageAsset
from samalign.manifest import Category, ExpertLabel, ExpertVerdict, ManifestEntry

KML_NS = 'xmlns="http://www.opengis.net/kml/2.2"'
CITIES_CSV_HEADER = "city,lat,lng\n"


def make_kml(placemarks: list[str], namespace: bool = True) -> str:
    ns = f" {KML_NS}" if namespace else ""
    return (
        f'<?xml version="1.0" encoding="UTF-8"?>\n<kml{ns}><Document>'
        + "".join(placemarks)
        + "</Document></kml>"
    )


def placemark(lon: float, lat: float, alt: float = 0.0, name: str | None = None) -> str:
    name_el = f"<name>{name}</name>" if name else ""
    return (
        f"<Placemark>{name_el}<Point><coordinates>{lon},{lat},{alt}</coordinates></Point></Placemark>"
    )


def make_kmz(kml_text: str, entry_name: str = "doc.kml") -> bytes:
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w") as zf:
        zf.writestr(entry_name, kml_text)
    return buf.getvalue()


def png_bytes(size: tuple[int, int] = (8, 8), color: tuple[int, int, int] = (10, 120, 40)) -> bytes:
    buf = io.BytesIO()
    Image.new("RGB", size, color).save(buf, format="PNG")
    return buf.getvalue()


def jpeg_bytes(size: tuple[int, int] = (8, 8)) -> bytes:
    buf = io.BytesIO()
    Image.new("RGB", size, (200, 30, 30)).save(buf, format="JPEG")
    return buf.getvalue()


def site(site_id: str, source: SiteSource = SiteSource.SAM_KMZ, lon: float = 32.8, lat: float = 39.9) -> SiteRecord:
    return SiteRecord(id=site_id, point=GeoPoint(lon=lon, lat=lat), source=source)


TS = datetime(2025, 6, 1, tzinfo=timezone.utc)


def caption(image_id: str, text: str, kind: PromptKind = PromptKind.CONCISE_DETAIL) -> CaptionRecord:
    return CaptionRecord(
        image_id=image_id, prompt_kind=kind, text=text, model_id="annotator", max_tokens=1024, created_at=TS
    )


def entry(
    entry_id: str,
    source: SiteSource = SiteSource.SAM_KMZ,
    label: ExpertLabel | None = None,
    category: Category | None = None,
    caption_text: str | None = None,
    site_id: str | None = None,
    with_image: bool = True,
) -> ManifestEntry:
    s = site(site_id or f"site-{entry_id}", source)
    e = ManifestEntry(id=entry_id, site=s, category=category)
    if with_image:
        e.image = ImageAsset(id=entry_id, site_id=s.id, path=f"{s.id}/16_1024x1024.png", width=1024, height=1024, zoom=16)
    if label is not None:
        e.expert = ExpertVerdict(image_id=entry_id, label=label, reviewer="expert", decided_at=TS)
    if caption_text is not None:
        e.captions.append(caption(entry_id, caption_text))
    return e


def synthetic_categorized_manifest(n_c0: int = 116, n_c1: int = 188, n_c2: int = 300) -> list[ManifestEntry]:
    """Every entry gets its own site, mirroring distinct-location curation."""
    entries = []
    for i in range(n_c0):
        entries.append(entry(f"c0-{i:04d}", SiteSource.SAM_KMZ, ExpertLabel.MILITARY, Category.C0, "a missile site"))
    for i in range(n_c1):
        entries.append(entry(f"c1-{i:04d}", SiteSource.SAM_KMZ, ExpertLabel.MILITARY, Category.C1, "dusty terrain"))
    for i in range(n_c2):
        entries.append(entry(f"c2-{i:04d}", SiteSource.WORLD_CITIES, ExpertLabel.CIVILIAN, Category.C2, "houses and roads"))
    return entries


@pytest.fixture
def categorized_manifest() -> list[ManifestEntry]:
    return synthetic_categorized_manifest()
