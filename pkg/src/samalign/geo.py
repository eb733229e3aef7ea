"""Site-coordinate ingestion: KMZ placemarks and world-cities sampling.

Both entry points are pure given their inputs; ``sample_city_points`` is
reproducible bit-for-bit for a fixed seed.
"""

from __future__ import annotations

import csv
import io
import warnings
import zipfile
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence
from xml.etree import ElementTree

import numpy as np

from .errors import PipelineError


class GeoIngestError(PipelineError):
    pass


class NotAZip(GeoIngestError):
    pass


class NoKmlEntry(GeoIngestError):
    pass


class MalformedKml(GeoIngestError):
    pass


class EmptyCityList(GeoIngestError):
    pass


class BadCityCsv(GeoIngestError):
    pass


class KmlSkipWarning(UserWarning):
    """A placemark was skipped (no usable Point geometry)."""


class SiteSource(str, Enum):
    SAM_KMZ = "sam_kmz"
    WORLD_CITIES = "world_cities"


@dataclass(frozen=True)
class GeoPoint:
    """WGS84 coordinate; lon in [-180, 180], lat in [-90, 90]."""

    lon: float
    lat: float

    def __post_init__(self) -> None:
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"lon out of range: {self.lon}")
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"lat out of range: {self.lat}")


@dataclass(frozen=True)
class SiteRecord:
    id: str
    point: GeoPoint
    source: SiteSource
    name: Optional[str] = None


def parse_kmz(archive_bytes: bytes) -> list[SiteRecord]:
    """Extract one SiteRecord per Placemark with a Point coordinate triple.

    Document order is preserved; altitude values are dropped. Placemarks
    without Point geometry (folders, polygons) or with unusable
    coordinates are skipped with a :class:`KmlSkipWarning` rather than
    failing the whole archive.
    """
    try:
        archive = zipfile.ZipFile(io.BytesIO(archive_bytes))
    except zipfile.BadZipFile as exc:
        raise NotAZip(f"input is not a ZIP archive: {exc}") from exc

    kml_name = next((n for n in archive.namelist() if n.lower().endswith(".kml")), None)
    if kml_name is None:
        raise NoKmlEntry("archive contains no .kml entry")

    kml_bytes = archive.read(kml_name)
    try:
        root = ElementTree.fromstring(kml_bytes)
    except ElementTree.ParseError as exc:
        line, col = getattr(exc, "position", (None, None))
        raise MalformedKml(f"{kml_name}: XML parse error at line {line}, column {col}: {exc}") from exc

    records: list[SiteRecord] = []
    for idx, placemark in enumerate(root.findall(".//{*}Placemark")):
        name_el = placemark.find("{*}name")
        name = name_el.text.strip() if name_el is not None and name_el.text else None
        coords_el = placemark.find(".//{*}Point/{*}coordinates")
        if coords_el is None or not (coords_el.text or "").strip():
            warnings.warn(
                f"placemark #{idx} ({name or 'unnamed'}) has no Point coordinates; skipped",
                KmlSkipWarning,
                stacklevel=2,
            )
            continue
        first = coords_el.text.strip().split()[0]
        parts = first.split(",")
        try:
            lon, lat = float(parts[0]), float(parts[1])
            point = GeoPoint(lon=lon, lat=lat)
        except (IndexError, ValueError) as exc:
            warnings.warn(
                f"placemark #{idx} ({name or 'unnamed'}) has unusable coordinates {first!r}: {exc}",
                KmlSkipWarning,
                stacklevel=2,
            )
            continue
        records.append(
            SiteRecord(
                id=f"sam-{len(records):05d}",
                point=point,
                source=SiteSource.SAM_KMZ,
                name=name,
            )
        )
    return records


def load_world_cities(csv_text: str) -> list[tuple[str, GeoPoint]]:
    """Parse a world-cities CSV (required header columns: city, lat, lng)."""
    reader = csv.DictReader(io.StringIO(csv_text))
    fields = set(reader.fieldnames or ())
    missing = {"city", "lat", "lng"} - fields
    if missing:
        raise BadCityCsv(f"city CSV is missing required columns: {sorted(missing)}")
    cities = []
    for i, row in enumerate(reader):
        try:
            cities.append((row["city"], GeoPoint(lon=float(row["lng"]), lat=float(row["lat"]))))
        except ValueError as exc:
            raise BadCityCsv(f"row {i + 2}: {exc}") from exc
    return cities


def sample_city_points(
    cities: Sequence[tuple[str, GeoPoint]],
    n: int,
    perturb_radius: float = 0.05,
    seed: int = 0,
) -> list[SiteRecord]:
    """Draw ``n`` perturbed city locations as candidate negatives.

    Each draw picks a city uniformly, then adds an independent uniform
    offset in [-perturb_radius, +perturb_radius] per axis, clamped back
    to valid WGS84 ranges. The default radius (0.05 deg, about 5 km at
    the equator) reaches outskirts and farmland without leaving the
    metro area.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    if perturb_radius < 0:
        raise ValueError("perturb_radius must be >= 0")
    if n == 0:
        return []
    if not cities:
        raise EmptyCityList("cannot sample from an empty city list")

    rng = np.random.default_rng(seed)
    idxs = rng.integers(0, len(cities), size=n)
    offsets = rng.uniform(-perturb_radius, perturb_radius, size=(n, 2))

    records = []
    for i in range(n):
        name, base = cities[int(idxs[i])]
        lon = float(np.clip(base.lon + offsets[i, 0], -180.0, 180.0))
        lat = float(np.clip(base.lat + offsets[i, 1], -90.0, 90.0))
        records.append(
            SiteRecord(
                id=f"city-{i:05d}",
                point=GeoPoint(lon=lon, lat=lat),
                source=SiteSource.WORLD_CITIES,
                name=name,
            )
        )
    return records
