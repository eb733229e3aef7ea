"""Dataset manifest: the persistent record of curated images.

One JSON object per line, append-friendly, with the schema::

    {"id": ..., "site": {"id","lon","lat","source","name"},
     "image": {"path","w","h","zoom"} | null,
     "expert": {"label","reviewer","ts"} | null,
     "category": "C0"|"C1"|"C2"|null, "split": "train"|"test"|null,
     "captions": [{"kind","text","model_id","max_tokens","ts"}]}

``image`` is null between ingest and fetch.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence, Union

from .captions import CaptionRecord, PromptKind
from .errors import PipelineError
from .geo import GeoPoint, SiteRecord, SiteSource
from .imagery import ImageAsset


class ManifestError(PipelineError):
    pass


class ExpertLabel(str, Enum):
    MILITARY = "military"
    CIVILIAN = "civilian"
    SKIP = "skip"


class Category(str, Enum):
    C0 = "C0"   # expert-positive, annotator caption flagged
    C1 = "C1"   # expert-positive, annotator caption missed
    C2 = "C2"   # sampled civilian negative


class Split(str, Enum):
    TRAIN = "train"
    TEST = "test"


@dataclass(frozen=True)
class ExpertVerdict:
    image_id: str
    label: ExpertLabel
    reviewer: str
    decided_at: datetime = field(default_factory=lambda: datetime.now(timezone.utc))


@dataclass
class ManifestEntry:
    id: str
    site: SiteRecord
    image: Optional[ImageAsset] = None
    expert: Optional[ExpertVerdict] = None
    category: Optional[Category] = None
    split: Optional[Split] = None
    captions: list[CaptionRecord] = field(default_factory=list)

    def caption_of_kind(self, kind: PromptKind) -> Optional[CaptionRecord]:
        """Latest caption of the given kind, or None."""
        for record in reversed(self.captions):
            if record.prompt_kind == kind:
                return record
        return None


def _ts(value: datetime) -> str:
    return value.isoformat()


def _parse_ts(value: str) -> datetime:
    return datetime.fromisoformat(value)


def entry_to_json(entry: ManifestEntry) -> dict:
    return {
        "id": entry.id,
        "site": {
            "id": entry.site.id,
            "lon": entry.site.point.lon,
            "lat": entry.site.point.lat,
            "source": entry.site.source.value,
            "name": entry.site.name,
        },
        "image": None
        if entry.image is None
        else {
            "path": entry.image.path,
            "w": entry.image.width,
            "h": entry.image.height,
            "zoom": entry.image.zoom,
        },
        "expert": None
        if entry.expert is None
        else {
            "label": entry.expert.label.value,
            "reviewer": entry.expert.reviewer,
            "ts": _ts(entry.expert.decided_at),
        },
        "category": entry.category.value if entry.category else None,
        "split": entry.split.value if entry.split else None,
        "captions": [
            {
                "kind": c.prompt_kind.value,
                "text": c.text,
                "model_id": c.model_id,
                "max_tokens": c.max_tokens,
                "ts": _ts(c.created_at),
            }
            for c in entry.captions
        ],
    }


def entry_from_json(obj: dict) -> ManifestEntry:
    site = SiteRecord(
        id=obj["site"]["id"],
        point=GeoPoint(lon=obj["site"]["lon"], lat=obj["site"]["lat"]),
        source=SiteSource(obj["site"]["source"]),
        name=obj["site"].get("name"),
    )
    image = None
    if obj.get("image"):
        image = ImageAsset(
            id=obj["id"],
            site_id=site.id,
            path=obj["image"]["path"],
            width=obj["image"]["w"],
            height=obj["image"]["h"],
            zoom=obj["image"]["zoom"],
        )
    expert = None
    if obj.get("expert"):
        expert = ExpertVerdict(
            image_id=obj["id"],
            label=ExpertLabel(obj["expert"]["label"]),
            reviewer=obj["expert"]["reviewer"],
            decided_at=_parse_ts(obj["expert"]["ts"]),
        )
    captions = [
        CaptionRecord(
            image_id=obj["id"],
            prompt_kind=PromptKind(c["kind"]),
            text=c["text"],
            model_id=c["model_id"],
            max_tokens=c["max_tokens"],
            created_at=_parse_ts(c["ts"]),
        )
        for c in obj.get("captions", [])
    ]
    return ManifestEntry(
        id=obj["id"],
        site=site,
        image=image,
        expert=expert,
        category=Category(obj["category"]) if obj.get("category") else None,
        split=Split(obj["split"]) if obj.get("split") else None,
        captions=captions,
    )


def read_manifest(path: Union[str, Path]) -> list[ManifestEntry]:
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"manifest not found: {path}")
    entries = []
    seen: set[str] = set()
    for i, line in enumerate(path.read_text(encoding="utf-8").splitlines()):
        if not line.strip():
            continue
        try:
            entry = entry_from_json(json.loads(line))
        except (json.JSONDecodeError, KeyError, ValueError) as exc:
            raise ManifestError(f"{path}:{i + 1}: bad manifest line: {exc}") from exc
        if entry.id in seen:
            raise ManifestError(f"{path}:{i + 1}: duplicate entry id {entry.id!r}")
        seen.add(entry.id)
        entries.append(entry)
    return entries


def write_manifest(path: Union[str, Path], entries: Sequence[ManifestEntry]) -> None:
    """Atomic rewrite (tmp + rename)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with tmp.open("w", encoding="utf-8") as fh:
        for entry in entries:
            fh.write(json.dumps(entry_to_json(entry), ensure_ascii=False) + "\n")
    os.replace(tmp, path)


def read_outputs(path: Union[str, Path]) -> dict[str, str]:
    """Load an outputs.jsonl file ({"image_id", "text"} per line)."""
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"outputs file not found: {path}")
    outputs: dict[str, str] = {}
    for i, line in enumerate(path.read_text(encoding="utf-8").splitlines()):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            outputs[obj["image_id"]] = obj["text"]
        except (json.JSONDecodeError, KeyError) as exc:
            raise ManifestError(f"{path}:{i + 1}: bad outputs line: {exc}") from exc
    return outputs
