"""Expert-review HTTP service.

Serves the candidate queue to the browser UI and records verdicts.
Every verdict is appended (with fsync) to the verdicts log *before* the
request is acknowledged, so an acknowledged verdict can never be lost.
The verdicts file keeps full history; the latest non-skip verdict per
image wins when merging into the manifest.
"""

from __future__ import annotations

import json
import mimetypes
import os
import socket
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from threading import Lock
from typing import Optional

from fastapi import FastAPI, Response
from fastapi.responses import JSONResponse
from filelock import FileLock, Timeout

from .captions import PromptKind
from .curation import assign_category
from .errors import PipelineError
from .geo import SiteSource
from .manifest import Category, ExpertLabel, ExpertVerdict, ManifestEntry, read_manifest
from .text import KeywordSet


class ReviewError(PipelineError):
    pass


class PortInUse(ReviewError):
    pass


class ManifestLocked(ReviewError):
    pass


@dataclass
class VerdictRecord:
    image_id: str
    label: ExpertLabel
    reviewer: str
    decided_at: datetime

    def to_json(self) -> dict:
        return {
            "image_id": self.image_id,
            "label": self.label.value,
            "reviewer": self.reviewer,
            "ts": self.decided_at.isoformat(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "VerdictRecord":
        return cls(
            image_id=obj["image_id"],
            label=ExpertLabel(obj["label"]),
            reviewer=obj["reviewer"],
            decided_at=datetime.fromisoformat(obj["ts"]),
        )


def read_verdicts(path: Path) -> list[VerdictRecord]:
    if not path.exists():
        return []
    records = []
    for line in path.read_text(encoding="utf-8").splitlines():
        if line.strip():
            records.append(VerdictRecord.from_json(json.loads(line)))
    return records


def latest_verdicts(records: list[VerdictRecord]) -> dict[str, VerdictRecord]:
    """Last writer wins; a later skip does not erase an earlier decision."""
    latest: dict[str, VerdictRecord] = {}
    for record in records:
        if record.label == ExpertLabel.SKIP and record.image_id in latest:
            continue
        latest[record.image_id] = record
    return latest


def merge_verdicts(entries: list[ManifestEntry], records: list[VerdictRecord]) -> int:
    """Write the winning verdicts into manifest entries; returns count."""
    latest = latest_verdicts(records)
    merged = 0
    for entry in entries:
        record = latest.get(entry.id)
        if record is None or record.label == ExpertLabel.SKIP:
            continue
        entry.expert = ExpertVerdict(
            image_id=entry.id,
            label=record.label,
            reviewer=record.reviewer,
            decided_at=record.decided_at,
        )
        merged += 1
    return merged


class ReviewStore:
    """Manifest snapshot plus a durable append-only verdict log."""

    def __init__(
        self,
        manifest_path: Path,
        verdicts_path: Path,
        cache_dir: Path,
        keywords: KeywordSet = KeywordSet(),
        kmz_first: bool = True,
    ):
        self.manifest_path = Path(manifest_path)
        self.verdicts_path = Path(verdicts_path)
        self.cache_dir = Path(cache_dir)
        self.keywords = keywords
        self._write_lock = Lock()
        self._file_lock = FileLock(str(self.verdicts_path) + ".lock")
        try:
            self._file_lock.acquire(timeout=0.5)
        except Timeout as exc:
            raise ManifestLocked(f"another writer holds {self.verdicts_path}") from exc

        self.entries = read_manifest(self.manifest_path)
        self.by_id = {e.id: e for e in self.entries}
        self.verdicts = read_verdicts(self.verdicts_path)

        def order(entry: ManifestEntry):
            kmz_rank = 0 if entry.site.source == SiteSource.SAM_KMZ else 1
            return (kmz_rank, entry.site.id) if kmz_first else (entry.site.id,)

        self._queue_order = sorted(self.entries, key=order)

    def close(self) -> None:
        if self._file_lock.is_locked:
            self._file_lock.release()

    def _decided_ids(self) -> set[str]:
        return {
            image_id
            for image_id, record in latest_verdicts(self.verdicts).items()
            if record.label != ExpertLabel.SKIP
        }

    def _skipped_ids(self) -> set[str]:
        return {
            image_id
            for image_id, record in latest_verdicts(self.verdicts).items()
            if record.label == ExpertLabel.SKIP
        }

    def next_entry(self) -> Optional[ManifestEntry]:
        """First candidate without a non-skip verdict; skipped ones last."""
        decided = self._decided_ids()
        skipped = self._skipped_ids()
        fresh = [e for e in self._queue_order if e.id not in decided and e.id not in skipped]
        if fresh:
            return fresh[0]
        deferred = [e for e in self._queue_order if e.id not in decided]
        return deferred[0] if deferred else None

    def record_verdict(self, image_id: str, label: ExpertLabel, reviewer: str) -> Optional[Category]:
        if image_id not in self.by_id:
            raise KeyError(image_id)
        record = VerdictRecord(
            image_id=image_id,
            label=label,
            reviewer=reviewer,
            decided_at=datetime.now(timezone.utc),
        )
        with self._write_lock:
            self.verdicts_path.parent.mkdir(parents=True, exist_ok=True)
            with self.verdicts_path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(record.to_json()) + "\n")
                fh.flush()
                os.fsync(fh.fileno())
            self.verdicts.append(record)
        return self._category_preview(self.by_id[image_id], label)

    def _category_preview(self, entry: ManifestEntry, label: ExpertLabel) -> Optional[Category]:
        if label == ExpertLabel.SKIP:
            return None
        preview = ManifestEntry(id=entry.id, site=entry.site, captions=entry.captions)
        preview.expert = ExpertVerdict(image_id=entry.id, label=label, reviewer="")
        caption = entry.caption_of_kind(PromptKind.CONCISE_DETAIL)
        if caption is None:
            if label == ExpertLabel.MILITARY:
                return None
            return Category.C2 if entry.site.source == SiteSource.WORLD_CITIES else None
        return assign_category(preview, caption, self.keywords)

    def stats(self) -> dict:
        latest = latest_verdicts(self.verdicts)
        per_category = {c.value: 0 for c in Category}
        reviewed = 0
        for image_id, record in latest.items():
            if record.label == ExpertLabel.SKIP:
                continue
            entry = self.by_id.get(image_id)
            if entry is None:
                continue
            reviewed += 1
            category = self._category_preview(entry, record.label)
            if category is not None:
                per_category[category.value] += 1
        return {
            "reviewed": reviewed,
            "remaining": len(self.entries) - reviewed,
            "per_category": per_category,
        }


def create_app(store: ReviewStore, ui_dir: Optional[Path] = None) -> FastAPI:
    app = FastAPI(title="curation review service")

    @app.get("/api/queue/next")
    def queue_next():
        entry = store.next_entry()
        if entry is None:
            return Response(status_code=204)
        return {
            "image_id": entry.id,
            "image_url": f"/api/images/{entry.id}",
            "site": {
                "id": entry.site.id,
                "lon": entry.site.point.lon,
                "lat": entry.site.point.lat,
                "source": entry.site.source.value,
                "name": entry.site.name,
            },
            "captions": [{"kind": c.prompt_kind.value, "text": c.text} for c in entry.captions],
        }

    @app.get("/api/images/{image_id}")
    def image_bytes(image_id: str):
        entry = store.by_id.get(image_id)
        if entry is None or entry.image is None:
            return JSONResponse(status_code=404, content={"error": f"no image for {image_id!r}"})
        path = store.cache_dir / entry.image.path
        if not path.exists():
            return JSONResponse(status_code=404, content={"error": f"image file missing: {entry.image.path}"})
        media_type = mimetypes.guess_type(str(path))[0] or "application/octet-stream"
        return Response(content=path.read_bytes(), media_type=media_type)

    @app.post("/api/verdict")
    def post_verdict(body: dict):
        image_id = body.get("image_id", "")
        reviewer = body.get("reviewer", "")
        try:
            label = ExpertLabel(body.get("label", ""))
        except ValueError:
            return JSONResponse(status_code=422, content={"error": f"bad label {body.get('label')!r}"})
        try:
            category = store.record_verdict(image_id, label, reviewer)
        except KeyError:
            return JSONResponse(status_code=404, content={"error": f"unknown image_id {image_id!r}"})
        return {"ok": True, "category_if_assigned": category.value if category else None}

    @app.get("/api/stats")
    def stats():
        return store.stats()

    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app


def check_port_free(host: str, port: int) -> None:
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        probe.bind((host, port))
    except OSError as exc:
        raise PortInUse(f"cannot bind {host}:{port}: {exc}") from exc
    finally:
        probe.close()


def serve_review(
    store: ReviewStore,
    host: str = "127.0.0.1",
    port: int = 8787,
    ui_dir: Optional[Path] = None,
) -> None:
    """Run the service until interrupted."""
    import uvicorn

    check_port_free(host, port)
    app = create_app(store, ui_dir=ui_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")
