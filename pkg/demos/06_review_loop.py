"""Drive the expert-review service end to end, in process.

Creates a three-image fixture manifest, mounts the review API, and plays
the reviewer: pull the next candidate, inspect its caption, post a
verdict, repeat until the queue drains, then read the stats. The verdict
log on disk is shown at the end; every line was fsynced before its
request was acknowledged.
"""

import io
import tempfile
from pathlib import Path

from fastapi.testclient import TestClient
from PIL import Image

from samalign.captions import CaptionRecord, PromptKind
from samalign.geo import GeoPoint, SiteRecord, SiteSource
from samalign.imagery import ImageAsset
from samalign.manifest import ExpertLabel, ManifestEntry, write_manifest
from samalign.review import ReviewStore, create_app

FIXTURES = [
    ("sam-001", SiteSource.SAM_KMZ, "circular launch pads with radar", ExpertLabel.MILITARY),
    ("sam-002", SiteSource.SAM_KMZ, "terraced farmland on a hillside", ExpertLabel.CIVILIAN),
    ("city-001", SiteSource.WORLD_CITIES, "rows of houses and a park", ExpertLabel.CIVILIAN),
]


def build_fixture(workdir: Path) -> tuple[Path, Path, Path]:
    cache = workdir / "cache"
    entries = []
    for eid, source, caption, _ in FIXTURES:
        site = SiteRecord(id=f"site-{eid}", point=GeoPoint(lon=10, lat=20), source=source)
        entry = ManifestEntry(id=eid, site=site)
        entry.image = ImageAsset(id=eid, site_id=site.id, path=f"{site.id}/16.png",
                                 width=64, height=64, zoom=16)
        img_path = cache / entry.image.path
        img_path.parent.mkdir(parents=True, exist_ok=True)
        buf = io.BytesIO()
        Image.new("RGB", (64, 64), (80, 90, 60)).save(buf, format="PNG")
        img_path.write_bytes(buf.getvalue())
        entry.captions.append(
            CaptionRecord(image_id=eid, prompt_kind=PromptKind.CONCISE_DETAIL, text=caption,
                          model_id="annotator-72b", max_tokens=1024)
        )
        entries.append(entry)
    manifest = workdir / "manifest.jsonl"
    write_manifest(manifest, entries)
    return manifest, workdir / "verdicts.jsonl", cache


def main() -> None:
    workdir = Path(tempfile.mkdtemp(prefix="demo-review-"))
    manifest, verdicts, cache = build_fixture(workdir)
    store = ReviewStore(manifest_path=manifest, verdicts_path=verdicts, cache_dir=cache)
    client = TestClient(create_app(store))
    decisions = {eid: label for eid, _, _, label in FIXTURES}

    print("reviewing the queue:")
    while True:
        response = client.get("/api/queue/next")
        if response.status_code == 204:
            print("  queue drained (204)")
            break
        item = response.json()
        label = decisions[item["image_id"]]
        caption = item["captions"][0]["text"]
        image = client.get(item["image_url"])
        verdict = client.post(
            "/api/verdict",
            json={"image_id": item["image_id"], "label": label.value, "reviewer": "demo-expert"},
        ).json()
        print(f"  {item['image_id']:<9} ({len(image.content):>4} bytes) caption={caption!r:<38} "
              f"-> {label.value:<9} category={verdict['category_if_assigned']}")

    print("\nstats:", client.get("/api/stats").json())
    print("\ndurable verdict log:")
    for line in verdicts.read_text().strip().splitlines():
        print(f"  {line}")
    store.close()


if __name__ == "__main__":
    main()
