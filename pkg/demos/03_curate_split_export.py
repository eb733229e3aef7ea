"""Curation walkthrough: categories, site-disjoint splits, SFT export.

Builds a synthetic manifest with the published category sizes (116 easy
positives, 188 hard positives, 300 civilians), assigns categories from
expert verdicts plus annotator captions, cuts the 301/303 train/test
split, and writes both SFT training files.
"""

import tempfile
from pathlib import Path

from samalign.captions import CaptionRecord, PromptKind
from samalign.curation import assign_all, build_splits, export_sft, write_sft
from samalign.geo import GeoPoint, SiteRecord, SiteSource
from samalign.imagery import ImageAsset
from samalign.manifest import Category, ExpertLabel, ExpertVerdict, ManifestEntry


def make_entry(i: int, source: SiteSource, label: ExpertLabel, caption_text: str) -> ManifestEntry:
    prefix = "sam" if source == SiteSource.SAM_KMZ else "city"
    eid = f"{prefix}-{i:04d}"
    site = SiteRecord(id=f"site-{eid}", point=GeoPoint(lon=(i % 360) - 180, lat=(i % 180) - 90), source=source)
    entry = ManifestEntry(id=eid, site=site)
    entry.image = ImageAsset(id=eid, site_id=site.id, path=f"{site.id}/16.png", width=1024, height=1024, zoom=16)
    entry.expert = ExpertVerdict(image_id=eid, label=label, reviewer="expert")
    entry.captions.append(
        CaptionRecord(image_id=eid, prompt_kind=PromptKind.CONCISE_DETAIL, text=caption_text,
                      model_id="annotator-72b", max_tokens=1024)
    )
    return entry


def main() -> None:
    entries = []
    for i in range(116):   # annotator names the threat -> C0
        entries.append(make_entry(i, SiteSource.SAM_KMZ, ExpertLabel.MILITARY, "a missile launch complex"))
    for i in range(116, 304):  # annotator misses it -> C1
        entries.append(make_entry(i, SiteSource.SAM_KMZ, ExpertLabel.MILITARY, "ancient irrigation patterns"))
    for i in range(304, 604):  # sampled civilians -> C2
        entries.append(make_entry(i, SiteSource.WORLD_CITIES, ExpertLabel.CIVILIAN, "rows of houses and roads"))

    assigned = assign_all(entries)
    by_cat = {c: sum(1 for e in entries if e.category == c) for c in Category}
    print(f"categorized {assigned} entries: " + ", ".join(f"{c.value}={n}" for c, n in by_cat.items()))

    train, test = build_splits(entries, seed=1)
    print(f"\ntrain: {len(train)} entries "
          f"({sum(1 for e in train if e.category == Category.C0)} C0, "
          f"{sum(1 for e in train if e.category == Category.C2)} C2)")
    print(f"test:  {len(test)} entries "
          f"({sum(1 for e in test if e.category == Category.C0)} C0, "
          f"{sum(1 for e in test if e.category == Category.C1)} C1, "
          f"{sum(1 for e in test if e.category == Category.C2)} C2)")
    overlap = {e.site.id for e in train} & {e.site.id for e in test}
    print(f"site overlap between splits: {len(overlap)}")

    # CoT captions for the train side, then both export variants.
    for entry in train:
        entry.captions.append(
            CaptionRecord(
                image_id=entry.id, prompt_kind=PromptKind.COT_CONVERT,
                text=f"<reasoning>Looking at {entry.id} step by step.</reasoning>"
                     f"<answer>{entry.captions[0].text}</answer>",
                model_id="converter", max_tokens=32768,
            )
        )
    outdir = Path(tempfile.mkdtemp(prefix="demo-sft-"))
    for variant in ("concise", "cot"):
        rows = export_sft(train, variant)
        write_sft(outdir / f"sft_{variant}.jsonl", rows)
        print(f"\n{variant} export: {len(rows)} records, first prompt {rows[0]['prompt']!r}")
    print(f"files written under {outdir}")


if __name__ == "__main__":
    main()
