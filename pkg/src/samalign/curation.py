"""Category assignment, train/test split construction, and SFT export.

Category rule: an expert-positive image whose annotator caption already
mentions a keyword is C0; expert-positive but missed by the annotator is
C1; sampled civilian imagery is C2. Flagging always goes through
:mod:`samalign.text` so there is a single matching authority.

Splits are site-disjoint for every category, not just the hard
positives: any site that contributes a training image never appears in
the test set.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .captions import PROMPT_TEMPLATES, CaptionRecord, PromptKind
from .errors import PipelineError
from .geo import SiteSource
from .manifest import Category, ExpertLabel, ManifestEntry, Split
from .text import KeywordSet, contains_keyword


class CurationError(PipelineError):
    pass


class MissingVerdict(CurationError):
    def __init__(self, image_id: str):
        super().__init__(f"entry {image_id!r} has no usable expert verdict")
        self.image_id = image_id


class MissingCaption(CurationError):
    def __init__(self, image_id: str, kind: PromptKind):
        super().__init__(f"entry {image_id!r} lacks a {kind.value} caption")
        self.image_id = image_id
        self.kind = kind


class InsufficientCategory(CurationError):
    def __init__(self, category: Category, have: int, need: int):
        super().__init__(f"not enough {category.value} entries: have {have}, need {need}")
        self.category = category
        self.have = have
        self.need = need


class SiteLeakage(CurationError):
    pass


@dataclass(frozen=True)
class SplitQuotas:
    """Per-category selection counts; ``test_c1=None`` means all remaining."""

    train_c0: int = 101
    train_c2: int = 200
    test_c0: int = 15
    test_c1: Optional[int] = None
    test_c2: int = 100


def assign_category(
    entry: ManifestEntry,
    annotator_caption: CaptionRecord,
    keywords: KeywordSet = KeywordSet(),
) -> Optional[Category]:
    """Derive the entry's category from the expert verdict and caption.

    Returns None for a civilian verdict on a KMZ-sourced candidate: the
    expert rejected it, so it belongs to neither the positive pool nor
    the sampled-civilian negatives.
    """
    if entry.expert is None or entry.expert.label == ExpertLabel.SKIP:
        raise MissingVerdict(entry.id)
    if annotator_caption.prompt_kind != PromptKind.CONCISE_DETAIL:
        raise MissingCaption(entry.id, PromptKind.CONCISE_DETAIL)
    if entry.expert.label == ExpertLabel.MILITARY:
        flagged = contains_keyword(annotator_caption.text, keywords).flagged
        return Category.C0 if flagged else Category.C1
    return Category.C2 if entry.site.source == SiteSource.WORLD_CITIES else None


def assign_all(entries: Sequence[ManifestEntry], keywords: KeywordSet = KeywordSet()) -> int:
    """Assign categories in place for every entry with a verdict and caption.

    Entries without a non-skip verdict or a concise caption are left
    untouched. Returns the number of entries categorized.
    """
    assigned = 0
    for entry in entries:
        if entry.expert is None or entry.expert.label == ExpertLabel.SKIP:
            continue
        caption = entry.caption_of_kind(PromptKind.CONCISE_DETAIL)
        if caption is None:
            if entry.expert.label == ExpertLabel.CIVILIAN and entry.site.source == SiteSource.WORLD_CITIES:
                entry.category = Category.C2
                assigned += 1
            continue
        entry.category = assign_category(entry, caption, keywords)
        if entry.category is not None:
            assigned += 1
    return assigned


def _take(
    pool: list[ManifestEntry],
    need: int,
    category: Category,
    blocked_sites: set[str],
) -> list[ManifestEntry]:
    picked = []
    for entry in pool:
        if len(picked) == need:
            break
        if entry.site.id in blocked_sites:
            continue
        picked.append(entry)
    if len(picked) < need:
        available = sum(1 for e in pool if e.site.id not in blocked_sites)
        raise InsufficientCategory(category, available, need)
    return picked


def build_splits(
    entries: Sequence[ManifestEntry],
    quotas: SplitQuotas = SplitQuotas(),
    seed: int = 0,
) -> tuple[list[ManifestEntry], list[ManifestEntry]]:
    """Select site-disjoint train/test subsets matching the quotas.

    Deterministic for a fixed seed regardless of input order (entries are
    canonicalized by id before the seeded shuffle). Entries not selected
    keep ``split=None``.
    """
    pools: dict[Category, list[ManifestEntry]] = {c: [] for c in Category}
    for entry in entries:
        if entry.category is not None:
            pools[entry.category].append(entry)

    rng = np.random.default_rng(seed)
    for category in Category:
        pool = sorted(pools[category], key=lambda e: e.id)
        rng.shuffle(pool)
        pools[category] = pool

    train_c0 = _take(pools[Category.C0], quotas.train_c0, Category.C0, set())
    train_c2 = _take(pools[Category.C2], quotas.train_c2, Category.C2, set())
    train = train_c0 + train_c2
    train_ids = {e.id for e in train}
    train_sites = {e.site.id for e in train}

    c0_rest = [e for e in pools[Category.C0] if e.id not in train_ids]
    test_c0 = _take(c0_rest, quotas.test_c0, Category.C0, train_sites)

    c1_all = [e for e in pools[Category.C1] if e.site.id not in train_sites]
    if quotas.test_c1 is None:
        test_c1 = c1_all
    else:
        test_c1 = _take(c1_all, quotas.test_c1, Category.C1, train_sites)

    c2_rest = [e for e in pools[Category.C2] if e.id not in train_ids]
    test_c2 = _take(c2_rest, quotas.test_c2, Category.C2, train_sites)
    test = test_c0 + test_c1 + test_c2

    test_ids = {e.id for e in test}
    test_sites = {e.site.id for e in test}
    if train_ids & test_ids or train_sites & test_sites:
        raise SiteLeakage("internal error: train/test share an image or site")

    train.sort(key=lambda e: (e.category.value, e.id))
    test.sort(key=lambda e: (e.category.value, e.id))
    for entry in train:
        entry.split = Split.TRAIN
    for entry in test:
        entry.split = Split.TEST
    return train, test


_SFT_PROMPTS = {
    "concise": PROMPT_TEMPLATES[PromptKind.CONCISE_DETAIL],
    "cot": PROMPT_TEMPLATES[PromptKind.OPEN_ENDED],
}
_SFT_CAPTION_KIND = {
    "concise": PromptKind.CONCISE_DETAIL,
    "cot": PromptKind.COT_CONVERT,
}


def export_sft(train_entries: Sequence[ManifestEntry], variant: str) -> list[dict]:
    """Build SFT rows ({"image", "prompt", "response"}) for the train split.

    The concise variant pairs the detail prompt with the annotator
    caption; the CoT variant pairs the open-ended prompt with the tagged
    reasoning caption.
    """
    if variant not in _SFT_PROMPTS:
        raise ValueError(f"unknown SFT variant {variant!r} (expected 'concise' or 'cot')")
    kind = _SFT_CAPTION_KIND[variant]
    prompt = _SFT_PROMPTS[variant]
    rows = []
    for entry in train_entries:
        caption = entry.caption_of_kind(kind)
        if caption is None:
            raise MissingCaption(entry.id, kind)
        if entry.image is None:
            raise CurationError(f"entry {entry.id!r} has no fetched image")
        rows.append({"image": entry.image.path, "prompt": prompt, "response": caption.text})
    return rows


def write_sft(path: Union[str, Path], rows: Sequence[dict]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with tmp.open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")
    os.replace(tmp, path)
