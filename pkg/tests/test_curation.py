from __future__ import annotations

import pytest

from samalign.captions import PromptKind
from samalign.curation import (
    InsufficientCategory,
    MissingCaption,
    MissingVerdict,
    SplitQuotas,
    assign_all,
    assign_category,
    build_splits,
    export_sft,
)
from samalign.geo import SiteSource
from samalign.manifest import Category, ExpertLabel, Split
from tests.conftest import caption, entry, synthetic_categorized_manifest


class TestAssignCategory:
    def test_military_flagged_caption_is_c0(self):
        e = entry("x", SiteSource.SAM_KMZ, ExpertLabel.MILITARY)
        assert assign_category(e, caption("x", "shows a missile launch site")) == Category.C0

    def test_military_missed_caption_is_c1(self):
        e = entry("x", SiteSource.SAM_KMZ, ExpertLabel.MILITARY)
        assert assign_category(e, caption("x", "ancient irrigation systems")) == Category.C1

    def test_civilian_is_c2(self):
        e = entry("x", SiteSource.WORLD_CITIES, ExpertLabel.CIVILIAN)
        assert assign_category(e, caption("x", "anything at all")) == Category.C2

    def test_civilian_verdict_on_kmz_candidate_is_dropped(self):
        e = entry("x", SiteSource.SAM_KMZ, ExpertLabel.CIVILIAN)
        assert assign_category(e, caption("x", "a quarry")) is None

    def test_missing_verdict(self):
        e = entry("x")
        with pytest.raises(MissingVerdict):
            assign_category(e, caption("x", "text"))
        e = entry("x", label=ExpertLabel.SKIP)
        with pytest.raises(MissingVerdict):
            assign_category(e, caption("x", "text"))

    def test_wrong_caption_kind(self):
        e = entry("x", label=ExpertLabel.MILITARY)
        with pytest.raises(MissingCaption):
            assign_category(e, caption("x", "text", PromptKind.LONG_DETAIL))

    def test_agrees_with_text_module(self):
        # Single matching authority: the same keyword set drives both.
        from samalign.text import KeywordSet, contains_keyword

        kw = KeywordSet(("radar",))
        e = entry("x", label=ExpertLabel.MILITARY)
        text = "a radar dome on a hill"
        expected = Category.C0 if contains_keyword(text, kw).flagged else Category.C1
        assert assign_category(e, caption("x", text), kw) == expected


class TestAssignAll:
    def test_mixed_manifest(self):
        entries = [
            entry("a", SiteSource.SAM_KMZ, ExpertLabel.MILITARY, caption_text="missile pads"),
            entry("b", SiteSource.SAM_KMZ, ExpertLabel.MILITARY, caption_text="empty desert"),
            entry("c", SiteSource.WORLD_CITIES, ExpertLabel.CIVILIAN, caption_text="houses"),
            entry("d", SiteSource.SAM_KMZ, label=None, caption_text="no verdict yet"),
            entry("e", SiteSource.SAM_KMZ, ExpertLabel.SKIP, caption_text="skipped"),
        ]
        assert assign_all(entries) == 3
        assert [e.category for e in entries] == [Category.C0, Category.C1, Category.C2, None, None]

    def test_civilian_without_caption_still_c2(self):
        e = entry("c", SiteSource.WORLD_CITIES, ExpertLabel.CIVILIAN)
        assert assign_all([e]) == 1
        assert e.category == Category.C2


class TestBuildSplits:
    def test_paper_quota_counts(self, categorized_manifest):
        train, test = build_splits(categorized_manifest, seed=3)
        assert len(train) == 301 and len(test) == 303
        by_cat = lambda entries, c: [e for e in entries if e.category == c]
        assert len(by_cat(train, Category.C0)) == 101
        assert len(by_cat(train, Category.C2)) == 200
        assert len(by_cat(test, Category.C0)) == 15
        assert len(by_cat(test, Category.C1)) == 188
        assert len(by_cat(test, Category.C2)) == 100

    def test_disjoint_by_image_and_site(self, categorized_manifest):
        train, test = build_splits(categorized_manifest, seed=3)
        assert not {e.id for e in train} & {e.id for e in test}
        assert not {e.site.id for e in train} & {e.site.id for e in test}

    def test_split_fields_set(self, categorized_manifest):
        train, test = build_splits(categorized_manifest, seed=3)
        assert all(e.split == Split.TRAIN for e in train)
        assert all(e.split == Split.TEST for e in test)

    def test_zero_quotas(self, categorized_manifest):
        quotas = SplitQuotas(train_c0=0, train_c2=0, test_c0=0, test_c1=0, test_c2=0)
        train, test = build_splits(categorized_manifest, quotas, seed=1)
        assert train == [] and test == []

    def test_insufficient_category(self):
        entries = synthetic_categorized_manifest(n_c0=50, n_c1=10, n_c2=300)
        with pytest.raises(InsufficientCategory) as excinfo:
            build_splits(entries, seed=1)
        assert excinfo.value.category == Category.C0
        assert (excinfo.value.have, excinfo.value.need) == (50, 101)

    def test_seed_determinism(self, categorized_manifest):
        a_train, a_test = build_splits(categorized_manifest, seed=9)
        b_train, b_test = build_splits(synthetic_categorized_manifest(), seed=9)
        assert [e.id for e in a_train] == [e.id for e in b_train]
        assert [e.id for e in a_test] == [e.id for e in b_test]

    def test_input_order_irrelevant(self, categorized_manifest):
        shuffled = list(reversed(categorized_manifest))
        a_train, _ = build_splits(categorized_manifest, seed=4)
        b_train, _ = build_splits(shuffled, seed=4)
        assert [e.id for e in a_train] == [e.id for e in b_train]

    def test_different_seeds_differ(self, categorized_manifest):
        a_train, _ = build_splits(categorized_manifest, seed=1)
        b_train, _ = build_splits(synthetic_categorized_manifest(), seed=2)
        assert [e.id for e in a_train] != [e.id for e in b_train]

    def test_shared_site_never_leaks(self):
        # Several images of the same site: any site that contributes a
        # training image is blocked from the test side entirely.
        entries = synthetic_categorized_manifest(n_c0=120, n_c1=188, n_c2=300)
        shared = entries[5].site
        for i in range(5):
            entries[i].site = shared
        train, test = build_splits(entries, seed=5)
        assert not {e.site.id for e in train} & {e.site.id for e in test}
        assert len([e for e in test if e.category == Category.C0]) == 15

    def test_unsatisfiable_shared_site_quota_raises(self):
        # If every leftover C0 image shares a site with the training set,
        # the quota is honestly unmeetable.
        entries = synthetic_categorized_manifest(n_c0=116, n_c1=10, n_c2=300)
        shared = entries[0].site
        for i in range(116):
            entries[i].site = shared
        with pytest.raises(InsufficientCategory):
            build_splits(entries, seed=5)


class TestExportSft:
    def _train_entries(self, with_cot=False):
        train, _ = build_splits(synthetic_categorized_manifest(), seed=2)
        if with_cot:
            for e in train:
                e.captions.append(
                    caption(e.id, f"<reasoning>pads at {e.id}</reasoning><answer>verdict</answer>", PromptKind.COT_CONVERT)
                )
        return train

    def test_empty_manifest(self):
        assert export_sft([], "concise") == []

    def test_concise_rows(self):
        train = self._train_entries()
        rows = export_sft(train, "concise")
        assert len(rows) == len(train) == 301
        assert rows[0]["prompt"] == "Explain the image in detail, with 4-6 sentences."
        assert set(rows[0]) == {"image", "prompt", "response"}

    def test_cot_rows_use_open_ended_prompt(self):
        train = self._train_entries(with_cot=True)
        rows = export_sft(train, "cot")
        assert len(rows) == 301
        assert rows[0]["prompt"] == "Explain the image."
        assert "<reasoning>" in rows[0]["response"]

    def test_missing_cot_caption(self):
        train = self._train_entries(with_cot=True)
        train[5].captions = [c for c in train[5].captions if c.prompt_kind != PromptKind.COT_CONVERT]
        with pytest.raises(MissingCaption) as excinfo:
            export_sft(train, "cot")
        assert excinfo.value.kind == PromptKind.COT_CONVERT

    def test_unknown_variant(self):
        with pytest.raises(ValueError):
            export_sft([], "verbose")
