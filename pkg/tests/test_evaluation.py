from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from samalign.evaluation import (
    EmptyCategory,
    EvalCounts,
    MissingOutput,
    compute_report,
    count_prompt_hits,
    report_to_table,
    round1,
    score_outputs,
)
from samalign.manifest import Category
from tests.conftest import entry

# Published count rows and their percentage counterparts. The first three
# pairs appear in both source tables; the last two are derived from the
# ablation counts through the same formulas.
PUBLISHED_ROWS = {
    "final": ((15, 15, 149, 188, 2, 100), (80.8, 98.0, 88.6)),
    "sft": ((11, 15, 86, 188, 1, 100), (47.8, 99.0, 64.5)),
    "zero_shot": ((5, 15, 34, 188, 1, 100), (19.2, 99.0, 32.2)),
    "cot_sft": ((13, 15, 135, 188, 4, 100), (72.9, 96.0, None)),
    "zero_rl": ((14, 15, 144, 188, 4, 100), (77.8, 96.0, None)),
}


class TestComputeReport:
    @pytest.mark.parametrize("name", list(PUBLISHED_ROWS))
    def test_published_rows(self, name):
        counts_tuple, (recall, precision, f1) = PUBLISHED_ROWS[name]
        report = compute_report(EvalCounts(*counts_tuple))
        assert report.recall == pytest.approx(recall, abs=0.05)
        assert report.paper_precision == pytest.approx(precision, abs=0.05)
        if f1 is not None:
            assert report.f1 == pytest.approx(f1, abs=0.05)

    def test_std_precision_reported_separately(self):
        report = compute_report(EvalCounts(15, 15, 149, 188, 2, 100))
        assert report.std_precision == pytest.approx(100.0 * 164 / 166, abs=1e-9)
        # F1 folds the negatives-only precision, not the standard one.
        assert report.f1 == pytest.approx(
            2 * report.recall * report.paper_precision / (report.recall + report.paper_precision)
        )

    def test_zero_recall_gives_zero_f1(self):
        report = compute_report(EvalCounts(0, 15, 0, 188, 0, 100))
        assert report.recall == 0.0
        assert report.f1 == 0.0
        assert report.paper_precision == 100.0

    def test_empty_categories_rejected(self):
        with pytest.raises(EmptyCategory):
            compute_report(EvalCounts(0, 0, 0, 0, 0, 10))
        with pytest.raises(EmptyCategory):
            compute_report(EvalCounts(1, 1, 1, 1, 0, 0))

    @given(st.integers(min_value=1, max_value=20))
    def test_scale_consistency(self, k):
        base = EvalCounts(5, 15, 34, 188, 1, 100)
        scaled = EvalCounts(5 * k, 15 * k, 34 * k, 188 * k, 1 * k, 100 * k)
        a, b = compute_report(base), compute_report(scaled)
        assert a.recall == pytest.approx(b.recall)
        assert a.paper_precision == pytest.approx(b.paper_precision)
        assert a.f1 == pytest.approx(b.f1)

    @given(st.integers(min_value=0, max_value=187))
    def test_monotone_in_c1_flagged(self, c1):
        lower = compute_report(EvalCounts(5, 15, c1, 188, 1, 100))
        higher = compute_report(EvalCounts(5, 15, c1 + 1, 188, 1, 100))
        assert higher.recall >= lower.recall
        assert higher.f1 >= lower.f1

    def test_counts_validation(self):
        with pytest.raises(ValueError):
            EvalCounts(16, 15, 0, 188, 0, 100)
        with pytest.raises(ValueError):
            EvalCounts(-1, 15, 0, 188, 0, 100)


class TestScoreOutputs:
    def _six_image_manifest(self):
        return [
            entry("c0-hit", category=Category.C0),
            entry("c0-miss", category=Category.C0),
            entry("c1-hit", category=Category.C1),
            entry("c1-miss", category=Category.C1),
            entry("c2-hit", category=Category.C2),
            entry("c2-miss", category=Category.C2),
        ]

    def test_hand_enumerated_fixture(self):
        outputs = {
            "c0-hit": "a military depot",
            "c0-miss": "dusty plains",
            "c1-hit": "missile launchers visible",
            "c1-miss": "rows of houses",
            "c2-hit": "a silo cluster",
            "c2-miss": "city park",
        }
        counts = score_outputs(self._six_image_manifest(), outputs)
        assert counts == EvalCounts(1, 2, 1, 2, 1, 2)

    def test_all_empty_outputs(self):
        entries = self._six_image_manifest()
        counts = score_outputs(entries, {e.id: "" for e in entries})
        assert (counts.c0_flagged, counts.c1_flagged, counts.c2_flagged) == (0, 0, 0)
        assert (counts.c0_total, counts.c1_total, counts.c2_total) == (2, 2, 2)

    def test_reasoning_span_keyword_not_counted(self):
        entries = [entry("x", category=Category.C1)]
        raw = "<reasoning>missile silo military</reasoning><answer>open fields</answer>"
        counts = score_outputs(entries, {"x": raw}, reasoning_model=True)
        assert counts.c1_flagged == 0
        counts = score_outputs(entries, {"x": raw}, reasoning_model=False)
        assert counts.c1_flagged == 1

    def test_missing_output(self):
        with pytest.raises(MissingOutput):
            score_outputs([entry("x", category=Category.C0)], {})

    def test_uncategorized_entries_ignored(self):
        entries = [entry("x", category=Category.C0), entry("y", category=None)]
        counts = score_outputs(entries, {"x": "military"})
        assert counts.c0_total == 1


class TestReportTable:
    def test_empty_list_header_only(self):
        assert report_to_table([], "csv") == "Name,Recall,Precision,F1\n"
        md = report_to_table([], "markdown")
        assert md.splitlines() == ["| Name | Recall | Precision | F1 |", "| --- | --- | --- | --- |"]

    def test_final_model_row(self):
        report = compute_report(EvalCounts(15, 15, 149, 188, 2, 100))
        table = report_to_table([("final", report)], "markdown")
        assert "| final | 80.8 | 98.0 | 88.6 |" in table

    def test_rows_in_input_order(self):
        a = compute_report(EvalCounts(15, 15, 149, 188, 2, 100))
        b = compute_report(EvalCounts(11, 15, 86, 188, 1, 100))
        csv_out = report_to_table([("first", a), ("second", b)], "csv")
        lines = csv_out.strip().splitlines()
        assert lines[1].startswith("first,") and lines[2].startswith("second,")

    def test_half_up_rounding(self):
        assert round1(88.55) == 88.6
        assert round1(88.549) == 88.5
        assert round1(0.05) == 0.1


class TestPromptHitCounts:
    def test_open_ended(self):
        outputs = ["a missile base", "green fields", "the silos"]
        assert count_prompt_hits(outputs, "open_ended") == 2

    def test_yes_no(self):
        outputs = ["Yes, clearly.", "No.", "yes", "It might be"]
        assert count_prompt_hits(outputs, "yes_no") == 2

    def test_multiple_choice(self):
        outputs = ["A", "B. Residential", "A. Military", "E"]
        assert count_prompt_hits(outputs, "multiple_choice") == 2

    def test_unknown_style(self):
        with pytest.raises(ValueError):
            count_prompt_hits([], "interpretive_dance")
