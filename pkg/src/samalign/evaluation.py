"""Detection-metric scoring with per-category breakdown.

The headline "precision" here is computed over the negative category
only (a true-negative rate), because that is what the published tables
report and fold into F1; standard TP/(TP+FP) precision is carried
alongside as ``std_precision`` but never enters F1. Rounding happens
only at display time (half-up, one decimal).
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from typing import Iterable, Mapping, Sequence

from .errors import PipelineError
from .manifest import Category, ManifestEntry
from .text import KeywordSet, chosen_option, contains_keyword, flag_output, is_affirmative


class EvaluationError(PipelineError):
    pass


class MissingOutput(EvaluationError):
    def __init__(self, image_id: str):
        super().__init__(f"no output recorded for image {image_id!r}")
        self.image_id = image_id


class EmptyCategory(EvaluationError):
    pass


@dataclass(frozen=True)
class EvalCounts:
    c0_flagged: int
    c0_total: int
    c1_flagged: int
    c1_total: int
    c2_flagged: int
    c2_total: int

    def __post_init__(self) -> None:
        for cat in ("c0", "c1", "c2"):
            flagged = getattr(self, f"{cat}_flagged")
            total = getattr(self, f"{cat}_total")
            if flagged < 0 or total < 0:
                raise ValueError("counts must be nonnegative")
            if flagged > total:
                raise ValueError(f"{cat}: flagged ({flagged}) exceeds total ({total})")


@dataclass(frozen=True)
class EvalReport:
    recall: float
    paper_precision: float
    std_precision: float
    f1: float
    counts: EvalCounts


def score_outputs(
    entries: Sequence[ManifestEntry],
    outputs: Mapping[str, str],
    kw: KeywordSet = KeywordSet(),
    reasoning_model: bool = False,
) -> EvalCounts:
    """Tally flag decisions per category over a set of test entries."""
    flagged = {Category.C0: 0, Category.C1: 0, Category.C2: 0}
    totals = {Category.C0: 0, Category.C1: 0, Category.C2: 0}
    for entry in entries:
        if entry.category is None:
            continue
        if entry.id not in outputs:
            raise MissingOutput(entry.id)
        totals[entry.category] += 1
        if flag_output(outputs[entry.id], kw, reasoning_model):
            flagged[entry.category] += 1
    return EvalCounts(
        c0_flagged=flagged[Category.C0],
        c0_total=totals[Category.C0],
        c1_flagged=flagged[Category.C1],
        c1_total=totals[Category.C1],
        c2_flagged=flagged[Category.C2],
        c2_total=totals[Category.C2],
    )


def compute_report(counts: EvalCounts) -> EvalReport:
    """Percentages from raw counts; no rounding applied here."""
    positives = counts.c0_total + counts.c1_total
    if positives == 0:
        raise EmptyCategory("no positive examples (C0 + C1 empty)")
    if counts.c2_total == 0:
        raise EmptyCategory("no negative examples (C2 empty)")

    tp = counts.c0_flagged + counts.c1_flagged
    fp = counts.c2_flagged
    recall = 100.0 * tp / positives
    paper_precision = 100.0 * (counts.c2_total - counts.c2_flagged) / counts.c2_total
    std_precision = 100.0 * tp / (tp + fp) if tp + fp > 0 else 0.0
    if recall == 0.0 or recall + paper_precision == 0.0:
        f1 = 0.0
    else:
        f1 = 2.0 * recall * paper_precision / (recall + paper_precision)
    return EvalReport(
        recall=recall,
        paper_precision=paper_precision,
        std_precision=std_precision,
        f1=f1,
        counts=counts,
    )


def round1(value: float) -> float:
    """Half-up rounding to one decimal, for display only."""
    return float(Decimal(repr(value)).quantize(Decimal("0.1"), rounding=ROUND_HALF_UP))


def report_to_table(reports: Sequence[tuple[str, EvalReport]], format: str = "markdown") -> str:
    """Render named reports as a table: Name / Recall / Precision / F1."""
    if format not in ("csv", "markdown"):
        raise ValueError(f"unknown table format: {format!r}")
    rows = [
        (name, f"{round1(r.recall):.1f}", f"{round1(r.paper_precision):.1f}", f"{round1(r.f1):.1f}")
        for name, r in reports
    ]
    if format == "csv":
        lines = ["Name,Recall,Precision,F1"]
        lines += [",".join(row) for row in rows]
        return "\n".join(lines) + "\n"
    lines = ["| Name | Recall | Precision | F1 |", "| --- | --- | --- | --- |"]
    lines += ["| " + " | ".join(row) + " |" for row in rows]
    return "\n".join(lines) + "\n"


def count_prompt_hits(outputs: Iterable[str], style: str, kw: KeywordSet = KeywordSet()) -> int:
    """Count outputs that identify the scene as military, per prompt style.

    Styles: "open_ended" (keyword flagging over the full text), "yes_no"
    (leading yes token), "multiple_choice" (option A). The yes/no and
    multiple-choice matchers are our own convention; the source tables do
    not state theirs.
    """
    if style == "open_ended":
        return sum(1 for text in outputs if contains_keyword(text, kw).flagged)
    if style == "yes_no":
        return sum(1 for text in outputs if is_affirmative(text))
    if style == "multiple_choice":
        return sum(1 for text in outputs if chosen_option(text) == "A")
    raise ValueError(f"unknown prompt style: {style!r}")
