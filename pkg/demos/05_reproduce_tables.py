"""Reproduce the published detection tables from recorded counts.

The per-category hit counts (how many of the 15 easy positives, 188 hard
positives, and 100 negatives each model flagged) fully determine the
recall / precision / F1 table; this script recomputes the percentages
from the counts and renders both tables, plus the prompting-method
ablation counts.
"""

from samalign.evaluation import EvalCounts, compute_report, count_prompt_hits, report_to_table

# Per-category positives for each training regime: (C0 of 15, C1 of 188, C2 of 100)
ABLATION_COUNTS = [
    ("Zero-Shot", (5, 34, 1)),
    ("SFT", (11, 86, 1)),
    ("SFT for CoT Reasoning", (13, 135, 4)),
    ("Zero GRPO", (14, 144, 4)),
    ("SFT for CoT Reasoning + GRPO", (15, 149, 2)),
]


def main() -> None:
    print("== per-category counts ==")
    print(f"{'regime':<30} {'C0 (15)':>8} {'C1 (188)':>9} {'C2 (100)':>9}")
    for name, (c0, c1, c2) in ABLATION_COUNTS:
        print(f"{name:<30} {c0:>8} {c1:>9} {c2:>9}")

    reports = []
    for name, (c0, c1, c2) in ABLATION_COUNTS:
        counts = EvalCounts(c0_flagged=c0, c0_total=15, c1_flagged=c1, c1_total=188,
                            c2_flagged=c2, c2_total=100)
        reports.append((name, compute_report(counts)))

    print("\n== derived detection metrics (precision is the negatives-only rate) ==")
    print(report_to_table(reports, "markdown"))

    final = reports[-1][1]
    print(f"standard TP/(TP+FP) precision for the final regime, reported alongside: "
          f"{final.std_precision:.1f}%")

    # Prompting ablation: the open-ended question is a much harder probe
    # than a leading yes/no or multiple-choice prompt.
    print("\n== prompting-method ablation on synthetic outputs ==")
    open_ended = ["a missile site"] * 101 + ["remote terrain"] * 217
    yes_no = ["Yes, it is."] * 245 + ["No."] * 73
    mcq = ["A. Military"] * 219 + ["B. Residential"] * 99
    for style, outputs in (("open_ended", open_ended), ("yes_no", yes_no), ("multiple_choice", mcq)):
        print(f"  {style:<16} {count_prompt_hits(outputs, style):>4} / 318 identified")


if __name__ == "__main__":
    main()
