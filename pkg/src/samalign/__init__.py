"""Overhead-imagery caption pipeline.

Site ingestion, expert-in-the-loop curation, keyword/format rewards, a
desk-scale group-relative policy-optimization core, and detection-metric
evaluation with per-category breakdown.
"""

from .evaluation import EvalCounts, EvalReport, compute_report, report_to_table, score_outputs
from .geo import GeoPoint, SiteRecord, SiteSource, parse_kmz, sample_city_points
from .grpo import (
    GroupSample,
    GrpoConfig,
    ToyPolicy,
    compute_advantages,
    grpo_loss,
    init_from_sft,
    sample_group,
    toy_config,
    train_toy,
)
from .manifest import Category, ExpertLabel, ExpertVerdict, ManifestEntry, Split
from .rewards import RewardBreakdown, RewardConfig, format_reward, keyword_reward, total_reward
from .text import KeywordSet, ParsedOutput, contains_keyword, flag_output, parse_output

__version__ = "0.1.0"

__all__ = [
    "Category",
    "EvalCounts",
    "EvalReport",
    "ExpertLabel",
    "ExpertVerdict",
    "GeoPoint",
    "GroupSample",
    "GrpoConfig",
    "KeywordSet",
    "ManifestEntry",
    "ParsedOutput",
    "RewardBreakdown",
    "RewardConfig",
    "SiteRecord",
    "SiteSource",
    "Split",
    "ToyPolicy",
    "compute_advantages",
    "compute_report",
    "contains_keyword",
    "flag_output",
    "format_reward",
    "grpo_loss",
    "init_from_sft",
    "keyword_reward",
    "parse_kmz",
    "parse_output",
    "report_to_table",
    "sample_city_points",
    "sample_group",
    "score_outputs",
    "toy_config",
    "total_reward",
    "train_toy",
]
