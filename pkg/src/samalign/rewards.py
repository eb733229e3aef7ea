"""Scalar rewards for group-relative policy optimization.

Two independent components, both binary:

* keyword reward: paid when the output's flagging decision matches the
  image label (keyword present on positives, absent on negatives);
* format reward: paid when the output is a well-formed
  ``<reasoning>..</reasoning><answer>..</answer>`` pair, regardless of
  what the spans contain.

Rewards are per-completion scalars; token-level credit assignment is
left entirely to the optimizer's advantage broadcast.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .text import KeywordSet, flag_output, parse_output


@dataclass(frozen=True)
class RewardConfig:
    keywords: KeywordSet = KeywordSet()
    keyword_weight: float = 1.0
    format_weight: float = 0.5
    reasoning_model: bool = True

    def __post_init__(self) -> None:
        if not (math.isfinite(self.keyword_weight) and math.isfinite(self.format_weight)):
            raise ValueError("reward weights must be finite")
        if self.keyword_weight <= 0:
            raise ValueError("keyword_weight must be > 0")
        if self.format_weight < 0:
            raise ValueError("format_weight must be >= 0")


@dataclass(frozen=True)
class RewardBreakdown:
    keyword_component: float
    format_component: float
    total: float


def keyword_reward(raw_output: str, is_positive: bool, cfg: RewardConfig) -> float:
    """keyword_weight when the flag decision agrees with the label, else 0."""
    flagged = flag_output(raw_output, cfg.keywords, cfg.reasoning_model)
    if flagged == is_positive:
        return cfg.keyword_weight
    return 0.0


def format_reward(raw_output: str, cfg: RewardConfig) -> float:
    """format_weight for a well-formed tagged output, else 0."""
    return cfg.format_weight if parse_output(raw_output).format_ok else 0.0


def total_reward(raw_output: str, is_positive: bool, cfg: RewardConfig) -> RewardBreakdown:
    kw = keyword_reward(raw_output, is_positive, cfg)
    fmt = format_reward(raw_output, cfg)
    return RewardBreakdown(keyword_component=kw, format_component=fmt, total=kw + fmt)
