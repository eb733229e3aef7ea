"""Output parsing and keyword flagging.

This module is the single matching authority: curation, rewards, and
evaluation all call into it rather than re-implementing tag parsing or
keyword detection.

Flagging rule: a text is flagged when some word token (a maximal run of
ASCII letters) starts with one of the keywords, case-insensitively. Prefix
matching catches plurals ("missiles", "silos") while interior substrings
("epsilon" contains "silo") never match because they are not at a token
start.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Optional

DEFAULT_KEYWORDS = ("military", "missile", "silo")

_WORD_RE = re.compile(r"[A-Za-z]+")

# The canonical well-formed shape: one reasoning block, then one answer
# block, nothing but whitespace around or between them.
_BLOCK_RE = re.compile(
    r"\A\s*<reasoning>(?P<reasoning>.*?)</reasoning>"
    r"\s*<answer>(?P<answer>.*?)</answer>\s*\Z",
    re.IGNORECASE | re.DOTALL,
)

_TAGS = ("<reasoning>", "</reasoning>", "<answer>", "</answer>")


@dataclass(frozen=True)
class ParsedOutput:
    """A model output split into reasoning/answer spans.

    When ``format_ok`` is False the whole raw text is treated as the
    answer, so malformed outputs are still scored on what they said.
    """

    raw: str
    answer: str
    reasoning: Optional[str]
    format_ok: bool


@dataclass(frozen=True)
class KeywordSet:
    """Ordered, lowercase keyword list used for flagging."""

    keywords: tuple[str, ...] = DEFAULT_KEYWORDS

    def __post_init__(self) -> None:
        normalized = tuple(k.lower() for k in self.keywords)
        for k in normalized:
            if not k or not k.isalpha():
                raise ValueError(f"keywords must be non-empty alphabetic strings, got {k!r}")
        object.__setattr__(self, "keywords", normalized)

    @classmethod
    def of(cls, keywords: Iterable[str]) -> "KeywordSet":
        return cls(tuple(keywords))


@dataclass(frozen=True)
class KeywordMatch:
    """Flagging outcome plus the character spans of the matching tokens."""

    flagged: bool
    spans: tuple[tuple[int, int], ...] = field(default_factory=tuple)

    def __bool__(self) -> bool:
        return self.flagged


def _tag_counts(raw: str) -> list[int]:
    low = raw.lower()
    return [low.count(tag) for tag in _TAGS]


def parse_output(raw: str) -> ParsedOutput:
    """Split ``raw`` into reasoning and answer spans.

    Total function: any input yields a ParsedOutput. ``format_ok`` is True
    only for exactly one ``<reasoning>`` block followed by exactly one
    ``<answer>`` block (tag names case-insensitive), each non-empty after
    trimming, with nothing but whitespace outside the blocks. Repeated or
    nested tag pairs fail the format check. Span contents are returned
    verbatim, untrimmed.
    """
    m = _BLOCK_RE.match(raw)
    if m is not None and _tag_counts(raw) == [1, 1, 1, 1]:
        reasoning = m.group("reasoning")
        answer = m.group("answer")
        if reasoning.strip() and answer.strip():
            return ParsedOutput(raw=raw, answer=answer, reasoning=reasoning, format_ok=True)
    return ParsedOutput(raw=raw, answer=raw, reasoning=None, format_ok=False)


def contains_keyword(text: str, kw: KeywordSet = KeywordSet()) -> KeywordMatch:
    """True iff some word token of ``text`` starts with a keyword."""
    spans = []
    for m in _WORD_RE.finditer(text):
        token = m.group().lower()
        if any(token.startswith(k) for k in kw.keywords):
            spans.append(m.span())
    return KeywordMatch(flagged=bool(spans), spans=tuple(spans))


def flag_output(raw: str, kw: KeywordSet = KeywordSet(), reasoning_model: bool = False) -> bool:
    """Decide whether an output counts as mentioning a keyword.

    For reasoning models only the answer span is scanned; a malformed
    output falls back to the whole raw text (ParsedOutput invariant).
    """
    if reasoning_model:
        return contains_keyword(parse_output(raw).answer, kw).flagged
    return contains_keyword(raw, kw).flagged


def is_affirmative(text: str) -> bool:
    """Leading-token yes/no matcher for the yes/no prompt style."""
    first = _WORD_RE.search(text)
    return first is not None and first.group().lower() == "yes"


def chosen_option(text: str) -> Optional[str]:
    """First standalone A-E letter in a multiple-choice answer, or None."""
    for m in _WORD_RE.finditer(text):
        tok = m.group()
        if len(tok) == 1 and tok.upper() in "ABCDE":
            return tok.upper()
    return None
