"""Recovery of six (speed, curvature) commands from model output.

Two passes: a strict grammar that accepts exactly one bracketed list of
six parenthesised pairs and nothing else, then a correction pass that
pulls every numeric literal out of the text and, when exactly twelve are
found, reads them as interleaved (v1, k1, ..., v6, k6). Anything else is
a classified failure; failures are data, never exceptions.

Sanity bounds: speeds must be finite and non-negative, |curvature| <= 1.0
(a one-metre turn radius is already beyond any on-road maneuver).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

from .records import ActionState, CURVATURE_BOUND

# Optional sign, digits with optional fraction ("1." and ".5" both fine),
# optional exponent. Word spellings of non-finite values never match.
_NUMBER = r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?"
_NUMBER_RE = re.compile(_NUMBER)

_PAIR = rf"\(\s*({_NUMBER})\s*,\s*({_NUMBER})\s*\)"
_PAIR_RE = re.compile(_PAIR)
_LIST = rf"\[\s*{_PAIR}(?:\s*,\s*{_PAIR}){{5}}\s*\]"
_LIST_RE = re.compile(_LIST)
_STRICT_RE = re.compile(rf"\s*{_LIST}\s*", re.DOTALL)

ERROR_CLASSES = (
    "non-numeric",
    "wrong-count",
    "missing-delimiters",
    "extra-text",
    "out-of-range",
)


@dataclass(frozen=True)
class ParseOutcome:
    status: str  # strict | corrected | failed
    actions: tuple[ActionState, ...] | None = None
    error_class: str | None = None


def _literals(text: str) -> list[float]:
    return [float(m.group(0)) for m in _NUMBER_RE.finditer(text)]


def _within_bounds(actions) -> bool:
    return all(
        math.isfinite(a.speed)
        and math.isfinite(a.curvature)
        and a.speed >= 0
        and abs(a.curvature) <= CURVATURE_BOUND
        for a in actions
    )


def _pair_up(values) -> tuple[ActionState, ...]:
    return tuple(
        ActionState(speed=values[i], curvature=values[i + 1])
        for i in range(0, 12, 2)
    )


def classify_error(text: str) -> str:
    """Deterministic failure label, applied in priority order.

    Priority: no literals at all > literal count other than twelve >
    twelve literals but no bracketed list > a valid list inside prose
    (recoverable, so it only ever labels strict or corrected outcomes)
    > bounds violations.
    """
    lits = _literals(text)
    if len(lits) < 1:
        return "non-numeric"
    if len(lits) != 12:
        return "wrong-count"
    if _LIST_RE.search(text) is None:
        return "missing-delimiters"
    if _within_bounds(_pair_up(lits)):
        return "extra-text"
    return "out-of-range"


def parse_strict(text: str) -> ParseOutcome:
    """Accept only a bare bracketed six-pair list, nothing around it."""
    m = _STRICT_RE.fullmatch(text)
    if m is None:
        return ParseOutcome(status="failed", error_class=classify_error(text))
    pairs = _PAIR_RE.findall(text)
    actions = tuple(ActionState(float(v), float(k)) for v, k in pairs)
    if not _within_bounds(actions):
        return ParseOutcome(status="failed", error_class="out-of-range")
    return ParseOutcome(status="strict", actions=actions)


def parse_corrected(text: str) -> ParseOutcome:
    """Twelve-literal fallback; assumes the strict pass already failed."""
    lits = _literals(text)
    if len(lits) < 1:
        return ParseOutcome(status="failed", error_class="non-numeric")
    if len(lits) != 12:
        return ParseOutcome(status="failed", error_class="wrong-count")
    actions = _pair_up(lits)
    if not _within_bounds(actions):
        return ParseOutcome(status="failed", error_class="out-of-range")
    return ParseOutcome(
        status="corrected", actions=actions, error_class=classify_error(text)
    )


def parse_actions(text: str) -> ParseOutcome:
    """Strict pass first, then the twelve-value correction."""
    outcome = parse_strict(text)
    if outcome.status == "strict":
        return outcome
    corrected = parse_corrected(text)
    if corrected.status == "corrected":
        return corrected
    return ParseOutcome(status="failed", error_class=corrected.error_class)
