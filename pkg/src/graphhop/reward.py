"""Exact-match indicators and the shaped scalar episode reward.

The reward is the identity

    r = em - lambda_struct * em * (1 - vf) + lambda_final * (1 - em) * vf * ap

over three {0,1} indicators: exact answer match, format validity, and
answer presence. The config invariants keep r inside [0, 1].
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation

from .protocol import Transcript, extract_answer, validate_format

# Characters stripped from both ends of an answer before comparison.
_EDGE_PUNCTUATION = "\"'`“”‘’.,;:!?()[]{}"
_WHITESPACE_RE = re.compile(r"\s+")


@dataclass(frozen=True)
class RewardConfig:
    """Shaping coefficients. Defaults keep the structural penalty material
    but non-dominant and the format bonus an order below correctness."""

    lambda_struct: float = 0.5
    lambda_final: float = 0.1

    def __post_init__(self) -> None:
        if not 0.0 <= self.lambda_struct <= 1.0:
            raise ValueError("lambda_struct must be in [0, 1]")
        if not 0.0 <= self.lambda_final < 1.0:
            raise ValueError("lambda_final must be in [0, 1)")


@dataclass(frozen=True)
class RewardBreakdown:
    em: int
    vf: int
    ap: int
    reward: float


def _canonical_decimal(text: str) -> str | None:
    try:
        value = Decimal(text)
    except InvalidOperation:
        return None
    if not value.is_finite():
        return None
    fixed = format(value, "f")
    if "." in fixed:
        fixed = fixed.rstrip("0").rstrip(".")
    if fixed in ("", "-0"):
        fixed = "0"
    return fixed


def normalize_answer(text: str) -> str:
    """Canonical comparison form of an answer string.

    Lowercases, collapses runs of whitespace, strips surrounding quotes and
    punctuation, and canonicalizes strings that parse as decimal numbers
    (no trailing zeros, no leading '+').
    """
    collapsed = _WHITESPACE_RE.sub(" ", text).strip()
    stripped = collapsed.strip(_EDGE_PUNCTUATION).strip()
    lowered = stripped.lower()
    canonical = _canonical_decimal(lowered)
    return canonical if canonical is not None else lowered


def shaped_reward(em: int, vf: int, ap: int, cfg: RewardConfig) -> float:
    """The reward identity over raw indicator bits."""
    return em - cfg.lambda_struct * em * (1 - vf) + cfg.lambda_final * (1 - em) * vf * ap


def compute_reward(
    transcript: Transcript,
    gold: str,
    cfg: RewardConfig | None = None,
    strict_single_call: bool = False,
) -> RewardBreakdown:
    """Score a parsed transcript against the gold answer. Pure."""
    if not gold:
        raise ValueError("gold answer must be non-empty")
    cfg = cfg or RewardConfig()
    answer = extract_answer(transcript)
    ap = int(answer is not None and answer.strip() != "")
    em = int(ap == 1 and normalize_answer(answer or "") == normalize_answer(gold))
    vf = int(validate_format(transcript, strict_single_call).valid)
    return RewardBreakdown(em=em, vf=vf, ap=ap, reward=shaped_reward(em, vf, ap, cfg))
