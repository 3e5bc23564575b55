"""Behavioral diagnostics aggregated from episode logs.

Reports are always recomputed from the raw transcripts: format verdicts,
call validity, evidence hits, and outcomes are re-derived rather than
trusted from the log, so a report is reproducible from transcripts alone.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .episode import EpisodeConfig, classify_outcome, OUTCOMES
from .executor import call_validity, execute
from .protocol import Transcript, extract_answer, extract_calls, parse_transcript, validate_format
from .reward import normalize_answer
from .store import GraphStore, QuestionInstance

logger = logging.getLogger(__name__)

STRATIFIER_KEYS = ("domain", "difficulty")

_SQUASH_RE = re.compile(r"\s+")


@dataclass(frozen=True)
class BehaviorReport:
    """Counts and rates for one stratum. Rates are exact ratios of counts."""

    stratifier: str | None
    stratum: str | None
    episodes: int
    calls: int
    vf_count: int
    cv_count: int
    eh_count: int
    outcome_counts: Mapping[str, int]
    rouge_l_mean: float

    @property
    def vf_rate(self) -> float:
        return self.vf_count / self.episodes if self.episodes else 0.0

    @property
    def cv_rate(self) -> float:
        return self.cv_count / self.calls if self.calls else 0.0

    @property
    def eh_rate(self) -> float:
        return self.eh_count / self.episodes if self.episodes else 0.0

    def to_record(self) -> dict:
        return {
            "stratum": None if self.stratum is None else f"{self.stratifier}={self.stratum}",
            "vf": self.vf_rate,
            "cv": self.cv_rate,
            "eh": self.eh_rate,
            "outcomes": dict(self.outcome_counts),
            "rouge_l_mean": self.rouge_l_mean,
        }


def _squash(text: str) -> str:
    return _SQUASH_RE.sub("", text.lower())


def evidence_hit(transcript: Transcript, gold: str) -> bool:
    """True iff the normalized gold answer appears inside any single
    information block (whitespace-insensitive substring)."""
    needle = _squash(normalize_answer(gold))
    if not needle:
        return False
    return any(
        needle in _squash(block.content)
        for block in transcript.blocks
        if block.kind == "information"
    )


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    # Two-row dynamic program; O(len(a) * len(b)) time, O(len(b)) space.
    previous = [0] * (len(b) + 1)
    for token in a:
        current = [0]
        for j, other in enumerate(b, start=1):
            if token == other:
                current.append(previous[j - 1] + 1)
            else:
                current.append(max(previous[j], current[j - 1]))
        previous = current
    return previous[len(b)]


def rouge_l(candidate: str, reference: str) -> float:
    """LCS F-measure over lowercased whitespace tokens; 0 when either side
    is empty."""
    candidate_tokens = candidate.lower().split()
    reference_tokens = reference.lower().split()
    if not candidate_tokens or not reference_tokens:
        return 0.0
    lcs = _lcs_length(candidate_tokens, reference_tokens)
    precision = lcs / len(candidate_tokens)
    recall = lcs / len(reference_tokens)
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def load_episode_log(path: str | Path) -> tuple[list[dict], int]:
    """Read a line-delimited episode log; corrupt lines are counted and
    skipped with a warning, never silently dropped."""
    records: list[dict] = []
    skipped = 0
    with open(path, encoding="utf-8") as handle:
        for line_no, raw in enumerate(handle, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                record = json.loads(raw)
                if not isinstance(record, dict) or "transcript" not in record:
                    raise ValueError("record must be an object with a transcript")
            except ValueError as exc:
                skipped += 1
                logger.warning("skipping corrupt log line %d: %s", line_no, exc)
                continue
            records.append(record)
    return records, skipped


@dataclass
class _Accumulator:
    episodes: int = 0
    calls: int = 0
    vf_count: int = 0
    cv_count: int = 0
    eh_count: int = 0
    rouge_sum: float = 0.0

    def __post_init__(self) -> None:
        self.outcome_counts = {outcome: 0 for outcome in OUTCOMES}


def build_report(
    records: Iterable[dict],
    store: GraphStore,
    questions: Mapping[str, QuestionInstance],
    stratifiers: Sequence[str] = (),
    episode_config: EpisodeConfig | None = None,
) -> list[BehaviorReport]:
    """Aggregate VF/CV/EH, outcomes, and Rouge-L; one overall report plus one
    per stratum per requested stratifier key."""
    for key in stratifiers:
        if key not in STRATIFIER_KEYS:
            raise ValueError(f"unknown stratifier {key!r}")
    cfg = episode_config or EpisodeConfig()
    overall = _Accumulator()
    strata: dict[tuple[str, str], _Accumulator] = {}

    for record in records:
        question = questions.get(record.get("question_id", ""))
        if question is None:
            logger.warning("episode references unknown question %r", record.get("question_id"))
            continue
        transcript = parse_transcript(
            record["transcript"], question=question.question, recover=True
        )
        verdict = validate_format(transcript, cfg.strict_single_call)
        results = [
            execute(store, call, cfg.retrieval_top_k)
            for _, calls in extract_calls(transcript)
            for call in calls
        ]
        answer = extract_answer(transcript)
        outcome = classify_outcome(transcript, question.gold_answer, cfg)

        buckets = [overall]
        for key in stratifiers:
            value = getattr(question, "domain" if key == "domain" else "difficulty")
            stratum = value if value is not None else "unlabeled"
            buckets.append(strata.setdefault((key, stratum), _Accumulator()))
        for bucket in buckets:
            bucket.episodes += 1
            bucket.calls += len(results)
            bucket.vf_count += int(verdict.valid)
            bucket.cv_count += sum(call_validity(result) for result in results)
            bucket.eh_count += int(evidence_hit(transcript, question.gold_answer))
            bucket.outcome_counts[outcome] += 1
            bucket.rouge_sum += rouge_l(answer or "", question.gold_answer)

    def finish(acc: _Accumulator, stratifier: str | None, stratum: str | None) -> BehaviorReport:
        return BehaviorReport(
            stratifier=stratifier,
            stratum=stratum,
            episodes=acc.episodes,
            calls=acc.calls,
            vf_count=acc.vf_count,
            cv_count=acc.cv_count,
            eh_count=acc.eh_count,
            outcome_counts=dict(acc.outcome_counts),
            rouge_l_mean=acc.rouge_sum / acc.episodes if acc.episodes else 0.0,
        )

    reports = [finish(overall, None, None)]
    for (key, stratum) in sorted(strata):
        reports.append(finish(strata[(key, stratum)], key, stratum))
    return reports
