"""Round decomposition and structural difficulty of graph interactions.

A round is one graph block's worth of calls. Its kind follows the size of
the node-id set it surfaces: S for exactly one, E for more than one, null
for attribute-only lookups that surface nothing. Difficulty is derived from
the count of information-seeking rounds and E-rounds.
"""

from __future__ import annotations

from dataclasses import dataclass

from .executor import FunctionCall, execute
from .protocol import Transcript, extract_calls
from .store import GraphStore, QuestionInstance

S_ROUND = "S"
E_ROUND = "E"

EASY = "Easy"
MEDIUM = "Medium"
HARD = "Hard"


class UnclassifiableTrajectoryError(ValueError):
    """Every round surfaced zero nodes; no difficulty can be assigned."""


class StaleTrajectoryError(ValueError):
    """A reference-trajectory call no longer reproduces its recorded result."""


@dataclass(frozen=True)
class RoundRecord:
    """One information-seeking round: its calls and the node ids they surfaced."""

    index: int
    calls: tuple[FunctionCall, ...]
    surfaced_nodes: frozenset[str]
    kind: str | None

    @classmethod
    def from_execution(
        cls, index: int, calls: tuple[FunctionCall, ...], surfaced: frozenset[str]
    ) -> RoundRecord:
        return cls(index=index, calls=calls, surfaced_nodes=surfaced, kind=round_kind(surfaced))


@dataclass(frozen=True)
class DifficultyLabel:
    """Structural difficulty plus the counts it was derived from.

    Counts are None when the label was taken verbatim from the instance
    instead of being derived from a trajectory.
    """

    value: str
    rounds_total: int | None
    e_rounds: int | None


def round_kind(surfaced: frozenset[str]) -> str | None:
    if len(surfaced) == 1:
        return S_ROUND
    if len(surfaced) > 1:
        return E_ROUND
    return None


def decompose_rounds(
    transcript: Transcript, store: GraphStore, retrieval_top_k: int = 1
) -> list[RoundRecord]:
    """Re-execute each graph block's calls to recover the surfaced node sets.

    Invalid calls contribute nothing to a round's surfaced set; they never
    raise.
    """
    records: list[RoundRecord] = []
    for index, calls in extract_calls(transcript):
        surfaced: set[str] = set()
        for call in calls:
            surfaced.update(execute(store, call, retrieval_top_k).node_ids)
        records.append(RoundRecord.from_execution(index, tuple(calls), frozenset(surfaced)))
    return records


def classify_difficulty(
    rounds: list[RoundRecord], count_null_rounds: bool = False
) -> DifficultyLabel:
    """Assign Easy/Medium/Hard from round counts.

    By default rounds that surfaced nothing are excluded from rounds_total,
    so a retrieve-then-read-feature trajectory still counts as one
    information-seeking round. count_null_rounds=True flips that reading.
    """
    informative = [r for r in rounds if r.kind is not None]
    if not informative:
        raise UnclassifiableTrajectoryError("trajectory surfaced no node ids in any round")
    rounds_total = len(rounds) if count_null_rounds else len(informative)
    e_rounds = sum(1 for r in rounds if r.kind == E_ROUND)
    if rounds_total == 1:
        value = EASY
    elif e_rounds >= 2:
        value = HARD
    else:
        value = MEDIUM
    return DifficultyLabel(value=value, rounds_total=rounds_total, e_rounds=e_rounds)


def label_question(
    question: QuestionInstance,
    store: GraphStore,
    count_null_rounds: bool = False,
    retrieval_top_k: int = 1,
) -> DifficultyLabel:
    """Explicit labels pass through; otherwise execute the reference
    trajectory (one call per round) and classify it.

    Raises StaleTrajectoryError when a step's recorded observation no longer
    matches what execution produces.
    """
    if question.difficulty is not None:
        return DifficultyLabel(value=question.difficulty, rounds_total=None, e_rounds=None)
    assert question.reference_trajectory is not None  # enforced by QuestionInstance
    records: list[RoundRecord] = []
    for index, step in enumerate(question.reference_trajectory, start=1):
        call = FunctionCall(function=step.function, args=step.args)
        result = execute(store, call, retrieval_top_k)
        if step.expected is not None and result.rendered != step.expected:
            raise StaleTrajectoryError(
                f"question {question.question_id!r}: {step.function}[{', '.join(step.args)}]"
                f" produced {result.rendered!r}, expected {step.expected!r}"
            )
        records.append(
            RoundRecord.from_execution(index, (call,), frozenset(result.node_ids))
        )
    return classify_difficulty(records, count_null_rounds=count_null_rounds)
