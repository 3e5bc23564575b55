"""Episode runtime: the policy/environment interaction loop.

The runtime owns the transcript. Policies only ever contribute agent
segments (think+graph or think+answer); the runtime executes graph blocks,
injects the observation block, enforces the round budget, and classifies
the terminal outcome. Both the in-process driver and the rollout service
step episodes through the same Episode class, which is what makes their
transcripts byte-identical.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Callable, Mapping, Protocol, Sequence

from .executor import execute_block, ERROR_OBSERVATION
from .protocol import (
    MISSING_ANSWER,
    Transcript,
    TranscriptParseError,
    agent_mask,
    extract_answer,
    extract_calls,
    parse_transcript,
    validate_format,
)
from .reward import RewardBreakdown, RewardConfig, compute_reward, normalize_answer
from .store import GraphStore, QuestionInstance, tokenize

OUTCOME_CORRECT = "Correct"
OUTCOME_INVALID_FORMAT = "InvalidFormat"
OUTCOME_LOOP_TIMEOUT = "LoopTimeout"
OUTCOME_PREMATURE_STOP = "PrematureStop"
OUTCOMES = (
    OUTCOME_CORRECT,
    OUTCOME_INVALID_FORMAT,
    OUTCOME_LOOP_TIMEOUT,
    OUTCOME_PREMATURE_STOP,
)


class PolicyTransportError(RuntimeError):
    """Infrastructure failure while obtaining a policy segment; not an outcome."""


class EpisodeTerminatedError(RuntimeError):
    """A segment was submitted to an already-terminated episode."""


class OracleConfigurationError(ValueError):
    """The oracle policy needs a reference trajectory and none exists."""


@dataclass(frozen=True)
class EpisodeConfig:
    max_rounds: int = 10
    strict_single_call: bool = False
    reward: RewardConfig = field(default_factory=RewardConfig)
    retrieval_top_k: int = 1

    def __post_init__(self) -> None:
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be >= 1")
        if self.retrieval_top_k < 1:
            raise ValueError("retrieval_top_k must be >= 1")


@dataclass(frozen=True)
class StepFeedback:
    """What one submitted segment produced."""

    round: int
    terminated: bool
    observation: str | None
    outcome: str | None = None
    reward: RewardBreakdown | None = None


class PolicyInterface(Protocol):
    """Maps (question, transcript-so-far) to the next agent segment."""

    def next_segment(self, question: str, transcript_text: str) -> str: ...


class Episode:
    """One in-flight episode; strictly sequential within itself.

    Termination happens on (a) an answer block, (b) a graph segment beyond
    the round budget (dropped, not appended), (c) a malformed or
    observation-forging segment, or (d) a segment with neither graph nor
    answer.
    """

    def __init__(self, store: GraphStore, question: QuestionInstance, cfg: EpisodeConfig) -> None:
        self._store = store
        self.question = question
        self.cfg = cfg
        self.round = 0
        self.terminated = False
        self.outcome: str | None = None
        self.reward: RewardBreakdown | None = None
        self.transcript: Transcript | None = None
        self._text = ""

    @property
    def transcript_text(self) -> str:
        return self._text

    def submit(self, segment: str) -> StepFeedback:
        """Append one agent segment, execute its graph block if any, and
        inject the observation. Returns what happened."""
        if self.terminated:
            raise EpisodeTerminatedError("episode already terminated")
        try:
            parsed = parse_transcript(segment)
        except TranscriptParseError:
            self._append(segment)
            return self._terminate()
        kinds = [block.kind for block in parsed.blocks]
        if "information" in kinds:
            # Policies may not forge observations; drop the segment entirely
            # so the agent token stream stays reconstructable from the mask.
            return self._terminate()
        if "answer" in kinds:
            self._append(segment)
            return self._terminate()
        graph_blocks = [block for block in parsed.blocks if block.kind == "graph"]
        if len(graph_blocks) != 1:
            self._append(segment)
            return self._terminate()
        if self.round >= self.cfg.max_rounds:
            return self._terminate()

        self._append(segment)
        calls = extract_calls(parsed)[0][1]
        if calls:
            results = execute_block(self._store, calls, self.cfg.retrieval_top_k)
            content = "\n".join(result.rendered for result in results)
        else:
            content = ERROR_OBSERVATION
        observation = f"<information>{content}</information>"
        self._text += "\n" + observation
        self.round += 1
        return StepFeedback(round=self.round, terminated=False, observation=observation)

    def agent_mask(self) -> list[tuple[int, int]]:
        transcript = self.transcript or self._parse_current()
        return agent_mask(transcript)

    def _append(self, segment: str) -> None:
        self._text += ("\n" if self._text else "") + segment

    def _parse_current(self) -> Transcript:
        return parse_transcript(self._text, question=self.question.question, recover=True)

    def _terminate(self) -> StepFeedback:
        self.terminated = True
        self.transcript = self._parse_current()
        self.reward = compute_reward(
            self.transcript,
            self.question.gold_answer,
            self.cfg.reward,
            self.cfg.strict_single_call,
        )
        self.outcome = classify_outcome(self.transcript, self.question.gold_answer, self.cfg)
        return StepFeedback(
            round=self.round,
            terminated=True,
            observation=None,
            outcome=self.outcome,
            reward=self.reward,
        )


def classify_outcome(transcript: Transcript, gold: str, cfg: EpisodeConfig) -> str:
    """Four-way outcome, in precedence order.

    A missing answer is excused from the format check only when the episode
    exhausted its round budget: a clean trace that simply ran out of rounds
    is a LoopTimeout, not an InvalidFormat.
    """
    answer = extract_answer(transcript)
    present = answer is not None and answer.strip() != ""
    if present and normalize_answer(answer or "") == normalize_answer(gold):
        return OUTCOME_CORRECT
    graph_rounds = sum(1 for block in transcript.blocks if block.kind == "graph")
    budget_exhausted = answer is None and graph_rounds >= cfg.max_rounds
    verdict = validate_format(transcript, cfg.strict_single_call)
    effective = [
        v for v in verdict.violations if not (budget_exhausted and v.kind == MISSING_ANSWER)
    ]
    if effective:
        return OUTCOME_INVALID_FORMAT
    if budget_exhausted:
        return OUTCOME_LOOP_TIMEOUT
    return OUTCOME_PREMATURE_STOP


def run_episode(
    store: GraphStore,
    question: QuestionInstance,
    policy: PolicyInterface,
    cfg: EpisodeConfig | None = None,
) -> tuple[Transcript, str, RewardBreakdown]:
    """Drive one episode to termination with an in-process policy."""
    cfg = cfg or EpisodeConfig()
    episode = Episode(store, question, cfg)
    while not episode.terminated:
        segment = policy.next_segment(question.question, episode.transcript_text)
        episode.submit(segment)
    assert episode.transcript is not None and episode.outcome and episode.reward is not None
    return episode.transcript, episode.outcome, episode.reward


# -- scripted policies ---------------------------------------------------------


def _segment(think: str, tail: str) -> str:
    return f"<think>{think}</think>\n{tail}"


def _observation_count(transcript_text: str) -> int:
    return transcript_text.count("<information>")


class OraclePolicy:
    """Replays the question's reference trajectory, then answers gold.

    Stateless given the transcript, so replaying it over any transport
    yields the same segments.
    """

    def __init__(self, question: QuestionInstance, final_think: str | None = None) -> None:
        if question.reference_trajectory is None:
            raise OracleConfigurationError(
                f"question {question.question_id!r} has no reference trajectory"
            )
        self._question = question
        self._final_think = final_think or "I have gathered enough evidence to answer."

    def next_segment(self, question: str, transcript_text: str) -> str:
        steps = self._question.reference_trajectory or ()
        position = _observation_count(transcript_text)
        if position < len(steps):
            step = steps[position]
            think = step.think or f"Consulting the graph via {step.function}."
            call = f"{step.function}[{', '.join(step.args)}]"
            return _segment(think, f"<graph>{call}</graph>")
        return _segment(self._final_think, f"<answer>{self._question.gold_answer}</answer>")


class ScriptedPolicy:
    """Emits a fixed list of pre-rendered agent segments, in order."""

    def __init__(self, segments: Sequence[str]) -> None:
        self._segments = list(segments)

    def next_segment(self, question: str, transcript_text: str) -> str:
        position = _observation_count(transcript_text)
        return self._segments[min(position, len(self._segments) - 1)]


class LoopingPolicy:
    """Keeps issuing graph rounds and never answers; exists to hit the budget."""

    def next_segment(self, question: str, transcript_text: str) -> str:
        return _segment(
            "I still need more evidence from the graph.",
            f"<graph>RetrieveNode[{question}]</graph>",
        )


class PrematurePolicy:
    """Answers a wrong constant after a single lookup round."""

    def __init__(self, answer: str = "unknown") -> None:
        self._answer = answer

    def next_segment(self, question: str, transcript_text: str) -> str:
        if _observation_count(transcript_text) == 0:
            return _segment(
                "One quick lookup should settle this.",
                f"<graph>RetrieveNode[{question}]</graph>",
            )
        return _segment("That is enough exploration.", f"<answer>{self._answer}</answer>")


class RandomValidPolicy:
    """Uniformly samples schema-valid calls; answers with seeded probability."""

    def __init__(
        self,
        store: GraphStore,
        seed: int,
        answer_probability: float = 0.25,
    ) -> None:
        self._rng = random.Random(seed)
        self._answer_probability = answer_probability
        node_ids = store.node_ids()
        self._queries = [
            value
            for node_id in node_ids
            for value in store.node(node_id).features.values()
            if tokenize(value)
        ]
        self._feature_pool = [
            (node_id, feature)
            for node_id in node_ids
            for feature in store.node(node_id).features
        ]
        self._relation_pool = [
            (node_id, relation.name)
            for node_id in node_ids
            for relation in store.schema.relations_for(store.node(node_id).node_type)
        ]

    def next_segment(self, question: str, transcript_text: str) -> str:
        made_a_round = _observation_count(transcript_text) > 0
        if made_a_round and self._rng.random() < self._answer_probability:
            answer = self._rng.choice(self._queries) if self._queries else "unknown"
            return _segment("Settling on an answer.", f"<answer>{answer}</answer>")
        choices: list[str] = []
        if self._queries:
            choices.append("RetrieveNode")
        if self._feature_pool:
            choices.append("NodeFeature")
        if self._relation_pool:
            choices.extend(["NeighborCheck", "NodeDegree"])
        if not choices:
            return _segment("Nothing to look up.", "<answer>unknown</answer>")
        function = self._rng.choice(choices)
        if function == "RetrieveNode":
            call = f"RetrieveNode[{self._rng.choice(self._queries)}]"
        elif function == "NodeFeature":
            node_id, feature = self._rng.choice(self._feature_pool)
            call = f"NodeFeature[{node_id}, {feature}]"
        else:
            node_id, relation = self._rng.choice(self._relation_pool)
            call = f"{function}[{node_id}, {relation}]"
        return _segment(f"Trying a {function} lookup.", f"<graph>{call}</graph>")


PolicyFactory = Callable[[GraphStore, QuestionInstance, int], PolicyInterface]


def scripted_policies() -> Mapping[str, PolicyFactory]:
    """Named test-double policies keyed for the CLI and campaign runner."""
    return {
        "oracle": lambda store, question, seed: OraclePolicy(question),
        "random_valid": lambda store, question, seed: RandomValidPolicy(store, seed),
        "looping": lambda store, question, seed: LoopingPolicy(),
        "premature": lambda store, question, seed: PrematurePolicy(),
    }


# -- campaign orchestration ----------------------------------------------------


def episode_log_record(question: QuestionInstance, episode: Episode) -> dict:
    """One line-delimited log record for a terminated episode."""
    assert episode.transcript is not None and episode.reward is not None
    transcript = episode.transcript
    return {
        "question_id": question.question_id,
        "transcript": transcript.text,
        "spans": [
            [block.kind, start, end]
            for block, (start, end) in zip(transcript.blocks, transcript.spans)
        ],
        "outcome": episode.outcome,
        "reward": {
            "em": episode.reward.em,
            "vf": episode.reward.vf,
            "ap": episode.reward.ap,
            "reward": episode.reward.reward,
        },
    }


def run_campaign(
    store: GraphStore,
    questions: Sequence[QuestionInstance],
    policy_name: str,
    seed: int,
    cfg: EpisodeConfig | None = None,
    episodes: int = 1,
) -> list[dict]:
    """Run N seeded episodes round-robin over the question set; returns log
    records. Two runs with identical arguments produce identical records."""
    if not questions:
        raise ValueError("question set is empty")
    factory = scripted_policies().get(policy_name)
    if factory is None:
        raise ValueError(f"unknown policy {policy_name!r}")
    cfg = cfg or EpisodeConfig()
    records = []
    for i in range(episodes):
        question = questions[i % len(questions)]
        policy = factory(store, question, seed * 100003 + i)
        episode = Episode(store, question, cfg)
        while not episode.terminated:
            episode.submit(policy.next_segment(question.question, episode.transcript_text))
        records.append(episode_log_record(question, episode))
    return records
