"""Biased-mixture curriculum over structural difficulty levels.

The level distribution at step t is a convex mixture of a Gaussian whose
mean sweeps from the easiest to the hardest level and a fixed bias prior:

    p_mixed(t, k) = (1 - eta(t)) * p_gaussian(t, k) + eta(t) * q(k)

with eta interpolating linearly between its endpoints over training.
Sampling is counter-based and seeded, so rollouts replay exactly regardless
of thread scheduling.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .store import QuestionInstance

LEVEL_NAMES = ("Easy", "Medium", "Hard")

_PROB_SUM_TOLERANCE = 1e-12


class EmptyLevelError(ValueError):
    """A level with positive sampling mass holds no instances."""


@dataclass(frozen=True)
class CurriculumConfig:
    levels_k: int
    sigma: float
    beta: float
    bias_prior: tuple[float, ...]
    eta_start: float
    eta_end: float
    total_steps: int
    seed: int = 0

    def __post_init__(self) -> None:
        if self.levels_k < 1:
            raise ValueError("levels_k must be >= 1")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.total_steps < 2:
            raise ValueError("total_steps must be >= 2")
        if len(self.bias_prior) != self.levels_k:
            raise ValueError("bias_prior length must equal levels_k")
        if any(p < 0 for p in self.bias_prior):
            raise ValueError("bias_prior entries must be nonnegative")
        if abs(sum(self.bias_prior) - 1.0) > _PROB_SUM_TOLERANCE:
            raise ValueError("bias_prior must sum to 1")
        for name in ("eta_start", "eta_end"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        object.__setattr__(self, "bias_prior", tuple(float(p) for p in self.bias_prior))


@dataclass(frozen=True)
class LevelDistribution:
    step: int
    p_gaussian: tuple[float, ...]
    p_mixed: tuple[float, ...]
    eta: float


def default_training_config(seed: int = 0, total_steps: int = 200) -> CurriculumConfig:
    """Default schedule over three difficulty levels: sigma 0.75, pacing 3,
    bias prior split over the two easier levels, mixing 0.2 -> 0.8."""
    return CurriculumConfig(
        levels_k=3,
        sigma=0.75,
        beta=3.0,
        bias_prior=(0.5, 0.5, 0.0),
        eta_start=0.2,
        eta_end=0.8,
        total_steps=total_steps,
        seed=seed,
    )


def _check_step(cfg: CurriculumConfig, step: int) -> None:
    if not 0 <= step < cfg.total_steps:
        raise ValueError(f"step {step} outside [0, {cfg.total_steps})")


def schedule_mean(cfg: CurriculumConfig, step: int) -> float:
    """Gaussian mean in level coordinates: sweeps 1 -> K at pacing beta and
    saturates at the hardest level."""
    _check_step(cfg, step)
    progress = min(1.0, cfg.beta * step / (cfg.total_steps - 1))
    return 1.0 + (cfg.levels_k - 1) * progress


def gaussian_level_scores(cfg: CurriculumConfig, step: int) -> tuple[float, ...]:
    """Unnormalized per-level preference at a step; strictly positive."""
    mean = schedule_mean(cfg, step)
    return tuple(
        math.exp(-((k - mean) ** 2) / (2.0 * cfg.sigma**2))
        for k in range(1, cfg.levels_k + 1)
    )


def mixing_eta(cfg: CurriculumConfig, step: int) -> float:
    """Linear schedule for the bias-prior weight; exact at both endpoints."""
    _check_step(cfg, step)
    fraction = step / (cfg.total_steps - 1)
    return (1.0 - fraction) * cfg.eta_start + fraction * cfg.eta_end


def level_distribution(cfg: CurriculumConfig, step: int) -> LevelDistribution:
    """Normalized Gaussian distribution and its convex mixture with the prior."""
    scores = gaussian_level_scores(cfg, step)
    total = sum(scores)
    p_gaussian = tuple(s / total for s in scores)
    eta = mixing_eta(cfg, step)
    p_mixed = tuple(
        (1.0 - eta) * pg + eta * q for pg, q in zip(p_gaussian, cfg.bias_prior)
    )
    return LevelDistribution(step=step, p_gaussian=p_gaussian, p_mixed=p_mixed, eta=eta)


def _counter_uniform(seed: int, index: int) -> float:
    """Deterministic uniform in [0, 1) keyed by (seed, draw index)."""
    digest = hashlib.sha256(f"{seed}:{index}".encode("ascii")).digest()
    return int.from_bytes(digest[:8], "big") / 2.0**64


def _inverse_cdf(probabilities: Sequence[float], u: float) -> int:
    cumulative = 0.0
    last_positive = 0
    for i, p in enumerate(probabilities):
        if p > 0.0:
            last_positive = i
        cumulative += p
        if u < cumulative:
            return i
    return last_positive  # guards against float shortfall in the final bin


def sample_level(cfg: CurriculumConfig, step: int, rng_state: int = 0) -> tuple[int, int]:
    """Draw a level (1-based) from the mixed distribution.

    rng_state is a draw counter; the returned state must feed the next draw.
    Identical (seed, state) always reproduces the same level.
    """
    distribution = level_distribution(cfg, step)
    u = _counter_uniform(cfg.seed, rng_state)
    return _inverse_cdf(distribution.p_mixed, u) + 1, rng_state + 1


def sample_instance(
    cfg: CurriculumConfig,
    step: int,
    dataset: Mapping[int, Sequence[QuestionInstance]],
    rng_state: int = 0,
) -> tuple[QuestionInstance, int]:
    """Draw a level, then an instance uniformly within it.

    Consumes two draw indices. The dataset maps level index (1..K) to its
    instances; drawing an empty level raises EmptyLevelError.
    """
    level, rng_state = sample_level(cfg, step, rng_state)
    instances = dataset.get(level, ())
    if not instances:
        raise EmptyLevelError(f"level {level} has no instances")
    u = _counter_uniform(cfg.seed, rng_state)
    index = min(int(u * len(instances)), len(instances) - 1)
    return instances[index], rng_state + 1


def partition_by_level(
    questions: Iterable[QuestionInstance], levels_k: int = 3
) -> dict[int, list[QuestionInstance]]:
    """Bucket labeled questions into level indices 1..K by difficulty name.

    OOD instances are excluded (they are never trained on); unlabeled
    instances are rejected, label them first.
    """
    if levels_k > len(LEVEL_NAMES):
        raise ValueError(f"no level names defined beyond K={len(LEVEL_NAMES)}")
    by_level: dict[int, list[QuestionInstance]] = {k: [] for k in range(1, levels_k + 1)}
    level_of = {name: i + 1 for i, name in enumerate(LEVEL_NAMES[:levels_k])}
    for question in questions:
        if question.difficulty == "OOD":
            continue
        if question.difficulty is None:
            raise ValueError(f"question {question.question_id!r} is unlabeled")
        level = level_of.get(question.difficulty)
        if level is None:
            raise ValueError(
                f"question {question.question_id!r} difficulty {question.difficulty!r}"
                f" exceeds K={levels_k}"
            )
        by_level[level].append(question)
    return by_level
