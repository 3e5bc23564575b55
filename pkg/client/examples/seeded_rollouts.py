"""Run N seeded rollouts against a rollout server and print a reward histogram.

Usage:
    python seeded_rollouts.py --endpoint http://127.0.0.1:8630 \
        --question-id ecommerce-0001 --rollouts 20 --seed 7
"""

from __future__ import annotations

import argparse
import random
import re
from collections import Counter

from graphhop_client import ClientSession, run_rollout

_LAST_OBSERVATION = re.compile(r"<information>(.*?)</information>", re.DOTALL)


def make_provider(question: str, rng: random.Random):
    """A tiny scripted agent: one retrieval round, then answer with a token
    taken from the observation (or give up)."""

    def provider(transcript: str) -> str:
        if "<information>" not in transcript:
            return (
                f"<think>Looking up the entity for this question (draw {rng.randint(0, 999)}).</think>\n"
                f"<graph>RetrieveNode[{question}]</graph>"
            )
        observations = _LAST_OBSERVATION.findall(transcript)
        tokens = observations[-1].rstrip(".").split() if observations else []
        guess = tokens[-1] if tokens else "unknown"
        return f"<think>Answering with what the graph returned.</think>\n<answer>{guess}</answer>"

    return provider


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--endpoint", required=True)
    parser.add_argument("--question-id", required=True)
    parser.add_argument("--rollouts", type=int, default=20)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    with ClientSession(args.endpoint) as session:
        question = session.create_episode(question_id=args.question_id)["question"]
        histogram: Counter[float] = Counter()
        for i in range(args.rollouts):
            rng = random.Random(args.seed * 1000 + i)
            result = run_rollout(session, args.question_id, make_provider(question, rng))
            histogram[round(result.reward["reward"], 3)] += 1
        width = max(histogram.values())
        for reward in sorted(histogram):
            bar = "#" * (40 * histogram[reward] // width)
            print(f"reward {reward:>6}: {histogram[reward]:>4} {bar}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
