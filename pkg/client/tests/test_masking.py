from __future__ import annotations

import random
import re

import pytest

from graphhop_client import mask_to_token_indices

_TOKEN_RE = re.compile(r"\S+")
_INFO_RE = re.compile(r"<information>.*?</information>", re.DOTALL)


def regex_tokenizer(text: str) -> list[tuple[int, int]]:
    return [match.span() for match in _TOKEN_RE.finditer(text)]


def synthetic_transcript(rng: random.Random) -> tuple[str, list[tuple[int, int]]]:
    """A transcript-shaped text plus its agent intervals (complement of the
    information blocks), computed with plain string scanning."""
    words = ("alpha", "beta", "node", "price", "12.95", "cable")
    pieces = []
    for _ in range(rng.randint(1, 4)):
        think = " ".join(rng.choice(words) for _ in range(rng.randint(1, 5)))
        obs = " ".join(rng.choice(words) for _ in range(rng.randint(1, 5)))
        pieces.append(f"<think>{think}</think>")
        pieces.append(f"<graph>RetrieveNode[{rng.choice(words)}]</graph>")
        pieces.append(f"<information>{obs}</information>")
    pieces.append(f"<answer>{rng.choice(words)}</answer>")
    text = "\n".join(pieces)
    intervals = []
    cursor = 0
    for match in _INFO_RE.finditer(text):
        if match.start() > cursor:
            intervals.append((cursor, match.start()))
        cursor = match.end()
    if len(text) > cursor:
        intervals.append((cursor, len(text)))
    return text, intervals


def char_membership_oracle(
    text: str, intervals: list[tuple[int, int]], spans: list[tuple[int, int]]
) -> list[int]:
    """A token is agent iff every one of its characters is an agent character."""
    agent_chars = [False] * len(text)
    for start, end in intervals:
        for position in range(start, end):
            agent_chars[position] = True
    return [
        index
        for index, (start, end) in enumerate(spans)
        if all(agent_chars[position] for position in range(start, end))
    ]


def test_whole_text_mask_selects_all_tokens():
    text = "alpha beta gamma"
    indices = mask_to_token_indices(text, [(0, len(text))], regex_tokenizer)
    assert indices == [0, 1, 2]


def test_empty_intervals_select_nothing():
    assert mask_to_token_indices("alpha beta", [], regex_tokenizer) == []


def test_straddling_token_excluded():
    text = "aaa bbb ccc"
    # interval cuts through "bbb": the token must not be selected
    indices = mask_to_token_indices(text, [(0, 5)], regex_tokenizer)
    assert indices == [0]


def test_interval_beyond_text_rejected():
    with pytest.raises(ValueError):
        mask_to_token_indices("short", [(0, 99)], regex_tokenizer)
    with pytest.raises(ValueError):
        mask_to_token_indices("short", [(-1, 3)], regex_tokenizer)


def test_matches_character_membership_oracle_on_100_random_transcripts():
    rng = random.Random(99)
    for _ in range(100):
        text, intervals = synthetic_transcript(rng)
        spans = regex_tokenizer(text)
        expected = char_membership_oracle(text, intervals, spans)
        assert mask_to_token_indices(text, intervals, regex_tokenizer) == expected


def test_monotone_under_interval_growth():
    rng = random.Random(5)
    for _ in range(50):
        text, intervals = synthetic_transcript(rng)
        base = set(mask_to_token_indices(text, intervals, regex_tokenizer))
        if not intervals:
            continue
        index = rng.randrange(len(intervals))
        start, end = intervals[index]
        grown = list(intervals)
        grown[index] = (max(0, start - rng.randint(0, 4)), min(len(text), end + rng.randint(0, 4)))
        enlarged = set(mask_to_token_indices(text, grown, regex_tokenizer))
        assert base <= enlarged


def test_adjacent_intervals_merge():
    text = "aaa bbb"
    # two touching intervals cover "bbb" jointly; merged they contain it
    indices = mask_to_token_indices(text, [(4, 5), (5, 7)], regex_tokenizer)
    assert indices == [1]
