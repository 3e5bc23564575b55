"""Map character-interval agent masks onto tokenizer output.

A trainer tokenizes the transcript itself; this module selects the token
indices whose characters all lie inside the agent intervals. Tokens that
straddle a mask boundary are excluded, so environment characters can never
leak into the gradient set.
"""

from __future__ import annotations

from typing import Callable, Sequence

TokenizerCallback = Callable[[str], Sequence[tuple[int, int]]]


def _merge(intervals: Sequence[tuple[int, int]]) -> list[tuple[int, int]]:
    merged: list[tuple[int, int]] = []
    for start, end in sorted(intervals):
        if merged and start <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], end))
        else:
            merged.append((start, end))
    return merged


def mask_to_token_indices(
    text: str,
    intervals: Sequence[tuple[int, int]],
    tokenizer_callback: TokenizerCallback,
) -> list[int]:
    """Indices of tokens fully inside the (merged) agent intervals.

    tokenizer_callback must return one (start, end) character span per
    token of text. Intervals reaching outside the text raise ValueError.
    """
    for start, end in intervals:
        if not (0 <= start <= end <= len(text)):
            raise ValueError(f"interval ({start}, {end}) outside text of length {len(text)}")
    merged = _merge(intervals)
    indices: list[int] = []
    for index, (token_start, token_end) in enumerate(tokenizer_callback(text)):
        if any(start <= token_start and token_end <= end for start, end in merged):
            indices.append(index)
    return indices
