"""Grammar, parser, emitter, and validator for block-structured transcripts.

A transcript interleaves four tagged block kinds. Information blocks belong
to the environment; everything else (tags, contents, and inter-block glue)
is agent text. Tags match case-sensitively and nest at depth 1 only: block
content may not contain further tags.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable

from .executor import FunctionCall, parse_call

BLOCK_KINDS = ("think", "graph", "information", "answer")

AGENT = "agent"
ENVIRONMENT = "environment"

# Verdict violation kinds (validate_format).
STRAY_TEXT = "stray_text"
GRAPH_WITHOUT_THINK = "graph_without_think"
GRAPH_WITHOUT_INFORMATION = "graph_without_information"
MISSING_ANSWER = "missing_answer"
ANSWER_NOT_TERMINAL = "answer_not_terminal"
MULTIPLE_ANSWERS = "multiple_answers"
NOT_EXACTLY_ONE_CALL = "not_exactly_one_call"

# Structural violation kinds (parse errors, or recovered-mode annotations).
UNCLOSED_TAG = "unclosed_tag"
TAG_INSIDE_BLOCK = "tag_inside_block"
UNMATCHED_CLOSE_TAG = "unmatched_close_tag"

_TAG_RE = re.compile(r"</?(think|graph|information|answer)>")


class TranscriptParseError(ValueError):
    """Structural grammar breach; carries the character offset and kind."""

    def __init__(self, position: int, kind: str, message: str) -> None:
        self.position = position
        self.kind = kind
        super().__init__(f"offset {position}: {message}")


@dataclass(frozen=True)
class Violation:
    position: int
    kind: str


@dataclass(frozen=True)
class Block:
    kind: str
    content: str
    provenance: str

    def __post_init__(self) -> None:
        expected = ENVIRONMENT if self.kind == "information" else AGENT
        if self.provenance != expected:
            raise ValueError(f"{self.kind} blocks must have provenance {expected!r}")


@dataclass(frozen=True)
class FormatVerdict:
    valid: bool
    violations: tuple[Violation, ...]


@dataclass(frozen=True)
class Transcript:
    """Parsed transcript plus its authoritative serialization.

    spans[i] is the character interval of blocks[i] (tags included) in
    text. stray_spans mark non-whitespace text outside any block;
    structural_violations are only populated by recovering parses.
    """

    question: str
    text: str
    blocks: tuple[Block, ...]
    spans: tuple[tuple[int, int], ...]
    stray_spans: tuple[tuple[int, int], ...] = ()
    structural_violations: tuple[Violation, ...] = ()

    @classmethod
    def from_blocks(cls, question: str, blocks: Iterable[Block | tuple[str, str]]) -> Transcript:
        """Build the canonical serialization: blocks joined by single newlines."""
        normalized: list[Block] = []
        for item in blocks:
            if isinstance(item, Block):
                normalized.append(item)
            else:
                kind, content = item
                provenance = ENVIRONMENT if kind == "information" else AGENT
                normalized.append(Block(kind, content, provenance))
        pieces: list[str] = []
        spans: list[tuple[int, int]] = []
        offset = 0
        for i, block in enumerate(normalized):
            if block.kind not in BLOCK_KINDS:
                raise ValueError(f"unknown block kind {block.kind!r}")
            if _TAG_RE.search(block.content):
                raise ValueError("block content may not contain protocol tags")
            if i:
                pieces.append("\n")
                offset += 1
            piece = f"<{block.kind}>{block.content}</{block.kind}>"
            pieces.append(piece)
            spans.append((offset, offset + len(piece)))
            offset += len(piece)
        return cls(
            question=question,
            text="".join(pieces),
            blocks=tuple(normalized),
            spans=tuple(spans),
        )


def _stray_spans_in(text: str, start: int, end: int) -> list[tuple[int, int]]:
    segment = text[start:end]
    if not segment.strip():
        return []
    first = start + len(segment) - len(segment.lstrip())
    last = start + len(segment.rstrip())
    return [(first, last)]


def parse_transcript(text: str, question: str = "", *, recover: bool = False) -> Transcript:
    """Parse a serialized transcript.

    Structural breaches (unclosed tags, tags inside an open block, stray
    closers) raise TranscriptParseError. With recover=True they are recorded
    as structural violations instead: the offending tag is demoted to stray
    text and scanning continues, so messy model output still yields a
    measurable transcript.
    """
    tags = list(_TAG_RE.finditer(text))
    blocks: list[Block] = []
    spans: list[tuple[int, int]] = []
    strays: list[tuple[int, int]] = []
    structural: list[Violation] = []
    cursor = 0
    i = 0

    def breach(position: int, kind: str, message: str) -> None:
        if not recover:
            raise TranscriptParseError(position, kind, message)
        structural.append(Violation(position, kind))

    while i < len(tags):
        match = tags[i]
        name = match.group(1)
        if match.group(0).startswith("</"):
            breach(match.start(), UNMATCHED_CLOSE_TAG, f"</{name}> without a matching opener")
            i += 1
            continue
        closer = f"</{name}>"
        if i + 1 < len(tags) and tags[i + 1].group(0) == closer:
            strays.extend(_stray_spans_in(text, cursor, match.start()))
            provenance = ENVIRONMENT if name == "information" else AGENT
            blocks.append(Block(name, text[match.end() : tags[i + 1].start()], provenance))
            spans.append((match.start(), tags[i + 1].end()))
            cursor = tags[i + 1].end()
            i += 2
            continue
        if i + 1 < len(tags):
            breach(
                tags[i + 1].start(),
                TAG_INSIDE_BLOCK,
                f"{tags[i + 1].group(0)} inside an open <{name}> block",
            )
        else:
            breach(len(text), UNCLOSED_TAG, f"<{name}> never closed")
        i += 1  # demote the opener; rescan from the tag that broke it
    strays.extend(_stray_spans_in(text, cursor, len(text)))

    return Transcript(
        question=question,
        text=text,
        blocks=tuple(blocks),
        spans=tuple(spans),
        stray_spans=tuple(sorted(strays)),
        structural_violations=tuple(structural),
    )


def emit(transcript: Transcript) -> str:
    """Serialize; the inverse of parse_transcript for accepted inputs."""
    return transcript.text


def validate_format(transcript: Transcript, strict_single_call: bool = False) -> FormatVerdict:
    """Check the interaction protocol and return a verdict, never an exception.

    Valid means: every graph block sits between a think block and an
    information block, exactly one answer block exists and terminates the
    transcript, no agent text strays outside tags, and (under
    strict_single_call) each graph block holds exactly one call.
    """
    violations: list[Violation] = []
    violations.extend(transcript.structural_violations)
    for start, _ in transcript.stray_spans:
        violations.append(Violation(start, STRAY_TEXT))

    blocks = transcript.blocks
    answer_positions = [i for i, b in enumerate(blocks) if b.kind == "answer"]
    for i, block in enumerate(blocks):
        start = transcript.spans[i][0]
        if block.kind == "graph":
            if i == 0 or blocks[i - 1].kind != "think":
                violations.append(Violation(start, GRAPH_WITHOUT_THINK))
            if i + 1 >= len(blocks) or blocks[i + 1].kind != "information":
                violations.append(Violation(start, GRAPH_WITHOUT_INFORMATION))
            if strict_single_call:
                calls = _calls_in_block(block)
                if len(calls) != 1:
                    violations.append(Violation(start, NOT_EXACTLY_ONE_CALL))

    if not answer_positions:
        violations.append(Violation(len(transcript.text), MISSING_ANSWER))
    else:
        for extra in answer_positions[1:]:
            violations.append(Violation(transcript.spans[extra][0], MULTIPLE_ANSWERS))
        if answer_positions[-1] != len(blocks) - 1:
            violations.append(
                Violation(transcript.spans[answer_positions[-1]][0], ANSWER_NOT_TERMINAL)
            )

    violations.sort(key=lambda v: (v.position, v.kind))
    return FormatVerdict(valid=not violations, violations=tuple(violations))


def _calls_in_block(block: Block) -> list[FunctionCall]:
    return [parse_call(line) for line in block.content.splitlines() if line.strip()]


def extract_calls(transcript: Transcript) -> list[tuple[int, list[FunctionCall]]]:
    """One (1-based round index, calls) entry per graph block, in order.

    Unparseable call text yields a FunctionCall with parse_ok=False rather
    than being dropped.
    """
    rounds: list[tuple[int, list[FunctionCall]]] = []
    for block in transcript.blocks:
        if block.kind == "graph":
            rounds.append((len(rounds) + 1, _calls_in_block(block)))
    return rounds


def agent_mask(transcript: Transcript) -> list[tuple[int, int]]:
    """Character intervals of agent-provenance text.

    The complement is exactly the information blocks, tags included; the two
    interval sets partition the serialization with no gap or overlap.
    """
    environment = environment_spans(transcript)
    mask: list[tuple[int, int]] = []
    previous = 0
    for start, end in environment:
        if start > previous:
            mask.append((previous, start))
        previous = end
    if len(transcript.text) > previous:
        mask.append((previous, len(transcript.text)))
    return mask


def environment_spans(transcript: Transcript) -> list[tuple[int, int]]:
    """Character intervals of environment-injected text (information blocks)."""
    return [
        span
        for span, block in zip(transcript.spans, transcript.blocks)
        if block.provenance == ENVIRONMENT
    ]


def agent_text(transcript: Transcript) -> str:
    """The agent token stream: concatenation of all agent-provenance spans."""
    return "".join(transcript.text[start:end] for start, end in agent_mask(transcript))


def extract_answer(transcript: Transcript) -> str | None:
    """Content of the final answer block, or None when absent."""
    answer = None
    for block in transcript.blocks:
        if block.kind == "answer":
            answer = block.content
    return answer
