from __future__ import annotations

from pathlib import Path

import pytest

from graphhop import load_graph, load_question_set

DATA = Path(__file__).parent / "data"

NAVIGATOR_FINAL_THINK = "The usual price of the item often purchased together is 12.95."


@pytest.fixture(scope="session")
def store():
    return load_graph(DATA / "fixture_graph.jsonl")


@pytest.fixture(scope="session")
def questions():
    return load_question_set(DATA / "fixture_questions.jsonl")


@pytest.fixture(scope="session")
def fixture_question(questions):
    return questions[0]


@pytest.fixture(scope="session")
def golden_navigator() -> str:
    return (DATA / "golden_navigator_trace.txt").read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def golden_baseline() -> str:
    return (DATA / "golden_baseline_trace.txt").read_text(encoding="utf-8")
