from __future__ import annotations

import json
import re
import subprocess
import sys
import time
import urllib.request
from pathlib import Path

import pytest

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def server_log_path(tmp_path_factory) -> Path:
    return tmp_path_factory.mktemp("server") / "episodes.jsonl"


@pytest.fixture(scope="session")
def server_endpoint(server_log_path):
    """Launch the rollout service as a subprocess via its CLI, the way an
    external trainer would."""
    process = subprocess.Popen(
        [
            sys.executable, "-m", "graphhop.cli", "serve",
            "--graph", str(DATA / "fixture_graph.jsonl"),
            "--questions", str(DATA / "fixture_questions.jsonl"),
            "--bind", "127.0.0.1:0",
            "--log", str(server_log_path),
        ],
        stdout=subprocess.PIPE,
        stderr=subprocess.PIPE,
        text=True,
    )
    try:
        line = process.stdout.readline()
        match = re.search(r"http://127\.0\.0\.1:(\d+)", line)
        assert match, f"server did not announce its address: {line!r}"
        endpoint = f"http://127.0.0.1:{match.group(1)}"
        deadline = time.monotonic() + 10
        while time.monotonic() < deadline:
            try:
                with urllib.request.urlopen(f"{endpoint}/v1/health") as response:
                    if json.loads(response.read().decode())["status"] == "ok":
                        break
            except OSError:
                time.sleep(0.05)
        else:
            raise RuntimeError("server never became healthy")
        yield endpoint
    finally:
        process.terminate()
        process.wait(timeout=10)


@pytest.fixture(scope="session")
def golden_trace() -> str:
    return (DATA / "golden_navigator_trace.txt").read_text(encoding="utf-8")
