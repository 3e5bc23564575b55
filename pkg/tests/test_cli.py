from __future__ import annotations

import json
import re
import subprocess
import sys
import time
import urllib.request
from pathlib import Path

import pytest

from graphhop.cli import main

DATA = Path(__file__).parent / "data"
GRAPH = str(DATA / "fixture_graph.jsonl")
QUESTIONS = str(DATA / "fixture_questions.jsonl")


def test_ingest_validate_ok(capsys):
    assert main(["ingest-validate", "--graph", GRAPH, "--questions", QUESTIONS]) == 0
    out = capsys.readouterr().out
    assert "graph ok: 2 nodes" in out
    assert "4 instances" in out


def test_ingest_validate_failure_exits_nonzero(tmp_path, capsys):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"schema": {"node_types": ["item"], "features_per_type": {}, "relation_types": []}}\n{oops\n')
    assert main(["ingest-validate", "--graph", str(bad)]) == 1
    err = capsys.readouterr().err
    assert "graph invalid" in err
    assert "line 2" in err


def test_label_subcommand(tmp_path, capsys):
    out_path = tmp_path / "labels.jsonl"
    assert main(["label", "--graph", GRAPH, "--questions", QUESTIONS, "--out", str(out_path)]) == 0
    lines = [json.loads(line) for line in out_path.read_text().splitlines()]
    by_id = {line["question_id"]: line for line in lines}
    assert by_id["ecommerce-0001"]["difficulty"] == "Medium"
    assert by_id["ecommerce-0001"]["rounds_total"] == 2
    assert by_id["ecommerce-0002"]["difficulty"] == "Easy"
    assert by_id["ecommerce-0004"]["difficulty"] == "OOD"
    assert "Medium: 2" in capsys.readouterr().out


def test_sample_schedule_zero_eta_equals_gaussian(tmp_path):
    config = tmp_path / "config.json"
    config.write_text(
        json.dumps(
            {
                "curriculum": {
                    "levels_k": 3,
                    "sigma": 0.75,
                    "beta": 3.0,
                    "bias_prior": [0.5, 0.5, 0.0],
                    "eta_start": 0.0,
                    "eta_end": 0.0,
                    "total_steps": 25,
                }
            }
        )
    )
    out_path = tmp_path / "schedule.tsv"
    assert main(["sample-schedule", "--config", str(config), "--out", str(out_path)]) == 0
    rows = out_path.read_text().splitlines()
    assert rows[0].split("\t") == ["step", "eta", "p1", "p2", "p3"]
    from graphhop.curriculum import CurriculumConfig, level_distribution

    cfg = CurriculumConfig(3, 0.75, 3.0, (0.5, 0.5, 0.0), 0.0, 0.0, 25)
    for row in rows[1:]:
        fields = row.split("\t")
        step = int(fields[0])
        dist = level_distribution(cfg, step)
        assert float(fields[1]) == 0.0
        for got, want in zip(fields[2:], dist.p_gaussian):
            assert float(got) == pytest.approx(want, abs=1e-9)


def test_rollout_writes_log_and_manifest(tmp_path, capsys):
    out_path = tmp_path / "rollout.jsonl"
    code = main(
        [
            "rollout", "--graph", GRAPH, "--questions", QUESTIONS,
            "--policy", "premature", "--seed", "3", "--episodes", "6",
            "--out", str(out_path),
        ]
    )
    assert code == 0
    records = [json.loads(line) for line in out_path.read_text().splitlines()]
    assert len(records) == 6
    assert all(record["outcome"] == "PrematureStop" for record in records)
    manifest = json.loads((tmp_path / "rollout.jsonl.manifest.json").read_text())
    assert manifest["seed"] == 3
    assert len(manifest["graph_sha256"]) == 64
    assert "PrematureStop: 6" in capsys.readouterr().out


def test_rollout_is_deterministic_across_runs(tmp_path):
    paths = []
    for name in ("a.jsonl", "b.jsonl"):
        path = tmp_path / name
        main(
            [
                "rollout", "--graph", GRAPH, "--questions", QUESTIONS,
                "--policy", "random_valid", "--seed", "9", "--episodes", "25",
                "--out", str(path),
            ]
        )
        paths.append(path.read_text())
    assert paths[0] == paths[1]


def test_report_subcommand(tmp_path, capsys):
    log_path = tmp_path / "log.jsonl"
    main(
        [
            "rollout", "--graph", GRAPH, "--questions", QUESTIONS,
            "--policy", "random_valid", "--seed", "4", "--episodes", "12",
            "--out", str(log_path),
        ]
    )
    capsys.readouterr()
    out_path = tmp_path / "report.jsonl"
    code = main(
        [
            "report", "--graph", GRAPH, "--questions", QUESTIONS,
            "--log", str(log_path), "--stratify", "difficulty", "--out", str(out_path),
        ]
    )
    assert code == 0
    lines = [json.loads(line) for line in out_path.read_text().splitlines()]
    assert lines[0]["stratum"] is None
    assert {"vf", "cv", "eh", "outcomes", "rouge_l_mean"} <= set(lines[0])
    assert any(line["stratum"] and line["stratum"].startswith("difficulty=") for line in lines[1:])
    assert "overall:" in capsys.readouterr().out


def test_replay_detects_mutation(tmp_path, capsys):
    log_path = tmp_path / "log.jsonl"
    main(
        [
            "rollout", "--graph", GRAPH, "--questions", QUESTIONS,
            "--policy", "oracle", "--episodes", "1", "--out", str(log_path),
        ]
    )
    capsys.readouterr()
    assert main(["replay", "--graph", GRAPH, "--log", str(log_path)]) == 0
    assert "replay ok" in capsys.readouterr().out

    record = json.loads(log_path.read_text().splitlines()[0])
    record["transcript"] = record["transcript"].replace(
        "The price feature of B000E1U4WY are: 12.95.",
        "The price feature of B000E1U4WY are: 12.96.",
    )
    log_path.write_text(json.dumps(record) + "\n")
    assert main(["replay", "--graph", GRAPH, "--log", str(log_path)]) == 1
    err = capsys.readouterr().err
    assert "round 3" in err  # the divergent round is named


def test_rollout_oracle_only_works_with_trajectories(tmp_path, capsys):
    # oracle over the full fixture set hits questions without trajectories
    with pytest.raises(Exception):
        main(
            [
                "rollout", "--graph", GRAPH, "--questions", QUESTIONS,
                "--policy", "oracle", "--episodes", "2", "--out", str(tmp_path / "x.jsonl"),
            ]
        )


def test_serve_subcommand_binds_and_answers_health(tmp_path):
    process = subprocess.Popen(
        [
            sys.executable, "-m", "graphhop.cli", "serve",
            "--graph", GRAPH, "--questions", QUESTIONS, "--bind", "127.0.0.1:0",
        ],
        stdout=subprocess.PIPE,
        stderr=subprocess.PIPE,
        text=True,
    )
    try:
        line = process.stdout.readline()
        match = re.search(r"http://127\.0\.0\.1:(\d+)", line)
        assert match, f"no address line: {line!r}"
        port = int(match.group(1))
        deadline = time.monotonic() + 5
        payload = None
        while time.monotonic() < deadline:
            try:
                with urllib.request.urlopen(f"http://127.0.0.1:{port}/v1/health") as response:
                    payload = json.loads(response.read().decode())
                break
            except OSError:
                time.sleep(0.05)
        assert payload and payload["status"] == "ok"
    finally:
        process.terminate()
        process.wait(timeout=5)
