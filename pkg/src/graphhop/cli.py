"""Operator CLI: validate data files, label questions, dump curriculum
schedules, run scripted rollouts, build reports, serve, and replay logs.

Subcommands exit nonzero on any validation failure, with details on stderr.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from collections import Counter
from pathlib import Path

from .curriculum import CurriculumConfig, level_distribution, default_training_config
from .diagnostics import build_report, load_episode_log
from .episode import EpisodeConfig, run_campaign, scripted_policies
from .executor import ERROR_OBSERVATION, execute, parse_call
from .protocol import parse_transcript
from .reward import RewardConfig
from .rounds import StaleTrajectoryError, UnclassifiableTrajectoryError, label_question
from .service import RolloutService, ServiceServer
from .store import load_graph, load_question_set


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path, encoding="utf-8") as handle:
        return json.load(handle)


def _episode_config(config: dict) -> EpisodeConfig:
    episode = config.get("episode", {})
    reward = config.get("reward", {})
    return EpisodeConfig(
        max_rounds=episode.get("max_rounds", 10),
        strict_single_call=episode.get("strict_single_call", False),
        reward=RewardConfig(
            lambda_struct=reward.get("lambda_struct", 0.5),
            lambda_final=reward.get("lambda_final", 0.1),
        ),
        retrieval_top_k=episode.get("retrieval_top_k", 1),
    )


def _curriculum_config(config: dict, seed: int | None = None) -> CurriculumConfig:
    section = config.get("curriculum")
    if section is None:
        return default_training_config(seed=seed or 0)
    return CurriculumConfig(
        levels_k=section.get("levels_k", 3),
        sigma=section.get("sigma", 0.75),
        beta=section.get("beta", 3.0),
        bias_prior=tuple(section.get("bias_prior", (0.5, 0.5, 0.0))),
        eta_start=section.get("eta_start", 0.2),
        eta_end=section.get("eta_end", 0.8),
        total_steps=section.get("total_steps", 200),
        seed=seed if seed is not None else section.get("seed", 0),
    )


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_lines(path: str | None, lines: list[str]) -> None:
    text = "".join(line + "\n" for line in lines)
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


# -- subcommands ----------------------------------------------------------------


def cmd_ingest_validate(args: argparse.Namespace) -> int:
    failures = 0
    try:
        store = load_graph(args.graph)
        print(f"graph ok: {len(store)} nodes, {len(store.schema.relation_types)} relation types")
    except Exception as exc:
        print(f"graph invalid: {exc}", file=sys.stderr)
        failures += 1
    if args.questions:
        try:
            questions = load_question_set(args.questions)
            counts = Counter(q.difficulty or "unlabeled" for q in questions)
            summary = ", ".join(f"{k}: {v}" for k, v in sorted(counts.items()))
            print(f"questions ok: {len(questions)} instances ({summary})")
        except Exception as exc:
            print(f"questions invalid: {exc}", file=sys.stderr)
            failures += 1
    if failures:
        print(f"{failures} file(s) failed validation", file=sys.stderr)
    return 1 if failures else 0


def cmd_label(args: argparse.Namespace) -> int:
    store = load_graph(args.graph)
    questions = load_question_set(args.questions)
    lines = []
    totals: Counter[str] = Counter()
    failures = 0
    for question in questions:
        try:
            label = label_question(
                question, store, count_null_rounds=args.count_null_rounds
            )
        except (StaleTrajectoryError, UnclassifiableTrajectoryError) as exc:
            print(str(exc), file=sys.stderr)
            failures += 1
            continue
        totals[label.value] += 1
        lines.append(
            json.dumps(
                {
                    "question_id": question.question_id,
                    "difficulty": label.value,
                    "rounds_total": label.rounds_total,
                    "e_rounds": label.e_rounds,
                }
            )
        )
    _write_lines(args.out, lines)
    print("totals: " + ", ".join(f"{k}: {v}" for k, v in sorted(totals.items())))
    if failures:
        print(f"{failures} question(s) failed labeling", file=sys.stderr)
    return 1 if failures else 0


def cmd_sample_schedule(args: argparse.Namespace) -> int:
    cfg = _curriculum_config(_load_config(args.config), args.seed)
    header = ["step", "eta"] + [f"p{k}" for k in range(1, cfg.levels_k + 1)]
    lines = ["\t".join(header)]
    for step in range(cfg.total_steps):
        dist = level_distribution(cfg, step)
        row = [str(step), f"{dist.eta:.10g}"] + [f"{p:.10g}" for p in dist.p_mixed]
        lines.append("\t".join(row))
    _write_lines(args.out, lines)
    return 0


def cmd_rollout(args: argparse.Namespace) -> int:
    store = load_graph(args.graph)
    questions = load_question_set(args.questions)
    config = _load_config(args.config)
    cfg = _episode_config(config)
    records = run_campaign(
        store, questions, args.policy, args.seed, cfg, episodes=args.episodes
    )
    _write_lines(args.out, [json.dumps(record) for record in records])
    if args.out:
        manifest = {
            "policy": args.policy,
            "seed": args.seed,
            "episodes": args.episodes,
            "config": config,
            "graph_sha256": _sha256(args.graph),
            "questions_sha256": _sha256(args.questions),
        }
        Path(args.out + ".manifest.json").write_text(
            json.dumps(manifest, indent=2) + "\n", encoding="utf-8"
        )
    outcomes = Counter(record["outcome"] for record in records)
    print("outcomes: " + ", ".join(f"{k}: {v}" for k, v in sorted(outcomes.items())))
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    store = load_graph(args.graph)
    questions = {q.question_id: q for q in load_question_set(args.questions)}
    records, skipped = load_episode_log(args.log)
    reports = build_report(
        records,
        store,
        questions,
        stratifiers=args.stratify,
        episode_config=_episode_config(_load_config(args.config)),
    )
    _write_lines(args.out, [json.dumps(report.to_record()) for report in reports])
    for report in reports:
        stratum = "overall" if report.stratum is None else f"{report.stratifier}={report.stratum}"
        print(
            f"{stratum}: episodes={report.episodes} vf={report.vf_rate:.3f}"
            f" cv={report.cv_rate:.3f} eh={report.eh_rate:.3f}"
            f" rouge_l={report.rouge_l_mean:.3f} outcomes={dict(report.outcome_counts)}"
        )
    if skipped:
        print(f"skipped {skipped} corrupt log line(s)", file=sys.stderr)
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    store = load_graph(args.graph)
    questions = load_question_set(args.questions)
    config = _load_config(args.config)
    curriculum = _curriculum_config(config, args.seed) if "curriculum" in config else None
    host, _, port = args.bind.partition(":")
    service = RolloutService(
        store,
        questions,
        episode_config=_episode_config(config),
        curriculum=curriculum,
        episode_log_path=args.log,
    )
    server = ServiceServer(service, host=host or "127.0.0.1", port=int(port or 0))
    print(f"serving on {server.base_url}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
    return 0


def cmd_replay(args: argparse.Namespace) -> int:
    store = load_graph(args.graph)
    records, skipped = load_episode_log(args.log)
    divergences = 0
    for index, record in enumerate(records):
        transcript = parse_transcript(record["transcript"], recover=True)
        round_no = 0
        for i, block in enumerate(transcript.blocks):
            if block.kind != "graph":
                continue
            round_no += 1
            if i + 1 >= len(transcript.blocks) or transcript.blocks[i + 1].kind != "information":
                continue  # never executed; nothing to verify
            calls = [parse_call(line) for line in block.content.splitlines() if line.strip()]
            if calls:
                rendered = "\n".join(
                    execute(store, call, args.retrieval_top_k).rendered for call in calls
                )
            else:
                rendered = ERROR_OBSERVATION
            logged = transcript.blocks[i + 1].content
            if rendered != logged:
                divergences += 1
                print(
                    f"record {index} ({record.get('question_id', '?')}): round {round_no}"
                    f" observation diverged",
                    file=sys.stderr,
                )
    if skipped:
        print(f"skipped {skipped} corrupt log line(s)", file=sys.stderr)
    if divergences:
        print(f"{divergences} divergent round(s)", file=sys.stderr)
        return 1
    print(f"replay ok: {len(records)} episode(s) verified")
    return 0


# -- parser wiring ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="graphhop")
    subparsers = parser.add_subparsers(dest="command", required=True)

    def add(name: str, func, **kwargs) -> argparse.ArgumentParser:
        sub = subparsers.add_parser(name, **kwargs)
        sub.set_defaults(func=func)
        return sub

    sub = add("ingest-validate", cmd_ingest_validate, help="validate graph/question files")
    sub.add_argument("--graph", required=True)
    sub.add_argument("--questions")

    sub = add("label", cmd_label, help="derive structural difficulty labels")
    sub.add_argument("--graph", required=True)
    sub.add_argument("--questions", required=True)
    sub.add_argument("--out")
    sub.add_argument("--count-null-rounds", action="store_true")

    sub = add("sample-schedule", cmd_sample_schedule, help="dump the mixed level schedule")
    sub.add_argument("--config")
    sub.add_argument("--seed", type=int)
    sub.add_argument("--out")

    sub = add("rollout", cmd_rollout, help="run scripted-policy episodes and write logs")
    sub.add_argument("--graph", required=True)
    sub.add_argument("--questions", required=True)
    sub.add_argument("--policy", required=True, choices=sorted(scripted_policies()))
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--episodes", type=int, default=1)
    sub.add_argument("--config")
    sub.add_argument("--out")

    sub = add("report", cmd_report, help="aggregate behavioral diagnostics from logs")
    sub.add_argument("--graph", required=True)
    sub.add_argument("--questions", required=True)
    sub.add_argument("--log", required=True)
    sub.add_argument("--stratify", nargs="*", default=[], choices=["domain", "difficulty"])
    sub.add_argument("--config")
    sub.add_argument("--out")

    sub = add("serve", cmd_serve, help="serve the rollout wire protocol")
    sub.add_argument("--graph", required=True)
    sub.add_argument("--questions", required=True)
    sub.add_argument("--bind", default="127.0.0.1:0")
    sub.add_argument("--config")
    sub.add_argument("--seed", type=int)
    sub.add_argument("--log")

    sub = add("replay", cmd_replay, help="re-execute logged calls and verify observations")
    sub.add_argument("--graph", required=True)
    sub.add_argument("--log", required=True)
    sub.add_argument("--retrieval-top-k", type=int, default=1)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
