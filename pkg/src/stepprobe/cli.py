"""Command line front end.

Subcommands mirror the library surface: generate and validate synthetic
datasets, ingest natural ones, run experiments against a model or a
scripted agent, and re-judge recorded transcripts offline.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Sequence

from . import agents, gsm8k, runner, solver
from .gateway import (
    AgentSource,
    CachingSource,
    DirectoryCache,
    HttpSource,
    ModelSettings,
    ReplaySource,
)
from .generator import EXP1_VARIANTS, GenSpec, dataset_manifest, generate_dataset
from .model import (
    NaturalProblem,
    dataset_sha256,
    read_problems_jsonl,
    write_problems_jsonl,
)

GENERATE_VARIANTS = EXP1_VARIANTS + ("probe", "probe_multi")


def _cmd_generate(args: argparse.Namespace) -> int:
    spec = GenSpec(
        variant=args.variant,
        chain_length=args.chain_length,
        n_problems=args.n,
        seed=args.seed,
        heuristic=args.heuristic,
        allow_zero_delta=args.allow_zero_delta,
        strict_template=args.strict_template,
    )
    problems = generate_dataset(spec)
    write_problems_jsonl(args.out, problems)
    manifest = dataset_manifest(spec, problems)
    print(json.dumps(manifest, sort_keys=True))
    return 0


def _cmd_validate(args: argparse.Namespace) -> int:
    problems = read_problems_jsonl(args.problems)
    issues = []
    natural = 0
    for problem in problems:
        if isinstance(problem, NaturalProblem):
            natural += 1
            continue
        for message in solver.validate_problem(problem, check_unique=not args.quick):
            issues.append(f"{problem.problem_id}: {message}")
    for line in issues:
        print(line)
    checked = len(problems) - natural
    status = "clean" if not issues else f"{len(issues)} issue(s)"
    print(f"checked {checked} structured problem(s), skipped {natural} natural: {status}")
    return 1 if issues else 0


def _cmd_ingest(args: argparse.Namespace) -> int:
    records = []
    with open(args.source, encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    names = gsm8k.load_name_list(args.names) if args.names else None
    problems, stats = gsm8k.build_natural_dataset(
        records,
        kinds=args.kinds.split(","),
        seed=args.seed,
        names=names,
        limit=args.limit,
    )
    write_problems_jsonl(args.out, problems)
    print(json.dumps(stats, sort_keys=True))
    return 0


def _build_source(args: argparse.Namespace, problems) -> tuple[object, ModelSettings]:
    settings = ModelSettings(
        model_name=args.model,
        temperature=args.temperature,
        max_tokens=args.max_tokens,
        stop_sequences=tuple(args.stop or ()),
    )
    if args.replay:
        if not args.cache:
            raise SystemExit("--replay needs --cache")
        return ReplaySource(DirectoryCache(args.cache)), settings
    if args.model.startswith("agent:"):
        policy = agents.parse_policy(args.model[len("agent:"):])
        source: object = AgentSource(
            {p.problem_id: p for p in problems},
            policy,
            seed=args.agent_seed,
            label=args.model,
        )
    else:
        source = HttpSource(
            profile=args.profile, api_base=args.api_base, key_env=args.key_env
        )
    if args.cache:
        source = CachingSource(source, DirectoryCache(args.cache))
    return source, settings


def _cmd_run(args: argparse.Namespace) -> int:
    problems = read_problems_jsonl(args.problems)
    if args.limit is not None:
        problems = problems[: args.limit]
    source, settings = _build_source(args, problems)
    shot_names = args.shots.split(",") if args.shots else None
    result = runner.run_experiment(
        args.experiment,
        problems,
        source,
        settings,
        args.out,
        shot_names=shot_names,
        workers=args.workers,
        resume=not args.no_resume,
        single_generation=args.single_generation,
    )
    _print_report(result.experiment, result.report_rows)
    if result.n_missing:
        print(f"missing completions: {result.n_missing}")
    print(f"artifacts in {result.out_dir}")
    return 0


def _cmd_judge(args: argparse.Namespace) -> int:
    problems = read_problems_jsonl(args.problems)
    by_id = {p.problem_id: p for p in problems}
    transcripts = {}
    jobs = []
    for row in runner._load_jsonl(Path(args.transcripts)):
        problem = by_id.get(row["problem_id"])
        if problem is None:
            continue
        transcripts[row["key"]] = row
        jobs.append(runner.Job(problem, row["step"], row["shots"]))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    judgment_rows = runner.judge_transcripts(
        args.experiment, jobs, transcripts, args.single_generation
    )
    runner._write_jsonl(out_dir / "judgments.jsonl", judgment_rows)
    manifest_hash = dataset_sha256(problems)
    if args.experiment in ("exp1", "accuracy", "fewshot-sweep"):
        report_rows = runner.aggregate_selection(judgment_rows, manifest_hash)
        columns = runner._FREQ_COLUMNS
    else:
        report_rows = runner.aggregate_curve(judgment_rows, manifest_hash, problems)
        columns = runner._CURVE_COLUMNS
    runner.write_report(out_dir, columns, report_rows)
    runner.render_figures(args.experiment, report_rows, out_dir)
    _print_report(args.experiment, report_rows)
    print(f"artifacts in {out_dir}")
    return 0


def _print_report(experiment: str, rows) -> None:
    for row in rows:
        if experiment in ("exp1", "accuracy", "fewshot-sweep"):
            freq = "-" if row["frequency"] is None else f"{row['frequency']:.3f}"
            acc = "-" if row["accuracy"] is None else f"{row['accuracy']:.3f}"
            print(
                f"{row['model']} | shots={row['shots']} | {row['variant']}: "
                f"selected {row['n_selected']}/{row['n'] - row['n_missing']} "
                f"(freq {freq}, acc {acc})"
            )
        else:
            r = "-" if row["r"] is None else f"{row['r']:.3f}"
            print(
                f"{row['model']} | shots={row['shots']} | {row['variant']} | "
                f"d={row['d']}: r={r} "
                f"({row['n_paired_distractor']}:{row['n_minimal']} paired:solution)"
            )


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stepprobe",
        description="Generate, probe, and score premise-selection behavior.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a synthetic problem set")
    gen.add_argument("--variant", choices=GENERATE_VARIANTS, default="base")
    gen.add_argument("--chain-length", type=int, default=4)
    gen.add_argument("--n", type=int, default=100)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument(
        "--heuristic",
        choices=("overlap", "position"),
        default="overlap",
        help="flavor of the paired distractors in probe sets",
    )
    gen.add_argument("--allow-zero-delta", action="store_true")
    gen.add_argument(
        "--strict-template",
        action="store_true",
        help="use the fixed printed probe layout instead of uniform fillers",
    )
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=_cmd_generate)

    val = sub.add_parser("validate", help="cross-check a problem set")
    val.add_argument("problems")
    val.add_argument(
        "--quick", action="store_true", help="skip the uniqueness re-derivation"
    )
    val.set_defaults(func=_cmd_validate)

    ing = sub.add_parser("ingest", help="build natural variants from a source set")
    ing.add_argument("--source", required=True, help="JSONL with question/answer rows")
    ing.add_argument("--kinds", default="base,overlap,position,negative")
    ing.add_argument("--seed", type=int, default=0)
    ing.add_argument("--limit", type=int, default=None, help="instances to use")
    ing.add_argument("--names", default=None, help="override the first-name list")
    ing.add_argument("--out", required=True)
    ing.set_defaults(func=_cmd_ingest)

    run = sub.add_parser("run", help="run an experiment against a model or agent")
    _add_run_args(run)
    run.set_defaults(func=_cmd_run)

    jdg = sub.add_parser("judge", help="re-judge recorded transcripts offline")
    jdg.add_argument("--experiment", choices=runner.EXPERIMENTS, required=True)
    jdg.add_argument("--problems", required=True)
    jdg.add_argument("--transcripts", required=True)
    jdg.add_argument("--single-generation", action="store_true")
    jdg.add_argument("--out", required=True)
    jdg.set_defaults(func=_cmd_judge)

    return parser


def _add_run_args(run: argparse.ArgumentParser) -> None:
    run.add_argument("--experiment", choices=runner.EXPERIMENTS, required=True)
    run.add_argument("--problems", required=True)
    run.add_argument(
        "--model",
        required=True,
        help='model name for the HTTP endpoint, or "agent:<kind>[:k=v,...]" '
        'such as agent:rational or agent:mixed:4=0.65,3=0.45,2=0.25',
    )
    run.add_argument("--out", required=True)
    run.add_argument(
        "--shots",
        default=None,
        help="comma list of shot set names or files; default picks by dataset",
    )
    run.add_argument("--workers", type=int, default=1)
    run.add_argument("--limit", type=int, default=None)
    run.add_argument("--cache", default=None, help="completion cache directory")
    run.add_argument(
        "--replay",
        action="store_true",
        help="answer only from the cache; missing prompts become missing cells",
    )
    run.add_argument("--no-resume", action="store_true")
    run.add_argument(
        "--single-generation",
        action="store_true",
        help="read step choices off one free generation per problem",
    )
    run.add_argument("--agent-seed", type=int, default=0)
    run.add_argument("--temperature", type=float, default=0.0)
    run.add_argument("--max-tokens", type=int, default=512)
    run.add_argument("--stop", action="append", default=None)
    run.add_argument("--profile", choices=("chat", "completion"), default="chat")
    run.add_argument("--api-base", default=None)
    run.add_argument("--key-env", default="PROBE_API_KEY")


def main(argv: Sequence[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
