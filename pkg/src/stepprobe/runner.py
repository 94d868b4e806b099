"""Experiment orchestration: prompts out, transcripts, judgments, and
reports back.

A run writes everything into one directory: transcripts.jsonl (raw
completions, the resume point), judgments.jsonl (per-transcript
scoring), report.csv and report.jsonl (aggregates), SVG figures, and
manifest.json. Transcripts are keyed by problem, forced step, and shot
set, so an interrupted run picks up where it stopped.
"""

from __future__ import annotations

import csv
import json
import math
import re
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .errors import MissingFixture
from .gateway import CompletionSource, ModelSettings, RequestMeta
from .judge import (
    StepChoice,
    attribute_step,
    chosen_premise,
    detect_distractor_use,
    judge_step_choice,
    parse_trace,
    score_accuracy,
)
from .model import (
    HEURISTIC_KINDS,
    AnyProblem,
    NaturalProblem,
    Problem,
    analyzed_steps,
    dataset_sha256,
    distance_before_step,
)
from .prompts import DEFAULT_SHOT_SETS, ShotSet, build_prompt, load_shot_set
from . import plots

EXPERIMENTS = ("exp1", "exp2", "exp2-multi", "accuracy", "fewshot-sweep")

_FREQ_COLUMNS = (
    "model", "shots", "variant", "n", "n_missing", "n_selected",
    "frequency", "low", "high", "n_scorable", "n_correct", "accuracy",
    "dataset_sha256",
)
_CURVE_COLUMNS = (
    "model", "shots", "variant", "d", "n", "n_missing", "n_minimal",
    "n_paired_distractor", "n_other_distractor", "n_other_premise",
    "n_unparseable", "r", "r_low", "r_high", "n_heuristic",
    "n_non_heuristic", "heuristic_share", "share_low", "share_high",
    "chance_share", "dataset_sha256",
)


def wilson(successes: int, trials: int, z: float = 1.96) -> tuple[float, float]:
    """Wilson score interval; the whole unit interval when starved."""
    if trials <= 0:
        return 0.0, 1.0
    p = successes / trials
    denom = 1 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    half = (
        z
        * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials))
        / denom
    )
    return max(0.0, center - half), min(1.0, center + half)


@dataclass(frozen=True)
class Job:
    problem: AnyProblem
    step: int | None
    shot_name: str

    @property
    def key(self) -> str:
        step = "-" if self.step is None else str(self.step)
        return f"{self.problem.problem_id}|{step}|{self.shot_name}"


def default_shot_name(problem: AnyProblem) -> str:
    return DEFAULT_SHOT_SETS[isinstance(problem, NaturalProblem)]


def plan_jobs(
    experiment: str,
    problems: Sequence[AnyProblem],
    shot_names: Sequence[str] | None,
    single_generation: bool = False,
) -> list[Job]:
    """All (problem, forced step, shot set) cells a run must fill."""
    if experiment not in EXPERIMENTS:
        raise ValueError(f"unknown experiment {experiment!r}")
    jobs = []
    for problem in problems:
        names = shot_names or (default_shot_name(problem),)
        for name in names:
            if experiment in ("exp1", "accuracy", "fewshot-sweep"):
                jobs.append(Job(problem, None, name))
            elif single_generation:
                if isinstance(problem, Problem):
                    jobs.append(Job(problem, None, name))
            else:
                if not isinstance(problem, Problem):
                    continue
                for t in analyzed_steps(problem.chain_length):
                    if problem.paired_distractors(t):
                        jobs.append(Job(problem, t, name))
    return jobs


# ---------------------------------------------------------------------------
# transcript collection


def _load_jsonl(path: Path) -> list[dict]:
    if not path.exists():
        return []
    rows = []
    with path.open(encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows


def _write_jsonl(path: Path, rows: Sequence[dict]) -> None:
    with path.open("w", encoding="utf-8") as handle:
        for row in rows:
            handle.write(json.dumps(row, sort_keys=True, ensure_ascii=False))
            handle.write("\n")


def collect_transcripts(
    jobs: Sequence[Job],
    source: CompletionSource,
    settings: ModelSettings,
    shot_sets: dict[str, ShotSet],
    out_path: Path,
    workers: int = 1,
    resume: bool = True,
) -> tuple[dict[str, dict], int]:
    """Fill every job cell, reusing rows already on disk.

    Returns transcript rows by job key plus the count of cells that
    stayed empty because a replay fixture was missing. Provider errors
    abort the run; completed cells are on disk for the next attempt.
    """
    existing = {row["key"]: row for row in _load_jsonl(out_path)} if resume else {}
    rows: dict[str, dict] = {}
    missing = 0
    lock = threading.Lock()
    out_path.parent.mkdir(parents=True, exist_ok=True)
    append_handle = out_path.open("a", encoding="utf-8")

    def fill(job: Job) -> None:
        nonlocal missing
        if job.key in existing:
            with lock:
                rows[job.key] = existing[job.key]
            return
        bundle = build_prompt(job.problem, shot_sets[job.shot_name], job.step)
        meta = RequestMeta(problem_id=job.problem.problem_id, step=job.step)
        try:
            completion = source.complete(bundle.as_text(), settings, meta)
        except MissingFixture:
            with lock:
                missing += 1
            return
        row = {
            "key": job.key,
            "problem_id": job.problem.problem_id,
            "step": job.step,
            "shots": job.shot_name,
            "model": completion.model_name,
            "prompt_sha256": bundle.sha256(),
            "text": completion.text,
            "cached": completion.cached,
        }
        with lock:
            rows[job.key] = row
            append_handle.write(
                json.dumps(row, sort_keys=True, ensure_ascii=False) + "\n"
            )
            append_handle.flush()

    try:
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                list(pool.map(fill, jobs))
        else:
            for job in jobs:
                fill(job)
    finally:
        append_handle.close()
    _write_jsonl(out_path, [rows[key] for key in sorted(rows)])
    return rows, missing


# ---------------------------------------------------------------------------
# judging


def classify_premise(problem: Problem, premise_id: int | None, t: int) -> StepChoice:
    """Map a chosen premise to its step-choice class at solution step t."""
    if premise_id is None:
        return StepChoice.UNPARSEABLE
    if premise_id == problem.minimal_solution[t - 1]:
        return StepChoice.CHOSE_MINIMAL
    premise = problem.premise_by_id(premise_id)
    if premise.is_distractor:
        if premise.role.paired_step == t and premise.role.kind in HEURISTIC_KINDS:
            return StepChoice.CHOSE_PAIRED_DISTRACTOR
        return StepChoice.CHOSE_OTHER_DISTRACTOR
    return StepChoice.CHOSE_OTHER_PREMISE


def walk_generation(text: str, problem: Problem) -> dict[int, tuple[StepChoice, int | None]]:
    """Read one unforced completion as a sequence of step choices.

    The walk follows the solution for as long as the trace does; every
    step walked this way observes a minimal choice. The first departure
    is classified like a forced-step choice and ends the walk, so later
    steps go unobserved. Stopping short of the answer counts as an
    unparseable choice at the step where the trace gave out.
    """
    trace = parse_trace(text)
    minimal = problem.minimal_solution
    observations: dict[int, tuple[StepChoice, int | None]] = {}
    matched = 0
    deviated = False
    for fact in trace.steps:
        premise_id = attribute_step(fact, problem)
        if matched < len(minimal) and premise_id == minimal[matched]:
            matched += 1
            continue
        if premise_id is not None and premise_id in minimal[:matched]:
            continue
        t = matched + 1
        if t <= len(minimal):
            observations[t] = (classify_premise(problem, premise_id, t), premise_id)
        deviated = True
        break
    if not deviated and matched < len(minimal):
        observations[matched + 1] = (StepChoice.UNPARSEABLE, None)
    for t in range(1, matched + 1):
        observations.setdefault(t, (StepChoice.CHOSE_MINIMAL, minimal[t - 1]))
    return {
        t: obs
        for t, obs in observations.items()
        if t in analyzed_steps(problem.chain_length)
    }


def judge_transcripts(
    experiment: str,
    jobs: Sequence[Job],
    transcripts: dict[str, dict],
    single_generation: bool = False,
) -> list[dict]:
    rows = []
    for job in jobs:
        transcript = transcripts.get(job.key)
        base = {
            "key": job.key,
            "problem_id": job.problem.problem_id,
            "variant": job.problem.variant,
            "shots": job.shot_name,
            "model": transcript["model"] if transcript else None,
            "missing": transcript is None,
        }
        if experiment in ("exp1", "accuracy", "fewshot-sweep"):
            rows.append(_judge_selection(job, transcript, base))
        elif single_generation:
            rows.extend(_judge_generation(job, transcript, base))
        else:
            rows.append(_judge_step(job, transcript, base))
    rows.sort(key=lambda r: (str(r["model"]), r["shots"], r["problem_id"], r.get("step") or 0))
    return rows


def _judge_selection(job: Job, transcript: dict | None, base: dict) -> dict:
    row = dict(base, step=None, selected=None, selected_ids=[], final_answer=None, correct=None)
    if transcript is None:
        return row
    trace = parse_trace(transcript["text"])
    used = detect_distractor_use(trace, job.problem)
    row["selected"] = any(used.values())
    row["selected_ids"] = sorted(k for k, v in used.items() if v)
    row["final_answer"] = trace.final_answer
    row["correct"] = score_accuracy(trace, job.problem)
    return row


def _bucket(problem: Problem, premise_id: int | None, t: int) -> str | None:
    if premise_id is None:
        return None
    premise = problem.premise_by_id(premise_id)
    if not premise.is_distractor or premise.role.paired_step != t:
        return None
    return "heuristic" if premise.role.kind in HEURISTIC_KINDS else "non_heuristic"


def _judge_step(job: Job, transcript: dict | None, base: dict) -> dict:
    problem: Problem = job.problem
    t = job.step
    row = dict(
        base,
        step=t,
        d=distance_before_step(problem.chain_length, t),
        choice=None,
        chosen_premise=None,
        paired_bucket=None,
    )
    if transcript is None:
        return row
    choice = judge_step_choice(transcript["text"], problem, t)
    chosen = chosen_premise(transcript["text"], problem, t)
    row["choice"] = choice.value
    row["chosen_premise"] = chosen
    row["paired_bucket"] = _bucket(problem, chosen, t)
    return row


def _judge_generation(job: Job, transcript: dict | None, base: dict) -> list[dict]:
    problem: Problem = job.problem
    steps = analyzed_steps(problem.chain_length)
    if transcript is None:
        return [
            dict(
                base,
                step=t,
                d=distance_before_step(problem.chain_length, t),
                choice=None,
                chosen_premise=None,
                paired_bucket=None,
            )
            for t in steps
        ]
    observations = walk_generation(transcript["text"], problem)
    rows = []
    for t, (choice, chosen) in sorted(observations.items()):
        rows.append(
            dict(
                base,
                step=t,
                d=distance_before_step(problem.chain_length, t),
                choice=choice.value,
                chosen_premise=chosen,
                paired_bucket=_bucket(problem, chosen, t),
            )
        )
    return rows


# ---------------------------------------------------------------------------
# aggregation


def aggregate_selection(rows: Sequence[dict], manifest_hash: str) -> list[dict]:
    groups: dict[tuple, list[dict]] = {}
    for row in rows:
        groups.setdefault((str(row["model"]), row["shots"], row["variant"]), []).append(row)
    out = []
    for (model, shots, variant), members in sorted(groups.items()):
        usable = [m for m in members if not m["missing"]]
        n_selected = sum(1 for m in usable if m["selected"])
        low, high = wilson(n_selected, len(usable))
        scorable = [m for m in usable if m["correct"] is not None]
        n_correct = sum(1 for m in scorable if m["correct"])
        out.append(
            {
                "model": model,
                "shots": shots,
                "variant": variant,
                "n": len(members),
                "n_missing": len(members) - len(usable),
                "n_selected": n_selected,
                "frequency": n_selected / len(usable) if usable else None,
                "low": low if usable else None,
                "high": high if usable else None,
                "n_scorable": len(scorable),
                "n_correct": n_correct,
                "accuracy": n_correct / len(scorable) if scorable else None,
                "dataset_sha256": manifest_hash,
            }
        )
    return out


def _chance_share(problems: Sequence[AnyProblem]) -> float | None:
    """Chance rate of hitting the heuristic distractor among paired ones."""
    for problem in problems:
        if not isinstance(problem, Problem):
            continue
        for t in analyzed_steps(problem.chain_length):
            paired = problem.paired_distractors(t)
            if paired:
                return 1.0 / len(paired)
    return None


def aggregate_curve(
    rows: Sequence[dict],
    manifest_hash: str,
    problems: Sequence[AnyProblem] = (),
) -> list[dict]:
    """Ratio-vs-distance points; r splits paired distractor vs solution.

    The denominator is deliberately only those two outcomes: trials that
    chose some other premise or failed to parse sit in their own columns
    and are excluded from r.
    """
    chance = _chance_share(problems)
    groups: dict[tuple, list[dict]] = {}
    for row in rows:
        if row.get("step") is None:
            continue
        groups.setdefault(
            (str(row["model"]), row["shots"], row["variant"], row["d"]), []
        ).append(row)
    out = []
    for (model, shots, variant, d), members in sorted(
        groups.items(), key=lambda item: (item[0][0], item[0][1], item[0][2], -item[0][3])
    ):
        counts = {choice: 0 for choice in StepChoice}
        n_missing = 0
        n_heuristic = 0
        n_non_heuristic = 0
        for member in members:
            if member["missing"]:
                n_missing += 1
                continue
            counts[StepChoice(member["choice"])] += 1
            if member["paired_bucket"] == "heuristic":
                n_heuristic += 1
            elif member["paired_bucket"] == "non_heuristic":
                n_non_heuristic += 1
        n_paired = counts[StepChoice.CHOSE_PAIRED_DISTRACTOR]
        n_minimal = counts[StepChoice.CHOSE_MINIMAL]
        denominator = n_paired + n_minimal
        r = n_paired / denominator if denominator else None
        r_low, r_high = wilson(n_paired, denominator)
        pair_total = n_heuristic + n_non_heuristic
        share = n_heuristic / pair_total if pair_total else None
        share_low, share_high = wilson(n_heuristic, pair_total)
        out.append(
            {
                "model": model,
                "shots": shots,
                "variant": variant,
                "d": d,
                "n": len(members),
                "n_missing": n_missing,
                "n_minimal": n_minimal,
                "n_paired_distractor": n_paired,
                "n_other_distractor": counts[StepChoice.CHOSE_OTHER_DISTRACTOR],
                "n_other_premise": counts[StepChoice.CHOSE_OTHER_PREMISE],
                "n_unparseable": counts[StepChoice.UNPARSEABLE],
                "r": r,
                "r_low": r_low if denominator else None,
                "r_high": r_high if denominator else None,
                "n_heuristic": n_heuristic,
                "n_non_heuristic": n_non_heuristic,
                "heuristic_share": share,
                "share_low": share_low if pair_total else None,
                "share_high": share_high if pair_total else None,
                "chance_share": chance,
                "dataset_sha256": manifest_hash,
            }
        )
    return out


# ---------------------------------------------------------------------------
# report writing


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def write_report(out_dir: Path, columns: Sequence[str], rows: Sequence[dict]) -> dict[str, Path]:
    csv_path = out_dir / "report.csv"
    with csv_path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row.get(col)) for col in columns])
    jsonl_path = out_dir / "report.jsonl"
    _write_jsonl(jsonl_path, [{col: row.get(col) for col in columns} for row in rows])
    return {"csv": csv_path, "jsonl": jsonl_path}


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "-", text).strip("-") or "x"


def render_figures(
    experiment: str, report_rows: Sequence[dict], out_dir: Path
) -> list[Path]:
    paths = []
    if experiment in ("exp1", "accuracy", "fewshot-sweep"):
        groups: dict[tuple, list[dict]] = {}
        for row in report_rows:
            groups.setdefault((row["model"], row["shots"]), []).append(row)
        for (model, shots), rows in sorted(groups.items()):
            name = f"selection-{_slug(model)}-{_slug(shots)}.svg"
            paths.append(
                plots.selection_bars(
                    rows, out_dir / name, title=f"{model} ({shots} shots)"
                )
            )
        return paths
    groups = {}
    for row in report_rows:
        groups.setdefault((row["model"], row["shots"], row["variant"]), []).append(row)
    for (model, shots, variant), rows in sorted(groups.items()):
        stem = f"{_slug(model)}-{_slug(shots)}-{_slug(variant)}"
        points = [
            {"d": r["d"], "value": r["r"], "low": r["r_low"], "high": r["r_high"]}
            for r in rows
        ]
        paths.append(
            plots.ratio_curve(
                points,
                out_dir / f"curve-{stem}.svg",
                chance=0.5,
                title=f"{model} / {variant}",
            )
        )
        if experiment == "exp2-multi":
            share_points = [
                {
                    "d": r["d"],
                    "value": r["heuristic_share"],
                    "low": r["share_low"],
                    "high": r["share_high"],
                }
                for r in rows
            ]
            chance = rows[0].get("chance_share")
            paths.append(
                plots.ratio_curve(
                    share_points,
                    out_dir / f"heuristic-share-{stem}.svg",
                    chance=chance,
                    ylabel="heuristic share among paired picks",
                    title=f"{model} / {variant}",
                )
            )
    return paths


# ---------------------------------------------------------------------------
# entry point


@dataclass
class RunResult:
    out_dir: Path
    experiment: str
    report_rows: list[dict]
    judgment_rows: list[dict]
    n_missing: int
    figures: list[Path]


def _tool_version() -> str:
    try:
        from importlib.metadata import version

        return version("stepprobe")
    except Exception:
        return "0+unknown"


def run_experiment(
    experiment: str,
    problems: Sequence[AnyProblem],
    source: CompletionSource,
    settings: ModelSettings,
    out_dir: str | Path,
    shot_names: Sequence[str] | None = None,
    shot_paths: dict[str, str] | None = None,
    workers: int = 1,
    resume: bool = True,
    single_generation: bool = False,
) -> RunResult:
    """Run one experiment end to end and write all artifacts."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs = plan_jobs(experiment, problems, shot_names, single_generation)
    names = sorted({job.shot_name for job in jobs})
    shot_sets = {
        name: load_shot_set((shot_paths or {}).get(name, name)) for name in names
    }
    transcripts, n_missing = collect_transcripts(
        jobs,
        source,
        settings,
        shot_sets,
        out_dir / "transcripts.jsonl",
        workers=workers,
        resume=resume,
    )
    judgment_rows = judge_transcripts(experiment, jobs, transcripts, single_generation)
    _write_jsonl(out_dir / "judgments.jsonl", judgment_rows)
    manifest_hash = dataset_sha256(problems)
    if experiment in ("exp1", "accuracy", "fewshot-sweep"):
        report_rows = aggregate_selection(judgment_rows, manifest_hash)
        columns = _FREQ_COLUMNS
    else:
        report_rows = aggregate_curve(judgment_rows, manifest_hash, problems)
        columns = _CURVE_COLUMNS
    write_report(out_dir, columns, report_rows)
    figures = render_figures(experiment, report_rows, out_dir)
    manifest = {
        "tool": "stepprobe",
        "version": _tool_version(),
        "experiment": experiment,
        "model": settings.model_name,
        "shot_sets": names,
        "dataset_sha256": manifest_hash,
        "n_problems": len(problems),
        "n_jobs": len(jobs),
        "n_missing": n_missing,
        "single_generation": single_generation,
        "settings": {
            "temperature": settings.temperature,
            "max_tokens": settings.max_tokens,
            "stop_sequences": list(settings.stop_sequences),
            "frequency_penalty": settings.frequency_penalty,
            "presence_penalty": settings.presence_penalty,
        },
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8"
    )
    return RunResult(
        out_dir=out_dir,
        experiment=experiment,
        report_rows=report_rows,
        judgment_rows=judgment_rows,
        n_missing=n_missing,
        figures=figures,
    )
