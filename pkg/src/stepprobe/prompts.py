"""Prompt assembly: few-shot examples, contexts, and forced prefixes.

Prompt text is a pure function of (problem, shot set, forced step), so
identical inputs always produce identical bytes. The shot sets live as
versioned data files; every result row records which set was used and
its content hash so runs stay attributable.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .errors import BadStep
from .model import (
    Absolute,
    NaturalProblem,
    Premise,
    Problem,
    AnyProblem,
    render_premise,
    render_question,
)

HEADER = "Answer the context question using the following example."

SHOT_SET_NAMES = (
    "artificial",
    "gsm8k",
    "overlap_inducing",
    "position_inducing",
    "negative_inducing",
)

DEFAULT_SHOT_SETS = {True: "gsm8k", False: "artificial"}  # keyed by "is natural"


@dataclass(frozen=True)
class Shot:
    context: str
    question: str
    answer_lines: tuple[str, ...]


@dataclass(frozen=True)
class ShotSet:
    name: str
    shots: tuple[Shot, ...]
    sha256: str


@dataclass(frozen=True)
class PromptBundle:
    """Everything needed to issue one completion request."""

    header: str
    shots: ShotSet
    context: str
    question: str
    forced_prefix: tuple[str, ...] = ()

    def as_text(self) -> str:
        parts = [self.header, ""]
        for shot in self.shots.shots:
            parts.append(f"Context: {shot.context}")
            parts.append(f"Question: {shot.question}")
            parts.append("Answer:")
            parts.extend(shot.answer_lines)
            parts.append("")
        parts.append(f"Context: {self.context}")
        parts.append(f"Question: {self.question}")
        parts.append("Answer:")
        parts.extend(self.forced_prefix)
        return "\n".join(parts) + "\n"

    def as_messages(self) -> list[dict]:
        # single-turn mapping: the whole assembled prompt as one user message
        return [{"role": "user", "content": self.as_text()}]

    def sha256(self) -> str:
        return hashlib.sha256(self.as_text().encode("utf-8")).hexdigest()


def _asset_text(name: str) -> str:
    return (
        resources.files("stepprobe").joinpath("assets/shots").joinpath(name).read_text("utf-8")
    )


def parse_shot_blocks(text: str) -> tuple[Shot, ...]:
    shots = []
    for block in text.strip().split("\n\n"):
        lines = block.strip().splitlines()
        if len(lines) < 4 or not lines[0].startswith("Context: "):
            raise ValueError("malformed shot block")
        if not lines[1].startswith("Question: ") or lines[2] != "Answer:":
            raise ValueError("malformed shot block")
        shots.append(
            Shot(
                context=lines[0][len("Context: "):],
                question=lines[1][len("Question: "):],
                answer_lines=tuple(lines[3:]),
            )
        )
    return tuple(shots)


def load_shot_set(name_or_path: str) -> ShotSet:
    """Load a named built-in shot set, or any file in the same format."""
    if name_or_path in SHOT_SET_NAMES:
        text = _asset_text(f"{name_or_path}.txt")
        name = name_or_path
    else:
        path = Path(name_or_path)
        text = path.read_text("utf-8")
        name = path.stem
    return ShotSet(
        name=name,
        shots=parse_shot_blocks(text),
        sha256=hashlib.sha256(text.encode("utf-8")).hexdigest(),
    )


# ---------------------------------------------------------------------------
# problem rendering


def render_problem(problem: AnyProblem) -> tuple[str, str]:
    """(context, question) strings for a problem, in surface order."""
    if isinstance(problem, NaturalProblem):
        return problem.context, problem.question
    context = " ".join(
        render_premise(p, problem.object_noun) for p in problem.premises
    )
    question = render_question(problem.question_subject, problem.object_noun)
    return context, question


def render_reasoning_step(
    premise: Premise, values: dict, object_noun: str
) -> str:
    """One worked line in the shots' style, with exact arithmetic."""
    subject = premise.subject.render()
    if isinstance(premise.body, Absolute):
        return f"{subject} has {premise.body.value} {object_noun}."
    body = premise.body
    referent = body.referent.render()
    if body.referent not in values:
        # unresolved referent: the step can only restate the premise
        return render_premise(premise, object_noun)
    a = values[body.referent]
    op = "+" if body.direction == "more" else "-"
    c = a + body.signed_delta
    return (
        f"{referent} has {a} {object_noun}, and {subject} has {body.delta} "
        f"{body.direction} {object_noun} than {referent}. "
        f"So, {subject} has {a}{op}{body.delta}={c} {object_noun}."
    )


def render_final_line(answer: int | float) -> str:
    return f"The final answer is {answer}."


def solution_lines(problem: Problem) -> list[str]:
    """Worked lines for the whole minimal solution, without the final line."""
    lines = []
    values: dict = {}
    for premise_id in problem.minimal_solution:
        premise = problem.premise_by_id(premise_id)
        lines.append(render_reasoning_step(premise, values, problem.object_noun))
        if isinstance(premise.body, Absolute):
            values[premise.subject] = premise.body.value
        else:
            values[premise.subject] = (
                values[premise.body.referent] + premise.body.signed_delta
            )
    return lines


def forced_prefix(problem: Problem, t: int) -> tuple[str, ...]:
    """Worked lines for solution steps 1..t-1, teacher-forcing the run up
    to step t. t=1 forces nothing."""
    length = len(problem.minimal_solution)
    if not 1 <= t <= length:
        raise BadStep(f"step {t} outside 1..{length}")
    return tuple(solution_lines(problem)[: t - 1])


def build_prompt(
    problem: AnyProblem,
    shots: ShotSet,
    t: int | None = None,
) -> PromptBundle:
    context, question = render_problem(problem)
    prefix: tuple[str, ...] = ()
    if t is not None:
        if isinstance(problem, NaturalProblem):
            raise BadStep("natural problems have no oracle steps to force")
        prefix = forced_prefix(problem, t)
    return PromptBundle(
        header=HEADER,
        shots=shots,
        context=context,
        question=question,
        forced_prefix=prefix,
    )
