"""Scripted solvers with known step-selection behavior.

Each policy plays a problem premise by premise and emits the same worked
lines a language model is prompted to produce, so agent output flows
through the prompt/judge pipeline unchanged. Because every policy's
selection distribution is known in closed form, agents double as
end-to-end calibration for the whole measurement stack.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Mapping

from .errors import BadStep, Stuck, StepBudgetExceeded
from .model import (
    Absolute,
    AnyProblem,
    NaturalProblem,
    PersonRef,
    Premise,
    Problem,
    ReasoningTrace,
    apply_premise,
    derive_rng,
)
from .prompts import render_final_line, render_premise, render_reasoning_step
from . import judge, solver

POLICY_KINDS = (
    "rational",
    "random_pair",
    "overlap",
    "position",
    "negation_avoid",
    "mixed",
)


@dataclass(frozen=True)
class Policy:
    """A named selection rule plus its parameters.

    pi maps distance-to-answer to the probability that the mixed policy
    takes the paired distractor instead of the next solution step.
    restricted limits choices to premises that change the resolved state;
    with it off, no-op picks are emitted as verbatim restatements.
    """

    kind: str
    pi: Mapping[int, float] = field(default_factory=dict)
    restricted: bool = True

    def __post_init__(self) -> None:
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}")
        for d, prob in self.pi.items():
            if not 0.0 <= prob <= 1.0:
                raise ValueError(f"pi[{d}]={prob} outside [0, 1]")


@dataclass(frozen=True)
class StepView:
    """Everything a policy may look at when choosing the next premise."""

    problem: Problem
    state: frozenset[PersonRef]
    candidates: tuple[int, ...]
    minimal_target: int | None
    paired: int | None
    d_before: int


@dataclass(frozen=True)
class ChoiceRecord:
    step: int
    premise_id: int
    d_before: int
    d_after: int


def _changes_state(state: frozenset[PersonRef], premise: Premise) -> bool:
    return apply_premise(state, premise) != state


def _build_view(
    problem: Problem,
    state: frozenset[PersonRef],
    history: tuple[int, ...],
    restricted: bool,
) -> StepView:
    if restricted:
        candidates = tuple(
            p.id for p in problem.premises if _changes_state(state, p)
        )
    else:
        candidates = tuple(p.id for p in problem.premises)
    minimal_target = None
    paired = None
    for index, premise_id in enumerate(problem.minimal_solution):
        if problem.premise_by_id(premise_id).subject not in state:
            minimal_target = premise_id
            for p in problem.paired_distractors(index + 1):
                if p.id in candidates:
                    paired = p.id
                    break
            break
    return StepView(
        problem=problem,
        state=state,
        candidates=candidates,
        minimal_target=minimal_target,
        paired=paired,
        d_before=solver.distance(problem, history),
    )


def choose(policy: Policy, view: StepView, rng: random.Random) -> int:
    """Pick the next premise id under the policy's rule."""
    if not view.candidates:
        raise Stuck("no premise can be taken")
    if policy.kind == "rational":
        if view.minimal_target is None or view.minimal_target not in view.candidates:
            raise Stuck("solution step not available")
        return view.minimal_target
    if policy.kind == "random_pair":
        pair = [
            pid
            for pid in (view.minimal_target, view.paired)
            if pid is not None and pid in view.candidates
        ]
        if not pair:
            raise Stuck("neither solution step nor paired distractor available")
        return rng.choice(pair)
    if policy.kind == "overlap":
        return _overlap_choice(view, rng)
    if policy.kind == "position":
        return min(view.candidates, key=view.problem.surface_index)
    if policy.kind == "negation_avoid":
        plain = [
            pid
            for pid in view.candidates
            if not view.problem.premise_by_id(pid).negated
        ]
        return rng.choice(plain or list(view.candidates))
    if policy.kind == "mixed":
        take_paired = (
            view.paired is not None
            and rng.random() < policy.pi.get(view.d_before, 0.0)
        )
        if take_paired:
            return view.paired
        if view.minimal_target is None or view.minimal_target not in view.candidates:
            raise Stuck("solution step not available")
        return view.minimal_target
    raise ValueError(f"unknown policy kind {policy.kind!r}")


def _overlap_choice(view: StepView, rng: random.Random) -> int:
    """Prefer subjects that extend the question person's name.

    Tier 1: proper superstrings of the question subject ("Judy's mother"
    for question subject "Judy"). Tier 2: any subject containing the
    question name. Tier 3: everything else on offer.
    """
    question = view.problem.question_subject.render()
    supers = []
    containing = []
    for pid in view.candidates:
        subject = view.problem.premise_by_id(pid).subject.render()
        if question in subject:
            containing.append(pid)
            if subject != question:
                supers.append(pid)
    for tier in (supers, containing, list(view.candidates)):
        if tier:
            return rng.choice(tier)
    raise Stuck("no premise can be taken")


def _emit_line(
    problem: Problem,
    premise: Premise,
    values: dict[PersonRef, int],
) -> str:
    if premise.negated or (
        not isinstance(premise.body, Absolute)
        and premise.body.referent not in values
    ):
        return render_premise(premise, problem.object_noun)
    line = render_reasoning_step(premise, values, problem.object_noun)
    if isinstance(premise.body, Absolute):
        values[premise.subject] = premise.body.value
    else:
        a = values[premise.body.referent]
        values[premise.subject] = a + premise.body.signed_delta
    return line


def _play(
    problem: Problem,
    policy: Policy,
    rng: random.Random,
    start_step: int,
    policy_first_only: bool,
    max_steps: int | None,
) -> tuple[list[str], list[ChoiceRecord]]:
    if not 1 <= start_step <= len(problem.minimal_solution):
        raise BadStep(
            f"step {start_step} outside 1..{len(problem.minimal_solution)}"
        )
    if max_steps is None:
        max_steps = (
            len(problem.premises)
            if policy.restricted
            else 4 * len(problem.premises)
        )
    history = list(problem.minimal_solution[: start_step - 1])
    state = problem.state_after(tuple(history))
    values = dict(solver.resolved_values(problem, tuple(history)))
    rational = Policy(kind="rational", restricted=policy.restricted)
    active = policy
    lines: list[str] = []
    records: list[ChoiceRecord] = []
    while problem.question_subject not in state:
        if len(records) >= max_steps:
            raise StepBudgetExceeded(
                f"no answer after {max_steps} steps on {problem.problem_id}"
            )
        view = _build_view(problem, state, tuple(history), policy.restricted)
        premise_id = choose(active, view, rng)
        premise = problem.premise_by_id(premise_id)
        lines.append(_emit_line(problem, premise, values))
        history.append(premise_id)
        state = apply_premise(state, premise)
        records.append(
            ChoiceRecord(
                step=start_step + len(records),
                premise_id=premise_id,
                d_before=view.d_before,
                d_after=solver.distance(problem, tuple(history)),
            )
        )
        if policy_first_only:
            active = rational
    lines.append(render_final_line(values[problem.question_subject]))
    return lines, records


def run_injected(
    problem: Problem,
    policy: Policy,
    rng: random.Random,
    start_step: int = 1,
    max_steps: int | None = None,
) -> tuple[list[str], list[ChoiceRecord]]:
    """Play from forced solution steps 1..start_step-1, policy choosing
    only the first emitted step.

    Later steps fall back to the rational rule so the run always reaches
    the answer. Returns the emitted lines (without the forced prefix,
    which lives in the prompt) and the full choice log.
    """
    return _play(
        problem,
        policy,
        rng,
        start_step=start_step,
        policy_first_only=True,
        max_steps=max_steps,
    )


def run_to_completion(
    problem: Problem,
    policy: Policy,
    rng: random.Random,
    max_steps: int | None = None,
) -> tuple[ReasoningTrace, list[ChoiceRecord]]:
    """Play a whole problem under one policy at every step."""
    lines, records = _play(
        problem,
        policy,
        rng,
        start_step=1,
        policy_first_only=False,
        max_steps=max_steps,
    )
    return judge.parse_trace("\n".join(lines)), records


def completion_text(
    problem: AnyProblem,
    policy: Policy,
    policy_seed: int,
    step: int | None,
) -> str:
    """The text an agent returns for one prompt, fully seed-determined."""
    if isinstance(problem, NaturalProblem):
        raise Stuck("agents only play structured problems")
    rng = derive_rng(str(policy_seed), "agent", problem.problem_id, str(step))
    lines, _ = _play(
        problem,
        policy,
        rng,
        start_step=step if step is not None else 1,
        policy_first_only=step is not None,
        max_steps=None,
    )
    return "\n".join(lines) + "\n"


def parse_policy(spec: str) -> Policy:
    """Build a policy from a selector like "mixed:4=0.65,3=0.45,2=0.25"."""
    kind, _, params = spec.partition(":")
    pi: dict[int, float] = {}
    restricted = True
    if params:
        for item in params.split(","):
            key, _, value = item.partition("=")
            key = key.strip()
            if key == "unrestricted":
                restricted = value.strip().lower() not in ("1", "true", "yes")
                continue
            pi[int(key)] = float(value)
    return Policy(kind=kind, pi=pi, restricted=restricted)
