"""Parsing and scoring of model reasoning transcripts.

Everything here is pure text-in, judgment-out: the same transcript and
problem always yield the same judgment, so cached runs can be re-judged
at any time and reports rebuilt byte for byte.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum

from .errors import AmbiguousSubject, BadStep
from .model import (
    HEURISTIC_KINDS,
    NaturalProblem,
    PersonRef,
    Problem,
    AnyProblem,
    ReasoningTrace,
    StatedFact,
    parse_person,
)


class StepChoice(str, Enum):
    CHOSE_MINIMAL = "chose_minimal"
    CHOSE_PAIRED_DISTRACTOR = "chose_paired_distractor"
    CHOSE_OTHER_DISTRACTOR = "chose_other_distractor"
    CHOSE_OTHER_PREMISE = "chose_other_premise"
    UNPARSEABLE = "unparseable"


def normalize(text: str) -> str:
    """Case, whitespace, and apostrophe-variant insensitive form."""
    return " ".join(text.replace("’", "'").split()).casefold()


# Line shapes, most specific first. Subjects stop at the clause verb, so
# "[^.]+?" is safe: person phrases never contain a period.
_SO_RE = re.compile(
    r"So,\s*(?P<subj>[^.]+?) (?:has|have) (?P<a>-?\d+)(?P<op>[+-])(?P<b>\d+)="
    r"(?P<c>-?\d+) (?P<obj>[A-Za-z]+)"
)
_ARITH_RE = re.compile(
    r"^\s*(?P<subj>[^.]+?) (?:has|have) (?P<a>-?\d+)(?P<op>[+-])(?P<b>\d+)="
    r"(?P<c>-?\d+) (?P<obj>[A-Za-z]+)\.?\s*$"
)
_REL_RE = re.compile(
    r"^\s*(?P<subj>[^.]+?) (?P<verb>has|have|doesn't have) (?P<d>-?\d+) "
    r"(?P<dir>more|fewer|less) (?P<obj>[A-Za-z]+) than (?P<ref>[^.]+?)\.?\s*$"
)
_NEG_ABS_RE = re.compile(
    r"^\s*(?P<subj>[^.]+?) doesn't have (?P<v>-?\d+) (?P<obj>[A-Za-z]+)\.?\s*$"
)
_ABS_RE = re.compile(
    r"^\s*(?P<subj>[^.]+?) (?:has|have) (?P<v>-?\d+) (?P<obj>[A-Za-z]+)\.?\s*$"
)
_FINAL_RE = re.compile(
    r"The final answer is\s*(?P<ans>-?\d+(?:\.\d+)?)", re.IGNORECASE
)


def _as_number(token: str) -> int | float:
    value = float(token)
    return int(value) if value.is_integer() else value


def _fact_from_line(line: str) -> StatedFact | None:
    match = _SO_RE.search(line) or _ARITH_RE.match(line)
    if match:
        arithmetic = f"{match['a']}{match['op']}{match['b']}={match['c']}"
        return _safe_fact(
            match["subj"], line, resolved=int(match["c"]), arithmetic=arithmetic
        )
    match = _REL_RE.match(line)
    if match:
        return _safe_fact(
            match["subj"], line, negated=match["verb"] == "doesn't have"
        )
    match = _NEG_ABS_RE.match(line)
    if match:
        return _safe_fact(match["subj"], line, negated=True)
    match = _ABS_RE.match(line)
    if match:
        return _safe_fact(match["subj"], line, resolved=int(match["v"]))
    return None


def _safe_fact(
    subject: str,
    line: str,
    resolved: int | None = None,
    arithmetic: str | None = None,
    negated: bool = False,
) -> StatedFact | None:
    try:
        ref = parse_person(subject)
        if any(ch.isdigit() for ch in ref.base_name):
            return None
        return StatedFact(
            subject=ref,
            raw_text=line.strip(),
            resolved_value=resolved,
            arithmetic_shown=arithmetic,
            negated=negated,
        )
    except ValueError:
        return None


def parse_trace(text: str) -> ReasoningTrace:
    """Parse a model completion line by line.

    Each line yields at most one stated fact (the conclusion of its "So,"
    clause when present). The final answer may share a line with a fact;
    the last final-answer mention wins. Lines matching nothing are kept
    verbatim as unparsed.
    """
    steps: list[StatedFact] = []
    unparsed: list[str] = []
    final: int | float | None = None
    for raw_line in text.splitlines():
        line = raw_line.strip()
        if not line:
            continue
        final_match = None
        for final_match in _FINAL_RE.finditer(line):
            pass
        if final_match:
            final = _as_number(final_match["ans"])
        fact = _fact_from_line(line)
        if fact is not None:
            steps.append(fact)
        elif final_match is None:
            unparsed.append(line)
    return ReasoningTrace(tuple(steps), final, tuple(unparsed))


# ---------------------------------------------------------------------------
# context round-trip


@dataclass(frozen=True)
class ParsedPremise:
    """Structure recovered from one context sentence."""

    subject: PersonRef
    negated: bool
    value: int | None = None
    delta: int | None = None
    direction: str | None = None
    referent: PersonRef | None = None


def parse_context(context: str) -> list[ParsedPremise]:
    """Recover premise structure from rendered context sentences."""
    premises = []
    for sentence in re.split(r"(?<=\.)\s+", context.strip()):
        if not sentence:
            continue
        match = _REL_RE.match(sentence)
        if match:
            direction = "fewer" if match["dir"] == "less" else match["dir"]
            premises.append(
                ParsedPremise(
                    subject=parse_person(match["subj"]),
                    negated=match["verb"] == "doesn't have",
                    delta=abs(int(match["d"])),
                    direction=direction,
                    referent=parse_person(match["ref"]),
                )
            )
            continue
        match = _NEG_ABS_RE.match(sentence) or _ABS_RE.match(sentence)
        if match:
            premises.append(
                ParsedPremise(
                    subject=parse_person(match["subj"]),
                    negated="doesn't" in sentence,
                    value=int(match["v"]),
                )
            )
            continue
        raise ValueError(f"unparseable context sentence: {sentence!r}")
    return premises


# ---------------------------------------------------------------------------
# attribution and detection


def attribute_step(fact: StatedFact, problem: Problem) -> int | None:
    """Premise whose subject the fact states, or None for unknown names."""
    target = normalize(fact.subject.render())
    matches = [
        p.id
        for p in problem.premises
        if normalize(p.subject.render()) == target
    ]
    if len(matches) > 1:
        raise AmbiguousSubject(f"{fact.subject.render()!r} matches premises {matches}")
    return matches[0] if matches else None


def _mentions_subject(haystack: str, subject: str) -> bool:
    # token-bounded: "Judy" must not match inside "Judy's mother"
    pattern = r"(?<![\w'])" + re.escape(subject) + r"(?!\w)(?!'s)"
    return re.search(pattern, haystack) is not None


def _integer_tokens(text: str) -> set[int]:
    tokens = set()
    for match in re.finditer(r"\d+(?:\.\d+)?", text):
        value = float(match.group())
        if value.is_integer():
            tokens.add(int(value))
    return tokens


def detect_distractor_use(trace: ReasoningTrace, problem: AnyProblem) -> dict[int, bool]:
    """Which distractors the trace picked up, keyed by premise id.

    Artificial problems match the distractor's rendered subject against
    the stated facts; natural problems match the distractor's numbers as
    whole integer tokens against all reasoning lines, since free-form
    arithmetic rarely parses into facts. Both checks only ever flip to
    True as lines are added.
    """
    if isinstance(problem, NaturalProblem):
        stated: set[int] = set()
        for fact in trace.steps:
            stated |= _integer_tokens(fact.raw_text)
        for line in trace.unparsed_lines:
            stated |= _integer_tokens(line)
        hit = any(n in stated for n in problem.distractor.numbers)
        return {0: hit}
    result: dict[int, bool] = {}
    fact_texts = [normalize(f.raw_text) for f in trace.steps]
    for premise in problem.distractor_premises:
        needle = normalize(premise.subject.render())
        result[premise.id] = any(
            _mentions_subject(text, needle) for text in fact_texts
        )
    return result


def judge_step_choice(text: str, problem: Problem, t: int) -> StepChoice:
    """Classify the first new step a completion takes after being forced
    through solution steps 1..t-1.

    Restatements of already-forced steps are skipped rather than counted
    as choices. A first new step that parses into no known premise counts
    as unparseable, as does a completion with no usable step at all.
    """
    if not 1 <= t <= len(problem.minimal_solution):
        raise BadStep(f"step {t} outside 1..{len(problem.minimal_solution)}")
    prefix_ids = set(problem.minimal_solution[: t - 1])
    target = problem.minimal_solution[t - 1]
    trace = parse_trace(text)
    for fact in trace.steps:
        premise_id = attribute_step(fact, problem)
        if premise_id is not None and premise_id in prefix_ids:
            continue
        if premise_id is None:
            return StepChoice.UNPARSEABLE
        if premise_id == target:
            return StepChoice.CHOSE_MINIMAL
        premise = problem.premise_by_id(premise_id)
        if premise.is_distractor:
            if (
                premise.role.paired_step == t
                and premise.role.kind in HEURISTIC_KINDS
            ):
                return StepChoice.CHOSE_PAIRED_DISTRACTOR
            return StepChoice.CHOSE_OTHER_DISTRACTOR
        return StepChoice.CHOSE_OTHER_PREMISE
    return StepChoice.UNPARSEABLE


def chosen_premise(text: str, problem: Problem, t: int) -> int | None:
    """Premise id of the first new step, when one exists."""
    prefix_ids = set(problem.minimal_solution[: t - 1])
    trace = parse_trace(text)
    for fact in trace.steps:
        premise_id = attribute_step(fact, problem)
        if premise_id is not None and premise_id in prefix_ids:
            continue
        return premise_id
    return None


def score_accuracy(trace: ReasoningTrace, problem: AnyProblem) -> bool | None:
    """Final-answer correctness; None when the problem has no usable gold."""
    gold = problem.answer
    if gold is None:
        return None
    if trace.final_answer is None:
        return False
    return trace.final_answer == gold
