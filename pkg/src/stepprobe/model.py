"""Core data model for multi-step arithmetic reasoning problems.

A problem is a bag of premises about named persons plus one question.
Premises either state a count outright ("Peggy has 5 apples.") or state a
signed offset against another person ("Walter has 2 more apples than
Peggy."). Reasoning is modelled as resolving persons one premise at a
time; a premise resolves its subject only when its referent is already
resolved, and negated premises never resolve anything.
"""

from __future__ import annotations

import json
import hashlib
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Union

from .errors import BadStep

# Closed set of relational phrases that may be appended to a base name to
# form a new, distinct person.
RELATIONAL_SUFFIXES = (
    "'s mother",
    "'s father",
    "'s son",
    "'s neighborhood",
    "'s friend",
)

DEFAULT_NAME_POOL = (
    "Alice", "Bob", "Carol", "Dave", "Eve", "Frank", "Grace", "Heidi",
    "Ivan", "Judy", "Kevin", "Larry", "Mallory", "Nancy", "Olivia", "Peggy",
    "Quentin", "Rob", "Sybil", "Trent", "Ursula", "Victor", "Walter",
    "Xavier", "Yvonne", "Zoe",
)

DEFAULT_OBJECT_POOL = ("apples", "bananas", "grapes", "pencils", "books")

MORE = "more"
FEWER = "fewer"

DISTRACTOR_KINDS = ("base", "overlap", "position", "negative", "uniformizer")

ARTIFICIAL_VARIANTS = ("base", "overlap", "position", "negative", "probe", "probe_multi")

# Heuristic distractor kinds, as opposed to filler kinds that only keep
# name reference counts uniform.
HEURISTIC_KINDS = ("overlap", "position", "negative")


def derive_rng(*parts: object) -> random.Random:
    """Return a Random seeded stably from the given parts.

    Sub-streams derived this way are platform independent, so a master
    seed plus a problem index always reproduces the same problem.
    """
    digest = hashlib.sha256(":".join(str(p) for p in parts).encode("utf-8")).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def derive_seed(*parts: object) -> int:
    digest = hashlib.sha256(":".join(str(p) for p in parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


# ---------------------------------------------------------------------------
# persons


@dataclass(frozen=True, order=True)
class PersonRef:
    """A person mentioned in a problem: a base name plus optional suffix.

    "Judy" and "Judy's mother" are different persons that share a name
    token, which is exactly what the lexical-overlap distractors exploit.
    """

    base_name: str
    suffix: str | None = None

    def __post_init__(self) -> None:
        if not self.base_name or not self.base_name.strip():
            raise ValueError("empty person name")
        if self.suffix is not None and self.suffix not in RELATIONAL_SUFFIXES:
            raise ValueError(f"unknown relational suffix: {self.suffix!r}")

    def render(self) -> str:
        return self.base_name + (self.suffix or "")

    def __str__(self) -> str:  # convenience for f-strings
        return self.render()


def parse_person(rendered: str) -> PersonRef:
    """Split a rendered person back into base name and suffix."""
    text = rendered.strip()
    for suffix in RELATIONAL_SUFFIXES:
        if text.endswith(suffix):
            return PersonRef(text[: -len(suffix)], suffix)
    return PersonRef(text)


# ---------------------------------------------------------------------------
# premises


@dataclass(frozen=True)
class Absolute:
    """States the subject's count outright."""

    value: int


@dataclass(frozen=True)
class Relative:
    """States the subject's count as an offset from a referent."""

    referent: PersonRef
    delta: int
    direction: str  # "more" | "fewer"

    def __post_init__(self) -> None:
        if self.delta < 0:
            raise ValueError("delta must be non-negative; use direction for sign")
        if self.direction not in (MORE, FEWER):
            raise ValueError(f"direction must be '{MORE}' or '{FEWER}'")

    @property
    def signed_delta(self) -> int:
        return self.delta if self.direction == MORE else -self.delta


Body = Union[Absolute, Relative]


@dataclass(frozen=True)
class Chain:
    """Role of a premise that belongs to the intended solution chain."""

    step: int


@dataclass(frozen=True)
class Distractor:
    """Role of a premise inserted to tempt a shallow heuristic.

    paired_step links a distractor to the solution step it competes with;
    fillers and single-distractor problems leave it unset.
    """

    kind: str
    paired_step: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in DISTRACTOR_KINDS:
            raise ValueError(f"unknown distractor kind: {self.kind!r}")


Role = Union[Chain, Distractor]


@dataclass(frozen=True)
class Premise:
    id: int
    subject: PersonRef
    body: Body
    role: Role
    negated: bool = False

    def __post_init__(self) -> None:
        if any(ch.isdigit() for ch in self.subject.base_name):
            raise ValueError("premise subject may not contain digits")
        if isinstance(self.body, Relative):
            if self.body.referent == self.subject:
                raise ValueError("premise may not reference its own subject")
            if any(ch.isdigit() for ch in self.body.referent.base_name):
                raise ValueError("premise referent may not contain digits")
        if self.negated:
            if not (isinstance(self.role, Distractor) and self.role.kind == "negative"):
                raise ValueError("only negative-kind distractors may be negated")

    @property
    def is_chain(self) -> bool:
        return isinstance(self.role, Chain)

    @property
    def is_distractor(self) -> bool:
        return isinstance(self.role, Distractor)


def render_premise(premise: Premise, object_noun: str) -> str:
    """Render a premise as one declarative sentence."""
    subject = premise.subject.render()
    verb = "doesn't have" if premise.negated else "has"
    if isinstance(premise.body, Absolute):
        return f"{subject} {verb} {premise.body.value} {object_noun}."
    body = premise.body
    return (
        f"{subject} {verb} {body.delta} {body.direction} {object_noun} "
        f"than {body.referent.render()}."
    )


def render_question(subject: PersonRef, object_noun: str) -> str:
    return f"How many {object_noun} does {subject.render()} have?"


def apply_premise(known: frozenset[PersonRef], premise: Premise) -> frozenset[PersonRef]:
    """Resolve the premise's subject if possible; otherwise a no-op.

    Negated premises carry no usable count. Relative premises need their
    referent resolved first. The result always contains the input, so
    repeated application can only grow the set.
    """
    if premise.negated:
        return known
    if isinstance(premise.body, Relative) and premise.body.referent not in known:
        return known
    if premise.subject in known:
        return known
    return known | {premise.subject}


History = tuple[int, ...]


# ---------------------------------------------------------------------------
# problems


@dataclass(frozen=True)
class Problem:
    """An arithmetic word problem with exact ground truth attached.

    premises are stored in surface (reading) order; ids are stable and do
    not change when the surface order is shuffled.
    """

    problem_id: str
    premises: tuple[Premise, ...]
    question_subject: PersonRef
    object_noun: str
    answer: int
    minimal_solution: tuple[int, ...]
    variant: str
    seed: int

    def __post_init__(self) -> None:
        ids = [p.id for p in self.premises]
        if len(set(ids)) != len(ids):
            raise ValueError("premise ids must be unique")
        rendered = [p.subject.render() for p in self.premises]
        if len(set(rendered)) != len(rendered):
            raise ValueError("premise subjects must render uniquely")
        chain = sorted((p for p in self.premises if p.is_chain), key=lambda p: p.role.step)
        if not chain:
            raise ValueError("problem needs at least one chain premise")
        steps = [p.role.step for p in chain]
        if steps != list(range(1, len(chain) + 1)):
            raise ValueError(f"chain steps must run 1..L, got {steps}")
        if not isinstance(chain[0].body, Absolute) or chain[0].negated:
            raise ValueError("chain step 1 must be a plain absolute premise")
        for p in chain[1:]:
            if not isinstance(p.body, Relative):
                raise ValueError("chain steps past 1 must be relative premises")
        if self.question_subject != chain[-1].subject:
            raise ValueError("question subject must be the last chain subject")
        known = {p.id for p in self.premises}
        if not set(self.minimal_solution) <= known:
            raise ValueError("minimal solution references unknown premise ids")

    # -- lookups ------------------------------------------------------------

    def premise_by_id(self, premise_id: int) -> Premise:
        for p in self.premises:
            if p.id == premise_id:
                return p
        raise KeyError(premise_id)

    def surface_index(self, premise_id: int) -> int:
        for i, p in enumerate(self.premises):
            if p.id == premise_id:
                return i
        raise KeyError(premise_id)

    @property
    def chain_premises(self) -> tuple[Premise, ...]:
        return tuple(
            sorted((p for p in self.premises if p.is_chain), key=lambda p: p.role.step)
        )

    @property
    def distractor_premises(self) -> tuple[Premise, ...]:
        return tuple(p for p in self.premises if p.is_distractor)

    @property
    def chain_length(self) -> int:
        return len(self.chain_premises)

    def chain_step(self, step: int) -> Premise:
        chain = self.chain_premises
        if not 1 <= step <= len(chain):
            raise BadStep(f"step {step} outside 1..{len(chain)}")
        return chain[step - 1]

    def paired_distractors(self, step: int) -> tuple[Premise, ...]:
        return tuple(
            p
            for p in self.distractor_premises
            if p.role.paired_step == step
        )

    def state_after(self, history: Iterable[int]) -> frozenset[PersonRef]:
        state: frozenset[PersonRef] = frozenset()
        for premise_id in history:
            state = apply_premise(state, self.premise_by_id(premise_id))
        return state


def analyzed_steps(chain_length: int) -> tuple[int, ...]:
    """Solution steps probed by the step-wise protocol.

    The first step is skipped because any reader starts there, and the
    last is skipped because it shares the question's subject outright.
    """
    return tuple(range(2, chain_length))


def distance_before_step(chain_length: int, step: int) -> int:
    """Remaining solution length right before the given step is taken."""
    return chain_length - step + 1


# ---------------------------------------------------------------------------
# natural (ingested) problems


@dataclass(frozen=True)
class NaturalDistractor:
    kind: str
    text: str
    subject: str
    numbers: tuple[int, ...]
    surface_index: int
    negated: bool = False


@dataclass(frozen=True)
class NaturalProblem:
    """A real word problem with one templated distractor spliced in."""

    problem_id: str
    context: str
    question: str
    pn: str
    distractor: NaturalDistractor
    answer: int | float | None
    variant: str
    seed: int
    source_index: int = -1


AnyProblem = Union[Problem, NaturalProblem]


# ---------------------------------------------------------------------------
# stated facts and traces


@dataclass(frozen=True)
class StatedFact:
    """One fact asserted by one reasoning line."""

    subject: PersonRef
    raw_text: str
    resolved_value: int | None = None
    arithmetic_shown: str | None = None
    negated: bool = False

    def __post_init__(self) -> None:
        if self.arithmetic_shown is not None:
            result = self.arithmetic_shown.rsplit("=", 1)[-1]
            if self.resolved_value is None or str(self.resolved_value) != result:
                raise ValueError("arithmetic result must match resolved value")


@dataclass(frozen=True)
class ReasoningTrace:
    steps: tuple[StatedFact, ...]
    final_answer: int | float | None
    unparsed_lines: tuple[str, ...] = ()


# ---------------------------------------------------------------------------
# serialization

_DIRECTIONS = (MORE, FEWER)


def premise_to_dict(premise: Premise, surface_index: int) -> dict:
    if isinstance(premise.role, Chain):
        role: dict = {"type": "chain", "step": premise.role.step}
        kind = None
    else:
        role = {"type": "distractor", "paired_step": premise.role.paired_step}
        kind = premise.role.kind
    entry: dict = {
        "id": premise.id,
        "subject": premise.subject.base_name,
        "suffix": premise.subject.suffix,
        "kind": kind,
    }
    if isinstance(premise.body, Absolute):
        entry["value"] = premise.body.value
    else:
        entry["delta"] = premise.body.delta
        entry["direction"] = premise.body.direction
        entry["referent"] = premise.body.referent.render()
    entry["negated"] = premise.negated
    entry["role"] = role
    entry["surface_index"] = surface_index
    return entry


def premise_from_dict(entry: dict) -> Premise:
    subject = PersonRef(entry["subject"], entry.get("suffix"))
    if "value" in entry:
        body: Body = Absolute(entry["value"])
    else:
        body = Relative(
            parse_person(entry["referent"]), entry["delta"], entry["direction"]
        )
    role_entry = entry["role"]
    if role_entry["type"] == "chain":
        role: Role = Chain(role_entry["step"])
    else:
        role = Distractor(entry["kind"], role_entry.get("paired_step"))
    return Premise(
        id=entry["id"],
        subject=subject,
        body=body,
        role=role,
        negated=entry.get("negated", False),
    )


def problem_to_dict(problem: AnyProblem, distances: list[int] | None = None) -> dict:
    if isinstance(problem, NaturalProblem):
        return _natural_to_dict(problem)
    return {
        "id": problem.problem_id,
        "seed": problem.seed,
        "variant": problem.variant,
        "object": problem.object_noun,
        "premises": [
            premise_to_dict(p, i) for i, p in enumerate(problem.premises)
        ],
        "question_subject": problem.question_subject.render(),
        "answer": problem.answer,
        "minimal_solution": list(problem.minimal_solution),
        "distances": list(distances) if distances is not None else _default_distances(problem),
    }


def _default_distances(problem: Problem) -> list[int]:
    length = len(problem.minimal_solution)
    return list(range(length - 1, -1, -1))


def _natural_to_dict(problem: NaturalProblem) -> dict:
    d = problem.distractor
    subject = parse_person(d.subject)
    return {
        "id": problem.problem_id,
        "seed": problem.seed,
        "variant": problem.variant,
        "object": None,
        "premises": [
            {
                "id": 0,
                "subject": subject.base_name,
                "suffix": subject.suffix,
                "kind": d.kind,
                "negated": d.negated,
                "role": {"type": "distractor", "paired_step": None},
                "surface_index": d.surface_index,
            }
        ],
        "question_subject": problem.pn,
        "answer": problem.answer,
        "minimal_solution": [],
        "distances": [],
        "context": problem.context,
        "question": problem.question,
        "pn": problem.pn,
        "distractor_text": d.text,
        "distractor_numbers": list(d.numbers),
        "source_index": problem.source_index,
    }


def problem_from_dict(entry: dict) -> AnyProblem:
    if str(entry.get("variant", "")).startswith("gsm8k_"):
        return _natural_from_dict(entry)
    return Problem(
        problem_id=entry["id"],
        premises=tuple(
            premise_from_dict(e)
            for e in sorted(entry["premises"], key=lambda e: e["surface_index"])
        ),
        question_subject=parse_person(entry["question_subject"]),
        object_noun=entry["object"],
        answer=entry["answer"],
        minimal_solution=tuple(entry["minimal_solution"]),
        variant=entry["variant"],
        seed=entry["seed"],
    )


def _natural_from_dict(entry: dict) -> NaturalProblem:
    p = entry["premises"][0]
    subject = PersonRef(p["subject"], p.get("suffix"))
    return NaturalProblem(
        problem_id=entry["id"],
        context=entry["context"],
        question=entry["question"],
        pn=entry["pn"],
        distractor=NaturalDistractor(
            kind=p["kind"],
            text=entry["distractor_text"],
            subject=subject.render(),
            numbers=tuple(entry["distractor_numbers"]),
            surface_index=p["surface_index"],
            negated=p.get("negated", False),
        ),
        answer=entry["answer"],
        variant=entry["variant"],
        seed=entry["seed"],
        source_index=entry.get("source_index", -1),
    )


def dumps_canonical(entry: dict) -> str:
    """Serialize one record the same way every time, for stable file bytes."""
    return json.dumps(entry, ensure_ascii=False, separators=(", ", ": "))


def write_problems_jsonl(path: str | Path, problems: Iterable[AnyProblem]) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as handle:
        for problem in problems:
            handle.write(dumps_canonical(problem_to_dict(problem)) + "\n")
            count += 1
    return count


def read_problems_jsonl(path: str | Path) -> list[AnyProblem]:
    problems = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                problems.append(problem_from_dict(json.loads(line)))
    return problems


def dataset_sha256(problems: Iterable[AnyProblem]) -> str:
    """Content hash of a dataset, independent of where it is stored."""
    digest = hashlib.sha256()
    for problem in problems:
        digest.update(dumps_canonical(problem_to_dict(problem)).encode("utf-8"))
        digest.update(b"\n")
    return digest.hexdigest()
