"""Procedural generation of arithmetic chain problems and distractors.

Every problem is built from a linear chain: one absolute premise followed
by relative premises, each hanging off the previous subject, with the
question aimed at the last subject. Distractors are extra premises that
never sit on the chain, so the answer and the unique shortest solution
are untouched by construction; a self-check re-derives both anyway.

Sub-seeds are derived per (master seed, index, stream), so two variants
generated from the same master seed share chains and distractor draws.
That pairing is what makes cross-variant comparisons (for example base
versus position insertion points) well defined.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import random

from .errors import InvariantViolation, PoolExhausted
from .model import (
    Absolute,
    Chain,
    DEFAULT_NAME_POOL,
    DEFAULT_OBJECT_POOL,
    Distractor,
    FEWER,
    MORE,
    PersonRef,
    Premise,
    Problem,
    RELATIONAL_SUFFIXES,
    Relative,
    analyzed_steps,
    derive_rng,
    derive_seed,
)
from . import solver

logger = logging.getLogger(__name__)

EXP1_VARIANTS = ("base", "overlap", "position", "negative")
PROBE_FLAVORS = ("overlap", "position")


@dataclass(frozen=True)
class GenSpec:
    """Knobs for one generation run."""

    variant: str = "base"
    chain_length: int = 4
    n_problems: int = 1
    seed: int = 0
    name_pool: tuple[str, ...] = DEFAULT_NAME_POOL
    object_pool: tuple[str, ...] = DEFAULT_OBJECT_POOL
    value_range: tuple[int, int] = (0, 100)
    heuristic: str = "overlap"  # which heuristic the probe distractors target
    allow_zero_delta: bool = False
    strict_template: bool = False  # reproduce the fixed filler layout verbatim

    def __post_init__(self) -> None:
        if self.chain_length < 2:
            raise ValueError("chains need at least two steps")
        if self.heuristic not in PROBE_FLAVORS:
            raise ValueError(f"heuristic must be one of {PROBE_FLAVORS}")
        if len(set(self.name_pool)) != len(self.name_pool):
            raise ValueError("name pool contains duplicates")


# ---------------------------------------------------------------------------
# draw helpers


def _draw_value(rng: random.Random, spec: GenSpec) -> int:
    lo, hi = spec.value_range
    return rng.randint(lo, hi)


def _draw_delta(rng: random.Random, spec: GenSpec) -> int:
    lo, hi = spec.value_range
    lo = max(lo, 0)
    delta = rng.randint(lo, hi)
    while delta == 0 and not spec.allow_zero_delta:
        delta = rng.randint(lo, hi)
    return delta


def _draw_distractor_delta(
    rng: random.Random, spec: GenSpec, existing: set[int]
) -> int:
    # one redraw on collision with a number already in the problem, then accept
    delta = _draw_delta(rng, spec)
    if delta in existing:
        delta = _draw_delta(rng, spec)
    return delta


class _SubjectPool:
    """Hands out unique rendered subjects.

    Bare names first; once the pool runs dry, name+suffix combinations are
    used, never built on the forbidden base (the question subject's name,
    which must stay exclusive to lexical-overlap distractors).
    """

    def __init__(
        self,
        rng: random.Random,
        spec: GenSpec,
        taken: set[str],
        forbidden_base: str | None = None,
    ):
        self._rng = rng
        self._taken = set(taken)
        self._forbidden = forbidden_base
        fresh = [n for n in spec.name_pool if n not in self._taken]
        self._rng.shuffle(fresh)
        self._fresh = fresh
        combos = [
            (name, suffix)
            for name in spec.name_pool
            for suffix in RELATIONAL_SUFFIXES
            if name != forbidden_base
        ]
        self._rng.shuffle(combos)
        self._combos = combos

    def fresh(self) -> PersonRef:
        while self._fresh:
            name = self._fresh.pop()
            if name != self._forbidden and name not in self._taken:
                self._taken.add(name)
                return PersonRef(name)
        while self._combos:
            name, suffix = self._combos.pop()
            ref = PersonRef(name, suffix)
            if ref.render() not in self._taken:
                self._taken.add(ref.render())
                return ref
        raise PoolExhausted("no unused subject names left")


def _finish(
    spec: GenSpec,
    variant: str,
    index: int,
    problem_seed: int,
    premises: list[Premise],
    question_subject: PersonRef,
    object_noun: str,
) -> Problem:
    """Assemble a Problem and attach freshly derived ground truth."""
    draft = Problem(
        problem_id=f"{variant}-{index:05d}",
        premises=tuple(premises),
        question_subject=question_subject,
        object_noun=object_noun,
        answer=0,
        minimal_solution=(),
        variant=variant,
        seed=problem_seed,
    )
    solution = solver.minimal_solution(draft)
    answer = solver.evaluate_answer(replace(draft, minimal_solution=solution))
    return replace(draft, answer=answer, minimal_solution=solution)


# ---------------------------------------------------------------------------
# chains


def generate_chain_problem(spec: GenSpec, index: int = 0) -> Problem:
    """A bare solution chain with shuffled surface order and ground truth."""
    problem_seed = derive_seed(spec.seed, index)
    rng = derive_rng(problem_seed, "chain")
    length = spec.chain_length
    if length > len(spec.name_pool):
        raise PoolExhausted(f"chain of {length} needs more than {len(spec.name_pool)} names")
    names = rng.sample(list(spec.name_pool), length)
    object_noun = rng.choice(list(spec.object_pool))
    premises: list[Premise] = [
        Premise(1, PersonRef(names[0]), Absolute(_draw_value(rng, spec)), Chain(1))
    ]
    for step in range(2, length + 1):
        premises.append(
            Premise(
                step,
                PersonRef(names[step - 1]),
                Relative(
                    PersonRef(names[step - 2]),
                    _draw_delta(rng, spec),
                    rng.choice((MORE, FEWER)),
                ),
                Chain(step),
            )
        )
    rng.shuffle(premises)
    return _finish(
        spec, spec.variant, index, problem_seed, premises,
        PersonRef(names[-1]), object_noun,
    )


def _problem_numbers(problem: Problem) -> set[int]:
    numbers: set[int] = set()
    for p in problem.premises:
        if isinstance(p.body, Absolute):
            numbers.add(p.body.value)
        else:
            numbers.add(p.body.delta)
    return numbers


# ---------------------------------------------------------------------------
# single-distractor variants


def inject_distractor(
    problem: Problem, kind: str, seed: int, spec: GenSpec | None = None
) -> Problem:
    """Add one distractor premise of the given kind to a chain problem.

    All kinds consume identical draws for the shared fields, so problems
    injected from the same seed differ only in the kind-specific touch:
    the subject suffix (overlap), the insertion point (position), or the
    negation (negative).
    """
    if kind not in EXP1_VARIANTS:
        raise ValueError(f"unknown distractor kind: {kind!r}")
    if spec is None:
        spec = _spec_for(problem)
    rng = derive_rng(seed, "distractor")
    chain = problem.chain_premises
    taken = {p.subject.render() for p in problem.premises}
    pool = _SubjectPool(rng, spec, taken, problem.question_subject.base_name)
    fresh_subject = pool.fresh()
    # referent: any chain subject except the question subject itself
    referent = rng.choice([p.subject for p in chain[:-1]])
    delta = _draw_distractor_delta(rng, spec, _problem_numbers(problem))
    direction = rng.choice((MORE, FEWER))
    base_index = rng.randint(1, len(problem.premises))  # never the very beginning

    subject = fresh_subject
    insert_at = base_index
    negated = False
    paired = _paired_step_for(problem, referent)
    if kind == "overlap":
        subject = PersonRef(
            problem.question_subject.base_name, rng.choice(RELATIONAL_SUFFIXES)
        )
        if subject.render() in taken:
            raise PoolExhausted(f"{subject.render()} already present")
    elif kind == "position":
        insert_at = rng.randint(0, base_index - 1)
    elif kind == "negative":
        negated = True

    distractor = Premise(
        id=max(p.id for p in problem.premises) + 1,
        subject=subject,
        body=Relative(referent, delta, direction),
        role=Distractor(kind, paired),
        negated=negated,
    )
    premises = list(problem.premises)
    premises.insert(insert_at, distractor)
    injected = replace(
        problem,
        premises=tuple(premises),
        variant=kind,
        problem_id=_swap_variant(problem.problem_id, problem.variant, kind),
    )
    _check_untouched(problem, injected)
    return injected


def _spec_for(problem: Problem) -> GenSpec:
    # generation knobs that matter after construction: pools and ranges
    return GenSpec(name_pool=DEFAULT_NAME_POOL, object_pool=(problem.object_noun,))


def _swap_variant(problem_id: str, old: str, new: str) -> str:
    if problem_id.startswith(old + "-"):
        return new + problem_id[len(old):]
    return problem_id


def _paired_step_for(problem: Problem, referent: PersonRef) -> int | None:
    """The chain step this distractor competes with: the one that shares
    its referent."""
    for premise in problem.chain_premises:
        if isinstance(premise.body, Relative) and premise.body.referent == referent:
            return premise.role.step
    return None


def _check_untouched(before: Problem, after: Problem) -> None:
    if solver.minimal_solution(after) != tuple(before.minimal_solution):
        raise InvariantViolation("distractor altered the minimal solution")
    if solver.evaluate_answer(after) != before.answer:
        raise InvariantViolation("distractor altered the answer")


def generate_exp1_problem(spec: GenSpec, index: int = 0) -> Problem:
    """Chain plus a single distractor of the spec's variant."""
    chain_spec = spec if spec.variant in EXP1_VARIANTS else replace(spec, variant="base")
    problem = generate_chain_problem(chain_spec, index)
    return inject_distractor(
        problem, spec.variant, derive_seed(spec.seed, index), spec=spec
    )


# ---------------------------------------------------------------------------
# step-probe problems


def _heuristic_distractors(
    spec: GenSpec,
    rng: random.Random,
    chain: list[Premise],
    question_subject: PersonRef,
    pool: _SubjectPool,
    numbers: set[int],
    next_id: int,
) -> list[Premise]:
    """One distractor per analyzed step, matching h*_t's referent."""
    steps = analyzed_steps(len(chain))
    if spec.heuristic == "overlap" and len(steps) > len(RELATIONAL_SUFFIXES):
        raise PoolExhausted("not enough relational suffixes for this chain length")
    out: list[Premise] = []
    for i, t in enumerate(steps):
        referent = chain[t - 2].subject  # the person h*_t builds on
        if spec.heuristic == "overlap":
            subject = PersonRef(question_subject.base_name, RELATIONAL_SUFFIXES[i])
        else:
            subject = pool.fresh()
        delta = _draw_distractor_delta(rng, spec, numbers)
        numbers.add(delta)
        out.append(
            Premise(
                id=next_id + i,
                subject=subject,
                body=Relative(referent, delta, rng.choice((MORE, FEWER))),
                role=Distractor(spec.heuristic, paired_step=t),
            )
        )
    return out


def _filler(
    rng: random.Random,
    spec: GenSpec,
    pool: _SubjectPool,
    referent: PersonRef,
    numbers: set[int],
    premise_id: int,
    kind: str = "uniformizer",
    paired_step: int | None = None,
) -> Premise:
    delta = _draw_distractor_delta(rng, spec, numbers)
    numbers.add(delta)
    return Premise(
        id=premise_id,
        subject=pool.fresh(),
        body=Relative(referent, delta, rng.choice((MORE, FEWER))),
        role=Distractor(kind, paired_step=paired_step),
    )


def _enforce_before_paired(
    rng: random.Random, premises: list[Premise], heuristics: list[Premise]
) -> None:
    """Move each position-heuristic distractor ahead of its paired chain premise."""
    for distractor in heuristics:
        step = distractor.role.paired_step
        chain_idx = next(
            i
            for i, p in enumerate(premises)
            if p.is_chain and p.role.step == step
        )
        d_idx = premises.index(distractor)
        if d_idx > chain_idx:
            premises.pop(d_idx)
            premises.insert(rng.randint(0, chain_idx), distractor)


def generate_probe_problem(spec: GenSpec, index: int = 0) -> Problem:
    """A chain with heuristic distractors on every analyzed step plus
    fillers that keep name reference counts uniform.

    Every chain subject before the last is referenced by exactly two
    premises (its successor and one distractor), and so is every
    heuristic distractor subject, so reference frequency gives no cue.
    strict_template reproduces the fixed filler layout instead, which
    leaves the last heuristic distractor unreferenced.
    """
    if spec.chain_length != 5:
        logger.warning("probe problems are tuned for 5-step chains, got %d", spec.chain_length)
    problem_seed = derive_seed(spec.seed, index)
    chain_problem = generate_chain_problem(replace(spec, variant="probe"), index)
    rng = derive_rng(problem_seed, "distractor")
    chain = list(chain_problem.chain_premises)
    numbers = _problem_numbers(chain_problem)
    taken = {p.subject.render() for p in chain}
    qsubj = chain_problem.question_subject
    if spec.heuristic == "overlap":
        taken.update(
            PersonRef(qsubj.base_name, s).render() for s in RELATIONAL_SUFFIXES
        )
    pool = _SubjectPool(rng, spec, taken, qsubj.base_name)

    heuristics = _heuristic_distractors(
        spec, rng, chain, qsubj, pool, numbers, next_id=len(chain) + 1
    )
    next_id = len(chain) + len(heuristics) + 1
    fillers: list[Premise] = []

    def add_filler(referent: PersonRef) -> None:
        nonlocal next_id
        fillers.append(_filler(rng, spec, pool, referent, numbers, next_id))
        next_id += 1

    if spec.strict_template:
        if spec.chain_length != 5:
            raise ValueError("the fixed filler layout is defined for 5-step chains")
        add_filler(chain[3].subject)          # second-to-last chain subject
        add_filler(heuristics[0].subject)
        add_filler(heuristics[0].subject)
        add_filler(heuristics[1].subject)
        add_filler(heuristics[1].subject)
        add_filler(fillers[1].subject)
        add_filler(fillers[1].subject)
        add_filler(fillers[2].subject)
        add_filler(fillers[2].subject)
    else:
        add_filler(chain[-2].subject)         # the one chain subject no heuristic covers
        for distractor in heuristics:
            add_filler(distractor.subject)
            add_filler(distractor.subject)

    premises = chain + heuristics + fillers
    rng.shuffle(premises)
    if spec.heuristic == "position":
        _enforce_before_paired(rng, premises, heuristics)
    problem = _finish(
        spec, "probe", index, problem_seed, premises, qsubj, chain_problem.object_noun
    )
    if problem.answer != chain_problem.answer:
        raise InvariantViolation("probe distractors altered the answer")
    return problem


def generate_multi_distractor(spec: GenSpec, index: int = 0) -> Problem:
    """Probe problem with eight non-heuristic distractors per heuristic one.

    The eight hang off each heuristic distractor in a cascade (two off the
    distractor, then two off each of those, ...), so they stay off-chain
    and keep reference counts of the competing premises uniform.
    """
    problem_seed = derive_seed(spec.seed, index)
    chain_problem = generate_chain_problem(replace(spec, variant="probe_multi"), index)
    rng = derive_rng(problem_seed, "distractor")
    chain = list(chain_problem.chain_premises)
    numbers = _problem_numbers(chain_problem)
    taken = {p.subject.render() for p in chain}
    qsubj = chain_problem.question_subject
    if spec.heuristic == "overlap":
        taken.update(
            PersonRef(qsubj.base_name, s).render() for s in RELATIONAL_SUFFIXES
        )
    pool = _SubjectPool(rng, spec, taken, qsubj.base_name)
    heuristics = _heuristic_distractors(
        spec, rng, chain, qsubj, pool, numbers, next_id=len(chain) + 1
    )
    next_id = len(chain) + len(heuristics) + 1
    extras: list[Premise] = []
    for distractor in heuristics:
        group: list[Premise] = []
        # referent pattern: two premises each off the heuristic distractor
        # and off the first three group members
        for anchor in (distractor, None, None, None):
            source = anchor if anchor is not None else group[
                (len(group) // 2) - 1
            ]
            for _ in range(2):
                premise = _filler(
                    rng,
                    spec,
                    pool,
                    source.subject,
                    numbers,
                    next_id,
                    kind="base",
                    paired_step=distractor.role.paired_step,
                )
                group.append(premise)
                next_id += 1
        extras.extend(group)
    premises = chain + heuristics + extras
    rng.shuffle(premises)
    if spec.heuristic == "position":
        _enforce_before_paired(rng, premises, heuristics)
    problem = _finish(
        spec, "probe_multi", index, problem_seed, premises, qsubj,
        chain_problem.object_noun,
    )
    if problem.answer != chain_problem.answer:
        raise InvariantViolation("distractors altered the answer")
    return problem


# ---------------------------------------------------------------------------
# number perturbation (shared with the natural-data adapter)

PERTURB_MULTIPLIERS = (0.5, 0.8, 1.2, 1.5, 2.0)


def perturb_number(n: int, rng: random.Random, max_redraws: int = 5) -> int:
    """floor(n * m) for a random multiplier, redrawn while the result
    collapses back onto n; after max_redraws the result is bumped by one."""
    for _ in range(max_redraws):
        result = int(n * rng.choice(PERTURB_MULTIPLIERS) // 1)
        if result != n:
            return result
    return result + 1


# ---------------------------------------------------------------------------
# datasets


def generate_problem(spec: GenSpec, index: int = 0) -> Problem:
    if spec.variant in EXP1_VARIANTS:
        return generate_exp1_problem(spec, index)
    if spec.variant == "probe":
        return generate_probe_problem(spec, index)
    if spec.variant == "probe_multi":
        return generate_multi_distractor(spec, index)
    raise ValueError(f"unknown variant: {spec.variant!r}")


def generate_dataset(spec: GenSpec) -> list[Problem]:
    return [generate_problem(spec, i) for i in range(spec.n_problems)]


def dataset_manifest(spec: GenSpec, problems: list[Problem]) -> dict:
    from . import __version__
    from .model import dataset_sha256

    counts: dict[str, int] = {}
    for p in problems:
        counts[p.variant] = counts.get(p.variant, 0) + 1
    return {
        "tool": "stepprobe",
        "version": __version__,
        "seed": spec.seed,
        "chain_length": spec.chain_length,
        "variant_counts": counts,
        "n": len(problems),
        "sha256": dataset_sha256(problems),
    }
