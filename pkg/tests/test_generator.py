import random

import pytest
from hypothesis import given, strategies as st

from stepprobe import solver
from stepprobe.generator import (
    EXP1_VARIANTS,
    GenSpec,
    generate_chain_problem,
    generate_dataset,
    generate_exp1_problem,
    generate_multi_distractor,
    generate_probe_problem,
    generate_problem,
    inject_distractor,
    perturb_number,
)
from stepprobe.model import (
    Relative,
    analyzed_steps,
    derive_rng,
    derive_seed,
    render_premise,
)


def _reference_counts(problem):
    counts = {p.subject: 0 for p in problem.premises}
    for p in problem.premises:
        if isinstance(p.body, Relative):
            counts[p.body.referent] = counts.get(p.body.referent, 0) + 1
    return counts


def test_chain_problem_shape():
    problem = generate_chain_problem(GenSpec(variant="base", chain_length=4, seed=2))
    assert problem.chain_length == 4
    assert problem.distractor_premises == ()
    assert solver.validate_problem(problem) == []
    # surface order is shuffled but ground truth ignores it
    assert problem.minimal_solution == tuple(p.id for p in problem.chain_premises)


def test_generation_is_deterministic():
    spec = GenSpec(variant="probe", chain_length=5, n_problems=3, seed=17)
    assert generate_dataset(spec) == generate_dataset(spec)


def test_exp1_variants_share_everything_but_the_twist():
    seed = 41
    by_kind = {
        kind: generate_exp1_problem(GenSpec(variant=kind, seed=seed))
        for kind in EXP1_VARIANTS
    }
    chains = {
        kind: tuple((p.id, p.subject, p.body) for p in prob.chain_premises)
        for kind, prob in by_kind.items()
    }
    assert len(set(chains.values())) == 1
    distractors = {k: prob.distractor_premises[0] for k, prob in by_kind.items()}
    referents = {d.body.referent for d in distractors.values()}
    deltas = {d.body.delta for d in distractors.values()}
    assert len(referents) == 1 and len(deltas) == 1
    for kind, d in distractors.items():
        assert d.role.kind == kind


def test_overlap_distractor_reuses_question_name():
    problem = generate_exp1_problem(GenSpec(variant="overlap", seed=8))
    d = problem.distractor_premises[0]
    assert d.subject.base_name == problem.question_subject.base_name
    assert d.subject.suffix is not None
    # nobody else shares the question subject's name
    others = [p.subject for p in problem.premises if p.id != d.id]
    assert all(
        s.base_name != problem.question_subject.base_name
        for s in others
        if s != problem.question_subject
    )


def test_base_distractor_avoids_question_name():
    for seed in range(20):
        problem = generate_exp1_problem(GenSpec(variant="base", seed=seed))
        d = problem.distractor_premises[0]
        assert d.subject.base_name != problem.question_subject.base_name


def test_position_moves_distractor_earlier():
    for seed in range(30):
        base = generate_exp1_problem(GenSpec(variant="base", seed=seed))
        pos = generate_exp1_problem(GenSpec(variant="position", seed=seed))
        base_at = base.surface_index(base.distractor_premises[0].id)
        pos_at = pos.surface_index(pos.distractor_premises[0].id)
        assert pos_at < base_at
        assert base_at >= 1


def test_negative_distractor_is_negated():
    problem = generate_exp1_problem(GenSpec(variant="negative", seed=5))
    d = problem.distractor_premises[0]
    assert d.negated
    assert "doesn't have" in render_premise(d, problem.object_noun)
    # a negated premise never resolves anyone, so it can't shorten anything
    assert solver.distance(problem, (d.id,)) == problem.chain_length


def test_paired_step_matches_referent():
    for seed in range(10):
        problem = generate_exp1_problem(GenSpec(variant="overlap", seed=seed))
        d = problem.distractor_premises[0]
        succ = next(
            p for p in problem.chain_premises
            if isinstance(p.body, Relative) and p.body.referent == d.body.referent
        )
        assert d.role.paired_step == succ.role.step


def test_inject_rejects_unknown_kind(worked_example):
    with pytest.raises(ValueError):
        inject_distractor(worked_example, "mirror", seed=0)


def test_probe_structure():
    spec = GenSpec(variant="probe", chain_length=5, seed=12)
    problem = generate_probe_problem(spec)
    assert len(problem.premises) == 5 + 3 + 7
    assert solver.validate_problem(problem) == []
    steps = analyzed_steps(problem.chain_length)
    assert steps == (2, 3, 4)
    for t in steps:
        paired = problem.paired_distractors(t)
        assert len(paired) == 1
        assert paired[0].role.kind == "overlap"
        assert paired[0].subject.base_name == problem.question_subject.base_name
    counts = _reference_counts(problem)
    for p in problem.chain_premises[:-1]:
        assert counts[p.subject] == 2
    for t in steps:
        assert counts[problem.paired_distractors(t)[0].subject] == 2
    assert counts[problem.question_subject] == 0


def test_probe_position_flavor_sits_before_its_step():
    spec = GenSpec(variant="probe", chain_length=5, seed=3, heuristic="position")
    problem = generate_probe_problem(spec)
    for t in analyzed_steps(problem.chain_length):
        d = problem.paired_distractors(t)[0]
        assert d.role.kind == "position"
        assert d.subject.base_name != problem.question_subject.base_name
        assert problem.surface_index(d.id) < problem.surface_index(
            problem.chain_step(t).id
        )


def test_strict_template_layout():
    spec = GenSpec(variant="probe", chain_length=5, seed=6, strict_template=True)
    problem = generate_probe_problem(spec)
    assert len(problem.premises) == 5 + 3 + 9
    assert solver.validate_problem(problem) == []
    counts = _reference_counts(problem)
    # the fixed layout chains fillers off fillers and leaves the last
    # heuristic distractor with no references at all
    last_heuristic = problem.paired_distractors(4)[0]
    assert counts[last_heuristic.subject] == 0
    for t in (2, 3):
        assert counts[problem.paired_distractors(t)[0].subject] == 2


def test_multi_distractor_structure():
    spec = GenSpec(variant="probe_multi", chain_length=5, seed=9)
    problem = generate_multi_distractor(spec)
    assert len(problem.premises) == 5 + 3 * 9
    assert solver.validate_problem(problem) == []
    for t in analyzed_steps(problem.chain_length):
        paired = problem.paired_distractors(t)
        kinds = sorted(p.role.kind for p in paired)
        assert kinds == ["base"] * 8 + ["overlap"]
        counts = _reference_counts(problem)
        heuristic = next(p for p in paired if p.role.kind == "overlap")
        assert counts[heuristic.subject] == 2


def test_numbers_are_distinct_enough():
    # the single redraw makes duplicate distractor deltas rare, not impossible;
    # check a couple dozen seeds stay collision free
    for seed in range(25):
        problem = generate_probe_problem(GenSpec(variant="probe", chain_length=5, seed=seed))
        deltas = [
            p.body.delta for p in problem.premises if isinstance(p.body, Relative)
        ]
        values = [p.body.value for p in problem.premises if not isinstance(p.body, Relative)]
        assert len(set(deltas + values)) >= len(deltas)


def test_no_zero_deltas_by_default():
    for problem in generate_dataset(GenSpec(variant="probe", chain_length=5, n_problems=5, seed=1)):
        for p in problem.premises:
            if isinstance(p.body, Relative):
                assert p.body.delta > 0


def test_spec_guards():
    with pytest.raises(ValueError):
        GenSpec(chain_length=1)
    with pytest.raises(ValueError):
        GenSpec(heuristic="negation")
    with pytest.raises(ValueError):
        GenSpec(name_pool=("Amy", "Amy"))
    with pytest.raises(ValueError):
        generate_problem(GenSpec(variant="???"), 0)


@given(st.integers(min_value=0, max_value=10**6), st.integers(min_value=0, max_value=2**32 - 1))
def test_perturb_number_never_returns_input(n, seed):
    rng = random.Random(seed)
    assert perturb_number(n, rng) != n


def test_perturb_number_deterministic():
    a = perturb_number(40, derive_rng(derive_seed(1, 2), "x"))
    b = perturb_number(40, derive_rng(derive_seed(1, 2), "x"))
    assert a == b
