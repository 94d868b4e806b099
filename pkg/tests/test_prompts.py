import pytest

from stepprobe import judge
from stepprobe.errors import BadStep
from stepprobe.generator import GenSpec, generate_probe_problem
from stepprobe.model import NaturalDistractor, NaturalProblem, PersonRef
from stepprobe.prompts import (
    DEFAULT_SHOT_SETS,
    HEADER,
    SHOT_SET_NAMES,
    build_prompt,
    forced_prefix,
    load_shot_set,
    parse_shot_blocks,
    render_problem,
    render_reasoning_step,
    solution_lines,
)


@pytest.mark.parametrize("name", SHOT_SET_NAMES)
def test_builtin_shot_sets_load(name):
    shot_set = load_shot_set(name)
    assert shot_set.name == name
    assert len(shot_set.shots) == 4
    assert len(shot_set.sha256) == 64
    for shot in shot_set.shots:
        assert shot.context and shot.question
        assert shot.answer_lines[-1].startswith("The final answer is")


def test_artificial_shots_parse_cleanly():
    # every reasoning line in the hand-built sets must be machine readable
    for name in ("artificial", "overlap_inducing", "position_inducing", "negative_inducing"):
        for shot in load_shot_set(name).shots:
            trace = judge.parse_trace("\n".join(shot.answer_lines))
            assert trace.final_answer is not None
            assert trace.steps


def test_custom_shot_file(tmp_path):
    text = (
        "Context: Ann has 2 pears.\n"
        "Question: How many pears does Ann have?\n"
        "Answer:\n"
        "Ann has 2 pears.\n"
        "The final answer is 2.\n"
    )
    path = tmp_path / "tiny.txt"
    path.write_text(text, encoding="utf-8")
    shot_set = load_shot_set(str(path))
    assert shot_set.name == "tiny"
    assert len(shot_set.shots) == 1
    assert shot_set.shots[0].answer_lines == (
        "Ann has 2 pears.",
        "The final answer is 2.",
    )


def test_malformed_shot_block_rejected():
    with pytest.raises(ValueError):
        parse_shot_blocks("Context: x\nAnswer:\nline")


def test_prompt_layout(worked_example):
    shots = load_shot_set("artificial")
    text = build_prompt(worked_example, shots).as_text()
    assert text.startswith(HEADER + "\n\n")
    assert text.count("Context: ") == len(shots.shots) + 1
    assert text.endswith("Answer:\n")
    context, question = render_problem(worked_example)
    assert f"Context: {context}\nQuestion: {question}\nAnswer:\n" in text
    assert question == "How many apples does Judy have?"
    assert context.startswith("Peggy has 5 apples. ")


def test_prompt_bytes_are_stable(worked_example):
    shots = load_shot_set("artificial")
    a = build_prompt(worked_example, shots, t=2)
    b = build_prompt(worked_example, shots, t=2)
    assert a.as_text() == b.as_text()
    assert a.sha256() == b.sha256()
    assert a.as_messages() == [{"role": "user", "content": a.as_text()}]


def test_forced_prefix_counts(worked_example):
    assert forced_prefix(worked_example, 1) == ()
    assert len(forced_prefix(worked_example, 2)) == 1
    assert len(forced_prefix(worked_example, 3)) == 2
    with pytest.raises(BadStep):
        forced_prefix(worked_example, 0)
    with pytest.raises(BadStep):
        forced_prefix(worked_example, 4)


def test_solution_lines_carry_arithmetic(worked_example):
    lines = solution_lines(worked_example)
    assert lines[0] == "Peggy has 5 apples."
    assert lines[1] == (
        "Peggy has 5 apples, and Walter has 2 more apples than Peggy. "
        "So, Walter has 5+2=7 apples."
    )
    assert lines[2].endswith("So, Judy has 7+4=11 apples.")


def test_reasoning_step_with_unresolved_referent(worked_example):
    premise = worked_example.premise_by_id(2)
    line = render_reasoning_step(premise, {}, "apples")
    assert line == "Walter has 2 more apples than Peggy."
    resolved = render_reasoning_step(premise, {PersonRef("Peggy"): 5}, "apples")
    assert "5+2=7" in resolved


def test_probe_prompt_round_trips_through_judge():
    problem = generate_probe_problem(GenSpec(variant="probe", chain_length=5, seed=44))
    context, _ = render_problem(problem)
    parsed = judge.parse_context(context)
    assert len(parsed) == len(problem.premises)


def test_natural_problem_passthrough():
    natural = NaturalProblem(
        problem_id="gsm8k-overlap-00000",
        context="Ann picks 3 plums. Bea picks 4 plums.",
        question="How many plums does Ann pick?",
        pn="Ann",
        distractor=NaturalDistractor(
            kind="overlap", text="x", subject="Ann's friend", numbers=(9,), surface_index=1
        ),
        answer=3,
        variant="gsm8k_overlap",
        seed=0,
    )
    context, question = render_problem(natural)
    assert context == natural.context
    assert question == natural.question
    with pytest.raises(BadStep):
        build_prompt(natural, load_shot_set("gsm8k"), t=2)


def test_default_shot_sets_cover_both_sources():
    assert DEFAULT_SHOT_SETS[False] == "artificial"
    assert DEFAULT_SHOT_SETS[True] == "gsm8k"
