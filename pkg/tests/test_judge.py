import pytest

from stepprobe import judge
from stepprobe.errors import BadStep
from stepprobe.generator import GenSpec, generate_multi_distractor
from stepprobe.judge import StepChoice
from stepprobe.model import (
    NaturalDistractor,
    NaturalProblem,
    PersonRef,
    ReasoningTrace,
    StatedFact,
)
from stepprobe.prompts import render_problem, solution_lines


def _natural(numbers=(17,)):
    return NaturalProblem(
        problem_id="gsm8k-overlap-00000",
        context="Ann picks 3 plums.",
        question="How many plums does Ann pick?",
        pn="Ann",
        distractor=NaturalDistractor(
            kind="overlap",
            text="Ann's friend picks 17 plums.",
            subject="Ann's friend",
            numbers=numbers,
            surface_index=1,
        ),
        answer=3,
        variant="gsm8k_overlap",
        seed=0,
    )


# -- line parsing -----------------------------------------------------------


def test_parses_worked_arithmetic_line():
    trace = judge.parse_trace(
        "Peggy has 5 apples, and Walter has 2 more apples than Peggy. "
        "So, Walter has 5+2=7 apples."
    )
    assert len(trace.steps) == 1
    fact = trace.steps[0]
    assert fact.subject == PersonRef("Walter")
    assert fact.resolved_value == 7
    assert fact.arithmetic_shown == "5+2=7"
    assert trace.unparsed_lines == ()


def test_parses_plain_statements():
    trace = judge.parse_trace(
        "Peggy has 5 apples.\n"
        "Judy's mother has 3 fewer apples than Peggy.\n"
        "Rhonda doesn't have 4 apples.\n"
        "Walter doesn't have 2 more apples than Peggy.\n"
    )
    assert [f.subject.render() for f in trace.steps] == [
        "Peggy", "Judy's mother", "Rhonda", "Walter",
    ]
    assert trace.steps[0].resolved_value == 5
    assert trace.steps[1].resolved_value is None
    assert trace.steps[2].negated and trace.steps[3].negated


def test_stated_result_is_taken_at_face_value():
    # the judge records what the model claims, not what the sum should be
    trace = judge.parse_trace("So, Walter has 5+2=8 apples.")
    assert trace.steps[0].resolved_value == 8


def test_final_answer_line():
    trace = judge.parse_trace("The final answer is 11.")
    assert trace.final_answer == 11
    assert trace.steps == ()
    assert trace.unparsed_lines == ()


def test_last_final_answer_wins():
    trace = judge.parse_trace(
        "The final answer is 3.\nwait\nThe final answer is 11."
    )
    assert trace.final_answer == 11
    assert trace.unparsed_lines == ("wait",)


def test_final_answer_accepts_decimals_and_shared_lines():
    trace = judge.parse_trace("So, Ann has 1+2=3 pears. The final answer is 3.5")
    assert trace.final_answer == 3.5
    assert len(trace.steps) == 1


def test_digit_subjects_are_rejected():
    trace = judge.parse_trace("R2 has 5 apples.")
    assert trace.steps == ()
    assert trace.unparsed_lines == ("R2 has 5 apples.",)


def test_blank_and_noise_lines():
    trace = judge.parse_trace("\n\nhmm, thinking...\n\n")
    assert trace.steps == ()
    assert trace.unparsed_lines == ("hmm, thinking...",)


def test_rendered_lines_round_trip(worked_example):
    lines = solution_lines(worked_example)
    trace = judge.parse_trace("\n".join(lines))
    assert len(trace.steps) == len(lines)
    assert trace.unparsed_lines == ()
    assert [f.subject for f in trace.steps] == [
        worked_example.premise_by_id(i).subject
        for i in worked_example.minimal_solution
    ]


def test_parse_context_round_trip(worked_example):
    context, _ = render_problem(worked_example)
    parsed = judge.parse_context(context)
    assert len(parsed) == 4
    assert parsed[0].value == 5 and not parsed[0].negated
    assert parsed[1].delta == 2 and parsed[1].direction == "more"
    with pytest.raises(ValueError):
        judge.parse_context("Something else entirely happened.")


def test_parse_context_folds_less_into_fewer():
    parsed = judge.parse_context("Ann has 3 less pears than Bob.")
    assert parsed[0].direction == "fewer"


# -- attribution ------------------------------------------------------------


def test_attribute_step_is_token_exact(worked_example):
    mother = StatedFact(subject=PersonRef("Judy", "'s mother"), raw_text="x")
    judy = StatedFact(subject=PersonRef("Judy"), raw_text="x")
    stranger = StatedFact(subject=PersonRef("Zelda"), raw_text="x")
    assert judge.attribute_step(mother, worked_example) == 3
    assert judge.attribute_step(judy, worked_example) == 4
    assert judge.attribute_step(stranger, worked_example) is None


def test_attribution_ignores_case_and_apostrophe_variant(worked_example):
    trace = judge.parse_trace("judy’s mother has 3 fewer apples than peggy.")
    assert judge.attribute_step(trace.steps[0], worked_example) == 3


# -- step choice ------------------------------------------------------------


def test_judge_step_choice_minimal(worked_example):
    text = (
        "Peggy has 5 apples, and Walter has 2 more apples than Peggy. "
        "So, Walter has 5+2=7 apples."
    )
    assert judge.judge_step_choice(text, worked_example, 2) == StepChoice.CHOSE_MINIMAL


def test_judge_step_choice_paired(worked_example):
    text = "Judy's mother has 3 fewer apples than Peggy."
    assert (
        judge.judge_step_choice(text, worked_example, 2)
        == StepChoice.CHOSE_PAIRED_DISTRACTOR
    )
    # the same premise at a later step is just some other distractor
    assert (
        judge.judge_step_choice(text, worked_example, 3)
        == StepChoice.CHOSE_OTHER_DISTRACTOR
    )


def test_judge_step_choice_other_premise(worked_example):
    text = "Judy has 4 more apples than Walter."
    assert (
        judge.judge_step_choice(text, worked_example, 2)
        == StepChoice.CHOSE_OTHER_PREMISE
    )


def test_judge_step_choice_skips_restated_prefix(worked_example):
    text = (
        "Peggy has 5 apples.\n"
        "Judy's mother has 3 fewer apples than Peggy.\n"
    )
    assert (
        judge.judge_step_choice(text, worked_example, 2)
        == StepChoice.CHOSE_PAIRED_DISTRACTOR
    )


def test_judge_step_choice_unparseable(worked_example):
    assert judge.judge_step_choice("", worked_example, 2) == StepChoice.UNPARSEABLE
    assert (
        judge.judge_step_choice("gibberish here", worked_example, 2)
        == StepChoice.UNPARSEABLE
    )
    # unknown subject on the first new step
    assert (
        judge.judge_step_choice("Zelda has 9 apples.", worked_example, 2)
        == StepChoice.UNPARSEABLE
    )


def test_judge_step_choice_rejects_bad_step(worked_example):
    with pytest.raises(BadStep):
        judge.judge_step_choice("x", worked_example, 0)
    with pytest.raises(BadStep):
        judge.judge_step_choice("x", worked_example, 4)


def test_chosen_premise(worked_example):
    text = (
        "Peggy has 5 apples.\n"
        "Judy's mother has 3 fewer apples than Peggy.\n"
    )
    assert judge.chosen_premise(text, worked_example, 2) == 3
    assert judge.chosen_premise("Peggy has 5 apples.", worked_example, 2) is None


def test_multi_distractor_bucketing():
    problem = generate_multi_distractor(
        GenSpec(variant="probe_multi", chain_length=5, seed=2)
    )
    t = 2
    paired = problem.paired_distractors(t)
    heuristic = next(p for p in paired if p.role.kind == "overlap")
    extra = next(p for p in paired if p.role.kind == "base")
    hline = f"{heuristic.subject.render()} has {heuristic.body.delta} {heuristic.body.direction} {problem.object_noun} than {heuristic.body.referent.render()}."
    eline = f"{extra.subject.render()} has {extra.body.delta} {extra.body.direction} {problem.object_noun} than {extra.body.referent.render()}."
    assert judge.judge_step_choice(hline, problem, t) == StepChoice.CHOSE_PAIRED_DISTRACTOR
    assert judge.judge_step_choice(eline, problem, t) == StepChoice.CHOSE_OTHER_DISTRACTOR


# -- distractor detection ---------------------------------------------------


def test_detect_artificial_distractor(worked_example):
    used = judge.parse_trace("Judy's mother has 3 fewer apples than Peggy.")
    clean = judge.parse_trace("Peggy has 5 apples.\nSo, Judy has 7+4=11 apples.")
    assert judge.detect_distractor_use(used, worked_example) == {3: True}
    assert judge.detect_distractor_use(clean, worked_example) == {3: False}


def test_detection_needs_whole_token(worked_example):
    # mentioning Judy is not mentioning Judy's mother
    trace = judge.parse_trace("So, Judy has 7+4=11 apples.")
    assert judge.detect_distractor_use(trace, worked_example) == {3: False}


def test_detect_natural_distractor_numbers():
    problem = _natural(numbers=(17,))
    hit = judge.parse_trace("She picks 17 plums in the morning.")
    miss = judge.parse_trace("She picks 3 plums.\nThe final answer is 3.")
    partial = judge.parse_trace("Route 170 is long.")
    assert judge.detect_distractor_use(hit, problem) == {0: True}
    assert judge.detect_distractor_use(miss, problem) == {0: False}
    # 170 contains the digits 17 but is a different number token
    assert judge.detect_distractor_use(partial, problem) == {0: False}


def test_detect_natural_integral_float_counts():
    problem = _natural(numbers=(17,))
    trace = judge.parse_trace("That works out to 17.0 plums total.")
    assert judge.detect_distractor_use(trace, problem) == {0: True}


# -- accuracy ---------------------------------------------------------------


def test_score_accuracy(worked_example):
    right = ReasoningTrace((), 11)
    wrong = ReasoningTrace((), 10)
    silent = ReasoningTrace((), None)
    assert judge.score_accuracy(right, worked_example) is True
    assert judge.score_accuracy(wrong, worked_example) is False
    assert judge.score_accuracy(silent, worked_example) is False
    no_gold = _natural()
    no_gold = NaturalProblem(
        problem_id=no_gold.problem_id,
        context=no_gold.context,
        question=no_gold.question,
        pn=no_gold.pn,
        distractor=no_gold.distractor,
        answer=None,
        variant=no_gold.variant,
        seed=0,
    )
    assert judge.score_accuracy(right, no_gold) is None
