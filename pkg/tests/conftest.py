import pytest

from stepprobe.model import (
    Absolute,
    Chain,
    Distractor,
    PersonRef,
    Premise,
    Problem,
    Relative,
)

_results: dict[int, str] = {}


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "criterion(n): links a test to one acceptance criterion"
    )


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when != "call":
        return
    n = marker.args[0]
    verdict = "PASS" if report.passed else "FAIL"
    # any failing test drags its criterion down for good
    if _results.get(n) == "FAIL":
        verdict = "FAIL"
    _results[n] = verdict


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _results:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for n in sorted(_results):
        terminalreporter.write_line(f"[acceptance] criterion {n}: {_results[n]}")


@pytest.fixture
def worked_example() -> Problem:
    """The four-premise apples problem used throughout the docs.

    Peggy anchors the chain, Walter builds on Peggy, Judy builds on
    Walter, and "Judy's mother" is a distractor competing with Walter's
    step by sharing both the referent and the question name.
    """
    peggy = PersonRef("Peggy")
    walter = PersonRef("Walter")
    judy = PersonRef("Judy")
    judys_mother = PersonRef("Judy", "'s mother")
    return Problem(
        problem_id="worked-example",
        premises=(
            Premise(id=1, subject=peggy, body=Absolute(5), role=Chain(step=1)),
            Premise(
                id=2,
                subject=walter,
                body=Relative(peggy, 2, "more"),
                role=Chain(step=2),
            ),
            Premise(
                id=3,
                subject=judys_mother,
                body=Relative(peggy, 3, "fewer"),
                role=Distractor(kind="overlap", paired_step=2),
            ),
            Premise(
                id=4,
                subject=judy,
                body=Relative(walter, 4, "more"),
                role=Chain(step=3),
            ),
        ),
        question_subject=judy,
        object_noun="apples",
        answer=11,
        minimal_solution=(1, 2, 4),
        variant="worked",
        seed=0,
    )
