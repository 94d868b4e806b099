"""Ground-truth solver for premise-resolution problems.

Thinking of each state as the set of already-resolved persons gives a
finite transition graph: applying a premise either resolves one more
person or does nothing. The solver answers three questions about that
graph: how far a state is from answering the question, which premise
sequence is the unique shortest solution, and what the final count is.

Because every person is the subject of exactly one premise, the shortest
route to the question subject is the unique chain of premises linking it
back to an absolute statement. distance() walks that chain directly, so
it stays cheap even when the full state graph would be huge; the explicit
graph and a sequence-space enumerator are kept for cross-checking.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from .errors import AmbiguousMinimal, LimitExceeded, QuestionUnreachable
from .model import (
    Absolute,
    History,
    PersonRef,
    Premise,
    Problem,
    apply_premise,
)

State = frozenset[PersonRef]


def _resolver_map(problem: Problem) -> dict[PersonRef, Premise]:
    """Map each person to the only premise that can resolve them."""
    resolvers: dict[PersonRef, Premise] = {}
    for premise in problem.premises:
        if not premise.negated:
            resolvers[premise.subject] = premise
    return resolvers


def _chain_to(problem: Problem, target: PersonRef) -> list[Premise]:
    """Premises that must be applied, in order, to resolve target from scratch."""
    resolvers = _resolver_map(problem)
    chain: list[Premise] = []
    seen: set[PersonRef] = set()
    person = target
    while True:
        if person in seen:
            raise QuestionUnreachable(f"cyclic references around {person.render()}")
        seen.add(person)
        premise = resolvers.get(person)
        if premise is None:
            raise QuestionUnreachable(f"no premise resolves {person.render()}")
        chain.append(premise)
        if isinstance(premise.body, Absolute):
            chain.reverse()
            return chain
        person = premise.body.referent


def distance(problem: Problem, history: History) -> int:
    """Length of the shortest completion after folding history into a state."""
    state = problem.state_after(history)
    return _distance_from_state(problem, state)


def _distance_from_state(problem: Problem, state: State) -> int:
    resolvers = _resolver_map(problem)
    steps = 0
    seen: set[PersonRef] = set()
    person = problem.question_subject
    while person not in state:
        if person in seen:
            raise QuestionUnreachable(f"cyclic references around {person.render()}")
        seen.add(person)
        premise = resolvers.get(person)
        if premise is None:
            raise QuestionUnreachable(f"no premise resolves {person.render()}")
        steps += 1
        if isinstance(premise.body, Absolute):
            return steps
        person = premise.body.referent
    return steps


def minimal_solution(problem: Problem) -> tuple[int, ...]:
    """The unique shortest solution as a premise-id sequence.

    Every step along a shortest path has to cut the distance by exactly
    one; if two different premises could do that at the same point the
    problem is ambiguous and gets rejected.
    """
    chain = _chain_to(problem, problem.question_subject)
    state: State = frozenset()
    remaining = len(chain)
    for expected in chain:
        decreasing = []
        for premise in problem.premises:
            nxt = apply_premise(state, premise)
            if nxt != state and _distance_from_state(problem, nxt) == remaining - 1:
                decreasing.append(premise.id)
        if decreasing != [expected.id]:
            raise AmbiguousMinimal(
                f"{problem.problem_id or 'problem'}: premises {decreasing} all "
                f"reach distance {remaining - 1}"
            )
        state = apply_premise(state, expected)
        remaining -= 1
    return tuple(p.id for p in chain)


def annotate_distances(problem: Problem) -> list[int]:
    """Distance after each prefix of the minimal solution: L-1 down to 0."""
    solution = minimal_solution(problem)
    return [
        distance(problem, solution[: i + 1]) for i in range(len(solution))
    ]


def resolved_values(problem: Problem, history: History | None = None) -> dict[PersonRef, int]:
    """Exact counts for every person resolved by the given history.

    Defaults to the minimal solution, which resolves the whole chain.
    """
    if history is None:
        history = minimal_solution(problem)
    values: dict[PersonRef, int] = {}
    for premise_id in history:
        premise = problem.premise_by_id(premise_id)
        if premise.negated or premise.subject in values:
            continue
        if isinstance(premise.body, Absolute):
            values[premise.subject] = premise.body.value
        elif premise.body.referent in values:
            values[premise.subject] = (
                values[premise.body.referent] + premise.body.signed_delta
            )
    return values


def evaluate_answer(problem: Problem) -> int:
    """Final count for the question subject, by folding the minimal solution."""
    values = resolved_values(problem)
    if problem.question_subject not in values:
        raise QuestionUnreachable(problem.question_subject.render())
    return values[problem.question_subject]


# ---------------------------------------------------------------------------
# explicit state graph


@dataclass
class StateGraph:
    """Materialized reachable-state graph; practical for small problems."""

    problem: Problem
    states: list[State]
    index: dict[State, int]
    edges: dict[int, dict[int, int]]  # state index -> premise id -> state index
    final_states: frozenset[int]

    def distances(self) -> dict[int, int]:
        """Shortest number of premise applications from each state to a goal."""
        reverse: dict[int, list[int]] = {i: [] for i in range(len(self.states))}
        for src, moves in self.edges.items():
            for dst in moves.values():
                reverse[dst].append(src)
        dist = {i: 0 for i in self.final_states}
        queue = deque(self.final_states)
        while queue:
            node = queue.popleft()
            for prev in reverse[node]:
                if prev not in dist:
                    dist[prev] = dist[node] + 1
                    queue.append(prev)
        return dist

    def distance_of(self, state: State) -> int:
        dist = self.distances()
        idx = self.index.get(state)
        if idx is None or idx not in dist:
            raise QuestionUnreachable("state cannot reach a goal state")
        return dist[idx]


def build_state_graph(problem: Problem, max_states: int = 200_000) -> StateGraph:
    """Breadth-first expansion of all states reachable from the empty state."""
    start: State = frozenset()
    states = [start]
    index = {start: 0}
    edges: dict[int, dict[int, int]] = {}
    final: set[int] = set()
    queue = deque([start])
    while queue:
        state = queue.popleft()
        src = index[state]
        if problem.question_subject in state:
            final.add(src)
        moves: dict[int, int] = {}
        for premise in problem.premises:
            nxt = apply_premise(state, premise)
            if nxt == state:
                continue
            if nxt not in index:
                if len(states) >= max_states:
                    raise LimitExceeded(f"state graph larger than {max_states} states")
                index[nxt] = len(states)
                states.append(nxt)
                queue.append(nxt)
            moves[premise.id] = index[nxt]
        if moves:
            edges[src] = moves
    if not final:
        raise QuestionUnreachable(problem.question_subject.render())
    return StateGraph(problem, states, index, edges, frozenset(final))


# ---------------------------------------------------------------------------
# solution enumeration


def enumerate_solutions(
    problem: Problem, max_len: int, node_cap: int = 2_000_000
) -> set[History]:
    """All premise sequences up to max_len that first answer the question
    at their last element.

    Sequences may contain no-op steps; they are cut at the first moment
    the question subject resolves, so no returned sequence has a shorter
    solving prefix.
    """
    solutions: set[History] = set()
    start: State = frozenset()
    if problem.question_subject in start:
        return {()}
    frontier: list[tuple[History, State]] = [((), start)]
    visited_nodes = 0
    for _ in range(max_len):
        next_frontier: list[tuple[History, State]] = []
        for history, state in frontier:
            for premise in problem.premises:
                visited_nodes += 1
                if visited_nodes > node_cap:
                    raise LimitExceeded(f"enumeration exceeded {node_cap} nodes")
                nxt = apply_premise(state, premise)
                extended = history + (premise.id,)
                if problem.question_subject in nxt:
                    solutions.add(extended)
                else:
                    next_frontier.append((extended, nxt))
        frontier = next_frontier
    return solutions


# ---------------------------------------------------------------------------
# whole-problem validation


def validate_problem(problem: Problem, check_unique: bool = True) -> list[str]:
    """Re-derive all stored ground truth; return one message per mismatch."""
    issues: list[str] = []
    try:
        if check_unique:
            derived = minimal_solution(problem)
        else:
            derived = tuple(p.id for p in _chain_to(problem, problem.question_subject))
    except (QuestionUnreachable, AmbiguousMinimal) as err:
        return [f"unsolvable: {err}"]

    if derived != tuple(problem.minimal_solution):
        issues.append(
            f"minimal solution mismatch: stored {list(problem.minimal_solution)}, "
            f"derived {list(derived)}"
        )
    try:
        value = evaluate_answer(problem)
        if value != problem.answer:
            issues.append(f"answer mismatch: stored {problem.answer}, derived {value}")
    except QuestionUnreachable as err:
        issues.append(f"answer underivable: {err}")

    length = len(derived)
    if distance(problem, ()) != length:
        issues.append("distance from scratch disagrees with solution length")
    previous = length
    for i in range(length):
        d = distance(problem, derived[: i + 1])
        if d != previous - 1:
            issues.append(f"step {i + 1} moves distance {previous}->{d}, expected -1")
        previous = d
    if previous != 0:
        issues.append("minimal solution does not end at distance 0")

    stripped = [p for p in problem.premises if p.is_chain]
    if len(stripped) != len(problem.premises):
        try:
            bare = Problem(
                problem_id=problem.problem_id,
                premises=tuple(stripped),
                question_subject=problem.question_subject,
                object_noun=problem.object_noun,
                answer=problem.answer,
                minimal_solution=problem.minimal_solution,
                variant=problem.variant,
                seed=problem.seed,
            )
            if evaluate_answer(bare) != problem.answer:
                issues.append("distractors change the final answer")
            if minimal_solution(bare) != tuple(problem.minimal_solution):
                issues.append("distractors change the minimal solution")
        except Exception as err:  # noqa: BLE001 - report, don't crash validation
            issues.append(f"distractor-free check failed: {err}")
    return issues
