"""Instance builders shared by the test modules."""
from __future__ import annotations

import random

from hypothesis import strategies as st

from matsp.problem import AgentState, Chromosome, Point, ProblemState, Task, build_cost_matrix


def make_state(agents, tasks, step=0) -> ProblemState:
    return ProblemState(
        tuple(AgentState(i, Point(*p)) for i, p in enumerate(agents)),
        {i: Task(i, Point(*p)) for i, p in enumerate(tasks)},
        step,
    )


def make_cm(agents, tasks):
    return build_cost_matrix(
        [AgentState(i, Point(*p)) for i, p in enumerate(agents)],
        [Task(i, Point(*p)) for i, p in enumerate(tasks)],
    )


def random_points(rng: random.Random, n: int, size: float = 100.0):
    return [(rng.uniform(0, size), rng.uniform(0, size)) for _ in range(n)]


def random_chromosome(rng: random.Random, n_agents: int, n_tasks: int) -> Chromosome:
    routes = [[] for _ in range(n_agents)]
    for t in range(n_tasks):
        routes[rng.randrange(n_agents)].append(t)
    for r in routes:
        rng.shuffle(r)
    return Chromosome(routes)


def random_instance(rng: random.Random, n_agents: int, n_tasks: int):
    agents = random_points(rng, n_agents)
    tasks = random_points(rng, n_tasks)
    return agents, tasks, make_cm(agents, tasks)


coords = st.tuples(
    st.floats(0, 200, allow_nan=False, allow_infinity=False),
    st.floats(0, 200, allow_nan=False, allow_infinity=False),
)


@st.composite
def instances(draw, max_agents=3, max_tasks=10, min_tasks=0):
    """(agents, tasks, chromosome) with a random valid allocation."""
    m = draw(st.integers(1, max_agents))
    n = draw(st.integers(min_tasks, max_tasks))
    agents = draw(st.lists(coords, min_size=m, max_size=m))
    tasks = draw(st.lists(coords, min_size=n, max_size=n))
    owners = draw(st.lists(st.integers(0, m - 1), min_size=n, max_size=n))
    routes = [[] for _ in range(m)]
    for t in draw(st.permutations(range(n))):
        routes[owners[t]].append(t)
    return agents, tasks, Chromosome(routes)


# criterion number -> one-line verdict, printed in the terminal summary
ACCEPTANCE_RESULTS: dict[int, str] = {}


def record_criterion(number: int, title: str, passed: bool, detail: str) -> None:
    verdict = "PASS" if passed else "FAIL"
    line = f"criterion {number} [{verdict}] {title}: {detail}"
    ACCEPTANCE_RESULTS[number] = line
    print(line)
