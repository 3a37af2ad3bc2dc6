"""Problem representation: tasks, agents, the dummy-depot cost matrix and chromosomes.

Agents act as their own depot: the row for agent ``a`` holds the travel cost
from its current position to every task, while travelling back into an agent
costs nothing.  Routes are therefore open paths starting at the agent.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

Route = tuple[int, ...]


class StaleTaskError(KeyError):
    """A chromosome references a task that is not in the cost matrix."""


@dataclass(frozen=True)
class Point:
    x: float
    y: float

    def distance(self, other: Point) -> float:
        return math.hypot(self.x - other.x, self.y - other.y)

    def as_list(self) -> list[float]:
        return [self.x, self.y]


class TaskStatus(enum.Enum):
    PENDING = "pending"
    ACTIVE = "active"
    COMPLETED = "completed"


@dataclass(frozen=True)
class Task:
    id: int
    location: Point
    status: TaskStatus = TaskStatus.ACTIVE
    arrival_step: int = 0

    def advance(self, status: TaskStatus) -> Task:
        order = [TaskStatus.PENDING, TaskStatus.ACTIVE, TaskStatus.COMPLETED]
        if order.index(status) != order.index(self.status) + 1:
            raise ValueError(f"task {self.id}: illegal transition {self.status.value} -> {status.value}")
        return Task(self.id, self.location, status, self.arrival_step)


@dataclass(frozen=True)
class AgentState:
    id: int
    position: Point
    speed: float = 5.0

    def __post_init__(self):
        if not self.speed > 0:
            raise ValueError("agent speed must be positive")
        if not (math.isfinite(self.position.x) and math.isfinite(self.position.y)):
            raise ValueError("agent position must be finite")


class CostMatrix:
    """Dense ``(N+M) x (N+M)`` travel-cost matrix over active tasks then agent dummies.

    Row/column ``index[t]`` belongs to task ``t``; ``dummy(a)`` is agent ``a``'s
    dummy task.  ``rows`` mirrors ``array`` as nested lists for fast scalar access.
    Route costs are memoised per matrix, so a fresh matrix starts a fresh cache.
    """

    __slots__ = ("task_ids", "n_agents", "array", "index", "rows", "_memo")

    def __init__(self, task_ids: Sequence[int], n_agents: int, array: np.ndarray):
        self.task_ids = tuple(task_ids)
        self.n_agents = n_agents
        self.array = array
        self.index = {t: i for i, t in enumerate(self.task_ids)}
        self.rows = array.tolist()
        self._memo: dict[tuple[int, Route], float] = {}

    @property
    def n_tasks(self) -> int:
        return len(self.task_ids)

    def dummy(self, agent: int) -> int:
        return len(self.task_ids) + agent

    def __contains__(self, task: int) -> bool:
        return task in self.index

    def task_cost(self, i: int, j: int) -> float:
        return self.rows[self.index[i]][self.index[j]]

    def agent_cost(self, agent: int, task: int) -> float:
        return self.rows[self.dummy(agent)][self.index[task]]

    def route_cost(self, agent: int, route: Route) -> float:
        if not route:
            return 0.0
        key = (agent, route)
        cost = self._memo.get(key)
        if cost is not None:
            return cost
        rows, index = self.rows, self.index
        prev = rows[len(self.task_ids) + agent]
        cost = 0.0
        try:
            for t in route:
                j = index[t]
                cost += prev[j]
                prev = rows[j]
        except KeyError as exc:
            raise StaleTaskError(exc.args[0]) from None
        self._memo[key] = cost
        return cost


def build_cost_matrix(agents: Sequence[AgentState], tasks: Iterable[Task]) -> CostMatrix:
    tasks = sorted(tasks, key=lambda t: t.id)
    coords = np.array(
        [t.location.as_list() for t in tasks] + [a.position.as_list() for a in agents],
        dtype=float,
    ).reshape(-1, 2)
    if not np.all(np.isfinite(coords)):
        raise ValueError("non-finite position in cost matrix input")
    diff = coords[:, None, :] - coords[None, :, :]
    array = np.hypot(diff[..., 0], diff[..., 1])
    # travelling into any agent dummy closes the tour for free
    array[:, len(tasks):] = 0.0
    return CostMatrix([t.id for t in tasks], len(agents), array)


class Chromosome:
    """One candidate solution: an ordered task route per agent.

    Routes are immutable tuples; every operator builds a new chromosome, so the
    cached cost can only go stale when the cost matrix changes.  The cache is
    keyed on the matrix object itself.
    """

    __slots__ = ("routes", "_cost", "_cm")

    def __init__(self, routes: Iterable[Iterable[int]]):
        self.routes: tuple[Route, ...] = tuple(r if type(r) is tuple else tuple(r) for r in routes)
        self._cost: float | None = None
        self._cm: CostMatrix | None = None

    @classmethod
    def empty(cls, n_agents: int) -> Chromosome:
        return cls(((),) * n_agents)

    @property
    def n_agents(self) -> int:
        return len(self.routes)

    @property
    def cached_cost(self) -> float | None:
        return self._cost

    def replace(self, agent: int, route: Route) -> Chromosome:
        routes = list(self.routes)
        routes[agent] = route
        return Chromosome(routes)

    def tasks(self) -> set[int]:
        out: set[int] = set()
        for r in self.routes:
            out.update(r)
        return out

    def owner_of(self) -> dict[int, int]:
        return {t: a for a, r in enumerate(self.routes) for t in r}

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Chromosome) and self.routes == other.routes

    def __hash__(self) -> int:
        return hash(self.routes)

    def __repr__(self) -> str:
        return f"Chromosome({[list(r) for r in self.routes]})"


def evaluate_cost(x: Chromosome, cm: CostMatrix) -> float:
    if x._cm is cm:
        return x._cost
    cost = 0.0
    for agent, route in enumerate(x.routes):
        if route:
            cost += cm.route_cost(agent, route)
    x._cost = cost
    x._cm = cm
    return cost


def fitness(x: Chromosome, cm: CostMatrix) -> float:
    return -evaluate_cost(x, cm)


@dataclass
class Violation:
    duplicated: set[int] = field(default_factory=set)
    unallocated: set[int] = field(default_factory=set)
    unexpected: set[int] = field(default_factory=set)

    def __bool__(self) -> bool:
        return bool(self.duplicated or self.unallocated or self.unexpected)

    def __str__(self) -> str:
        parts = []
        for name in ("duplicated", "unallocated", "unexpected"):
            tasks = getattr(self, name)
            if tasks:
                parts.append(f"{name}: {sorted(tasks)}")
        return "; ".join(parts) or "ok"


def validate_chromosome(x: Chromosome, required: Iterable[int]) -> Violation | None:
    """Return ``None`` when ``x`` covers ``required`` exactly once, else a report."""
    required = set(required)
    seen: set[int] = set()
    report = Violation()
    for route in x.routes:
        for t in route:
            if t in seen:
                report.duplicated.add(t)
            seen.add(t)
    report.unallocated = required - seen
    report.unexpected = seen - required
    return report if report else None


@dataclass(frozen=True)
class ProblemState:
    """Immutable snapshot of the world at one time step."""

    agents: tuple[AgentState, ...]
    tasks: dict[int, Task]
    step: int = 0
    cost_matrix: CostMatrix = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.cost_matrix is None:
            object.__setattr__(self, "cost_matrix", build_cost_matrix(self.agents, self.active()))

    @property
    def n_agents(self) -> int:
        return len(self.agents)

    def active(self) -> list[Task]:
        return [t for t in self.tasks.values() if t.status is TaskStatus.ACTIVE]

    @property
    def active_tasks(self) -> frozenset[int]:
        return frozenset(t.id for t in self.tasks.values() if t.status is TaskStatus.ACTIVE)

    def pending(self) -> list[Task]:
        return sorted(
            (t for t in self.tasks.values() if t.status is TaskStatus.PENDING),
            key=lambda t: (t.arrival_step, t.id),
        )

    def all_completed(self) -> bool:
        return all(t.status is TaskStatus.COMPLETED for t in self.tasks.values())


def nearest_agent(cm: CostMatrix, task: int) -> int:
    """Agent whose dummy row is cheapest for ``task``; ties go to the lowest id."""
    j = cm.index[task]
    best, best_cost = 0, math.inf
    for a in range(cm.n_agents):
        c = cm.rows[cm.dummy(a)][j]
        if c < best_cost:
            best, best_cost = a, c
    return best


def nearest_allocation(cm: CostMatrix) -> Chromosome:
    """Each active task goes to its closest agent, in ascending task-id order."""
    routes: list[list[int]] = [[] for _ in range(cm.n_agents)]
    for t in cm.task_ids:
        routes[nearest_agent(cm, t)].append(t)
    return Chromosome(routes)
