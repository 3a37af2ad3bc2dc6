"""Exhaustive solver for tiny static instances, used as ground truth in tests.

Every assignment of tasks to agents is enumerated; each agent's best open
route over its assigned subset is found by depth-first search over all
orderings (a partial path already costing more than the incumbent is cut,
which never discards an optimum).  Final costs come from
:func:`~matsp.problem.evaluate_cost`.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

from .problem import AgentState, Chromosome, CostMatrix, Point, Task, build_cost_matrix, evaluate_cost

MAX_COMBINATIONS = 10**7
MAX_ROUTE_POINTS = 9


class OracleRefused(ValueError):
    """Instance too large to enumerate."""


@dataclass(frozen=True)
class StaticInstance:
    agents: tuple[Point, ...]
    tasks: tuple[Point, ...]

    def cost_matrix(self) -> CostMatrix:
        return build_cost_matrix(
            [AgentState(i, p) for i, p in enumerate(self.agents)],
            [Task(i, p) for i, p in enumerate(self.tasks)],
        )

    @property
    def n_combinations(self) -> int:
        """Ordered partitions of N tasks into M labelled routes: N! * C(N+M-1, M-1)."""
        n, m = len(self.tasks), len(self.agents)
        return math.factorial(n) * math.comb(n + m - 1, m - 1)


def _best_order(agent: int, tasks: Sequence[int], cm: CostMatrix) -> tuple[float, tuple[int, ...]]:
    if not tasks:
        return 0.0, ()
    rows, index = cm.rows, cm.index
    nodes = [index[t] for t in tasks]
    start = cm.dummy(agent)
    best = [math.inf, ()]
    path: list[int] = []

    def dfs(prev: int, remaining: list[int], cost: float) -> None:
        if cost >= best[0]:
            return
        if not remaining:
            best[0], best[1] = cost, tuple(path)
            return
        for i, v in enumerate(remaining):
            path.append(v)
            dfs(v, remaining[:i] + remaining[i + 1:], cost + rows[prev][v])
            path.pop()

    dfs(start, nodes, 0.0)
    ids = cm.task_ids
    return best[0], tuple(ids[v] for v in best[1])


def solve_exact(inst: StaticInstance) -> tuple[float, Chromosome]:
    if inst.n_combinations > MAX_COMBINATIONS:
        raise OracleRefused(f"{inst.n_combinations} ordered partitions exceed the limit of {MAX_COMBINATIONS}")
    cm = inst.cost_matrix()
    m, n = len(inst.agents), len(inst.tasks)
    memo: dict[tuple[int, tuple[int, ...]], tuple[float, tuple[int, ...]]] = {}

    def route_for(agent, subset):
        key = (agent, subset)
        if key not in memo:
            memo[key] = _best_order(agent, subset, cm)
        return memo[key]

    best_cost, best_routes = math.inf, None
    for assignment in itertools.product(range(m), repeat=n):
        groups: list[list[int]] = [[] for _ in range(m)]
        for task, agent in enumerate(assignment):
            groups[agent].append(task)
        total = 0.0
        routes = []
        for agent, group in enumerate(groups):
            c, r = route_for(agent, tuple(group))
            total += c
            routes.append(r)
        if total < best_cost:
            best_cost, best_routes = total, routes
    x = Chromosome(best_routes if best_routes is not None else [()] * m)
    return evaluate_cost(x, cm), x


def solve_exact_single_route(points: Sequence[Point], start: Point) -> tuple[float, tuple[int, ...]]:
    """Cheapest open path from ``start`` through every point; returns (cost, point order)."""
    if len(points) > MAX_ROUTE_POINTS:
        raise OracleRefused(f"{len(points)} points exceed the limit of {MAX_ROUTE_POINTS}")
    inst = StaticInstance((start,), tuple(points))
    cm = inst.cost_matrix()
    _, order = _best_order(0, tuple(range(len(points))), cm)
    return evaluate_cost(Chromosome([order]), cm), order


def path_length(start: Point, points: Sequence[Point]) -> float:
    """Open path length straight from coordinates; shares no code with the cost matrix."""
    total, here = 0.0, (start.x, start.y)
    for p in points:
        total += math.dist(here, (p.x, p.y))
        here = (p.x, p.y)
    return total
