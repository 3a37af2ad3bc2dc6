"""Variation operators over route-ordered allocations.

Every operator is a pure function of its inputs and the ``random.Random``
stream it is handed.  An operator that cannot act on its input (no eligible
route, empty donor, ...) returns ``None`` so the caller can redraw.

A mask ``(k, l)`` restricts an operator to the routes of agents ``k`` and
``l``; ``k == l`` limits it to a single route, which rules out any change of
allocation.  ``None`` means every agent is eligible.
"""
from __future__ import annotations

import enum
import random
from typing import Iterable, Optional

from .problem import Chromosome, CostMatrix, Route

Mask = Optional[tuple[int, int]]

TWO_OPT_MAX_SWEEPS = 50
_EPS = 1e-9


class OperatorKind(enum.Enum):
    SWAP_MUTATION = "swap"
    MOVE_MUTATION = "move"
    SBX = "sbx"
    RBX = "rbx"
    TWO_OPT = "2opt"


def eligible_agents(mask: Mask, n_agents: int) -> list[int]:
    if mask is None:
        return list(range(n_agents))
    k, l = mask
    return [k] if k == l else sorted((k, l))


def mutate_swap(x: Chromosome, mask: Mask, rng: random.Random) -> Chromosome | None:
    candidates = [a for a in eligible_agents(mask, x.n_agents) if len(x.routes[a]) >= 2]
    if not candidates:
        return None
    agent = candidates[rng.randrange(len(candidates))]
    route = list(x.routes[agent])
    i = rng.randrange(len(route) - 1)
    route[i], route[i + 1] = route[i + 1], route[i]
    return x.replace(agent, tuple(route))


def mutate_move(x: Chromosome, mask: Mask, rng: random.Random) -> Chromosome | None:
    agents = eligible_agents(mask, x.n_agents)
    if len(agents) < 2:
        return None
    donors = [a for a in agents if x.routes[a]]
    if not donors:
        return None
    donor = donors[rng.randrange(len(donors))]
    others = [a for a in agents if a != donor]
    recipient = others[rng.randrange(len(others))]
    src = list(x.routes[donor])
    task = src.pop(rng.randrange(len(src)))
    dst = list(x.routes[recipient])
    dst.insert(rng.randrange(len(dst) + 1), task)
    routes = list(x.routes)
    routes[donor] = tuple(src)
    routes[recipient] = tuple(dst)
    return Chromosome(routes)


def _crossover_agent(p1: Chromosome, p2: Chromosome, mask: Mask, rng: random.Random) -> int | None:
    candidates = [
        a for a in eligible_agents(mask, p1.n_agents) if p1.routes[a] or p2.routes[a]
    ]
    if not candidates:
        return None
    return candidates[rng.randrange(len(candidates))]


def _covered(x: Chromosome, agents: Iterable[int]) -> set[int]:
    out: set[int] = set()
    for a in agents:
        out.update(x.routes[a])
    return out


def crossover_sbx(
    p1: Chromosome, p2: Chromosome, mask: Mask, rng: random.Random, cm: CostMatrix
) -> tuple[Chromosome, Chromosome] | None:
    """Sequence-based crossover: splice one agent's pre-break and post-break routes."""
    agent = _crossover_agent(p1, p2, mask, rng)
    if agent is None:
        return None
    r1, r2 = p1.routes[agent], p2.routes[agent]
    b1 = rng.randrange(len(r1) + 1)
    b2 = rng.randrange(len(r2) + 1)
    raw1 = p1.replace(agent, r1[:b1] + r2[b2:])
    raw2 = p2.replace(agent, r2[:b2] + r1[b1:])
    required = _covered(p1, range(p1.n_agents))
    return (
        repair(raw1, required, cm, rng, mask),
        repair(raw2, required, cm, rng, mask),
    )


def crossover_rbx(
    p1: Chromosome, p2: Chromosome, mask: Mask, rng: random.Random, cm: CostMatrix
) -> tuple[Chromosome, Chromosome] | None:
    """Route-based crossover: exchange one agent's whole route between parents."""
    agent = _crossover_agent(p1, p2, mask, rng)
    if agent is None:
        return None
    raw1 = p1.replace(agent, p2.routes[agent])
    raw2 = p2.replace(agent, p1.routes[agent])
    required = _covered(p1, range(p1.n_agents))
    return (
        repair(raw1, required, cm, rng, mask),
        repair(raw2, required, cm, rng, mask),
    )


def insertion_cost(route: Route, agent: int, task: int, cm: CostMatrix) -> tuple[float, int]:
    """Cheapest position to insert ``task`` into an open route; returns (delta, position)."""
    rows, index = cm.rows, cm.index
    t = index[task]
    prev = cm.dummy(agent)
    best_delta, best_pos = float("inf"), 0
    t_row = rows[t]
    for pos, nxt_task in enumerate(route):
        nxt = index[nxt_task]
        delta = rows[prev][t] + t_row[nxt] - rows[prev][nxt]
        if delta < best_delta - _EPS:
            best_delta, best_pos = delta, pos
        prev = nxt
    # appending at the end leaves only the incoming leg (return is free)
    delta = rows[prev][t]
    if delta < best_delta - _EPS:
        best_delta, best_pos = delta, len(route)
    return best_delta, best_pos


def cheapest_insert(
    routes: list[Route], task: int, agents: Iterable[int], cm: CostMatrix
) -> None:
    """Insert ``task`` in place at the minimum-delta position among ``agents``' routes."""
    best = None
    for a in agents:
        delta, pos = insertion_cost(routes[a], a, task, cm)
        if best is None or delta < best[0] - _EPS:
            best = (delta, a, pos)
    _, a, pos = best
    r = routes[a]
    routes[a] = r[:pos] + (task,) + r[pos:]


def repair(
    x: Chromosome,
    required: Iterable[int],
    cm: CostMatrix,
    rng: random.Random,
    mask: Mask = None,
) -> Chromosome:
    """Make ``x`` cover ``required`` exactly once.

    Routes are scanned in agent order and only the first occurrence of each
    task is kept; tasks outside ``required`` are dropped.  Missing tasks are
    placed one at a time, in random order, by cheapest insertion among the
    mask-eligible routes.
    """
    required = required if isinstance(required, (set, frozenset)) else set(required)
    seen: set[int] = set()
    routes = list(x.routes)
    changed = False
    for a, route in enumerate(routes):
        kept = []
        for t in route:
            if t in required and t not in seen:
                seen.add(t)
                kept.append(t)
        if len(kept) != len(route):
            routes[a] = tuple(kept)
            changed = True
    missing = [t for t in required if t not in seen]
    if not missing and not changed:
        return x
    missing.sort()
    rng.shuffle(missing)
    agents = eligible_agents(mask, x.n_agents)
    for t in missing:
        cheapest_insert(routes, t, agents, cm)
    return Chromosome(routes)


def two_opt_route(route: Route, agent: int, cm: CostMatrix, max_sweeps: int = TWO_OPT_MAX_SWEEPS) -> Route:
    """First-improvement 2-opt on an open path anchored at the agent's position."""
    n = len(route)
    if n < 2:
        return route
    rows, index = cm.rows, cm.index
    nodes = [cm.dummy(agent)] + [index[t] for t in route]
    improved = True
    sweeps = 0
    while improved and sweeps < max_sweeps:
        improved = False
        sweeps += 1
        for i in range(1, n):
            a = nodes[i - 1]
            for j in range(i + 1, n + 1):
                b, c = nodes[i], nodes[j]
                delta = rows[a][c] - rows[a][b]
                if j < n:
                    e = nodes[j + 1]
                    delta += rows[b][e] - rows[c][e]
                if delta < -_EPS:
                    nodes[i:j + 1] = nodes[j:i - 1:-1]
                    improved = True
    if not improved and sweeps == 1:
        return route
    ids = cm.task_ids
    return tuple(ids[v] for v in nodes[1:])


def improve_2opt(
    x: Chromosome, mask: Mask, cm: CostMatrix, rng: random.Random
) -> Chromosome | None:
    candidates = [a for a in eligible_agents(mask, x.n_agents) if len(x.routes[a]) >= 3]
    if not candidates:
        return None
    agent = candidates[rng.randrange(len(candidates))]
    route = two_opt_route(x.routes[agent], agent, cm)
    if route == x.routes[agent]:
        return x
    return x.replace(agent, route)
