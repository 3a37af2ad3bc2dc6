"""Single-population evolution: initialisation, reproduction and tournament selection.

A population is a plain list of :class:`~matsp.problem.Chromosome`.  The same
machinery drives the single-population EA and every deme of the multi-demic
variants (which pass an operator mask).
"""
from __future__ import annotations

import enum
import random
from dataclasses import dataclass

from .operators import (
    Mask,
    eligible_agents,
    crossover_rbx,
    crossover_sbx,
    improve_2opt,
    mutate_move,
    mutate_swap,
)
from .problem import Chromosome, CostMatrix, evaluate_cost, nearest_allocation

# consecutive operator no-ops tolerated per offspring slot before cloning a parent
_MAX_REDRAWS = 20


class OperatorClass(enum.Enum):
    CROSSOVER = "crossover"
    MUTATION = "mutation"
    IMPROVEMENT = "improvement"


@dataclass(frozen=True)
class EvolutionConfig:
    mu: int = 50
    lam: int = 25
    generations_per_step: int = 5
    p_crossover: float = 0.4
    p_mutation: float = 0.4
    p_improvement: float = 0.2
    tournament_size: int = 3

    def __post_init__(self):
        if self.mu < 1 or self.lam < 1:
            raise ValueError("mu and lambda must be at least 1")
        if self.generations_per_step < 0:
            raise ValueError("generations_per_step must be non-negative")
        if self.tournament_size < 1:
            raise ValueError("tournament_size must be at least 1")
        probs = (self.p_crossover, self.p_mutation, self.p_improvement)
        if any(p < 0 or p > 1 for p in probs) or abs(sum(probs) - 1.0) > 1e-9:
            raise ValueError(f"operator probabilities must lie in [0, 1] and sum to 1, got {probs}")

    @classmethod
    def ea(cls, **overrides) -> EvolutionConfig:
        return cls(**overrides)

    @classmethod
    def demic(cls, **overrides) -> EvolutionConfig:
        return cls(**{"mu": 20, "lam": 10, **overrides})


def init_population(cm: CostMatrix, cfg: EvolutionConfig, rng: random.Random) -> list[Chromosome]:
    """Nearest-agent allocation cloned ``mu`` times.

    Member 0 keeps ascending task order; the others get independently shuffled
    route orders so selection has something to act on.
    """
    base = nearest_allocation(cm)
    return [base] + [shuffled(base, rng) for _ in range(cfg.mu - 1)]


def shuffled(x: Chromosome, rng: random.Random, agents=None) -> Chromosome:
    routes = list(x.routes)
    for a in range(len(routes)) if agents is None else agents:
        r = list(routes[a])
        rng.shuffle(r)
        routes[a] = tuple(r)
    return Chromosome(routes)


def draw_operator(cfg: EvolutionConfig, rng: random.Random) -> OperatorClass:
    u = rng.random()
    if u < cfg.p_crossover:
        return OperatorClass.CROSSOVER
    if u < cfg.p_crossover + cfg.p_mutation:
        return OperatorClass.MUTATION
    return OperatorClass.IMPROVEMENT


def _inert(x: Chromosome, mask: Mask) -> bool:
    """True when no operator can change ``x``: no tasks, or one route with a single task."""
    agents = eligible_agents(mask, x.n_agents)
    n_tasks = sum(len(x.routes[a]) for a in agents)
    return n_tasks == 0 or (len(agents) == 1 and n_tasks == 1)


def reproduce(
    pop: list[Chromosome],
    cfg: EvolutionConfig,
    mask: Mask,
    cm: CostMatrix,
    rng: random.Random,
) -> list[Chromosome]:
    """Produce exactly ``cfg.lam`` offspring from uniformly drawn parents."""
    n = len(pop)
    if _inert(pop[0], mask):
        return [pop[rng.randrange(n)] for _ in range(cfg.lam)]
    offspring: list[Chromosome] = []
    redraws = 0
    while len(offspring) < cfg.lam:
        kind = draw_operator(cfg, rng)
        p1 = pop[rng.randrange(n)]
        if kind is OperatorClass.CROSSOVER:
            p2 = pop[rng.randrange(n)]
            op = crossover_sbx if rng.random() < 0.5 else crossover_rbx
            children = op(p1, p2, mask, rng, cm)
            if children is not None:
                offspring.extend(children[: cfg.lam - len(offspring)])
                redraws = 0
                continue
        elif kind is OperatorClass.MUTATION:
            child = mutate_swap(p1, mask, rng) if rng.random() < 0.5 else mutate_move(p1, mask, rng)
            if child is not None:
                offspring.append(child)
                redraws = 0
                continue
        else:
            child = improve_2opt(p1, mask, cm, rng)
            if child is not None:
                offspring.append(child)
                redraws = 0
                continue
        redraws += 1
        if redraws >= _MAX_REDRAWS:
            # nothing applies (e.g. every route has at most one task)
            offspring.append(p1)
            redraws = 0
    return offspring


def select_tournament(
    pop: list[Chromosome],
    offspring: list[Chromosome],
    cfg: EvolutionConfig,
    cm: CostMatrix,
    rng: random.Random,
) -> list[Chromosome]:
    """Tournament survival over ``pop + offspring`` with the single best always kept."""
    pool = pop + offspring
    costs = [evaluate_cost(x, cm) for x in pool]
    elite = min(range(len(pool)), key=costs.__getitem__)
    size = min(cfg.tournament_size, len(pool))
    indices = range(len(pool))
    survivors = [pool[elite]]
    for _ in range(cfg.mu - 1):
        batch = rng.sample(indices, size)
        winner = min(batch, key=lambda i: (costs[i], i))
        survivors.append(pool[winner])
    return survivors


def best(pop: list[Chromosome], cm: CostMatrix) -> Chromosome:
    if not pop:
        raise ValueError("best() of an empty population")
    best_i = 0
    best_cost = evaluate_cost(pop[0], cm)
    for i in range(1, len(pop)):
        c = evaluate_cost(pop[i], cm)
        if c < best_cost:
            best_i, best_cost = i, c
    return pop[best_i]


def evolve(
    pop: list[Chromosome],
    cfg: EvolutionConfig,
    mask: Mask,
    cm: CostMatrix,
    rng: random.Random,
    generations: int | None = None,
) -> list[Chromosome]:
    gens = cfg.generations_per_step if generations is None else generations
    for _ in range(gens):
        pop = select_tournament(pop, reproduce(pop, cfg, mask, cm, rng), cfg, cm, rng)
    return pop
