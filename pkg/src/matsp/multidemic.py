"""Per-agent deme sets and the synchronous six-step exchange protocol.

Agent ``k`` owns one deme ``P_kl`` per agent ``l``.  Individuals in ``P_kl``
only carry routes for ``k`` and ``l`` (every other route is empty) and may
only be varied under the mask ``(k, l)``; ``P_kk`` is the personal deme, which
reorders ``k``'s own route without touching its allocation.

Ownership of a task changes only inside an accepted pairwise exchange, so the
committed routes (``truth``) always partition the active tasks.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np

from .engine import EvolutionConfig, best, evolve, shuffled
from .operators import cheapest_insert
from .problem import Chromosome, CostMatrix, ProblemState, Route, evaluate_cost, nearest_allocation

CENTRALISED = "centralised"
DECENTRALISED = "decentralised"
_EPS = 1e-9


class ProtocolError(RuntimeError):
    """An invariant of the exchange protocol was broken."""


@dataclass(frozen=True)
class CommsConfig:
    comm_radius: float = 75.0
    consideration_margin: float = 10.0
    mode: str = DECENTRALISED
    n_migrate: int = 2
    # repair an individual unless more than this fraction of its pair's tasks must change
    prune_fraction: float = 0.5
    # knowledge updates also plant the committed plan in each active deme
    seed_current_plan: bool = True

    def __post_init__(self):
        if self.comm_radius < 0 or self.consideration_margin < 0:
            raise ValueError("radii must be non-negative")
        if self.mode not in (CENTRALISED, DECENTRALISED):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == CENTRALISED and not math.isinf(self.comm_radius):
            raise ValueError("centralised mode requires an infinite communication radius")

    @classmethod
    def centralised(cls, **kw) -> CommsConfig:
        return cls(comm_radius=math.inf, consideration_margin=math.inf, mode=CENTRALISED, **kw)

    @property
    def consideration_radius(self) -> float:
        return self.comm_radius + self.consideration_margin


@dataclass
class AllocationView:
    """What one agent believes every agent's route to be."""

    owner: int
    routes: list[Route]
    completed: set[int] = field(default_factory=set)

    def pair_sets(self, paired: int) -> tuple[set[int], set[int]]:
        own = set(self.routes[self.owner])
        if paired == self.owner:
            return own, set()
        return own, set(self.routes[paired]) - own - self.completed


@dataclass
class Deme:
    owner: int
    paired: int
    members: list[Chromosome]
    rng: random.Random
    synced: frozenset = frozenset()

    @property
    def mask(self) -> tuple[int, int]:
        return (self.owner, self.paired)

    @property
    def agents(self) -> tuple[int, ...]:
        return (self.owner,) if self.owner == self.paired else (self.owner, self.paired)


@dataclass
class DemeSet:
    owner: int
    demes: dict[int, Deme]


@dataclass(frozen=True)
class ExchangeRecord:
    step: int
    pair: tuple[int, int]
    to_first: tuple[int, ...]
    to_second: tuple[int, ...]
    cost_before: float
    cost_after: float

    def to_dict(self) -> dict:
        return {
            "step": self.step,
            "pair": list(self.pair),
            "to_first": list(self.to_first),
            "to_second": list(self.to_second),
            "cost_before": self.cost_before,
            "cost_after": self.cost_after,
        }

    @classmethod
    def from_dict(cls, d: dict) -> ExchangeRecord:
        return cls(
            int(d["step"]),
            tuple(d["pair"]),
            tuple(d["to_first"]),
            tuple(d["to_second"]),
            float(d["cost_before"]),
            float(d["cost_after"]),
        )


def deme_rng(seed: int, owner: int, paired: int) -> random.Random:
    state = np.random.SeedSequence(seed, spawn_key=(owner, paired)).generate_state(2)
    return random.Random(int(state[0]) << 32 | int(state[1]))


def restrict(x: Chromosome, agents: Iterable[int]) -> Chromosome:
    keep = set(agents)
    return Chromosome(r if a in keep else () for a, r in enumerate(x.routes))


def build_deme_sets(
    state: ProblemState, cfg: EvolutionConfig, seed: int
) -> tuple[list[DemeSet], list[AllocationView], list[Route]]:
    """Initialise ``M`` deme sets (``M**2`` demes) from the nearest-agent allocation.

    Every agent starts with full knowledge of the initial allocation.  Returns
    the deme sets, the agents' views and the committed routes.
    """
    cm = state.cost_matrix
    m = state.n_agents
    base = nearest_allocation(cm)
    truth = list(base.routes)
    views = [AllocationView(k, list(truth)) for k in range(m)]
    deme_sets = []
    for k in range(m):
        demes = {}
        for l in range(m):
            rng = deme_rng(seed, k, l)
            agents = (k,) if k == l else (k, l)
            seed_x = restrict(base, agents)
            members = [seed_x] + [shuffled(seed_x, rng, agents) for _ in range(cfg.mu - 1)]
            synced = frozenset(t for a in agents for t in truth[a])
            demes[l] = Deme(k, l, members, rng, synced)
        deme_sets.append(DemeSet(k, demes))
    return deme_sets, views, truth


def feasible_exchanges(state: ProblemState, comms: CommsConfig) -> list[tuple[int, int]]:
    """Agent pairs able to communicate, as sorted ``(k, l)`` tuples with ``k < l``."""
    pairs = combinations(range(state.n_agents), 2)
    if comms.mode == CENTRALISED:
        return list(pairs)
    agents = state.agents
    r = comms.comm_radius
    return [(k, l) for k, l in pairs if agents[k].position.distance(agents[l].position) <= r]


def active_demes(k: int, state: ProblemState, comms: CommsConfig) -> set[int]:
    if comms.mode == CENTRALISED:
        return set(range(state.n_agents))
    r = comms.consideration_radius
    pk = state.agents[k].position
    return {k} | {a.id for a in state.agents if pk.distance(a.position) <= r}


def _reconcile(
    x: Chromosome, deme: Deme, own: set[int], other: set[int], view: AllocationView,
    cm: CostMatrix, prune_fraction: float,
) -> tuple[Chromosome, bool]:
    required = own | other
    agents = deme.agents
    routes = list(x.routes)
    seen: set[int] = set()
    changes = 0
    for a in agents:
        kept = []
        for t in routes[a]:
            if t in required and t not in seen:
                seen.add(t)
                kept.append(t)
        changes += len(routes[a]) - len(kept)
        routes[a] = tuple(kept)
    missing = sorted(required - seen)
    changes += len(missing)
    if changes == 0:
        return x, False
    if changes > prune_fraction * len(required):
        k, l = deme.owner, deme.paired
        fresh = [()] * len(routes)
        fresh[k] = tuple(view.routes[k])
        if l != k:
            fresh[l] = tuple(t for t in view.routes[l] if t in other)
        return Chromosome(fresh), True
    for t in missing:
        owner = deme.owner if t in own else deme.paired
        cheapest_insert(routes, t, (owner,), cm)
    return Chromosome(routes), False


def sync_deme(deme: Deme, view: AllocationView, cm: CostMatrix, prune_fraction: float = 0.5) -> int:
    """Repair or prune members so the pair's task set matches ``view``; returns prunes."""
    own, other = view.pair_sets(deme.paired)
    required = frozenset(own | other)
    if required == deme.synced:
        return 0
    pruned = 0
    done: dict[int, Chromosome] = {}
    members = []
    for x in deme.members:
        y = done.get(id(x))
        if y is None:
            y, was_pruned = _reconcile(x, deme, own, other, view, cm, prune_fraction)
            pruned += was_pruned
            done[id(x)] = y
        members.append(y)
    deme.members = members
    deme.synced = required
    return pruned


def knowledge_update(
    deme_sets: list[DemeSet],
    views: list[AllocationView],
    truth: Sequence[Route],
    feasible: Iterable[tuple[int, int]],
    active: dict[int, set[int]],
    cm: CostMatrix,
    comms: CommsConfig,
) -> int:
    """Share committed routes across feasible pairs, then reconcile every active deme."""
    for k, view in enumerate(views):
        view.routes[k] = truth[k]
    for k, l in feasible:
        views[k].routes[l] = truth[l]
        views[l].routes[k] = truth[k]
        merged = views[k].completed | views[l].completed
        views[k].completed = set(merged)
        views[l].completed = set(merged)
    pruned = 0
    for k, ds in enumerate(deme_sets):
        for l in sorted(active[k]):
            deme = ds.demes[l]
            pruned += sync_deme(deme, views[k], cm, comms.prune_fraction)
            if comms.seed_current_plan:
                _inject(deme, believed_plan(views[k], l), cm)
    return pruned


def believed_plan(view: AllocationView, paired: int) -> Chromosome:
    """The individual matching ``view``'s current routes for the owner and ``paired``."""
    k = view.owner
    own, other = view.pair_sets(paired)
    routes = [()] * len(view.routes)
    routes[k] = tuple(view.routes[k])
    if paired != k:
        routes[paired] = tuple(t for t in view.routes[paired] if t in other)
    return Chromosome(routes)


def _covers(x: Chromosome, agents: tuple[int, ...], required: frozenset) -> bool:
    n = 0
    for a in agents:
        n += len(x.routes[a])
    if n != len(required):
        return False
    return all(t in required for a in agents for t in x.routes[a])


def _ranked(members: list[Chromosome], cm: CostMatrix) -> list[int]:
    return sorted(range(len(members)), key=lambda i: (evaluate_cost(members[i], cm), i))


def migrate(
    deme_sets: list[DemeSet],
    feasible: Iterable[tuple[int, int]],
    cm: CostMatrix,
    n_migrate: int = 2,
) -> int:
    """Copy the best compatible individuals ``P_kl <-> P_lk``, displacing the worst.

    Migrants already present in the destination are skipped, and the
    destination's best member is never displaced.  Returns the number moved.
    """
    moved = 0
    for k, l in feasible:
        a, b = deme_sets[k].demes[l], deme_sets[l].demes[k]
        batches = []
        for src, dst in ((a, b), (b, a)):
            agents = dst.agents
            chosen = []
            present = set(dst.members)
            for i in _ranked(src.members, cm):
                x = src.members[i]
                if x in present or x in chosen or not _covers(x, agents, dst.synced):
                    continue
                chosen.append(x)
                if len(chosen) == n_migrate:
                    break
            batches.append((dst, chosen))
        for dst, chosen in batches:
            if not chosen:
                continue
            ranked = _ranked(dst.members, cm)
            victims = [i for i in reversed(ranked) if i != ranked[0]]
            for x, i in zip(chosen, victims):
                dst.members[i] = x
                moved += 1
            if len(dst.members) == 1 and evaluate_cost(chosen[0], cm) < evaluate_cost(dst.members[0], cm):
                dst.members[0] = chosen[0]
                moved += 1
    return moved


def negotiate_exchanges(
    deme_sets: list[DemeSet],
    feasible: Sequence[tuple[int, int]],
    truth: list[Route],
    cm: CostMatrix,
    rng: random.Random,
    step: int = 0,
) -> list[ExchangeRecord]:
    """Visit feasible pairs in random order and commit strictly better pair plans.

    The candidate is the cheapest individual of ``P_kl`` and ``P_lk`` covering
    both agents' committed tasks.  A plan that only reorders routes is adopted
    without being recorded; one that moves tasks is an exchange, and an agent
    takes part in at most one exchange per round.
    """
    order = list(feasible)
    rng.shuffle(order)
    traded: set[int] = set()
    records = []
    for k, l in order:
        if k in traded or l in traded:
            continue
        required = frozenset(truth[k]) | frozenset(truth[l])
        pool = deme_sets[k].demes[l].members + deme_sets[l].demes[k].members
        cand = None
        for i in _ranked(pool, cm):
            if _covers(pool[i], (k, l), required):
                cand = pool[i]
                break
        if cand is None:
            continue
        before = cm.route_cost(k, truth[k]) + cm.route_cost(l, truth[l])
        after = cm.route_cost(k, cand.routes[k]) + cm.route_cost(l, cand.routes[l])
        if not after < before - _EPS:
            continue
        to_k = tuple(sorted(set(cand.routes[k]) - set(truth[k])))
        to_l = tuple(sorted(set(cand.routes[l]) - set(truth[l])))
        truth[k], truth[l] = cand.routes[k], cand.routes[l]
        if to_k or to_l:
            traded.update((k, l))
            records.append(ExchangeRecord(step, (k, l), to_k, to_l, before, after))
    return records


def best_route(k: int, deme_sets: list[DemeSet], truth: Sequence[Route], cm: CostMatrix) -> Route:
    route = best(deme_sets[k].demes[k].members, cm).routes[k]
    if set(route) != set(truth[k]) or len(route) != len(truth[k]):
        raise ProtocolError(
            f"agent {k}: personal deme route {list(route)} disagrees with allocation {sorted(truth[k])}"
        )
    return route


def _inject(deme: Deme, x: Chromosome, cm: CostMatrix) -> None:
    if x in deme.members:
        return
    ranked = _ranked(deme.members, cm)
    deme.members[ranked[-1]] = x


def exchange_round(
    deme_sets: list[DemeSet],
    state: ProblemState,
    views: list[AllocationView],
    truth: list[Route],
    comms: CommsConfig,
    rng: random.Random,
) -> tuple[list[ExchangeRecord], list[tuple[int, int]]]:
    """Run the six protocol steps in order; ``truth`` is updated in place.

    1. feasible pairs, 2. knowledge update, 3. migration, 4. exchanges,
    5. each agent adopts the best route of its personal deme, 6. knowledge update.
    Returns the committed exchanges and the feasible pairs used.
    """
    cm = state.cost_matrix
    m = state.n_agents
    feasible = feasible_exchanges(state, comms)
    active = {k: active_demes(k, state, comms) for k in range(m)}
    knowledge_update(deme_sets, views, truth, feasible, active, cm, comms)
    migrate(deme_sets, feasible, cm, comms.n_migrate)
    records = negotiate_exchanges(deme_sets, feasible, truth, cm, rng, state.step)
    for k in range(m):
        views[k].routes[k] = truth[k]
        personal = deme_sets[k].demes[k]
        sync_deme(personal, views[k], cm, comms.prune_fraction)
        committed = [()] * m
        committed[k] = truth[k]
        _inject(personal, Chromosome(committed), cm)
        truth[k] = best_route(k, deme_sets, truth, cm)
    knowledge_update(deme_sets, views, truth, feasible, active, cm, comms)
    return records, feasible


class MultiDemicSolver:
    """cMDEA / dMDEA driver: evolve active demes, then run an exchange round."""

    def __init__(
        self, state: ProblemState, cfg: EvolutionConfig, comms: CommsConfig, seed: int
    ):
        self.cfg = cfg
        self.comms = comms
        self.n_agents = state.n_agents
        self.deme_sets, self.views, self.truth = build_deme_sets(state, cfg, seed)
        self.rng = deme_rng(seed, state.n_agents, state.n_agents)
        self.last_feasible: list[tuple[int, int]] = []

    @property
    def n_demes(self) -> int:
        return sum(len(ds.demes) for ds in self.deme_sets)

    def plan(self, state: ProblemState) -> tuple[list[Route], list[ExchangeRecord], int]:
        cm = state.cost_matrix
        evolutions = 0
        for k, ds in enumerate(self.deme_sets):
            self.views[k].routes[k] = self.truth[k]
            for l in sorted(active_demes(k, state, self.comms)):
                deme = ds.demes[l]
                sync_deme(deme, self.views[k], cm, self.comms.prune_fraction)
                deme.members = evolve(deme.members, self.cfg, deme.mask, cm, deme.rng)
                evolutions += self.cfg.generations_per_step
        records, self.last_feasible = exchange_round(
            self.deme_sets, state, self.views, self.truth, self.comms, self.rng
        )
        return list(self.truth), records, evolutions

    def apply(self, state: ProblemState, completions, arrivals) -> None:
        """Drop completed tasks everywhere; hand new tasks to their receiving agent."""
        done = {t for t, _ in completions}
        if done:
            for a, _ in enumerate(self.truth):
                self.truth[a] = tuple(t for t in self.truth[a] if t not in done)
            for view in self.views:
                view.completed |= done
                view.routes = [tuple(t for t in r if t not in done) for r in view.routes]
            for ds in self.deme_sets:
                for deme in ds.demes.values():
                    _drop(deme, done)
        for t, a in arrivals:
            self.truth[a] = self.truth[a] + (t,)
            self.views[a].routes[a] = self.truth[a]
            for l in active_demes(a, state, self.comms):
                deme = self.deme_sets[a].demes[l]
                _append(deme, a, t)


def _drop(deme: Deme, done: set[int]) -> None:
    cache: dict[int, Chromosome] = {}
    members = []
    for x in deme.members:
        y = cache.get(id(x))
        if y is None:
            y = x
            if any(t in done for a in deme.agents for t in x.routes[a]):
                routes = list(x.routes)
                for a in deme.agents:
                    routes[a] = tuple(t for t in routes[a] if t not in done)
                y = Chromosome(routes)
            cache[id(x)] = y
        members.append(y)
    deme.members = members
    deme.synced = deme.synced - done


def _append(deme: Deme, agent: int, task: int) -> None:
    cache: dict[int, Chromosome] = {}
    members = []
    for x in deme.members:
        y = cache.get(id(x))
        if y is None:
            y = x.replace(agent, x.routes[agent] + (task,))
            cache[id(x)] = y
        members.append(y)
    deme.members = members
    deme.synced = deme.synced | {task}
