"""The dynamic world loop: plan, move, complete, add tasks, refresh distances."""
from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

from .engine import EvolutionConfig, best, evolve, init_population
from .multidemic import CommsConfig, ExchangeRecord, MultiDemicSolver, deme_rng
from .problem import AgentState, Chromosome, Point, ProblemState, Route, TaskStatus
from .scenario import Scenario

ALGORITHMS = ("ea", "cmdea", "dmdea")
TRACE_FORMAT = "matsp-trace/1"


class SimulationError(RuntimeError):
    pass


class TraceFormatError(ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    agent_speed: float = 5.0
    completion_radius: float = 1.0
    task_arrival_interval: int = 5
    max_steps: int | None = None
    dt: int = 1

    def __post_init__(self):
        if not self.agent_speed > 0:
            raise ValueError("agent_speed must be positive")
        if not self.completion_radius > 0:
            raise ValueError("completion_radius must be positive")


@dataclass
class StepEvents:
    step: int
    displacements: list[float]
    completions: list[tuple[int, int]]
    arrivals: list[tuple[int, int]]
    routes: list[Route]


def _check_partition(state: ProblemState, routes: Sequence[Route]) -> None:
    active = state.active_tasks
    seen: set[int] = set()
    for a, r in enumerate(routes):
        for t in r:
            if t not in active:
                raise SimulationError(f"agent {a} route references non-active task {t}")
            if t in seen:
                raise SimulationError(f"task {t} appears in more than one route")
            seen.add(t)
    if seen != active:
        raise SimulationError(f"unallocated active tasks: {sorted(active - seen)}")


def step(state: ProblemState, routes: Sequence[Route], cfg: SimConfig) -> tuple[ProblemState, StepEvents]:
    """Advance the world by one time step following the committed ``routes``."""
    _check_partition(state, routes)
    tasks = dict(state.tasks)
    agents = []
    moved = []
    completions = []
    new_routes = [tuple(r) for r in routes]
    for agent, route in zip(state.agents, new_routes):
        pos = agent.position
        dist = 0.0
        if route:
            target = tasks[route[0]].location
            gap = pos.distance(target)
            if gap <= cfg.agent_speed:
                pos, dist = target, gap
            else:
                f = cfg.agent_speed / gap
                pos = Point(pos.x + (target.x - pos.x) * f, pos.y + (target.y - pos.y) * f)
                dist = cfg.agent_speed
        agents.append(AgentState(agent.id, pos, agent.speed))
        moved.append(dist)
    for a, agent in enumerate(agents):
        route = new_routes[a]
        if route and agent.position.distance(tasks[route[0]].location) <= cfg.completion_radius:
            tasks[route[0]] = tasks[route[0]].advance(TaskStatus.COMPLETED)
            completions.append((route[0], a))
            new_routes[a] = route[1:]
    now = state.step + cfg.dt
    arrivals = []
    for task in state.pending():
        if task.arrival_step > now:
            break
        tasks[task.id] = task.advance(TaskStatus.ACTIVE)
        a = min(range(len(agents)), key=lambda i: (agents[i].position.distance(task.location), i))
        arrivals.append((task.id, a))
        new_routes[a] = new_routes[a] + (task.id,)
    new_state = ProblemState(tuple(agents), tasks, now)
    return new_state, StepEvents(now, moved, completions, arrivals, new_routes)


class SinglePopulationSolver:
    """The centralised EA: one population over every agent's route."""

    def __init__(self, state: ProblemState, cfg: EvolutionConfig, seed: int):
        self.cfg = cfg
        self.rng = deme_rng(seed, 0, 0)
        self.pop = init_population(state.cost_matrix, cfg, self.rng)
        self.truth = list(self.pop[0].routes)
        self.n_demes = 1
        self.last_feasible: list[tuple[int, int]] = []

    def plan(self, state: ProblemState):
        cm = state.cost_matrix
        self.pop = evolve(self.pop, self.cfg, None, cm, self.rng)
        self.truth = list(best(self.pop, cm).routes)
        return list(self.truth), [], self.cfg.generations_per_step

    def apply(self, state: ProblemState, completions, arrivals) -> None:
        done = {t for t, _ in completions}
        cache: dict[int, Chromosome] = {}
        pop = []
        for x in self.pop:
            y = cache.get(id(x))
            if y is None:
                routes = [tuple(t for t in r if t not in done) for r in x.routes] if done else list(x.routes)
                for t, a in arrivals:
                    routes[a] = routes[a] + (t,)
                y = Chromosome(routes)
                cache[id(x)] = y
            pop.append(y)
        self.pop = pop


@dataclass
class StepRecord:
    step: int
    positions: list[list[float]]
    routes: list[list[int]]
    completions: list[list[int]]
    arrivals: list[list[int]]
    exchanges: list[ExchangeRecord]
    plan_cost: float
    feasible_pairs: list[list[int]]
    deme_evolutions: int
    n_demes: int

    def to_dict(self) -> dict:
        d = asdict(self)
        d["exchanges"] = [e.to_dict() for e in self.exchanges]
        return {"type": "step", **d}

    @classmethod
    def from_dict(cls, d: dict) -> StepRecord:
        return cls(
            step=int(d["step"]),
            positions=[list(map(float, p)) for p in d["positions"]],
            routes=[list(r) for r in d["routes"]],
            completions=[list(c) for c in d["completions"]],
            arrivals=[list(c) for c in d["arrivals"]],
            exchanges=[ExchangeRecord.from_dict(e) for e in d["exchanges"]],
            plan_cost=float(d["plan_cost"]),
            feasible_pairs=[list(p) for p in d["feasible_pairs"]],
            deme_evolutions=int(d["deme_evolutions"]),
            n_demes=int(d["n_demes"]),
        )


@dataclass
class TrialTrace:
    """Header (scenario + configuration) followed by one record per time step."""

    header: dict
    steps: list[StepRecord] = field(default_factory=list)

    def append(self, rec: StepRecord) -> None:
        if self.steps and rec.step <= self.steps[-1].step:
            raise SimulationError("trace steps must be strictly increasing")
        self.steps.append(rec)

    @property
    def scenario(self) -> Scenario:
        return Scenario.from_dict(self.header["scenario"])

    @property
    def completed(self) -> bool:
        return bool(self.header.get("completed", False))

    def lines(self) -> Iterable[str]:
        yield json.dumps({"type": "header", **self.header}, sort_keys=True)
        for rec in self.steps:
            yield json.dumps(rec.to_dict(), sort_keys=True)

    def dumps(self) -> str:
        return "".join(line + "\n" for line in self.lines())

    def save(self, path) -> None:
        with open(path, "w") as fh:
            for line in self.lines():
                fh.write(line + "\n")

    @classmethod
    def parse(cls, text: str, source: str = "<trace>") -> TrialTrace | None:
        """Parse a line-delimited trace; ``None`` for an empty file."""
        header = None
        trace = None
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                kind = rec.pop("type")
                if kind == "header":
                    if header is not None:
                        raise ValueError("duplicate header")
                    if rec.get("format") != TRACE_FORMAT:
                        raise ValueError(f"unsupported format {rec.get('format')!r}")
                    header = rec
                    trace = cls(header)
                elif kind == "step":
                    if trace is None:
                        raise ValueError("step record before header")
                    trace.append(StepRecord.from_dict(rec))
                else:
                    raise ValueError(f"unknown record type {kind!r}")
            except (ValueError, KeyError, TypeError, AttributeError, SimulationError) as exc:
                raise TraceFormatError(f"{source}:{lineno}: malformed record: {exc}") from None
        return trace

    @classmethod
    def load(cls, path) -> TrialTrace | None:
        with open(path) as fh:
            return cls.parse(fh.read(), str(path))


def default_configs(algorithm: str, radius: float = 75.0, margin: float = 10.0):
    """Per-algorithm defaults: population sizes per algorithm, 75 m / 10 m for dMDEA."""
    if algorithm == "ea":
        return EvolutionConfig.ea(), None
    if algorithm == "cmdea":
        return EvolutionConfig.demic(), CommsConfig.centralised()
    if algorithm == "dmdea":
        return EvolutionConfig.demic(), CommsConfig(comm_radius=radius, consideration_margin=margin)
    raise ValueError(f"unknown algorithm {algorithm!r}; expected one of {ALGORITHMS}")


def _jsonable(cfg) -> dict | None:
    if cfg is None:
        return None
    d = asdict(cfg)
    return {k: (None if isinstance(v, float) and math.isinf(v) else v) for k, v in d.items()}


def run_trial(
    scenario: Scenario,
    algorithm: str,
    evo_cfg: EvolutionConfig | None = None,
    comms_cfg: CommsConfig | None = None,
    sim_cfg: SimConfig | None = None,
    seed: int = 0,
):
    """Simulate one trial until every task is done or ``max_steps`` is hit.

    Returns ``(trace, report)``.  The algorithm's random streams derive from
    ``(scenario.seed, seed)`` only, so cMDEA and an unrestricted dMDEA given the
    same seeds follow the same trajectory.
    """
    from .metrics import report_from_trace

    default_evo, default_comms = default_configs(algorithm)
    evo_cfg = evo_cfg or default_evo
    comms_cfg = comms_cfg if comms_cfg is not None else default_comms
    sim_cfg = sim_cfg or SimConfig()
    max_steps = sim_cfg.max_steps or 10 * scenario.n_total_tasks

    t0 = time.perf_counter()
    state = scenario.initial_state(sim_cfg.agent_speed)
    algo_seed = scenario.seed * 1_000_003 + seed
    if algorithm == "ea":
        solver = SinglePopulationSolver(state, evo_cfg, algo_seed)
    else:
        solver = MultiDemicSolver(state, evo_cfg, comms_cfg, algo_seed)

    header = {
        "format": TRACE_FORMAT,
        "algorithm": algorithm,
        "seed": seed,
        "scenario": scenario.to_dict(),
        "evolution": _jsonable(evo_cfg),
        "comms": _jsonable(comms_cfg) if algorithm != "ea" else None,
        "sim": _jsonable(sim_cfg),
        "max_steps": max_steps,
    }
    trace = TrialTrace(header)
    while not state.all_completed() and state.step < max_steps:
        routes, records, evolutions = solver.plan(state)
        plan_cost = sum(state.cost_matrix.route_cost(a, r) for a, r in enumerate(routes))
        feasible = solver.last_feasible
        state, events = step(state, routes, sim_cfg)
        solver.apply(state, events.completions, events.arrivals)
        trace.append(
            StepRecord(
                step=events.step,
                positions=[a.position.as_list() for a in state.agents],
                routes=[list(r) for r in routes],
                completions=[list(c) for c in events.completions],
                arrivals=[list(c) for c in events.arrivals],
                exchanges=records,
                plan_cost=plan_cost,
                feasible_pairs=[list(p) for p in feasible],
                deme_evolutions=evolutions,
                n_demes=solver.n_demes,
            )
        )
    trace.header["completed"] = state.all_completed()
    trace.header["final_step"] = state.step
    report = report_from_trace(trace, wall_time=time.perf_counter() - t0)
    return trace, report
