"""Seeded trial definitions: start positions, initial tasks and the arrival schedule."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .problem import AgentState, Point, ProblemState, Task, TaskStatus

BENCHMARK_SIZES = ((3, 25), (5, 35), (7, 45))
SCENARIOS_PER_SIZE = 50
MAX_PLACEMENT_ATTEMPTS = 10_000
SCENARIO_FORMAT = "matsp-scenario/1"


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class Arrival:
    step: int
    location: Point


@dataclass(frozen=True)
class Scenario:
    seed: int
    n_agents: int
    n_initial_tasks: int
    agent_starts: tuple[Point, ...]
    task_locations: tuple[Point, ...]
    arrivals: tuple[Arrival, ...]
    arena: tuple[float, float] = (200.0, 200.0)
    min_separation: float = 1.0
    arrival_interval: int = 5
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def n_total_tasks(self) -> int:
        return len(self.task_locations) + len(self.arrivals)

    def initial_state(self, speed: float = 5.0) -> ProblemState:
        """World at step 0; initial tasks take ids 0..N-1, arrivals follow in schedule order."""
        agents = tuple(AgentState(i, p, speed) for i, p in enumerate(self.agent_starts))
        tasks = {i: Task(i, p, TaskStatus.ACTIVE, 0) for i, p in enumerate(self.task_locations)}
        offset = len(self.task_locations)
        for j, arr in enumerate(self.arrivals):
            tid = offset + j
            tasks[tid] = Task(tid, arr.location, TaskStatus.PENDING, arr.step)
        return ProblemState(agents, tasks, 0)

    def to_dict(self) -> dict:
        return {
            "format": SCENARIO_FORMAT,
            "seed": self.seed,
            "arena": list(self.arena),
            "min_separation": self.min_separation,
            "arrival_interval": self.arrival_interval,
            "n_agents": self.n_agents,
            "n_initial_tasks": self.n_initial_tasks,
            "agent_starts": [p.as_list() for p in self.agent_starts],
            "task_locations": [p.as_list() for p in self.task_locations],
            "arrivals": [{"step": a.step, "location": a.location.as_list()} for a in self.arrivals],
        }

    @classmethod
    def from_dict(cls, d: dict) -> Scenario:
        if d.get("format") != SCENARIO_FORMAT:
            raise ScenarioError(f"unsupported scenario format {d.get('format')!r}")
        try:
            scn = cls(
                seed=int(d["seed"]),
                n_agents=int(d["n_agents"]),
                n_initial_tasks=int(d["n_initial_tasks"]),
                agent_starts=tuple(Point(*map(float, p)) for p in d["agent_starts"]),
                task_locations=tuple(Point(*map(float, p)) for p in d["task_locations"]),
                arrivals=tuple(
                    Arrival(int(a["step"]), Point(*map(float, a["location"]))) for a in d["arrivals"]
                ),
                arena=tuple(map(float, d["arena"])),
                min_separation=float(d["min_separation"]),
                arrival_interval=int(d["arrival_interval"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ScenarioError(f"malformed scenario: {exc}") from exc
        if len(scn.agent_starts) != scn.n_agents or len(scn.task_locations) != scn.n_initial_tasks:
            raise ScenarioError("entity counts do not match n_agents / n_initial_tasks")
        return scn

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> Scenario:
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"{path}: {exc}") from exc


def _place(rng, arena, min_sep, placed: list[np.ndarray]) -> np.ndarray:
    w, h = arena
    for _ in range(MAX_PLACEMENT_ATTEMPTS):
        p = rng.uniform((0.0, 0.0), (w, h))
        if all(math.dist(p, q) >= min_sep for q in placed):
            return p
    raise ScenarioError(
        f"could not place entity {len(placed)} with separation {min_sep} after {MAX_PLACEMENT_ATTEMPTS} attempts"
    )


def generate(
    seed: int,
    n_agents: int,
    n_initial_tasks: int,
    arena: tuple[float, float] = (200.0, 200.0),
    min_separation: float = 1.0,
    arrival_interval: int = 5,
) -> Scenario:
    """Uniform placement with rejection sampling; ``floor(N/2)`` tasks arrive later.

    Agents and initial tasks are mutually separated; arrival locations are kept
    apart from every task location but not from agents, whose positions at
    arrival time depend on the run.
    """
    if n_agents < 1 or n_initial_tasks < 0:
        raise ScenarioError("need at least one agent and a non-negative task count")
    rng = np.random.default_rng(seed)
    placed: list[np.ndarray] = []
    for _ in range(n_agents + n_initial_tasks):
        placed.append(_place(rng, arena, min_separation, placed))
    task_pts = placed[n_agents:]
    arrivals = []
    for i in range(n_initial_tasks // 2):
        p = _place(rng, arena, min_separation, task_pts)
        task_pts.append(p)
        arrivals.append(Arrival((i + 1) * arrival_interval, Point(float(p[0]), float(p[1]))))
    to_point = lambda p: Point(float(p[0]), float(p[1]))  # noqa: E731
    return Scenario(
        seed=seed,
        n_agents=n_agents,
        n_initial_tasks=n_initial_tasks,
        agent_starts=tuple(map(to_point, placed[:n_agents])),
        task_locations=tuple(map(to_point, placed[n_agents:n_agents + n_initial_tasks])),
        arrivals=tuple(arrivals),
        arena=tuple(arena),
        min_separation=min_separation,
        arrival_interval=arrival_interval,
    )


def scenario_seeds(seed_base: int, size_index: int, count: int = SCENARIOS_PER_SIZE) -> list[int]:
    start = seed_base + size_index * SCENARIOS_PER_SIZE
    return list(range(start, start + count))


def paper_suite(seed_base: int = 0) -> list[Scenario]:
    """50 scenarios for each of the (agents, tasks) sizes 3/25, 5/35 and 7/45."""
    return [
        generate(seed, m, n)
        for idx, (m, n) in enumerate(BENCHMARK_SIZES)
        for seed in scenario_seeds(seed_base, idx)
    ]
