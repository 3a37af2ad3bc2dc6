"""Trial metrics computed purely from a trace."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .simulation import TrialTrace

REPORT_COLUMNS = (
    "scenario_seed",
    "algorithm",
    "n_agents",
    "n_tasks",
    "comm_radius",
    "total_distance",
    "straight_line_deviation",
    "steps",
    "n_exchanges",
    "wall_time_s",
    "completed",
)
SUMMARY_METRICS = ("total_distance", "straight_line_deviation", "steps", "n_exchanges", "wall_time_s")


@dataclass
class TrialReport:
    scenario_seed: int
    algorithm: str
    n_agents: int
    n_tasks: int
    comm_radius: float | None
    total_distance: float
    straight_line_distance: float
    deviation: float
    steps_to_completion: int
    n_exchanges: int
    completed: bool
    deme_evolution_count: int
    wall_time: float = 0.0
    per_agent_distance: list[float] = field(default_factory=list)
    per_agent_straight_line: list[float] = field(default_factory=list)
    per_agent_completed: list[list[int]] = field(default_factory=list)

    def row(self) -> dict:
        return {
            "scenario_seed": self.scenario_seed,
            "algorithm": self.algorithm,
            "n_agents": self.n_agents,
            "n_tasks": self.n_tasks,
            "comm_radius": "inf" if self.comm_radius is None else f"{self.comm_radius:g}",
            "total_distance": f"{self.total_distance:.6f}",
            "straight_line_deviation": f"{self.deviation:.6f}",
            "steps": self.steps_to_completion,
            "n_exchanges": self.n_exchanges,
            "wall_time_s": f"{self.wall_time:.3f}",
            "completed": str(self.completed).lower(),
        }


def _start_positions(trace: TrialTrace) -> list[tuple[float, float]]:
    return [tuple(p) for p in trace.header["scenario"]["agent_starts"]]


def per_agent_distance(trace: TrialTrace) -> list[float]:
    prev = _start_positions(trace)
    totals = [0.0] * len(prev)
    for rec in trace.steps:
        for a, p in enumerate(rec.positions):
            totals[a] += math.dist(prev[a], p)
        prev = [tuple(p) for p in rec.positions]
    return totals


def total_distance(trace: TrialTrace) -> float:
    return sum(per_agent_distance(trace))


def task_locations(trace: TrialTrace) -> dict[int, tuple[float, float]]:
    scn = trace.header["scenario"]
    locs = {i: tuple(p) for i, p in enumerate(scn["task_locations"])}
    offset = len(locs)
    for j, arr in enumerate(scn["arrivals"]):
        locs[offset + j] = tuple(arr["location"])
    return locs


def completion_order(trace: TrialTrace) -> list[list[int]]:
    order: list[list[int]] = [[] for _ in _start_positions(trace)]
    for rec in trace.steps:
        for task, agent in rec.completions:
            order[agent].append(task)
    return order


def per_agent_straight_line(trace: TrialTrace) -> list[float]:
    """Start position to each completed task in completion order, as the crow flies."""
    locs = task_locations(trace)
    out = []
    for start, tasks in zip(_start_positions(trace), completion_order(trace)):
        here, total = start, 0.0
        for t in tasks:
            total += math.dist(here, locs[t])
            here = locs[t]
        out.append(total)
    return out


def straight_line_deviation(trace: TrialTrace) -> float:
    return total_distance(trace) - sum(per_agent_straight_line(trace))


def report_from_trace(trace: TrialTrace, wall_time: float = 0.0) -> TrialReport:
    scn = trace.header["scenario"]
    dist = per_agent_distance(trace)
    straight = per_agent_straight_line(trace)
    comms = trace.header.get("comms")
    radius = None if comms is None else comms.get("comm_radius")
    total, line = sum(dist), sum(straight)
    return TrialReport(
        scenario_seed=scn["seed"],
        algorithm=trace.header["algorithm"],
        n_agents=scn["n_agents"],
        n_tasks=scn["n_initial_tasks"],
        comm_radius=radius,
        total_distance=total,
        straight_line_distance=line,
        deviation=total - line,
        steps_to_completion=trace.steps[-1].step if trace.steps else 0,
        n_exchanges=sum(len(r.exchanges) for r in trace.steps),
        completed=trace.completed,
        deme_evolution_count=sum(r.deme_evolutions for r in trace.steps),
        wall_time=wall_time,
        per_agent_distance=dist,
        per_agent_straight_line=straight,
        per_agent_completed=completion_order(trace),
    )


@dataclass(frozen=True)
class Summary:
    n: int
    minimum: float
    q1: float
    median: float
    q3: float
    maximum: float
    mean: float


def summarize(values: Sequence[float]) -> Summary:
    if len(values) == 0:
        raise ValueError("cannot summarise an empty sample")
    v = np.asarray(values, dtype=float)
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    return Summary(len(v), float(v.min()), float(q1), float(med), float(q3), float(v.max()), float(v.mean()))


def aggregate(reports: Sequence[TrialReport]) -> dict[str, Summary]:
    """Order statistics per metric over a nonempty batch of reports."""
    if not reports:
        raise ValueError("aggregate() needs at least one report")
    return {
        "total_distance": summarize([r.total_distance for r in reports]),
        "straight_line_deviation": summarize([r.deviation for r in reports]),
        "steps": summarize([r.steps_to_completion for r in reports]),
        "n_exchanges": summarize([r.n_exchanges for r in reports]),
        "wall_time_s": summarize([r.wall_time for r in reports]),
    }
