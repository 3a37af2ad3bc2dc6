"""Command-line experiment driver.

    matsp run     run trials (single settings, the benchmark suite, or a radius sweep)
    matsp replay  dump a trace file step by step, or export plot-ready series
    matsp report  render box-plot figures from a trials.csv

Output files (under ``--out``):

trials.csv
    One row per trial: scenario_seed, algorithm, n_agents, n_tasks,
    comm_radius ("inf" when unlimited), total_distance,
    straight_line_deviation, steps, n_exchanges, wall_time_s, completed.
summary.csv
    min/q1/median/q3/max/mean per (algorithm, size, radius, metric).
traces/<name>.jsonl
    Line 1 is ``{"type": "header", "format": "matsp-trace/1", ...}`` holding
    the algorithm, run seed, full scenario, configs, completed and
    final_step.  Every later line is ``{"type": "step", ...}`` with step,
    positions, routes (plan followed this step), completions and arrivals as
    [task, agent] pairs, exchanges, plan_cost, feasible_pairs,
    deme_evolutions and n_demes.  Unlimited radii are written as null.
scenarios/*.json
    ``matsp-scenario/1`` files accepted by ``--scenario-file``.
figures/*.png
    Box plots of total distance and deviation per problem size.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

from .engine import EvolutionConfig
from .metrics import REPORT_COLUMNS, SUMMARY_METRICS, report_from_trace, summarize
from .multidemic import CommsConfig
from .scenario import BENCHMARK_SIZES, Scenario, ScenarioError, generate, scenario_seeds
from .simulation import ALGORITHMS, SimConfig, TraceFormatError, TrialTrace, default_configs, run_trial

log = logging.getLogger("matsp")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INCOMPLETE = 3
SEED_ENV = "MATSP_SEED_BASE"


@dataclass
class Job:
    scenario: Scenario
    algorithm: str
    evolution: EvolutionConfig
    comms: CommsConfig | None
    sim: SimConfig
    run_seed: int = 0

    @property
    def name(self) -> str:
        radius = "" if self.comms is None else f"_r{_fmt_radius(self.comms.comm_radius)}"
        return (
            f"{self.algorithm}{radius}_nA{self.scenario.n_agents}_nT{self.scenario.n_initial_tasks}"
            f"_s{self.scenario.seed}_run{self.run_seed}"
        )


@dataclass
class RunConfig:
    algorithms: list[str] = field(default_factory=lambda: ["dmdea"])
    sizes: list[tuple[int, int]] = field(default_factory=lambda: [(5, 35)])
    seed_base: int = 0
    n_scenarios: int = 1
    scenario_file: str | None = None
    radii: list[float] | None = None
    margin: float = 10.0
    evolution: dict = field(default_factory=dict)
    evolution_by_algorithm: dict = field(default_factory=dict)
    sim: dict = field(default_factory=dict)
    repeat: int = 1
    out: Path = Path("results")
    jobs: int = 1
    traces: bool = True
    plots: bool = True
    save_scenarios: bool = False


def _fmt_radius(r: float | None) -> str:
    return "inf" if r is None or math.isinf(r) else f"{r:g}"


def parse_sweep(spec: str) -> list[float]:
    try:
        lo, hi, stepsize = (float(v) for v in spec.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected lo:hi:step, got {spec!r}") from None
    if stepsize <= 0 or hi < lo:
        raise argparse.ArgumentTypeError(f"empty radius sweep {spec!r}")
    n = int(math.floor((hi - lo) / stepsize + 1e-9)) + 1
    return [lo + i * stepsize for i in range(n)]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="matsp", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", parents=[common], help="run trials and write traces, trials.csv, summary.csv and figures")
    r.add_argument("--algorithm", choices=ALGORITHMS + ("all",), help="default: dmdea")
    r.add_argument("--agents", type=int)
    r.add_argument("--tasks", type=int)
    r.add_argument("--seed", type=int, help=f"first scenario seed (default: ${SEED_ENV} or 0)")
    r.add_argument("--scenarios", type=int, metavar="N", help="number of scenarios per size")
    r.add_argument("--scenario-file", help="run a saved scenario instead of generating one")
    r.add_argument("--radius", type=float, help="communication radius in metres (dMDEA)")
    r.add_argument("--margin", type=float, help="consideration margin beyond the radius (dMDEA)")
    r.add_argument("--speed", type=float, help="agent speed in metres per step")
    r.add_argument("--suite", choices=["paper"], help="all algorithms x benchmark sizes x 50 scenarios")
    r.add_argument("--radius-sweep", type=parse_sweep, metavar="LO:HI:STEP")
    r.add_argument("--baselines", action="store_true", help="with --radius-sweep, also run EA and cMDEA")
    r.add_argument("--repeat", type=int, help="algorithm seeds per scenario")
    r.add_argument("--config", help="JSON file with defaults overriding the built-in ones")
    r.add_argument("--out", help="output directory (default: results)")
    r.add_argument("--jobs", type=int, help="parallel worker processes")
    r.add_argument("--no-traces", action="store_true")
    r.add_argument("--no-plots", action="store_true")
    r.add_argument("--save-scenarios", action="store_true", help="also write each scenario file")

    rp = sub.add_parser("replay", parents=[common], help="print a trace or export its series")
    rp.add_argument("trace")
    rp.add_argument("--series", help="write per-step agent positions as CSV to this path")

    rr = sub.add_parser("report", parents=[common], help="render figures from a trials.csv")
    rr.add_argument("csv")
    rr.add_argument("--out", default=None, help="figure directory (default: next to the CSV)")
    return p


def resolve_run_config(args: argparse.Namespace, env: dict | None = None) -> RunConfig:
    """Built-in defaults < config file < command-line flags."""
    env = os.environ if env is None else env
    file_cfg: dict = {}
    if args.config:
        try:
            file_cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ValueError(f"cannot read config {args.config}: {exc}") from None
    cfg = RunConfig()

    def pick(flag, key, default):
        if flag is not None:
            return flag
        return file_cfg.get(key, default)

    if SEED_ENV in env:
        try:
            cfg.seed_base = int(env[SEED_ENV])
        except ValueError:
            raise ValueError(f"{SEED_ENV} must be an integer") from None
    cfg.seed_base = pick(args.seed, "seed", cfg.seed_base)
    algorithm = pick(args.algorithm, "algorithm", "dmdea")
    cfg.algorithms = list(ALGORITHMS) if algorithm == "all" else [algorithm]
    if algorithm not in ALGORITHMS + ("all",):
        raise ValueError(f"unknown algorithm {algorithm!r}")
    agents = pick(args.agents, "agents", 5)
    tasks = pick(args.tasks, "tasks", 35)
    cfg.sizes = [(agents, tasks)]
    cfg.n_scenarios = pick(args.scenarios, "scenarios", 1)
    cfg.scenario_file = pick(args.scenario_file, "scenario_file", None)
    radius = pick(args.radius, "radius", None)
    cfg.margin = pick(args.margin, "margin", 10.0)
    cfg.evolution = dict(file_cfg.get("evolution", {}))
    cfg.evolution_by_algorithm = dict(file_cfg.get("evolution_by_algorithm", {}))
    cfg.sim = dict(file_cfg.get("sim", {}))
    speed = pick(args.speed, "speed", None)
    if speed is not None:
        cfg.sim["agent_speed"] = speed
    cfg.repeat = pick(args.repeat, "repeat", 1)
    cfg.out = Path(pick(args.out, "out", "results"))
    cfg.jobs = pick(args.jobs, "jobs", 1)
    cfg.traces = not args.no_traces and file_cfg.get("traces", True)
    cfg.plots = not args.no_plots and file_cfg.get("plots", True)
    cfg.save_scenarios = args.save_scenarios or file_cfg.get("save_scenarios", False)

    suite = pick(args.suite, "suite", None)
    if suite == "paper":
        cfg.algorithms = list(ALGORITHMS)
        cfg.sizes = list(BENCHMARK_SIZES)
        cfg.n_scenarios = pick(args.scenarios, "scenarios", 50)
    sweep = args.radius_sweep if args.radius_sweep is not None else file_cfg.get("radius_sweep")
    if isinstance(sweep, str):
        sweep = parse_sweep(sweep)
    if sweep:
        if suite:
            raise ValueError("--suite and --radius-sweep are mutually exclusive")
        cfg.radii = list(sweep)
        cfg.algorithms = ["dmdea"] + (["ea", "cmdea"] if args.baselines else [])
        cfg.n_scenarios = pick(args.scenarios, "scenarios", 50)
    elif radius is not None:
        cfg.radii = [radius]

    if cfg.n_scenarios < 1 or cfg.repeat < 1 or cfg.jobs < 1:
        raise ValueError("--scenarios, --repeat and --jobs must be positive")
    if any(m < 1 or n < 0 for m, n in cfg.sizes):
        raise ValueError("--agents must be positive and --tasks non-negative")
    if cfg.radii is not None and any(r < 0 for r in cfg.radii):
        raise ValueError("radii must be non-negative")
    return cfg


def build_jobs(cfg: RunConfig) -> list[Job]:
    if cfg.scenario_file:
        scenarios = [Scenario.load(cfg.scenario_file)]
    else:
        scenarios = []
        for m, n in cfg.sizes:
            # benchmark sizes draw from the same seed block as the suite
            seeds = (
                scenario_seeds(cfg.seed_base, BENCHMARK_SIZES.index((m, n)), cfg.n_scenarios)
                if (m, n) in BENCHMARK_SIZES
                else range(cfg.seed_base, cfg.seed_base + cfg.n_scenarios)
            )
            scenarios += [generate(s, m, n) for s in seeds]
    sim = SimConfig(**cfg.sim)
    jobs = []
    for algorithm in cfg.algorithms:
        evo_default, comms_default = default_configs(algorithm, margin=cfg.margin)
        evo = replace(evo_default, **cfg.evolution, **cfg.evolution_by_algorithm.get(algorithm, {}))
        if algorithm == "dmdea" and cfg.radii is not None:
            comms_list = [CommsConfig(comm_radius=r, consideration_margin=cfg.margin) for r in cfg.radii]
        else:
            comms_list = [comms_default]
        for comms in comms_list:
            for scn in scenarios:
                for run_seed in range(cfg.repeat):
                    jobs.append(Job(scn, algorithm, evo, comms, sim, run_seed))
    return jobs


def _execute(job: Job):
    trace, report = run_trial(job.scenario, job.algorithm, job.evolution, job.comms, job.sim, job.run_seed)
    return job.name, trace, report


def write_trials_csv(path: Path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def write_summary_csv(path: Path, rows: list[dict]) -> None:
    groups: dict[tuple, list[dict]] = {}
    for row in rows:
        key = (row["algorithm"], row["n_agents"], row["n_tasks"], row["comm_radius"])
        groups.setdefault(key, []).append(row)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["algorithm", "n_agents", "n_tasks", "comm_radius", "metric", "n",
                    "min", "q1", "median", "q3", "max", "mean", "incomplete"])
        for key, group in groups.items():
            incomplete = sum(r["completed"] != "true" for r in group)
            for metric in SUMMARY_METRICS:
                s = summarize([float(r[metric]) for r in group])
                w.writerow([*key, metric, s.n, *(f"{v:.6f}" for v in (s.minimum, s.q1, s.median, s.q3, s.maximum, s.mean)), incomplete])


def run(cfg: RunConfig) -> int:
    jobs = build_jobs(cfg)
    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    if cfg.traces:
        (out / "traces").mkdir(exist_ok=True)
    if cfg.save_scenarios:
        (out / "scenarios").mkdir(exist_ok=True)
        for scn in {j.scenario.seed: j.scenario for j in jobs}.values():
            scn.save(out / "scenarios" / f"scenario_nA{scn.n_agents}_nT{scn.n_initial_tasks}_s{scn.seed}.json")
    log.info("running %d trials into %s", len(jobs), out)
    if cfg.jobs > 1:
        with ProcessPoolExecutor(cfg.jobs) as pool:
            results = list(pool.map(_execute, jobs))
    else:
        results = [_execute(j) for j in jobs]
    rows = []
    incomplete = []
    for name, trace, report in results:
        if cfg.traces:
            trace.save(out / "traces" / f"{name}.jsonl")
        rows.append(report.row())
        if not report.completed:
            incomplete.append(name)
        log.info("%s: distance %.1f m, %d steps", name, report.total_distance, report.steps_to_completion)
    write_trials_csv(out / "trials.csv", rows)
    write_summary_csv(out / "summary.csv", rows)
    if cfg.plots:
        from .plotting import render_report

        render_report(rows, out / "figures")
    print(f"{len(rows)} trials -> {out / 'trials.csv'}")
    if incomplete:
        print(f"warning: {len(incomplete)} trial(s) hit max_steps: {', '.join(incomplete)}", file=sys.stderr)
        return EXIT_INCOMPLETE
    return EXIT_OK


def replay(path: str, series: str | None = None, stream=None) -> int:
    stream = stream or sys.stdout
    trace = TrialTrace.load(path)
    if trace is None:
        return EXIT_OK
    for rec in trace.steps:
        stream.write(f"step {rec.step}  plan cost {rec.plan_cost:.2f}\n")
        for a, (pos, route) in enumerate(zip(rec.positions, rec.routes)):
            stream.write(f"  agent {a} at ({pos[0]:.2f}, {pos[1]:.2f})  route {route}\n")
        for task, agent in rec.completions:
            stream.write(f"  completed task {task} by agent {agent}\n")
        for task, agent in rec.arrivals:
            stream.write(f"  new task {task} -> agent {agent}\n")
        for ex in rec.exchanges:
            k, l = ex.pair
            stream.write(
                f"  exchange {k}<->{l}: {list(ex.to_first)} to {k}, {list(ex.to_second)} to {l}"
                f" ({ex.cost_before:.2f} -> {ex.cost_after:.2f})\n"
            )
    rep = report_from_trace(trace)
    stream.write(
        f"total_distance {rep.total_distance:.6f}\nstraight_line_deviation {rep.deviation:.6f}\n"
        f"steps {rep.steps_to_completion}\nn_exchanges {rep.n_exchanges}\ncompleted {str(rep.completed).lower()}\n"
    )
    if series:
        with open(series, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "agent", "x", "y", "route_length", "next_task"])
            for rec in trace.steps:
                for a, (pos, route) in enumerate(zip(rec.positions, rec.routes)):
                    w.writerow([rec.step, a, pos[0], pos[1], len(route), route[0] if route else ""])
    return EXIT_OK


def report(csv_path: str, out: str | None = None) -> int:
    from .plotting import render_report

    with open(csv_path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    missing = set(REPORT_COLUMNS) - set(rows[0]) if rows else set()
    if missing:
        raise ValueError(f"{csv_path}: missing columns {sorted(missing)}")
    target = Path(out) if out else Path(csv_path).parent / "figures"
    for p in render_report(rows, target):
        print(p)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "run":
            return run(resolve_run_config(args))
        if args.command == "replay":
            return replay(args.trace, args.series)
        return report(args.csv, args.out)
    except (ValueError, ScenarioError, TraceFormatError, OSError) as exc:
        print(f"matsp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
