"""Evolutionary solvers for the dynamic multi-agent travelling salesman problem.

Three approaches share one simulation harness: a single-population EA, a
centralised multi-demic EA (cMDEA) and a decentralised multi-demic EA (dMDEA)
whose agents only exchange tasks with peers inside a communication radius.
"""
from .engine import EvolutionConfig
from .metrics import TrialReport, aggregate
from .multidemic import CommsConfig
from .problem import Chromosome, build_cost_matrix, evaluate_cost, fitness, validate_chromosome
from .scenario import Scenario, generate, paper_suite
from .simulation import SimConfig, TrialTrace, run_trial

__all__ = [
    "Chromosome",
    "CommsConfig",
    "EvolutionConfig",
    "Scenario",
    "SimConfig",
    "TrialReport",
    "TrialTrace",
    "aggregate",
    "build_cost_matrix",
    "evaluate_cost",
    "fitness",
    "generate",
    "paper_suite",
    "run_trial",
    "validate_chromosome",
]
