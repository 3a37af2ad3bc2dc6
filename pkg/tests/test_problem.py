import math
import random

import numpy as np
import pytest
from hypothesis import given, settings

from helpers import instances, make_cm, make_state, random_chromosome, random_instance
from matsp.oracle import path_length
from matsp.problem import (
    AgentState,
    Chromosome,
    Point,
    StaleTaskError,
    Task,
    TaskStatus,
    build_cost_matrix,
    evaluate_cost,
    fitness,
    nearest_agent,
    nearest_allocation,
    validate_chromosome,
)


def test_agent_to_task_cost_and_zero_return():
    cm = make_cm([(0, 0)], [(3, 4)])
    assert cm.agent_cost(0, 0) == 5.0
    assert cm.array[cm.index[0], cm.dummy(0)] == 0.0


def test_no_tasks_gives_agent_block_of_zeros():
    cm = make_cm([(0, 0), (5, 5), (9, 1)], [])
    assert cm.array.shape == (3, 3)
    assert np.all(cm.array == 0.0)


def test_collinear_task_costs_add_up():
    cm = make_cm([(9, 9)], [(0, 0), (1, 0), (2, 0)])
    assert cm.task_cost(0, 2) == 2.0
    assert cm.task_cost(0, 2) == cm.task_cost(0, 1) + cm.task_cost(1, 2)


def test_matrix_is_asymmetric_only_through_dummies():
    rng = random.Random(3)
    _, _, cm = random_instance(rng, 3, 6)
    n = cm.n_tasks
    assert np.all(cm.array[:, n:] == 0.0)
    assert np.all(cm.array[n:, :n] >= 0.0)
    tasks_block = cm.array[:n, :n]
    assert np.allclose(tasks_block, tasks_block.T)


def test_non_finite_position_rejected():
    with pytest.raises(ValueError):
        build_cost_matrix([AgentState(0, Point(0, 0))], [Task(0, Point(math.nan, 0))])
    with pytest.raises(ValueError):
        AgentState(0, Point(math.inf, 0))


def test_cost_of_open_route():
    cm = make_cm([(0, 0)], [(3, 4), (3, 0)])
    assert evaluate_cost(Chromosome([[0, 1]]), cm) == pytest.approx(9.0)


def test_cost_of_empty_routes_is_zero():
    cm = make_cm([(0, 0), (1, 1)], [(3, 4)])
    assert evaluate_cost(Chromosome.empty(2), cm) == 0.0
    assert fitness(Chromosome.empty(2), cm) == 0.0


def test_cost_matches_coordinate_path_length():
    # independent re-summation from raw coordinates
    for seed in range(25):
        rng = random.Random(seed)
        agents, tasks, cm = random_instance(rng, 2, 4)
        x = random_chromosome(rng, 2, 4)
        expected = sum(
            path_length(Point(*agents[a]), [Point(*tasks[t]) for t in route])
            for a, route in enumerate(x.routes)
        )
        assert evaluate_cost(x, cm) == pytest.approx(expected, abs=1e-9)


def test_fitness_is_negated_cost():
    cm = make_cm([(0, 0)], [(3, 4), (3, 0)])
    assert fitness(Chromosome([[0, 1]]), cm) == pytest.approx(-9.0)


def test_fitness_order_reverses_cost_order():
    rng = random.Random(7)
    _, _, cm = random_instance(rng, 3, 8)
    pop = [random_chromosome(rng, 3, 8) for _ in range(30)]
    costs = [evaluate_cost(x, cm) for x in pop]
    fits = [fitness(x, cm) for x in pop]
    assert int(np.argmax(fits)) == int(np.argmin(costs))
    for a, b in zip(range(30), range(1, 30)):
        assert (costs[a] < costs[b]) == (fits[a] > fits[b])


def test_cached_cost_follows_matrix_identity():
    x = Chromosome([[0, 1]])
    cm1 = make_cm([(0, 0)], [(3, 4), (3, 0)])
    cm2 = make_cm([(3, 0)], [(3, 4), (3, 0)])
    assert evaluate_cost(x, cm1) == pytest.approx(9.0)
    assert x.cached_cost == pytest.approx(9.0)
    assert evaluate_cost(x, cm2) == pytest.approx(4.0 + 4.0)


def test_replace_returns_uncached_copy():
    cm = make_cm([(0, 0)], [(3, 4), (3, 0)])
    x = Chromosome([[0, 1]])
    evaluate_cost(x, cm)
    y = x.replace(0, (1, 0))
    assert y.cached_cost is None
    assert evaluate_cost(y, cm) == pytest.approx(3.0 + 4.0)
    assert evaluate_cost(x, cm) == pytest.approx(9.0)


def test_stale_task_reference_raises():
    cm = make_cm([(0, 0)], [(3, 4)])
    with pytest.raises(StaleTaskError):
        evaluate_cost(Chromosome([[0, 7]]), cm)


def test_appending_to_empty_route_adds_agent_leg():
    cm = make_cm([(0, 0), (10, 10)], [(3, 4), (10, 13)])
    x = Chromosome([[0], []])
    y = x.replace(1, (1,))
    assert evaluate_cost(y, cm) - evaluate_cost(x, cm) == pytest.approx(cm.agent_cost(1, 1))


def test_reversal_changes_cost_for_non_collinear_route():
    cm = make_cm([(0, 0)], [(1, 0), (5, 5), (0, 9)])
    assert evaluate_cost(Chromosome([[0, 1, 2]]), cm) != pytest.approx(
        evaluate_cost(Chromosome([[2, 1, 0]]), cm)
    )


def test_validate_ok():
    assert validate_chromosome(Chromosome([[1, 2], [3]]), {1, 2, 3}) is None


def test_validate_duplicate():
    report = validate_chromosome(Chromosome([[1, 2], [2]]), {1, 2})
    assert report and report.duplicated == {2}


def test_validate_unallocated():
    report = validate_chromosome(Chromosome([[1]]), {1, 2})
    assert report and report.unallocated == {2}
    assert "unallocated: [2]" in str(report)


def test_validate_unexpected():
    report = validate_chromosome(Chromosome([[1, 9]]), {1})
    assert report and report.unexpected == {9}


@settings(max_examples=200, deadline=None)
@given(instances(max_agents=4, max_tasks=12))
def test_valid_chromosome_places_each_task_once(inst):
    _, tasks, x = inst
    assert validate_chromosome(x, range(len(tasks))) is None
    flat = [t for r in x.routes for t in r]
    assert sorted(flat) == list(range(len(tasks)))


@settings(max_examples=200, deadline=None)
@given(instances(max_agents=4, max_tasks=8))
def test_cost_is_nonnegative_and_matches_coordinates(inst):
    agents, tasks, x = inst
    cm = make_cm(agents, tasks)
    expected = sum(
        path_length(Point(*agents[a]), [Point(*tasks[t]) for t in route])
        for a, route in enumerate(x.routes)
    )
    assert evaluate_cost(x, cm) >= 0
    assert evaluate_cost(x, cm) == pytest.approx(expected, rel=1e-9, abs=1e-9)


def test_task_lifecycle_is_one_way():
    t = Task(0, Point(0, 0), TaskStatus.PENDING, 5)
    t = t.advance(TaskStatus.ACTIVE).advance(TaskStatus.COMPLETED)
    with pytest.raises(ValueError):
        t.advance(TaskStatus.ACTIVE)
    with pytest.raises(ValueError):
        Task(1, Point(0, 0), TaskStatus.PENDING).advance(TaskStatus.COMPLETED)


def test_state_builds_matrix_over_active_tasks_only():
    state = make_state([(0, 0)], [(1, 0), (2, 0)])
    tasks = dict(state.tasks)
    tasks[5] = Task(5, Point(9, 9), TaskStatus.PENDING, 10)
    tasks[0] = tasks[0].advance(TaskStatus.COMPLETED)
    s2 = type(state)(state.agents, tasks, 3)
    assert s2.cost_matrix.task_ids == (1,)
    assert [t.id for t in s2.pending()] == [5]
    assert not s2.all_completed()


def test_nearest_agent_tie_goes_to_lower_id():
    cm = make_cm([(0, 0), (2, 0)], [(1, 0)])
    assert nearest_agent(cm, 0) == 0
    cm = make_cm([(2, 0), (0, 0)], [(1, 0)])
    assert nearest_agent(cm, 0) == 0


def test_nearest_allocation_matches_brute_force_scan():
    for seed in range(20):
        rng = random.Random(seed)
        agents, tasks, cm = random_instance(rng, 4, 15)
        x = nearest_allocation(cm)
        owner = x.owner_of()
        for t, p in enumerate(tasks):
            dists = [math.dist(p, a) for a in agents]
            assert owner[t] == dists.index(min(dists))
        assert all(list(r) == sorted(r) for r in x.routes)
