"""Schedulers: fixed-order evaluation, exact branch and bound against the
brute-force reference, and the greedy heuristic."""

from __future__ import annotations

import random

import pytest

import oracles
from builders import random_instance
from displib.core import (
    Instance,
    ObjectiveComponent,
    Operation,
    ResourceUsage,
    build_instance,
)
from displib.solve import (
    SolveStatus,
    earliest_times,
    order_objective,
    solve_exact,
    solve_heuristic,
)
from displib.verify import verify

GOLDEN_ROUTES = [[0, 2, 3], [0, 1, 2]]
GOLDEN_ORDER = [(0, 0), (1, 0), (0, 2), (1, 1), (1, 2), (0, 3)]


def chain(*durations, resources=(), lb=0, ub=None):
    ops = []
    for k, d in enumerate(durations):
        succ = (k + 1,) if k + 1 < len(durations) else ()
        ops.append(Operation(d, succ))
    if lb or ub is not None:
        ops[0] = Operation(ops[0].min_duration, ops[0].successors,
                           start_lb=lb, start_ub=ub, resources=resources)
    elif resources:
        ops[0] = Operation(ops[0].min_duration, ops[0].successors,
                           resources=resources)
    return ops


def pinned_crossing() -> Instance:
    """Two trains forced to start at 0 on the same resource: no schedule."""
    def train():
        return [Operation(5, (1,), start_ub=0,
                          resources=(ResourceUsage("A"),)),
                Operation(0, ())]
    return build_instance([train(), train()])


class TestEarliestTimes:
    def test_golden_order(self, junction):
        times = earliest_times(junction, GOLDEN_ROUTES, GOLDEN_ORDER)
        assert times == [0, 0, 5, 5, 10, 10]
        assert order_objective(junction, GOLDEN_ORDER, times) == 10

    def test_blocked_order_returns_none(self, junction):
        # Train 1 tries to enter L while train 0 still holds it.
        order = [(0, 0), (1, 0), (1, 1), (0, 2), (1, 2), (0, 3)]
        assert earliest_times(junction, GOLDEN_ROUTES, order) is None

    def test_deadlocked_route_pair(self, junction):
        # With train 0 routed over R1 both trains start pinned at 0 and each
        # waits on the resource the other holds; no order can schedule this.
        order = [(0, 0), (1, 0), (0, 1), (1, 1), (1, 2), (0, 3)]
        assert earliest_times(junction, [[0, 1, 3], [0, 1, 2]], order) is None

    def test_reordered_exit_events(self, junction):
        order = [(1, 0), (0, 0), (0, 2), (1, 1), (0, 3), (1, 2)]
        times = earliest_times(junction, GOLDEN_ROUTES, order)
        assert times == [0, 0, 5, 5, 10, 10]
        assert order_objective(junction, order, times) == 10

    def test_single_chain(self):
        instance = build_instance([chain(5, 5, 0)])
        times = earliest_times(instance, [[0, 1, 2]],
                               [(0, 0), (0, 1), (0, 2)])
        assert times == [0, 5, 10]

    def test_start_lb_pushes_later_events(self):
        instance = build_instance([chain(2, 0, lb=7)])
        times = earliest_times(instance, [[0, 1]], [(0, 0), (0, 1)])
        assert times == [7, 9]

    def test_route_errors(self, junction):
        with pytest.raises(ValueError):
            earliest_times(junction, [[0, 1, 2]], GOLDEN_ORDER)
        with pytest.raises(ValueError):
            earliest_times(junction, [GOLDEN_ROUTES[0]], GOLDEN_ORDER)

    def test_order_errors(self, junction):
        with pytest.raises(ValueError):
            earliest_times(junction, GOLDEN_ROUTES, GOLDEN_ORDER[:-1])
        bad = [(0, 0), (1, 0), (1, 1), (0, 2), (1, 2), (0, 2)]
        with pytest.raises(ValueError):
            earliest_times(junction, GOLDEN_ROUTES, bad)
        with pytest.raises(ValueError):
            earliest_times(junction, GOLDEN_ROUTES, [(2, 0)] + GOLDEN_ORDER)

    def test_minimality(self):
        """Every scheduled time sits on a constraint floor: lowering any
        single event by one step always breaks feasibility."""
        rng = random.Random(23)
        checked = 0
        for _ in range(30):
            instance = random_instance(rng, max_trains=3, max_ops=5)
            report = solve_exact(instance, node_limit=200_000)
            if report.solution is None:
                continue
            solution = report.solution
            assert verify(instance, solution).feasible
            for k, ev in enumerate(solution.events):
                lowered = list(solution.events)
                lowered[k] = type(ev)(ev.time - 1, ev.train, ev.operation)
                mutant = type(solution)(solution.objective_value,
                                        tuple(lowered))
                assert not verify(instance, mutant).feasible
                checked += 1
        assert checked > 50


class TestSolveExact:
    def test_junction_optimal(self, junction):
        report = solve_exact(junction)
        assert report.status is SolveStatus.OPTIMAL
        assert report.solution is not None
        assert report.solution.objective_value == 10
        assert report.bound == 10
        assert report.nodes > 0
        verdict = verify(junction, report.solution)
        assert verdict.feasible and verdict.computed_objective == 10

    def test_single_chain_with_cost(self):
        comp = ObjectiveComponent(0, 2, threshold=0, coeff=1)
        instance = build_instance([chain(5, 5, 0)], [comp])
        report = solve_exact(instance)
        assert report.status is SolveStatus.OPTIMAL
        assert report.solution.objective_value == 10

    def test_infeasible_crossing(self):
        report = solve_exact(pinned_crossing())
        assert report.status is SolveStatus.INFEASIBLE
        assert report.solution is None
        assert report.bound is None

    def test_budget_never_claims_certainty(self, junction):
        report = solve_exact(junction, node_limit=1)
        assert report.status in (SolveStatus.FEASIBLE,
                                 SolveStatus.TIMEOUT_NO_SOLUTION)
        assert report.bound is not None
        assert report.bound <= 10

    def test_deterministic(self, junction):
        assert solve_exact(junction).same_outcome(solve_exact(junction))

    def test_threads_agree_on_value(self, junction):
        single = solve_exact(junction)
        multi = solve_exact(junction, threads=2)
        assert multi.status is SolveStatus.OPTIMAL
        assert multi.solution.objective_value == single.solution.objective_value

    def test_matches_brute_force(self):
        rng = random.Random(7)
        optima = 0
        infeasible = 0
        for _ in range(50):
            instance = random_instance(rng, max_trains=3, max_ops=6)
            expected = oracles.brute_force_optimum(instance)
            report = solve_exact(instance)
            if expected is None:
                assert report.status is SolveStatus.INFEASIBLE
                infeasible += 1
            else:
                assert report.status is SolveStatus.OPTIMAL
                assert report.solution.objective_value == expected[0]
                assert verify(instance, report.solution).feasible
                optima += 1
        assert optima >= 30
        assert infeasible >= 2


class TestSolveHeuristic:
    def test_junction(self, junction):
        report = solve_heuristic(junction)
        assert report.status is SolveStatus.FEASIBLE
        verdict = verify(junction, report.solution)
        assert verdict.feasible
        assert report.solution.objective_value == 10

    def test_never_claims_optimality(self, junction):
        assert solve_heuristic(junction).status is not SolveStatus.OPTIMAL

    def test_infeasible_instance_times_out(self):
        report = solve_heuristic(pinned_crossing(), max_restarts=3)
        assert report.status is SolveStatus.TIMEOUT_NO_SOLUTION
        assert report.solution is None

    def test_unconstrained_train_runs_at_earliest_times(self):
        comp = ObjectiveComponent(0, 2, threshold=0, coeff=1)
        instance = build_instance([chain(5, 5, 0)], [comp])
        report = solve_heuristic(instance)
        assert report.status is SolveStatus.FEASIBLE
        assert [e.time for e in report.solution.events] == [0, 5, 10]

    def test_seed_determinism(self, junction):
        a = solve_heuristic(junction, seed=3)
        b = solve_heuristic(junction, seed=3)
        assert a.same_outcome(b)

    def test_solutions_always_verify(self):
        rng = random.Random(91)
        produced = 0
        for _ in range(40):
            instance = random_instance(rng, max_trains=4, max_ops=6)
            report = solve_heuristic(instance, max_restarts=3)
            if report.solution is None:
                continue
            verdict = verify(instance, report.solution)
            assert verdict.feasible
            assert verdict.computed_objective == report.solution.objective_value
            produced += 1
        assert produced > 20

    def test_never_beats_the_optimum(self):
        rng = random.Random(5)
        compared = 0
        for _ in range(25):
            instance = random_instance(rng, max_trains=3, max_ops=5)
            exact = solve_exact(instance)
            if exact.status is not SolveStatus.OPTIMAL:
                continue
            heur = solve_heuristic(instance, max_restarts=4)
            if heur.solution is None:
                continue
            assert heur.solution.objective_value >= exact.solution.objective_value
            compared += 1
        assert compared > 15

    def test_time_limit_returns_promptly(self, junction):
        report = solve_heuristic(junction, time_limit=0.05)
        assert report.wall_time < 5.0
        assert report.status in (SolveStatus.FEASIBLE,
                                 SolveStatus.TIMEOUT_NO_SOLUTION)
