"""Mixed-integer model: variable and row layout, LP text, assignment
round-trips, and end-to-end agreement with the exact search."""

from __future__ import annotations

import random
import re

import pytest

import oracles
from builders import random_reduced_instance
from conftest import data_text
from lp_reader import read_lp, solve_lp
from displib.core import (
    ObjectiveComponent,
    Operation,
    ResourceUsage,
    Solution,
    build_instance,
)
from displib.milp import (
    FAILED_VERIFICATION,
    INCOMPLETE_ASSIGNMENT,
    NON_INTEGRAL_BINARY,
    MappingError,
    ModelOptions,
    build_model,
    emit_lp,
    map_solution,
    name_map,
    parse_assignment,
    solution_assignment,
)
from displib.solve import SolveStatus, solve_exact
from displib.verify import verify

NAME_RE = re.compile(r"^[A-Za-z][A-Za-z0-9_]*$")


def roles_count(model) -> dict[str, int]:
    counts: dict[str, int] = {}
    for v in model.variables:
        counts[v.role] = counts.get(v.role, 0) + 1
    return counts


def row_prefix_count(model) -> dict[str, int]:
    counts: dict[str, int] = {}
    for row in model.rows:
        prefix = re.match(r"[a-z]+", row.name).group(0)
        counts[prefix] = counts.get(prefix, 0) + 1
    return counts


class TestJunctionModel:
    def test_variable_layout(self, junction):
        model = build_model(junction)
        assert len(model.variables) == 33
        assert roles_count(model) == {
            "start": 7, "select_op": 7, "rank": 7,
            "select_arc": 6, "precede": 4, "late_flag": 1, "cost": 1,
        }
        assert model.horizon == 25
        assert model.order_big_m == 8
        assert model.objective == [("w0", 1)]

    def test_row_layout(self, junction):
        model = build_model(junction)
        assert len(model.rows) == 55
        assert row_prefix_count(model) == {
            "flow": 7, "ya": 6, "yb": 6, "yf": 6, "dur": 6,
            "rel": 5, "zxa": 2, "zxb": 2, "zf": 2,
            "ord": 6, "ordz": 5, "thr": 1, "cost": 1,
        }

    def test_strict_threshold_rows(self, junction):
        model = build_model(junction)
        by_name = {row.name: row for row in model.rows}
        thr = by_name["thr0"]
        assert thr.terms == (("t1_2", 1), ("v0", -26))
        assert thr.sense == "<=" and thr.rhs == -1
        cost = by_name["cost0"]
        assert cost.terms == (("w0", 1), ("t1_2", -1), ("v0", 0), ("x1_2", -25))
        assert cost.sense == ">=" and cost.rhs == -25

    def test_reference_objective_rows(self, junction):
        model = build_model(junction, ModelOptions(reference_objective=True))
        by_name = {row.name: row for row in model.rows}
        thr = by_name["thr0"]
        assert thr.terms == (("t1_2", 1), ("v0", -25))
        assert thr.sense == "<=" and thr.rhs == 0
        cost = by_name["cost0"]
        assert cost.terms == (("w0", 1), ("t1_2", -1), ("v0", 0))
        assert cost.sense == ">=" and cost.rhs == 0

    def test_relaxed_bounds(self, junction):
        model = build_model(junction, ModelOptions(relaxed_bounds=True))
        t00 = model.by_name["t0_0"]
        assert t00.ub == model.horizon
        by_name = {row.name: row for row in model.rows}
        ub = by_name["ub0_0"]
        assert ub.terms == (("t0_0", 1), ("x0_0", 25))
        assert ub.sense == "<=" and ub.rhs == 25
        assert "ub1_0" in by_name
        # Only pinned entries have finite windows in this instance.
        assert sum(1 for name in by_name if name.startswith("ub")) == 2

    def test_golden_lp_text(self, junction):
        assert emit_lp(build_model(junction)) == data_text("junction.lp")

    def test_emit_is_deterministic(self, junction):
        a = emit_lp(build_model(junction))
        b = emit_lp(build_model(junction))
        assert a == b

    def test_names_are_lp_safe(self, junction):
        model = build_model(junction)
        for v in model.variables:
            assert NAME_RE.match(v.name) and len(v.name) <= 255
        for row in model.rows:
            assert NAME_RE.match(row.name) and len(row.name) <= 255


class TestModelShapes:
    def test_single_operation_train(self):
        instance = build_instance([[Operation(0, ())]])
        model = build_model(instance)
        assert [v.name for v in model.variables] == ["t0_0", "x0_0", "u0_0"]
        assert len(model.rows) == 1
        row = model.rows[0]
        assert row.name == "flow0_0"
        assert row.terms == (("x0_0", 1),) and row.sense == "=" and row.rhs == 1
        text = emit_lp(model)
        assert " obj: 0\n" in text
        problem = read_lp(text)
        assert problem.rows[0][0] == "flow0_0"

    def test_disjoint_resources_have_no_orderings(self):
        a = [Operation(1, (1,), resources=(ResourceUsage("A"),)),
             Operation(0, ())]
        b = [Operation(1, (1,), resources=(ResourceUsage("B"),)),
             Operation(0, ())]
        model = build_model(build_instance([a, b]))
        assert not [v for v in model.variables if v.role == "precede"]
        prefixes = row_prefix_count(model)
        for name in ("rel", "zxa", "zxb", "zf", "ordz"):
            assert name not in prefixes

    def test_start_window_is_the_box_bound(self):
        ops = [Operation(1, (1,), start_ub=10 ** 6), Operation(0, ())]
        model = build_model(build_instance([ops]))
        assert model.by_name["t0_0"].ub == 10 ** 6
        assert model.horizon >= 10 ** 6

    def test_exit_holder_keeps_resource_forever(self):
        # Train 1's exit holds R, so only "train 0 hands over to train 1"
        # exists as an ordering; the reverse would never release.
        t0 = [Operation(1, (1,), resources=(ResourceUsage("R"),)),
              Operation(0, ())]
        t1 = [Operation(1, (1,)),
              Operation(0, (), resources=(ResourceUsage("R"),))]
        instance = build_instance([t0, t1])
        model = build_model(instance)
        z_names = [v.name for v in model.variables if v.role == "precede"]
        assert z_names == ["z0_0_1_1"]
        by_name = {row.name: row for row in model.rows}
        assert by_name["zf0_0_1_1"].terms == (
            ("x0_0", 1), ("x1_1", 1), ("z0_0_1_1", -1))
        status, objective, assignment = solve_lp(emit_lp(model))
        assert status == "optimal"
        mapped = map_solution(model, assignment, instance)
        assert verify(instance, mapped).feasible

    def test_two_exit_holders_are_infeasible(self):
        def train():
            return [Operation(1, (1,)),
                    Operation(0, (), resources=(ResourceUsage("R"),))]
        instance = build_instance([train(), train()])
        assert solve_exact(instance).status is SolveStatus.INFEASIBLE
        model = build_model(instance)
        assert not [v for v in model.variables if v.role == "precede"]
        by_name = {row.name: row for row in model.rows}
        zf = by_name["zf0_1_1_1"]
        assert zf.terms == (("x0_1", 1), ("x1_1", 1))
        assert zf.sense == "<=" and zf.rhs == 1
        status, _, _ = solve_lp(emit_lp(model))
        assert status == "infeasible"


class TestNameMap:
    def test_schema(self, junction):
        model = build_model(junction)
        doc = name_map(model)
        assert doc["format"] == "displib-lp-name-map"
        assert doc["version"] == 1
        assert doc["options"] == {"reference_objective": False,
                                  "relaxed_bounds": False}
        assert doc["horizon"] == 25
        assert set(doc["variables"]) == {v.name for v in model.variables}
        entry = doc["variables"]["z0_0_1_1"]
        assert entry == {"role": "precede", "kind": "binary",
                         "indices": [0, 0, 1, 1]}

    def test_options_round_trip(self, junction):
        options = ModelOptions(reference_objective=True, relaxed_bounds=True)
        doc = name_map(build_model(junction, options))
        assert doc["options"] == {"reference_objective": True,
                                  "relaxed_bounds": True}


class TestParseAssignment:
    def test_values_and_comments(self):
        text = "# header\n\nx0_0 1\nt0_0 4.5\n  w0   10  \n"
        assert parse_assignment(text) == {"x0_0": 1.0, "t0_0": 4.5, "w0": 10.0}

    def test_bad_shape_reports_line(self):
        with pytest.raises(ValueError, match="line 2"):
            parse_assignment("x0_0 1\nx0_0 1 2\n")

    def test_bad_number_reports_line(self):
        with pytest.raises(ValueError, match="line 1"):
            parse_assignment("x0_0 one\n")


class TestSolutionAssignment:
    def test_golden_satisfies_every_row(self, junction, junction_solution):
        model = build_model(junction)
        values = solution_assignment(model, junction, junction_solution)
        assert oracles.violated_rows(model, values) == []
        for var in model.variables:
            value = values[var.name]
            assert value >= var.lb
            if var.ub is not None:
                assert value <= var.ub

    def test_golden_round_trips_through_mapping(self, junction,
                                                junction_solution):
        model = build_model(junction)
        values = solution_assignment(model, junction, junction_solution)
        mapped = map_solution(model, values, junction)
        assert mapped.objective_value == 10
        assert mapped.events == junction_solution.events

    def test_random_solutions_satisfy_all_rows(self):
        rng = random.Random(13)
        checked = 0
        for _ in range(25):
            instance = random_reduced_instance(rng, max_trains=3, max_ops=5)
            report = solve_exact(instance, node_limit=100_000)
            if report.solution is None:
                continue
            for options in (ModelOptions(), ModelOptions(relaxed_bounds=True)):
                model = build_model(instance, options)
                values = solution_assignment(model, instance, report.solution)
                assert oracles.violated_rows(model, values) == []
            checked += 1
        assert checked > 12


class TestMapSolution:
    def test_missing_variable(self, junction, junction_solution):
        model = build_model(junction)
        values = solution_assignment(model, junction, junction_solution)
        del values["u1_2"]
        with pytest.raises(MappingError) as exc:
            map_solution(model, values, junction)
        assert exc.value.kind == INCOMPLETE_ASSIGNMENT

    def test_fractional_binary(self, junction, junction_solution):
        model = build_model(junction)
        values = solution_assignment(model, junction, junction_solution)
        values["x0_1"] = 0.5
        with pytest.raises(MappingError) as exc:
            map_solution(model, values, junction)
        assert exc.value.kind == NON_INTEGRAL_BINARY

    def test_infeasible_assignment_carries_verdict(self, junction,
                                                   junction_solution):
        model = build_model(junction)
        values = solution_assignment(model, junction, junction_solution)
        values["t1_1"] = 0.0  # claims L while train 0 still holds it
        with pytest.raises(MappingError) as exc:
            map_solution(model, values, junction)
        assert exc.value.kind == FAILED_VERIFICATION
        assert exc.value.verdict is not None
        assert not exc.value.verdict.feasible

    def test_near_integral_values_are_rounded(self, junction,
                                              junction_solution):
        model = build_model(junction)
        values = solution_assignment(model, junction, junction_solution)
        values["x0_2"] = 1.0 - 1e-9
        values["u0_2"] = 2.0 + 1e-9
        mapped = map_solution(model, values, junction)
        assert mapped.objective_value == 10


class TestExternalSolver:
    def test_junction_end_to_end(self, junction):
        model = build_model(junction)
        status, objective, assignment = solve_lp(emit_lp(model))
        assert status == "optimal"
        assert round(objective) == 10
        mapped = map_solution(model, assignment, junction)
        verdict = verify(junction, mapped)
        assert verdict.feasible and verdict.computed_objective == 10

    def test_reference_objective_agrees(self, junction):
        model = build_model(junction, ModelOptions(reference_objective=True))
        status, objective, assignment = solve_lp(emit_lp(model))
        assert status == "optimal"
        assert round(objective) == 10

    def test_windowed_alternative_needs_relaxed_bounds(self):
        # A start window on a routing alternative: the running-time row
        # pushes the unselected operation past its box, so the default model
        # has no image of the (perfectly feasible) schedule around it. The
        # relaxed_bounds option softens exactly that box.
        ops = [Operation(5, (1, 2), start_lb=5),
               Operation(0, (3,), start_ub=0),
               Operation(0, (3,)),
               Operation(0, ())]
        instance = build_instance([ops])
        assert solve_exact(instance).status is SolveStatus.OPTIMAL
        status, _, _ = solve_lp(emit_lp(build_model(instance)))
        assert status == "infeasible"
        relaxed = build_model(instance, ModelOptions(relaxed_bounds=True))
        status, objective, assignment = solve_lp(emit_lp(relaxed))
        assert status == "optimal"
        mapped = map_solution(relaxed, assignment, instance)
        assert verify(instance, mapped).feasible

    def test_matches_exact_search(self):
        rng = random.Random(29)
        agreed = 0
        for _ in range(15):
            instance = random_reduced_instance(rng, max_trains=3, max_ops=5)
            exact = solve_exact(instance, node_limit=100_000)
            model = build_model(instance)
            status, objective, assignment = solve_lp(emit_lp(model),
                                                     time_limit=30)
            if exact.status is SolveStatus.INFEASIBLE:
                assert status == "infeasible"
                continue
            if exact.status is not SolveStatus.OPTIMAL:
                continue
            assert status == "optimal"
            assert round(objective) == exact.solution.objective_value
            mapped = map_solution(model, assignment, instance)
            assert verify(instance, mapped).feasible
            assert mapped.objective_value == exact.solution.objective_value
            agreed += 1
        assert agreed > 8
