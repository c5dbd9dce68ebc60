"""Big-M mixed-integer model of the dispatching problem, emitted as LP text.

Variables (roles in parentheses):

- t{i}_{a} (start): continuous start time, bounded by the start window
  clipped to the horizon H.
- x{i}_{a} (select_op): 1 iff the operation is on the chosen route.
- y{i}_{a}_{b} (select_arc): 1 iff the route uses arc a->b. Unit flow from
  entry to exit selects one path per train; x is tied to the incident arcs.
- z{i}_{a}_{j}_{b} (precede): 1 iff operation a of train i hands a shared
  resource over to operation b of train j. For every shared resource and
  every successor a' of a there is a release row
  t(a') - t(b) <= -release + M(1-z); selected conflicting pairs must order
  themselves one way or the other. An operation with no successors never
  releases anything, so that direction's z is not created; the pair rows
  then force the other direction (or forbid selecting both ops when neither
  could yield).
- u{i}_{a} (rank): integer event position; ordering rows force u to respect
  selected arcs and handovers, so (t, u) sorts events into a feasible order
  even when times tie.
- v{c} (late_flag): 1 iff the component's operation starts at or after its
  threshold. w{c} (cost): the component's cost; the objective minimizes the
  sum of all w.

By default the cost rows are gated by x (off-route components cost nothing)
and the threshold rows are strict, so that for integral times v is forced to
1 exactly when t >= threshold, matching the verifier's cost. The
reference_objective option instead emits the classic ungated rows
(t - thr <= M v, w >= coeff*(t - thr) + increment*v) verbatim.

Start windows apply to unselected operations as well (their t is still
box-bounded); relaxed_bounds=True softens the upper bound to the horizon for
unselected operations via t <= ub + (H - ub) * (1 - x).

Route semantics: y is tied to x by the three pairwise inequalities, which
read route membership of both endpoints as arc use. That is exact when the
successor graph is transitively reduced (no arc a->b alongside a longer
a->..->b path), the shape every physical layout here produces; a route
visiting both ends of an unused skip arc has no model image. The verifier
and the search solvers have no such restriction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .core import (
    ConflictPair,
    Instance,
    Event,
    Solution,
    conflict_pairs,
    predecessors,
    shared_resources,
    time_horizon,
    total_operations,
)
from .verify import verify as _verify_solution

CONTINUOUS = "continuous"
BINARY = "binary"
INTEGER = "integer"

ROLE_START = "start"
ROLE_SELECT_OP = "select_op"
ROLE_SELECT_ARC = "select_arc"
ROLE_PRECEDE = "precede"
ROLE_RANK = "rank"
ROLE_LATE_FLAG = "late_flag"
ROLE_COST = "cost"

INCOMPLETE_ASSIGNMENT = "IncompleteAssignment"
NON_INTEGRAL_BINARY = "NonIntegralBinary"
FAILED_VERIFICATION = "FailedVerification"

BINARY_TOLERANCE = 1e-6


class MappingError(ValueError):
    """An external assignment that cannot be turned into a feasible solution."""

    def __init__(self, kind: str, message: str, verdict=None):
        super().__init__(message)
        self.kind = kind
        self.verdict = verdict


@dataclass(frozen=True)
class ModelOptions:
    reference_objective: bool = False
    relaxed_bounds: bool = False


@dataclass(frozen=True)
class Variable:
    name: str
    kind: str
    lb: int
    ub: int | None          # None = unbounded above
    role: str
    indices: tuple[int, ...]


@dataclass(frozen=True)
class Row:
    name: str
    terms: tuple[tuple[str, int], ...]
    sense: str               # "<=", ">=", "="
    rhs: int


@dataclass
class MilpModel:
    instance: Instance
    options: ModelOptions
    variables: list[Variable]
    rows: list[Row]
    objective: list[tuple[str, int]]
    horizon: int
    order_big_m: int
    by_name: dict[str, Variable] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.by_name:
            self.by_name = {v.name: v for v in self.variables}


def _t(i: int, a: int) -> str:
    return f"t{i}_{a}"


def _x(i: int, a: int) -> str:
    return f"x{i}_{a}"


def _y(i: int, a: int, b: int) -> str:
    return f"y{i}_{a}_{b}"


def _z(i: int, a: int, j: int, b: int) -> str:
    return f"z{i}_{a}_{j}_{b}"


def _u(i: int, a: int) -> str:
    return f"u{i}_{a}"


def build_model(instance: Instance,
                options: ModelOptions = ModelOptions()) -> MilpModel:
    """Construct all variables and rows. Deterministic: iteration follows
    train/operation/arc/pair index order throughout."""
    horizon = time_horizon(instance)
    n_ops = total_operations(instance)
    order_m = n_ops + 1
    variables: list[Variable] = []
    rows: list[Row] = []

    for i, train in enumerate(instance.trains):
        for a, op in enumerate(train.operations):
            ub = horizon if op.start_ub is None else min(op.start_ub, horizon)
            if options.relaxed_bounds and ub < horizon:
                # Bound row added later; the box keeps only the horizon.
                variables.append(Variable(_t(i, a), CONTINUOUS, op.start_lb,
                                          horizon, ROLE_START, (i, a)))
            else:
                variables.append(Variable(_t(i, a), CONTINUOUS, op.start_lb, ub,
                                          ROLE_START, (i, a)))
            variables.append(Variable(_x(i, a), BINARY, 0, 1, ROLE_SELECT_OP, (i, a)))
            variables.append(Variable(_u(i, a), INTEGER, 0, n_ops, ROLE_RANK, (i, a)))
    for i, train in enumerate(instance.trains):
        for a, op in enumerate(train.operations):
            for b in op.successors:
                variables.append(Variable(_y(i, a, b), BINARY, 0, 1,
                                          ROLE_SELECT_ARC, (i, a, b)))
    pairs = conflict_pairs(instance)

    def _can_release(i: int, a: int) -> bool:
        return bool(instance.trains[i].operations[a].successors)

    for p in pairs:
        if _can_release(p.train_a, p.op_a):
            variables.append(Variable(_z(p.train_a, p.op_a, p.train_b, p.op_b),
                                      BINARY, 0, 1, ROLE_PRECEDE,
                                      (p.train_a, p.op_a, p.train_b, p.op_b)))
        if _can_release(p.train_b, p.op_b):
            variables.append(Variable(_z(p.train_b, p.op_b, p.train_a, p.op_a),
                                      BINARY, 0, 1, ROLE_PRECEDE,
                                      (p.train_b, p.op_b, p.train_a, p.op_a)))
    for c, _comp in enumerate(instance.objective):
        variables.append(Variable(f"v{c}", BINARY, 0, 1, ROLE_LATE_FLAG, (c,)))
        variables.append(Variable(f"w{c}", CONTINUOUS, 0, None, ROLE_COST, (c,)))

    # Route selection: one unit of flow entry -> exit.
    for i, train in enumerate(instance.trains):
        n = len(train.operations)
        preds = predecessors(train)
        if n == 1:
            rows.append(Row(f"flow{i}_0", ((_x(i, 0), 1),), "=", 1))
            continue
        for a, op in enumerate(train.operations):
            in_terms = [(_y(i, p, a), 1) for p in preds[a]]
            out_terms = [(_y(i, a, b), 1) for b in op.successors]
            if a == 0:
                rows.append(Row(f"flow{i}_0", tuple(out_terms), "=", 1))
            elif a == n - 1:
                rows.append(Row(f"flow{i}_{a}", tuple(in_terms), "=", 1))
            else:
                terms = in_terms + [(name, -coef) for name, coef in out_terms]
                rows.append(Row(f"flow{i}_{a}", tuple(terms), "=", 0))
    # Arcs tie x to y and carry the running time.
    for i, train in enumerate(instance.trains):
        for a, op in enumerate(train.operations):
            for b in op.successors:
                y = _y(i, a, b)
                rows.append(Row(f"ya{i}_{a}_{b}", ((y, 1), (_x(i, a), -1)), "<=", 0))
                rows.append(Row(f"yb{i}_{a}_{b}", ((y, 1), (_x(i, b), -1)), "<=", 0))
                rows.append(Row(f"yf{i}_{a}_{b}",
                                ((_x(i, a), 1), (_x(i, b), 1), (y, -1)), "<=", 1))
                terms = [(_t(i, b), 1), (_t(i, a), -1)]
                if op.min_duration:
                    terms.append((y, -op.min_duration))
                rows.append(Row(f"dur{i}_{a}_{b}", tuple(terms), ">=", 0))
    # Resource handovers.
    resource_ids: dict[str, int] = {}
    for p in pairs:
        for resource, _ra, _rb in shared_resources(instance, p):
            resource_ids.setdefault(resource, len(resource_ids))
    for p in pairs:
        i, a, j, b = p
        directions: list[str] = []
        if _can_release(i, a):
            directions.append(_z(i, a, j, b))
        if _can_release(j, b):
            directions.append(_z(j, b, i, a))
        for resource, rel_a, rel_b in shared_resources(instance, p):
            rid = resource_ids[resource]
            if _can_release(i, a):
                z_ab = _z(i, a, j, b)
                for abar in instance.trains[i].operations[a].successors:
                    rows.append(Row(
                        f"rel{i}_{a}_{abar}_{j}_{b}_r{rid}",
                        ((_t(i, abar), 1), (_t(j, b), -1), (z_ab, horizon + rel_a)),
                        "<=", horizon))
            if _can_release(j, b):
                z_ba = _z(j, b, i, a)
                for bbar in instance.trains[j].operations[b].successors:
                    rows.append(Row(
                        f"rel{j}_{b}_{bbar}_{i}_{a}_r{rid}",
                        ((_t(j, bbar), 1), (_t(i, a), -1), (z_ba, horizon + rel_b)),
                        "<=", horizon))
        if directions:
            z_terms = [(name, 1) for name in directions]
            rows.append(Row(f"zxa{i}_{a}_{j}_{b}",
                            tuple(z_terms + [(_x(i, a), -1)]), "<=", 0))
            rows.append(Row(f"zxb{i}_{a}_{j}_{b}",
                            tuple(z_terms + [(_x(j, b), -1)]), "<=", 0))
        rows.append(Row(f"zf{i}_{a}_{j}_{b}",
                        tuple([(_x(i, a), 1), (_x(j, b), 1)]
                              + [(name, -1) for name in directions]),
                        "<=", 1))
    # Event ranks follow selected arcs and handovers.
    for i, train in enumerate(instance.trains):
        for a, op in enumerate(train.operations):
            for b in op.successors:
                rows.append(Row(f"ord{i}_{a}_{b}",
                                ((_u(i, a), 1), (_u(i, b), -1), (_y(i, a, b), order_m)),
                                "<=", order_m - 1))
    for p in pairs:
        i, a, j, b = p
        z_ab = _z(i, a, j, b)
        z_ba = _z(j, b, i, a)
        for abar in instance.trains[i].operations[a].successors:
            rows.append(Row(f"ordz{i}_{a}_{abar}_{j}_{b}",
                            ((_u(i, abar), 1), (_u(j, b), -1), (z_ab, order_m)),
                            "<=", order_m - 1))
        for bbar in instance.trains[j].operations[b].successors:
            rows.append(Row(f"ordz{j}_{b}_{bbar}_{i}_{a}",
                            ((_u(j, bbar), 1), (_u(i, a), -1), (z_ba, order_m)),
                            "<=", order_m - 1))
    # Delay costs.
    for c, comp in enumerate(instance.objective):
        t = _t(comp.train, comp.operation)
        x = _x(comp.train, comp.operation)
        v, w = f"v{c}", f"w{c}"
        if options.reference_objective:
            m_v = max(1, horizon - comp.threshold)
            rows.append(Row(f"thr{c}", ((t, 1), (v, -m_v)), "<=", comp.threshold))
            terms = [(w, 1), (v, -comp.increment)]
            if comp.coeff:
                terms.insert(1, (t, -comp.coeff))
            rows.append(Row(f"cost{c}", tuple(terms), ">=",
                            -comp.coeff * comp.threshold))
        else:
            # Strict threshold: for integral t, v is forced to 1 exactly when
            # t >= threshold (the step cost fires at equality).
            m_v = max(1, horizon - comp.threshold + 1)
            rows.append(Row(f"thr{c}", ((t, 1), (v, -m_v)), "<=", comp.threshold - 1))
            gate = comp.coeff * max(0, horizon - comp.threshold) + comp.increment
            terms = [(w, 1), (v, -comp.increment), (x, -gate)]
            if comp.coeff:
                terms.insert(1, (t, -comp.coeff))
            rows.append(Row(f"cost{c}", tuple(terms), ">=",
                            -comp.coeff * comp.threshold - gate))
    # Softened start_ub for unselected operations.
    if options.relaxed_bounds:
        for i, train in enumerate(instance.trains):
            for a, op in enumerate(train.operations):
                if op.start_ub is None:
                    continue
                ub = min(op.start_ub, horizon)
                if ub < horizon:
                    rows.append(Row(f"ub{i}_{a}",
                                    ((_t(i, a), 1), (_x(i, a), horizon - ub)),
                                    "<=", horizon))

    objective = [(f"w{c}", 1) for c in range(len(instance.objective))]
    return MilpModel(instance=instance, options=options, variables=variables,
                     rows=rows, objective=objective, horizon=horizon,
                     order_big_m=order_m)


# ---------------------------------------------------------------------------
# LP text


def _format_terms(terms: Sequence[tuple[str, int]]) -> str:
    parts: list[str] = []
    for name, coef in terms:
        if coef == 0:
            continue
        sign = "-" if coef < 0 else "+"
        mag = abs(coef)
        body = name if mag == 1 else f"{mag} {name}"
        if not parts:
            parts.append(f"- {body}" if coef < 0 else body)
        else:
            parts.append(f"{sign} {body}")
    return " ".join(parts) if parts else "0"


def _wrap(line: str, limit: int = 200) -> list[str]:
    if len(line) <= limit:
        return [line]
    out: list[str] = []
    words = line.split(" ")
    cur = words[0]
    for word in words[1:]:
        if len(cur) + 1 + len(word) > limit:
            out.append(cur)
            cur = "   " + word
        else:
            cur += " " + word
    out.append(cur)
    return out


def emit_lp(model: MilpModel) -> str:
    """Deterministic LP-format text for the model (integers only)."""
    lines: list[str] = []
    lines.append(f"\\ dispatching model: {len(model.instance.trains)} trains, "
                 f"{total_operations(model.instance)} operations, horizon {model.horizon}")
    lines.append("Minimize")
    if model.objective:
        lines.extend(_wrap(" obj: " + _format_terms(model.objective)))
    else:
        lines.append(" obj: 0")
    lines.append("Subject To")
    for row in model.rows:
        lines.extend(_wrap(f" {row.name}: {_format_terms(row.terms)} {row.sense} {row.rhs}"))
    lines.append("Bounds")
    for var in model.variables:
        if var.kind == BINARY:
            continue
        if var.kind == INTEGER:
            if var.lb != 0:
                lines.append(f" {var.lb} <= {var.name} <= {var.ub}")
            else:
                lines.append(f" {var.name} <= {var.ub}")
            continue
        # continuous
        if var.ub is None:
            if var.lb != 0:
                lines.append(f" {var.name} >= {var.lb}")
            continue
        if var.lb != 0:
            lines.append(f" {var.lb} <= {var.name} <= {var.ub}")
        else:
            lines.append(f" {var.name} <= {var.ub}")
    generals = [v.name for v in model.variables if v.kind == INTEGER]
    if generals:
        lines.append("Generals")
        lines.extend(_wrap(" " + " ".join(generals)))
    binaries = [v.name for v in model.variables if v.kind == BINARY]
    if binaries:
        lines.append("Binaries")
        lines.extend(_wrap(" " + " ".join(binaries)))
    lines.append("End")
    return "\n".join(lines) + "\n"


def name_map(model: MilpModel) -> dict:
    """JSON-ready sidecar mapping variable names to (role, indices) and back
    (the dict is keyed by name; roles plus indices identify the variable)."""
    return {
        "format": "displib-lp-name-map",
        "version": 1,
        "options": {
            "reference_objective": model.options.reference_objective,
            "relaxed_bounds": model.options.relaxed_bounds,
        },
        "horizon": model.horizon,
        "variables": {
            v.name: {"role": v.role, "kind": v.kind, "indices": list(v.indices)}
            for v in model.variables
        },
    }


# ---------------------------------------------------------------------------
# Assignments


def parse_assignment(text: str) -> dict[str, float]:
    """Parse `name value` lines ('#' comments and blank lines allowed),
    the shape of the usual solver solution dumps."""
    values: dict[str, float] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"line {lineno}: expected 'name value', got {raw!r}")
        try:
            values[parts[0]] = float(parts[1])
        except ValueError as e:
            raise ValueError(f"line {lineno}: bad number {parts[1]!r}") from e
    return values


def _near_int(value: float) -> int | None:
    r = round(value)
    if abs(value - r) <= BINARY_TOLERANCE:
        return int(r)
    return None


def map_solution(model: MilpModel, assignment: Mapping[str, float],
                 instance: Instance) -> Solution:
    """Turn a full variable assignment into a verified Solution.

    Events are the x=1 operations ordered by (t, u); the claimed objective is
    the rounded sum of the cost variables. The result is verified before it
    is returned; anything infeasible raises MappingError with the verdict.
    """
    for var in model.variables:
        if var.name not in assignment:
            raise MappingError(INCOMPLETE_ASSIGNMENT,
                               f"assignment is missing variable {var.name}")
    picked: list[tuple[int, int, int, int]] = []  # (t, u, train, op)
    for var in model.variables:
        if var.kind in (BINARY, INTEGER):
            r = _near_int(assignment[var.name])
            if r is None or (var.kind == BINARY and r not in (0, 1)):
                raise MappingError(NON_INTEGRAL_BINARY,
                                   f"variable {var.name} = {assignment[var.name]} "
                                   f"is not integral")
    for var in model.variables:
        if var.role == ROLE_SELECT_OP and _near_int(assignment[var.name]) == 1:
            i, a = var.indices
            t = int(round(assignment[_t(i, a)]))
            u = int(round(assignment[_u(i, a)]))
            picked.append((t, u, i, a))
    picked.sort()
    total = 0.0
    for name, coef in model.objective:
        total += coef * assignment[name]
    solution = Solution(
        objective_value=int(round(total)),
        events=tuple(Event(time=t, train=i, operation=a) for t, u, i, a in picked))
    verdict = _verify_solution(instance, solution)
    if not verdict.feasible:
        first = verdict.violations[0]
        raise MappingError(FAILED_VERIFICATION,
                           f"mapped events are not a feasible solution: {first.detail}",
                           verdict=verdict)
    return solution


def solution_assignment(model: MilpModel, instance: Instance,
                        solution: Solution) -> dict[str, float]:
    """Witness assignment for a feasible solution (warm starts, model checks).

    Selected operations take their event times and event positions; times of
    unselected operations are pushed up from their predecessors so running
    rows hold, ranks likewise. The sum of the cost variables equals the
    solution's objective in the default model (gated costs); with
    reference_objective the off-route cost variables may exceed it.
    """
    on_route: dict[tuple[int, int], tuple[int, int]] = {}
    for pos, ev in enumerate(solution.events):
        on_route[(ev.train, ev.operation)] = (ev.time, pos)
    values: dict[str, float] = {}
    t_vals: dict[tuple[int, int], int] = {}
    u_vals: dict[tuple[int, int], int] = {}
    for i, train in enumerate(instance.trains):
        preds = predecessors(train)
        route_ops = {a for (j, a) in on_route if j == i}
        for a, op in enumerate(train.operations):
            sel = (i, a) in on_route
            values[_x(i, a)] = 1.0 if sel else 0.0
            if sel:
                t_vals[(i, a)], u_vals[(i, a)] = on_route[(i, a)]
            else:
                t = op.start_lb
                u = 0
                for p in preds[a]:
                    arc_used = (p in route_ops and a in route_ops
                                and _consecutive(solution, i, p, a))
                    dur = train.operations[p].min_duration if arc_used else 0
                    t = max(t, t_vals[(i, p)] + dur)
                    u = max(u, u_vals[(i, p)] + (1 if arc_used else 0))
                t_vals[(i, a)] = t
                u_vals[(i, a)] = u
            values[_t(i, a)] = float(t_vals[(i, a)])
            values[_u(i, a)] = float(u_vals[(i, a)])
        # arcs: consecutive route pairs
        for a, op in enumerate(train.operations):
            for b in op.successors:
                used = (a in route_ops and b in route_ops
                        and _consecutive(solution, i, a, b))
                values[_y(i, a, b)] = 1.0 if used else 0.0
    for p in conflict_pairs(instance):
        i, a, j, b = p
        z_ab = z_ba = 0.0
        if (i, a) in on_route and (j, b) in on_route:
            if on_route[(i, a)][1] < on_route[(j, b)][1]:
                z_ab = 1.0
            else:
                z_ba = 1.0
        # A direction without successors has no z variable; a feasible
        # solution never claims in that order anyway.
        if instance.trains[i].operations[a].successors:
            values[_z(i, a, j, b)] = z_ab
        if instance.trains[j].operations[b].successors:
            values[_z(j, b, i, a)] = z_ba
    for c, comp in enumerate(instance.objective):
        t = t_vals[(comp.train, comp.operation)]
        late = 1.0 if t >= comp.threshold else 0.0
        values[f"v{c}"] = late
        if (comp.train, comp.operation) in on_route:
            cost = comp.coeff * max(0, t - comp.threshold) \
                + (comp.increment if t >= comp.threshold else 0)
        elif model.options.reference_objective:
            cost = max(0, comp.coeff * (t - comp.threshold)
                       + (comp.increment if t >= comp.threshold else 0))
        else:
            cost = 0
        values[f"w{c}"] = float(cost)
    return values


def _consecutive(solution: Solution, train: int, a: int, b: int) -> bool:
    prev = None
    for ev in solution.events:
        if ev.train != train:
            continue
        if prev == a and ev.operation == b:
            return True
        prev = ev.operation
    return False
