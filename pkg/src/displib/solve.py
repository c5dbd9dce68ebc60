"""Schedulers: earliest-times evaluation, exact search, greedy heuristic.

All three share the same incremental dispatch model. A partial schedule is a
prefix of the event list; appending an operation fixes its start time as the
maximum of the chronological floor (times never decrease along the list),
its start_lb, the end of the train's previous operation, and the release
stamps of its resources. Times of already appended events never change,
because every constraint arc points forward in the event order.

Resource bookkeeping per resource: who holds it now (claims of the holding
train's latest operation are still open), and the two latest release stamps
from distinct trains (a train is never delayed by its own release times, so
the binding stamp for train i is the best stamp owned by some other train).
"""

from __future__ import annotations

import random
import threading
import time as _time
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

from .core import Instance, Event, Solution, Train, is_route
from .verify import evaluate_objective

_INF = float("inf")


class SolveStatus(str, Enum):
    OPTIMAL = "Optimal"
    FEASIBLE = "Feasible"
    INFEASIBLE = "Infeasible"
    TIMEOUT_NO_SOLUTION = "TimeoutNoSolution"


@dataclass
class SolveReport:
    status: SolveStatus
    solution: Solution | None
    nodes: int
    wall_time: float
    bound: int | None = None

    def same_outcome(self, other: "SolveReport") -> bool:
        """Equality modulo wall time (for determinism checks)."""
        return (self.status == other.status and self.solution == other.solution
                and self.nodes == other.nodes and self.bound == other.bound)


def _component_value(coeff: int, increment: int, threshold: int, t: int) -> int:
    if t >= threshold:
        return coeff * (t - threshold) + increment
    return 0


class _ResourceState:
    """Holder plus the two best release stamps from distinct trains."""
    __slots__ = ("holder", "count", "stamp1", "train1", "stamp2")

    def __init__(self) -> None:
        self.holder: int | None = None
        self.count = 0
        self.stamp1 = 0          # best stamp
        self.train1: int | None = None
        self.stamp2 = 0          # best stamp from a train other than train1

    def snapshot(self):
        return (self.holder, self.count, self.stamp1, self.train1, self.stamp2)

    def restore(self, snap) -> None:
        self.holder, self.count, self.stamp1, self.train1, self.stamp2 = snap

    def ready_for(self, train: int) -> int:
        return self.stamp2 if self.train1 == train else self.stamp1

    def add_stamp(self, stamp: int, train: int) -> None:
        if train == self.train1:
            if stamp > self.stamp1:
                self.stamp1 = stamp
        elif stamp >= self.stamp1:
            if self.train1 is not None and self.stamp1 > self.stamp2:
                self.stamp2 = self.stamp1
            self.stamp1, self.train1 = stamp, train
        elif stamp > self.stamp2:
            self.stamp2 = stamp


_OK, _BLOCKED, _DEAD = 0, 1, 2


class _Dispatcher:
    """Mutable partial schedule with O(1)-ish append and exact undo."""

    def __init__(self, instance: Instance):
        self.instance = instance
        self.trains = instance.trains
        self.n_trains = len(instance.trains)
        self.last_op: list[int | None] = [None] * self.n_trains
        self.last_time = [0] * self.n_trains
        self.ended = [False] * self.n_trains
        self.n_ended = 0
        self.floor = 0
        self.events: list[tuple[int, int, int]] = []  # (time, train, op)
        self.res: dict[str, _ResourceState] = {}
        self.z_partial = 0
        self.comps_by_op: dict[tuple[int, int], list] = {}
        for comp in instance.objective:
            self.comps_by_op.setdefault((comp.train, comp.operation), []).append(comp)

    def done(self) -> bool:
        return self.n_ended == self.n_trains

    def candidates(self, train: int) -> tuple[int, ...]:
        last = self.last_op[train]
        if last is None:
            return (0,)
        return self.trains[train].operations[last].successors

    def probe(self, train: int, op: int) -> tuple[int, int]:
        """(status, earliest start). BLOCKED may clear later; DEAD (start_ub
        exceeded) is permanent because every term of the time only grows."""
        o = self.trains[train].operations[op]
        t = self.floor
        if o.start_lb > t:
            t = o.start_lb
        last = self.last_op[train]
        if last is not None:
            pt = self.last_time[train] + self.trains[train].operations[last].min_duration
            if pt > t:
                t = pt
        for usage in o.resources:
            rs = self.res.get(usage.resource)
            if rs is None:
                continue
            if rs.count and rs.holder != train:
                return _BLOCKED, 0
            s = rs.ready_for(train)
            if s > t:
                t = s
        if o.start_ub is not None and t > o.start_ub:
            return _DEAD, t
        return _OK, t

    def apply(self, train: int, op: int, t: int):
        """Append the start of (train, op) at time t; returns an undo token."""
        trains = self.trains
        snaps: list[tuple[str, tuple]] = []
        touched: set[str] = set()
        last = self.last_op[train]
        if last is not None:
            for usage in trains[train].operations[last].resources:
                rs = self.res[usage.resource]
                if usage.resource not in touched:
                    snaps.append((usage.resource, rs.snapshot()))
                    touched.add(usage.resource)
                rs.count -= 1
                if rs.count == 0:
                    rs.holder = None
                rs.add_stamp(t + usage.release_time, train)
        o = trains[train].operations[op]
        for usage in o.resources:
            rs = self.res.get(usage.resource)
            if rs is None:
                rs = self.res[usage.resource] = _ResourceState()
            if usage.resource not in touched:
                snaps.append((usage.resource, rs.snapshot()))
                touched.add(usage.resource)
            rs.holder = train
            rs.count += 1
        z_delta = 0
        for comp in self.comps_by_op.get((train, op), ()):
            z_delta += _component_value(comp.coeff, comp.increment, comp.threshold, t)
        token = (train, self.last_op[train], self.last_time[train], self.floor,
                 snaps, z_delta, self.ended[train])
        self.last_op[train] = op
        self.last_time[train] = t
        self.floor = t
        self.events.append((t, train, op))
        self.z_partial += z_delta
        if not o.successors:
            self.ended[train] = True
            self.n_ended += 1
        return token

    def undo(self, token) -> None:
        train, prev_op, prev_time, prev_floor, snaps, z_delta, was_ended = token
        if self.ended[train] and not was_ended:
            self.ended[train] = False
            self.n_ended -= 1
        self.z_partial -= z_delta
        self.events.pop()
        self.floor = prev_floor
        self.last_op[train] = prev_op
        self.last_time[train] = prev_time
        for resource, snap in snaps:
            self.res[resource].restore(snap)

    def to_solution(self) -> Solution:
        events = tuple(Event(time=t, train=i, operation=o) for t, i, o in self.events)
        return Solution(objective_value=self.z_partial, events=events)


def earliest_times(instance: Instance, routes: Sequence[Sequence[int]],
                   order: Sequence[tuple[int, int]]) -> list[int] | None:
    """Componentwise-minimal start times for a fixed route per train and a
    fixed global start order, or None if that choice is infeasible (a
    resource is still held by another train when claimed, or a start window
    is overrun). Times never decrease along the order, so the result is
    directly usable as a solution event list.

    Routes that are not entry-to-exit paths, or an order that is not an
    interleaving of exactly these routes, are caller errors (ValueError).
    """
    if len(routes) != len(instance.trains):
        raise ValueError("one route per train required")
    for i, route in enumerate(routes):
        if not is_route(instance.trains[i], route):
            raise ValueError(f"train {i}: {tuple(route)} is not a route")
    ptr = [0] * len(routes)
    for train, op in order:
        if train < 0 or train >= len(routes):
            raise ValueError(f"order references unknown train {train}")
        if ptr[train] >= len(routes[train]) or routes[train][ptr[train]] != op:
            raise ValueError(f"order is not consistent with the route of train {train}")
        ptr[train] += 1
    for train, p in enumerate(ptr):
        if p != len(routes[train]):
            raise ValueError(f"order does not schedule every operation of train {train}")

    disp = _Dispatcher(instance)
    times: list[int] = []
    for train, op in order:
        status, t = disp.probe(train, op)
        if status != _OK:
            return None
        disp.apply(train, op, t)
        times.append(t)
    return times


def order_objective(instance: Instance, order: Sequence[tuple[int, int]],
                    times: Sequence[int]) -> int:
    """Objective value of a scheduled order (helper for enumeration)."""
    return evaluate_objective(instance, {key: t for key, t in zip(order, times)})


class _TrainStatics:
    """Per-train data that does not change during search."""

    def __init__(self, train: Train, comps: dict[tuple[int, int], list], index: int):
        n = len(train.operations)
        self.preds: list[list[int]] = [[] for _ in range(n)]
        for k, op in enumerate(train.operations):
            for s in op.successors:
                self.preds[s].append(k)
        # Shortest remaining min_duration sum to the exit, and the successor
        # achieving it (route choice of the greedy dispatcher).
        self.dist = [0] * n
        self.sp_next = [-1] * n
        for k in range(n - 1, -1, -1):
            op = train.operations[k]
            if not op.successors:
                self.dist[k] = 0
                continue
            best, best_s = None, -1
            for s in sorted(op.successors):
                if best is None or self.dist[s] < best:
                    best, best_s = self.dist[s], s
            self.dist[k] = op.min_duration + best
            self.sp_next[k] = best_s
        # Tightest threshold along the shortest path, normalized so that
        # slack(op at time t) = static_slack[op] - t.
        self.static_slack: list[float] = [_INF] * n
        for k in range(n - 1, -1, -1):
            s = _INF
            for comp in comps.get((index, k), ()):
                if comp.coeff or comp.increment:
                    s = min(s, comp.threshold)
            nxt = self.sp_next[k]
            if nxt >= 0:
                s = min(s, self.static_slack[nxt] - train.operations[k].min_duration)
            self.static_slack[k] = s


def _path_counts(train: Train, start: int) -> tuple[list[int], list[int]]:
    """(#paths start->k, #paths k->exit) for every k; 0 when unreachable."""
    n = len(train.operations)
    from_start = [0] * n
    from_start[start] = 1
    for k in range(start, n):
        if from_start[k]:
            for s in train.operations[k].successors:
                from_start[s] += from_start[k]
    to_exit = [0] * n
    to_exit[n - 1] = 1
    for k in range(n - 1, -1, -1):
        for s in train.operations[k].successors:
            to_exit[k] += to_exit[s]
    return from_start, to_exit


class _Incumbent:
    """Best solution so far; updates are locked and only ever improve."""

    def __init__(self) -> None:
        self.z: int | None = None
        self.solution: Solution | None = None
        self._lock = threading.Lock()

    def offer(self, z: int, solution: Solution) -> None:
        with self._lock:
            if self.z is None or z < self.z:
                self.z = z
                self.solution = solution


class _ExactWorker:
    def __init__(self, instance: Instance, incumbent: _Incumbent,
                 deadline: float | None, budget):
        self.instance = instance
        self.disp = _Dispatcher(instance)
        self.incumbent = incumbent
        self.deadline = deadline
        self.budget = budget  # _NodeBudget
        self.statics = [
            _TrainStatics(train, self.disp.comps_by_op, i)
            for i, train in enumerate(instance.trains)
        ]
        self.comp_trains = sorted({c.train for c in instance.objective})
        self.truncated = False
        self.frontier_bound: int | None = None

    # ---- lower bound ----------------------------------------------------

    def _train_bound(self, i: int) -> int:
        """Cost lower bound of train i's unscheduled components: earliest
        possible start ignoring other trains, counted only for operations
        the train cannot avoid on its way to the exit."""
        disp = self.disp
        train = self.instance.trains[i]
        st = self.statics[i]
        n = len(train.operations)
        last = disp.last_op[i]
        from_start, to_exit = _path_counts(train, 0 if last is None else last)
        total_paths = from_start[n - 1]
        earliest: dict[int, int] = {}
        lb = 0
        span = range(0, n) if last is None else range(last + 1, n)
        for k in span:
            if not from_start[k]:
                continue
            op = train.operations[k]
            t = max(op.start_lb, disp.floor)
            best_pred: int | None = None
            for p in st.preds[k]:
                if p == last:
                    cand = disp.last_time[i] + train.operations[p].min_duration
                elif p in earliest:
                    cand = earliest[p] + train.operations[p].min_duration
                else:
                    continue
                if best_pred is None or cand < best_pred:
                    best_pred = cand
            if best_pred is not None and best_pred > t:
                t = best_pred
            for usage in op.resources:
                rs = disp.res.get(usage.resource)
                if rs is not None:
                    s = rs.ready_for(i)
                    if s > t:
                        t = s
            earliest[k] = t
            comps = disp.comps_by_op.get((i, k))
            if comps and from_start[k] * to_exit[k] == total_paths:
                # On every remaining path: its cost is unavoidable, and t is
                # a lower bound on its eventual start.
                for comp in comps:
                    lb += _component_value(comp.coeff, comp.increment,
                                           comp.threshold, t)
        return lb

    def bound(self) -> int:
        lb = self.disp.z_partial
        for i in self.comp_trains:
            if not self.disp.ended[i]:
                lb += self._train_bound(i)
        return lb

    # ---- search ---------------------------------------------------------

    def search_from(self, moves: Iterable[tuple[int, int, int]]) -> None:
        """DFS over the given root moves (train, op, time)."""
        for train, op, t in moves:
            if self.truncated:
                return
            token = self.disp.apply(train, op, t)
            self._dfs()
            self.disp.undo(token)

    def _dfs(self) -> None:
        disp = self.disp
        if not self.budget.tick():
            self.truncated = True
            return
        if self.deadline is not None and self.budget.should_check_time():
            if _time.monotonic() > self.deadline:
                self.truncated = True
        if self.truncated:
            b = self.bound()
            if self.frontier_bound is None or b < self.frontier_bound:
                self.frontier_bound = b
            return
        if disp.done():
            self.incumbent.offer(disp.z_partial, disp.to_solution())
            return
        best = self.incumbent.z
        if best is not None and self.bound() >= best:
            return
        moves: list[tuple[int, int, int]] = []
        for i in range(disp.n_trains):
            if disp.ended[i]:
                continue
            alive = False
            for op in sorted(disp.candidates(i)):
                status, t = disp.probe(i, op)
                if status == _OK:
                    moves.append((i, op, t))
                    alive = True
                elif status == _BLOCKED:
                    alive = True
            if not alive:
                # Start windows of every remaining candidate are overrun,
                # and they can only drift later: no completion exists.
                return
        for train, op, t in moves:
            token = disp.apply(train, op, t)
            self._dfs()
            disp.undo(token)
            if self.truncated:
                b = self.bound()
                if self.frontier_bound is None or b < self.frontier_bound:
                    self.frontier_bound = b
                return


class _NodeBudget:
    """Node counter with an optional cap, shared across workers."""

    def __init__(self, limit: int | None, shared: bool):
        self.limit = limit
        self.count = 0
        self._since_check = 0
        self._lock = threading.Lock() if shared else None

    def tick(self) -> bool:
        if self._lock is None:
            self.count += 1
            self._since_check += 1
            return self.limit is None or self.count <= self.limit
        with self._lock:
            self.count += 1
            self._since_check += 1
            return self.limit is None or self.count <= self.limit

    def should_check_time(self) -> bool:
        if self._since_check >= 256:
            self._since_check = 0
            return True
        return False


def solve_exact(instance: Instance, *, node_limit: int | None = None,
                time_limit: float | None = None, threads: int = 1) -> SolveReport:
    """Exact depth-first branch and bound.

    Branches on which operation starts next, which fixes routes and the
    event order together; start times are always the componentwise-minimal
    completion, so every leaf is an earliest-times schedule. The bound adds
    per-train earliest-exit relaxations of the remaining cost to the cost of
    already fixed events. Optimal/Infeasible are only reported when the
    search space was exhausted; budget-limited runs degrade to Feasible or
    TimeoutNoSolution.

    With threads > 1 the root branches are spread over a thread pool sharing
    the incumbent; the single-threaded run is the determinism reference.
    """
    start = _time.monotonic()
    deadline = start + time_limit if time_limit is not None else None
    incumbent = _Incumbent()
    budget = _NodeBudget(node_limit, shared=threads > 1)

    root = _ExactWorker(instance, incumbent, deadline, budget)
    if root.disp.done():
        solution = root.disp.to_solution()
        return SolveReport(status=SolveStatus.OPTIMAL, solution=solution,
                           nodes=0, wall_time=_time.monotonic() - start, bound=0)
    root_moves: list[tuple[int, int, int]] = []
    any_alive = True
    for i in range(root.disp.n_trains):
        if root.disp.ended[i]:
            continue
        alive = False
        for op in sorted(root.disp.candidates(i)):
            status, t = root.disp.probe(i, op)
            if status == _OK:
                root_moves.append((i, op, t))
                alive = True
            elif status == _BLOCKED:
                alive = True
        if not alive:
            any_alive = False
            break

    truncated = False
    frontier: int | None = None
    if any_alive and root_moves:
        if threads <= 1:
            root.search_from(root_moves)
            truncated = root.truncated
            frontier = root.frontier_bound
        else:
            from concurrent.futures import ThreadPoolExecutor
            workers = [
                _ExactWorker(instance, incumbent, deadline, budget)
                for _ in root_moves
            ]
            with ThreadPoolExecutor(max_workers=threads) as pool:
                futures = [
                    pool.submit(w.search_from, [mv])
                    for w, mv in zip(workers, root_moves)
                ]
                for f in futures:
                    f.result()
            truncated = any(w.truncated for w in workers)
            bounds = [w.frontier_bound for w in workers if w.frontier_bound is not None]
            frontier = min(bounds) if bounds else None

    wall = _time.monotonic() - start
    if incumbent.solution is not None:
        if truncated:
            return SolveReport(status=SolveStatus.FEASIBLE, solution=incumbent.solution,
                               nodes=budget.count, wall_time=wall, bound=frontier)
        return SolveReport(status=SolveStatus.OPTIMAL, solution=incumbent.solution,
                           nodes=budget.count, wall_time=wall, bound=incumbent.z)
    if truncated:
        return SolveReport(status=SolveStatus.TIMEOUT_NO_SOLUTION, solution=None,
                           nodes=budget.count, wall_time=wall, bound=frontier)
    return SolveReport(status=SolveStatus.INFEASIBLE, solution=None,
                       nodes=budget.count, wall_time=wall, bound=None)


def _pick_route(train: Train, st: _TrainStatics, rng: random.Random | None,
                jitter_span: int) -> list[int]:
    """Entry-to-exit path following the shortest remaining duration; with an
    rng, fork choices are jittered to diversify restarts."""
    ops = train.operations
    route = [0]
    k = 0
    while ops[k].successors:
        if rng is not None and len(ops[k].successors) > 1:
            k = min(sorted(ops[k].successors),
                    key=lambda s: (st.dist[s] + rng.randint(0, jitter_span), s))
        else:
            k = st.sp_next[k]
        route.append(k)
    return route


def _replay(disp: _Dispatcher, order: Sequence[tuple[int, int]]) -> list | None:
    """Apply a whole order through probes; undo tokens on success, None
    (with everything undone again) if some event is not startable."""
    tokens: list[tuple] = []
    for train, op in order:
        status, t = disp.probe(train, op)
        if status != _OK:
            while tokens:
                disp.undo(tokens.pop())
            return None
        tokens.append(disp.apply(train, op, t))
    return tokens


def _merge_route(disp: _Dispatcher, fixed: list[tuple[int, int]], train: int,
                 route: list[int], deadline: float | None
                 ) -> tuple[list[tuple[int, int]] | None, int]:
    """Interleave one train's route into an already-dispatchable event order.

    Replays `fixed` (order kept, times re-probed) and places each route
    operation at the earliest point where it starts no later than the next
    fixed event. A fixed event blocked by a resource the new train holds is
    resolved by starting the train's next operation, which releases it;
    failing that, the train's latest placement retreats behind the blocked
    event and the replay resumes. Returns (merged order, applies) with the
    dispatcher rewound to empty; (None, applies) when no interleaving was
    found. The dispatcher must be empty on entry.
    """
    applied: list[tuple[str, tuple]] = []
    merged: list[tuple[int, int]] = []
    barrier: dict[int, int] = {}
    fp = rp = 0
    applies = retreats = steps = 0
    placed_route = 0
    max_retreats = 16 + 4 * len(route)
    failed = False
    while fp < len(fixed) or rp < len(route):
        steps += 1
        if deadline is not None and steps % 256 == 0 \
                and _time.monotonic() > deadline:
            failed = True
            break
        st_r = t_r = None
        if rp < len(route) and fp >= barrier.get(rp, 0):
            st_r, t_r = disp.probe(train, route[rp])
        st_f = t_f = None
        if fp < len(fixed):
            f_train, f_op = fixed[fp]
            st_f, t_f = disp.probe(f_train, f_op)
        if st_r == _DEAD or st_f == _DEAD:
            # Probe times only grow as the prefix extends, so an overrun
            # window can never recover.
            failed = True
            break
        if st_f == _BLOCKED and st_r != _OK:
            # Only the new train can block a fixed event (the fixed order is
            # feasible on its own); push its latest placement behind the
            # blocked position and resume.
            if retreats >= max_retreats or not placed_route:
                failed = True
                break
            blocked_at = fp
            while applied[-1][0] == "f":
                disp.undo(applied.pop()[1])
                merged.pop()
                fp -= 1
            disp.undo(applied.pop()[1])
            merged.pop()
            rp -= 1
            placed_route -= 1
            barrier[rp] = blocked_at + 1
            retreats += 1
            continue
        if st_r == _OK and (st_f != _OK or t_r < t_f):
            applied.append(("r", disp.apply(train, route[rp], t_r)))
            merged.append((train, route[rp]))
            rp += 1
            placed_route += 1
        elif st_f == _OK:
            applied.append(("f", disp.apply(f_train, f_op, t_f)))
            merged.append((f_train, f_op))
            fp += 1
        else:
            failed = True
            break
        applies += 1
    while applied:
        disp.undo(applied.pop()[1])
    return (None if failed else merged), applies


def _insertion_pass(instance: Instance, disp: _Dispatcher,
                    statics: Sequence[_TrainStatics], rng: random.Random,
                    jitter_span: int, jittered: bool, deadline: float | None
                    ) -> tuple[Solution | None, int]:
    """Schedule trains one at a time in entry order, interleaving each
    train's route into the order built so far; (solution or None, applies)."""
    n = disp.n_trains

    def entry_lb(i: int) -> int:
        return instance.trains[i].operations[0].start_lb

    if jittered:
        jolt = [rng.randint(-jitter_span, jitter_span) for _ in range(n)]
        priority = sorted(range(n), key=lambda i: (entry_lb(i) + jolt[i], i))
    else:
        priority = sorted(range(n), key=lambda i: (entry_lb(i), i))
    applies = 0
    order: list[tuple[int, int]] = []
    for i in priority:
        route = _pick_route(instance.trains[i], statics[i],
                            rng if jittered else None, jitter_span)
        merged, a = _merge_route(disp, order, i, route, deadline)
        applies += a
        if merged is None:
            # Plain append sometimes works when interleaving does not.
            merged = order + [(i, op) for op in route]
            tokens = _replay(disp, merged)
            if tokens is None:
                return None, applies
            applies += len(merged)
            while tokens:
                disp.undo(tokens.pop())
        order = merged
    tokens = _replay(disp, order)
    if tokens is None:
        return None, applies
    applies += len(order)
    solution = disp.to_solution()
    while tokens:
        disp.undo(tokens.pop())
    return solution, applies


def solve_heuristic(instance: Instance, *, time_limit: float | None = None,
                    seed: int = 0, max_restarts: int | None = None,
                    backtrack_limit: int = 256) -> SolveReport:
    """Greedy dispatch alternating with route insertion, under seeded restarts.

    Even passes run the greedy dispatcher: repeatedly start the most urgent
    startable operation (smallest slack to the nearest cost threshold along
    the shortest remaining path; ties by start_lb, then train, then
    operation index), each train preferring the successor that minimizes the
    remaining min_duration sum; dead ends trigger chronological backtracking
    with a per-pass budget. Odd passes schedule whole trains in entry order,
    interleaving each train's route into the event order fixed so far, a
    strategy immune to the head-on wedges that can trap greedy dispatch on
    dense single-track traffic. Restarts re-jitter priorities and route
    choices from the seed, keeping the best solution found. Deterministic
    for a fixed seed and restart budget. Never claims optimality.
    """
    start = _time.monotonic()
    deadline = start + time_limit if time_limit is not None else None
    if max_restarts is None and time_limit is None:
        max_restarts = 16
    disp = _Dispatcher(instance)
    statics = [
        _TrainStatics(train, disp.comps_by_op, i)
        for i, train in enumerate(instance.trains)
    ]
    horizon_scale = max(
        (st.dist[0] for st in statics if st.dist), default=0)
    jitter_span = max(1, horizon_scale // 8)

    best: Solution | None = None
    best_z: int | None = None
    nodes = 0
    attempt = 0
    while True:
        rng = random.Random(seed * 1_000_003 + attempt)
        if attempt % 2:
            solution, applies = _insertion_pass(instance, disp, statics, rng,
                                                jitter_span, attempt > 1,
                                                deadline)
            nodes += applies
            if solution is not None and (best_z is None
                                         or solution.objective_value < best_z):
                best_z = solution.objective_value
                best = solution
        else:
            if attempt == 0:
                slack_jitter = [0] * disp.n_trains
            else:
                slack_jitter = [rng.randint(-jitter_span, jitter_span)
                                for _ in range(disp.n_trains)]
            route_jitter: dict[tuple[int, int], int] = {}

            def _dj(i: int, o: int) -> int:
                if attempt == 0:
                    return 0
                v = route_jitter.get((i, o))
                if v is None:
                    v = rng.randint(0, jitter_span)
                    route_jitter[(i, o)] = v
                return v

            frames: list[tuple[tuple[int, int], tuple]] = []
            bans: list[set[tuple[int, int]]] = [set()]
            backtracks = 0
            failed = False
            while not disp.done():
                banned = bans[-1]
                chosen: tuple[int, int, int] | None = None
                chosen_key = None
                for i in range(disp.n_trains):
                    if disp.ended[i]:
                        continue
                    st = statics[i]
                    cands = sorted(disp.candidates(i),
                                   key=lambda o: (st.dist[o] + _dj(i, o), o))
                    for op in cands:
                        if (i, op) in banned:
                            continue
                        status, t = disp.probe(i, op)
                        if status != _OK:
                            continue
                        slack = st.static_slack[op]
                        urgency = slack - t + slack_jitter[i] if slack != _INF else _INF
                        key = (urgency, instance.trains[i].operations[op].start_lb, i, op)
                        if chosen_key is None or key < chosen_key:
                            chosen_key = key
                            chosen = (i, op, t)
                        break  # only the head candidate of each train competes
                if chosen is None:
                    if not frames or backtracks >= backtrack_limit:
                        failed = True
                        break
                    move, token = frames.pop()
                    disp.undo(token)
                    bans.pop()
                    bans[-1].add(move)
                    backtracks += 1
                    continue
                i, op, t = chosen
                token = disp.apply(i, op, t)
                nodes += 1
                frames.append(((i, op), token))
                bans.append(set())
            if not failed and disp.done():
                z = disp.z_partial
                if best_z is None or z < best_z:
                    best_z = z
                    best = disp.to_solution()
            # rewind for the next pass
            while frames:
                _, token = frames.pop()
                disp.undo(token)
        attempt += 1
        if best_z == 0:
            break
        if max_restarts is not None and attempt > max_restarts:
            break
        if deadline is not None and _time.monotonic() > deadline:
            break

    wall = _time.monotonic() - start
    if best is None:
        return SolveReport(status=SolveStatus.TIMEOUT_NO_SOLUTION, solution=None,
                           nodes=nodes, wall_time=wall, bound=None)
    return SolveReport(status=SolveStatus.FEASIBLE, solution=best,
                       nodes=nodes, wall_time=wall, bound=None)
