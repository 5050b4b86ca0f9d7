"""Multi-agent routing over the operation network.

Joint plans must respect two interaction rules on top of each drone's own
energy budget:

* boarding: at most one drone may board a vehicle at any given stop event
  (vehicles pause only long enough for a single pickup);
* capacity: a riding edge ``e`` carries at most ``C(e)`` drones at once.

Plans are found with a two-level focal search over a constraint tree.
Every tree node holds one path per agent planned under that node's
constraint sets.  A node's lower bound is the largest per-agent search
bound (the makespan of any joint plan below the node can never beat it);
its cost is the actual makespan of its paths.  OPEN orders nodes by lower
bound; FOCAL holds nodes with cost within ``w`` of the best bound and
pops the one with the fewest conflicts.  Expanding a node picks its
earliest conflict and branches:

* a boarding conflict among ``p`` agents yields ``p`` children, each
  forbidding the stop event for one agent;
* a capacity conflict with ``p`` riders on capacity ``c`` yields
  ``C(p, p-c)`` children, one per subset of ``p-c`` agents excluded from
  the edge (an optional flag switches to a cheaper one-agent-per-child
  split that forfeits the suboptimality bound).

Because each agent's path already satisfies ``cost_i <= w * lb_i``, every
node's cost is within ``w`` of its own bound and FOCAL is never empty; a
popped conflict-free node is therefore a valid ``w``-bounded joint plan.
"""

from __future__ import annotations

import heapq
import itertools
import math
import time as _time
from dataclasses import dataclass, field

from .errors import SolverInfeasibleError, SolveTimeoutError, TaskInfeasibleError
from .heuristics import HeuristicBundle
from .mcsp import (
    EMPTY_CONSTRAINTS,
    AgentPath,
    ConstraintSet,
    DeliveryTask,
    LegSpec,
    plan_legs,
)
from .network import OperationGraph, Vertex


@dataclass(frozen=True)
class Conflict:
    """One rule violation between agents' paths."""

    kind: str                  # "boarding" | "capacity"
    time: float
    agents: tuple[int, ...]    # indices of involved agents, ascending
    vertex: Vertex | None = None            # boarding: the stop event
    edge: tuple[int, int] | None = None     # capacity: the riding edge
    capacity: int = 0                       # capacity: C(e) after static load
    overflow: int = 0                       # capacity: riders - capacity


@dataclass(frozen=True)
class AgentItinerary:
    """Where an agent starts and the legs it still has to run."""

    start: Vertex
    start_time: float
    legs: tuple[LegSpec, ...]


def itinerary_of(task: DeliveryTask, drone, release: float = 0.0) -> AgentItinerary:
    return AgentItinerary(("d", task.depot), release, tuple(task.specs(drone)))


def static_loads(static_paths: list[AgentPath]) -> dict[tuple[int, int], int]:
    """Riding-edge loads contributed by already-committed paths."""
    loads: dict[tuple[int, int], int] = {}
    for p in static_paths:
        for leg in p.rides:
            e = (leg.frm[1], leg.frm[2])
            loads[e] = loads.get(e, 0) + 1
    return loads


def detect_conflicts(
    paths: list[AgentPath],
    graph: OperationGraph,
    static_load: dict[tuple[int, int], int] | None = None,
) -> list[Conflict]:
    """All boarding and capacity conflicts among ``paths``, earliest first.

    ``static_load`` discounts capacity already taken by committed paths
    that are not part of this solve.
    """
    static_load = static_load or {}
    boarders: dict[Vertex, list[int]] = {}
    riders: dict[tuple[int, int], list[int]] = {}
    for i, p in enumerate(paths):
        if p is None:
            continue
        for v, _t in p.boardings:
            boarders.setdefault(v, []).append(i)
        for leg in p.rides:
            e = (leg.frm[1], leg.frm[2])
            riders.setdefault(e, []).append(i)

    out: list[Conflict] = []
    for v, agents in boarders.items():
        if len(agents) >= 2:
            out.append(
                Conflict("boarding", graph.time_of(v), tuple(sorted(agents)), vertex=v)
            )
    for e, agents in riders.items():
        cap = graph.capacity(*e) - static_load.get(e, 0)
        if len(agents) > cap:
            out.append(
                Conflict(
                    "capacity",
                    graph.time_of(("t", e[0], e[1])),
                    tuple(sorted(agents)),
                    edge=e,
                    capacity=cap,
                    overflow=len(agents) - cap,
                )
            )
    out.sort(key=lambda c: (c.time, c.kind, c.agents))
    return out


def capacity_groups(
    agents: tuple[int, ...], overflow: int, full_split: bool = True
) -> list[tuple[int, ...]]:
    """Eviction groups for a capacity conflict, one tree child per group.

    With ``p`` riders on capacity ``c``, any valid plan keeps at least
    ``p - c`` of them off the edge, so the ``C(p, p-c)`` subsets of that
    size cover every resolution.  ``full_split=False`` evicts one agent
    per child instead — a smaller tree, but a child may evict too few
    riders to clear the edge, so the suboptimality bound is forfeited.
    """
    if full_split:
        return list(itertools.combinations(agents, overflow))
    return [(a,) for a in agents]


@dataclass
class CTNode:
    """One constraint-tree node."""

    constraints: list[ConstraintSet]
    paths: list[AgentPath]
    lbs: list[float]
    conflicts: list[Conflict]
    cost: float  # makespan of the node's paths
    lb: float    # max of per-agent lower bounds

    @classmethod
    def assemble(cls, constraints, paths, lbs, graph, static_load) -> "CTNode":
        conflicts = detect_conflicts(paths, graph, static_load)
        cost = max((p.arrival for p in paths), default=0.0)
        lb = max(lbs, default=0.0)
        return cls(constraints, paths, lbs, conflicts, cost, lb)


@dataclass
class SolveStats:
    conflicts_resolved: int = 0   # tree nodes whose conflict was branched on
    nodes_generated: int = 0
    lb: float = 0.0               # best proven lower bound on the makespan


@dataclass
class MultiAgentSolution:
    paths: list[AgentPath]
    makespan: float
    stats: SolveStats


class _Solver:
    def __init__(
        self,
        itineraries: list[AgentItinerary],
        w: float,
        graph: OperationGraph,
        bundle: HeuristicBundle,
        base_constraints: ConstraintSet,
        static_load: dict[tuple[int, int], int],
        deadline: float | None,
        full_capacity_split: bool,
    ):
        self.itins = itineraries
        self.w = w
        self.graph = graph
        self.bundle = bundle
        self.base = base_constraints
        self.static_load = static_load
        self.deadline = deadline
        self.full_capacity_split = full_capacity_split
        self.stats = SolveStats()

    def plan_agent(self, i: int, cons: ConstraintSet, others: list[AgentPath]) -> AgentPath:
        it = self.itins[i]
        path = plan_legs(
            it.start,
            it.start_time,
            list(it.legs),
            self.w,
            self.base.merged(cons),
            self.bundle,
            self.graph,
            agent=i,
            conflict_paths=[p for p in others if p is not None],
            deadline=self.deadline,
        )
        return path

    def root(self) -> CTNode:
        constraints = [EMPTY_CONSTRAINTS for _ in self.itins]
        paths: list[AgentPath] = []
        lbs: list[float] = []
        for i in range(len(self.itins)):
            try:
                path = self.plan_agent(i, constraints[i], paths)
            except TaskInfeasibleError as exc:
                raise SolverInfeasibleError(
                    f"agent {i} cannot complete its task: {exc}", agent=i
                ) from exc
            paths.append(path)
            lbs.append(path.lb)
        self.stats.nodes_generated += 1
        return CTNode.assemble(constraints, paths, lbs, self.graph, self.static_load)

    def expand_conflict(self, node: CTNode, conflict: Conflict) -> list[CTNode]:
        """Children of ``node`` resolving ``conflict``; infeasible ones dropped."""
        children: list[CTNode] = []

        def child_with(changes: list[tuple[int, ConstraintSet]]) -> None:
            constraints = list(node.constraints)
            paths = list(node.paths)
            lbs = list(node.lbs)
            for agent, cons in changes:
                constraints[agent] = cons
            for agent, cons in changes:
                others = [p for j, p in enumerate(paths) if j != agent]
                try:
                    paths[agent] = self.plan_agent(agent, cons, others)
                except TaskInfeasibleError:
                    return  # this branch is a dead end
                lbs[agent] = paths[agent].lb
            self.stats.nodes_generated += 1
            children.append(
                CTNode.assemble(constraints, paths, lbs, self.graph, self.static_load)
            )

        if conflict.kind == "boarding":
            for agent in conflict.agents:
                cons = node.constraints[agent].with_boarding(conflict.vertex)
                child_with([(agent, cons)])
        else:
            for group in capacity_groups(
                conflict.agents, conflict.overflow, self.full_capacity_split
            ):
                child_with(
                    [
                        (agent, node.constraints[agent].with_edge(conflict.edge))
                        for agent in group
                    ]
                )
        return children

    def solve(self) -> MultiAgentSolution:
        root = self.root()
        seq = 0
        live = 1
        closed: set[int] = set()
        # by_lb tracks the best lower bound over live nodes; rest holds live
        # nodes not yet in focal, ordered by cost so the focal condition
        # (cost within w of the best bound) migrates them in order.
        by_lb: list[tuple[float, int, CTNode]] = [(root.lb, seq, root)]
        rest: list[tuple[float, int, CTNode]] = [(root.cost, seq, root)]
        focal: list[tuple[int, float, int, CTNode]] = []

        while live:
            if self.deadline is not None and _time.monotonic() > self.deadline:
                raise SolveTimeoutError(
                    "joint solve hit its deadline",
                    {
                        "nodes_generated": self.stats.nodes_generated,
                        "conflicts_resolved": self.stats.conflicts_resolved,
                        "open": live,
                    },
                )
            while by_lb[0][1] in closed:
                heapq.heappop(by_lb)
            lb_min = by_lb[0][0]
            bound = self.w * lb_min + 1e-9
            # Each node's cost is within w of its own bound (per-agent paths
            # are w-bounded), so the lb_min owner always qualifies and focal
            # is never empty here.  The bound never shrinks: children carry
            # tighter constraint sets, hence bounds at least their parent's.
            while rest and rest[0][0] <= bound:
                _cost, s, node = heapq.heappop(rest)
                heapq.heappush(focal, (len(node.conflicts), node.cost, s, node))
            _nc, _cost, s, node = heapq.heappop(focal)
            closed.add(s)
            live -= 1

            if not node.conflicts:
                self.stats.lb = lb_min
                return MultiAgentSolution(node.paths, node.cost, self.stats)

            conflict = node.conflicts[0]
            self.stats.conflicts_resolved += 1
            for child in self.expand_conflict(node, conflict):
                seq += 1
                live += 1
                heapq.heappush(by_lb, (child.lb, seq, child))
                heapq.heappush(rest, (child.cost, seq, child))

        raise SolverInfeasibleError("constraint tree exhausted; no joint plan exists")


def solve(
    tasks: list[DeliveryTask],
    w: float,
    graph: OperationGraph,
    bundle: HeuristicBundle,
    timeout_s: float = 180.0,
    full_capacity_split: bool = True,
) -> MultiAgentSolution:
    """Plan one delivery per agent, all released at t=0."""
    itins = [itinerary_of(t, graph.drone) for t in tasks]
    return solve_itineraries(
        itins, w, graph, bundle, timeout_s=timeout_s, full_capacity_split=full_capacity_split
    )


def solve_itineraries(
    itineraries: list[AgentItinerary],
    w: float,
    graph: OperationGraph,
    bundle: HeuristicBundle,
    static_paths: list[AgentPath] | None = None,
    timeout_s: float | None = 180.0,
    full_capacity_split: bool = True,
) -> MultiAgentSolution:
    """Joint solve for agents mid-mission, around committed traffic.

    ``static_paths`` are routes of agents outside this solve: their
    boardings become forbidden everywhere and their riding reduces edge
    capacity.
    """
    if w < 1.0:
        raise ValueError("suboptimality factor must be at least 1")
    static_paths = static_paths or []
    base = EMPTY_CONSTRAINTS
    for p in static_paths:
        for v, _t in p.boardings:
            base = base.with_boarding(v)
    loads = static_loads(static_paths)
    # Riding edges with no room left are excluded outright.
    for e, load in sorted(loads.items()):
        if graph.capacity(*e) - load <= 0:
            base = base.with_edge(e)
    deadline = None if timeout_s is None else _time.monotonic() + timeout_s
    solver = _Solver(
        itineraries, w, graph, bundle, base, loads, deadline, full_capacity_split
    )
    return solver.solve()


# ---------------------------------------------------------------------------
# solution validation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    kind: str
    agents: tuple[int, ...]
    detail: str


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations


def validate_solution(
    paths: list[AgentPath],
    graph: OperationGraph,
    static_paths: list[AgentPath] | None = None,
) -> ValidationReport:
    """Independent check of a joint plan against every model rule."""
    report = ValidationReport()
    speed = graph.drone.speed_kmh / 3600.0
    half = graph.drone.max_flight_km / 2.0

    def flag(kind: str, agents: tuple[int, ...], detail: str) -> None:
        report.violations.append(Violation(kind, agents, detail))

    for i, p in enumerate(paths):
        t = p.depart
        spent = 0.0
        for leg in p.legs:
            if leg.t_start < t - 1e-6:
                flag("time", (i,), f"leg starts at {leg.t_start} before {t}")
            if leg.t_end < leg.t_start - 1e-6:
                flag("time", (i,), f"leg ends before it starts ({leg.t_start}..{leg.t_end})")
            if leg.kind == "ride":
                ti, s = leg.frm[1], leg.frm[2]
                if leg.to != ("t", ti, s + 1):
                    flag("ride", (i,), f"ride {leg.frm} -> {leg.to} skips stops")
                elif abs(leg.t_end - graph.time_of(leg.to)) > 1e-6:
                    flag("ride", (i,), "ride arrival differs from the timetable")
            else:
                spent += leg.dist_km
                if speed * (leg.t_end - leg.t_start) + 1e-6 < leg.dist_km:
                    flag("flight", (i,), f"flight of {leg.dist_km} km too fast")
                if leg.to[0] == "t" and abs(leg.t_end - graph.time_of(leg.to)) > 1e-6:
                    flag("flight", (i,), "boarding time differs from the timetable")
            t = leg.t_end
        if spent > graph.drone.max_flight_km + 1e-9:
            flag("budget", (i,), f"total flight {spent} km exceeds the range")
        for lp in p.leg_plans:
            if lp.flight_km > lp.budget_km + 1e-9:
                flag("budget", (i,), f"leg used {lp.flight_km} km of {lp.budget_km}")
            if lp.goal[0] == "p" and lp.budget_km > half + 1e-9:
                flag("budget", (i,), "package-bound leg allowed more than half the range")

    every = list(paths) + list(static_paths or [])
    offset = len(paths)
    boarders: dict[Vertex, list[int]] = {}
    riders: dict[tuple[int, int], list[int]] = {}
    for i, p in enumerate(every):
        for v, _t in p.boardings:
            boarders.setdefault(v, []).append(i)
        for leg in p.rides:
            riders.setdefault((leg.frm[1], leg.frm[2]), []).append(i)
    for v, agents in sorted(boarders.items()):
        if len(agents) >= 2:
            flag("boarding", tuple(a for a in agents if a < offset), f"{len(agents)} boardings at {v}")
    for e, agents in sorted(riders.items()):
        if len(agents) > graph.capacity(*e):
            flag(
                "capacity",
                tuple(a for a in agents if a < offset),
                f"{len(agents)} riders on edge {e} of capacity {graph.capacity(*e)}",
            )
    return report
