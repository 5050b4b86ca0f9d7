"""Bounded-suboptimal weight-constrained search over the operation network.

``focal_mcsp`` minimises arrival time subject to a flight-distance budget.
Each network vertex keeps a frontier of non-dominated (time, distance)
labels: a label is dropped when another one arrives no later *and* has
burned no more range.  Admissible heuristics guide the search (straight
line flight time; metagraph flight distance), and labels whose spent
distance plus the distance heuristic exceed the budget are pruned.

Suboptimality is controlled the usual focal way: OPEN orders labels by
``f = time + h_time``; FOCAL holds every open label with
``f <= w * min f`` and pops the one colliding least with other agents'
committed paths (ties by f, then insertion order).  The f-minimum over
all open labels is a valid lower bound on the optimal arrival and is
reported alongside the returned path.

``plan_task`` chains two such searches (depot to package, package to
return depot), each limited to half the flight range, so a full battery
always covers a delivery whose halves fit half a charge each.
"""

from __future__ import annotations

import heapq
import math
import time as _time
from dataclasses import dataclass, field

from .errors import NoPathError, SolveTimeoutError, TaskInfeasibleError
from .heuristics import HeuristicBundle
from .network import EPS, DroneSpec, OperationGraph, Vertex


@dataclass(frozen=True)
class ConstraintSet:
    """Vertices and edges an agent must avoid (imposed by the tree search)."""

    forbidden_boardings: frozenset[Vertex] = frozenset()       # timed stop events
    excluded_edges: frozenset[tuple[int, int]] = frozenset()   # (trip, stop) riding edges

    def with_boarding(self, v: Vertex) -> "ConstraintSet":
        return ConstraintSet(self.forbidden_boardings | {v}, self.excluded_edges)

    def with_edge(self, e: tuple[int, int]) -> "ConstraintSet":
        return ConstraintSet(self.forbidden_boardings, self.excluded_edges | {e})

    def merged(self, other: "ConstraintSet") -> "ConstraintSet":
        return ConstraintSet(
            self.forbidden_boardings | other.forbidden_boardings,
            self.excluded_edges | other.excluded_edges,
        )


EMPTY_CONSTRAINTS = ConstraintSet()


@dataclass(frozen=True)
class PathLeg:
    """One traversed edge: a flight or one hop riding a vehicle."""

    kind: str           # "fly" | "ride"
    frm: Vertex
    to: Vertex
    t_start: float
    t_end: float
    dist_km: float      # ground distance of the leg (range use only if flying)
    trip_id: str | None = None


@dataclass
class LegPlan:
    """The planned route of one task leg (one constrained search)."""

    goal: Vertex
    budget_km: float
    legs: list[PathLeg]
    depart: float
    arrival: float
    flight_km: float
    lb: float           # admissible lower bound on the optimal arrival
    conflicts: int = 0  # collisions of the chosen route with other paths


@dataclass
class AgentPath:
    """A full planned route: one or more legs chained in time."""

    agent: int | None
    depart: float
    arrival: float
    legs: list[PathLeg] = field(default_factory=list)
    leg_plans: list[LegPlan] = field(default_factory=list)
    flight_km: float = 0.0
    lb: float = 0.0          # lower bound on the arrival of the final leg
    conflict_count: int = 0  # collisions with others' paths seen at plan time

    @property
    def boardings(self) -> list[tuple[Vertex, float]]:
        """Stop events where the drone gets on a vehicle."""
        return [
            (leg.to, leg.t_end)
            for leg in self.legs
            if leg.kind == "fly" and leg.to[0] == "t"
        ]

    @property
    def rides(self) -> list[PathLeg]:
        return [leg for leg in self.legs if leg.kind == "ride"]

    @property
    def transit_used(self) -> int:
        """Number of vehicles boarded along the route."""
        return len(self.boardings)

    @property
    def ground_km(self) -> float:
        """Total ground distance covered, flying plus riding."""
        return sum(leg.dist_km for leg in self.legs)


class _ConflictIndex:
    """Counts how a candidate move collides with other agents' paths."""

    def __init__(self, paths: list[AgentPath], graph: OperationGraph):
        self.board_count: dict[Vertex, int] = {}
        self.ride_count: dict[tuple[int, int], int] = {}
        self.graph = graph
        for p in paths:
            for v, _t in p.boardings:
                self.board_count[v] = self.board_count.get(v, 0) + 1
            for leg in p.rides:
                e = (leg.frm[1], leg.frm[2])
                self.ride_count[e] = self.ride_count.get(e, 0) + 1

    def delta(self, ride: bool, frm: Vertex, to: Vertex) -> int:
        if ride:
            e = (frm[1], frm[2])
            load = self.ride_count.get(e, 0)
            return 1 if load >= self.graph.capacity(*e) else 0
        if to[0] == "t":
            return self.board_count.get(to, 0)
        return 0


class _Label:
    __slots__ = ("vertex", "time", "dist", "conf", "parent", "leg", "f", "state")

    def __init__(self, vertex, time, dist, conf, parent, leg, f):
        self.vertex = vertex
        self.time = time
        self.dist = dist
        self.conf = conf
        self.parent = parent
        self.leg = leg
        self.f = f
        self.state = 0  # 0 open, 1 expanded, 2 dominated


def focal_mcsp(
    start: Vertex,
    goal: Vertex,
    depart: float,
    w: float,
    weight_limit_km: float,
    constraints: ConstraintSet | None,
    bundle: HeuristicBundle,
    graph: OperationGraph,
    conflict_paths: list[AgentPath] | None = None,
    deadline: float | None = None,
    prune: bool = True,
) -> LegPlan:
    """Search one leg; returns the plan with its lower bound.

    Raises :class:`NoPathError` when no route fits the budget and
    :class:`SolveTimeoutError` when ``deadline`` (``time.monotonic``)
    passes first.
    """
    if w < 1.0:
        raise ValueError("suboptimality factor must be at least 1")
    cons = constraints or EMPTY_CONSTRAINTS
    if start == goal:
        return LegPlan(goal, weight_limit_km, [], depart, depart, 0.0, depart)

    conflicts = _ConflictIndex(conflict_paths or [], graph)
    h0 = bundle.time_to_goal(graph, start, goal)
    if bundle.dist_to_goal(start, goal) > weight_limit_km + EPS:
        raise NoPathError(f"goal {goal!r} beyond reach: distance bound exceeds budget")

    root = _Label(start, depart, 0.0, 0, None, None, depart + h0)
    frontier: dict[Vertex, list[_Label]] = {start: [root]}
    seq = 0
    open_all: list[tuple[float, int, _Label]] = [(root.f, seq, root)]
    rest: list[tuple[float, int, _Label]] = [(root.f, seq, root)]
    focal: list[tuple[int, float, int, _Label]] = []
    expansions = 0

    while open_all:
        if deadline is not None and _time.monotonic() > deadline:
            raise SolveTimeoutError(
                "single-agent search hit its deadline",
                {"expansions": expansions, "open": len(open_all)},
            )
        # Current f-minimum over every live open label.
        while open_all and open_all[0][2].state != 0:
            heapq.heappop(open_all)
        if not open_all:
            break
        f_min = open_all[0][0]
        bound = w * f_min + EPS
        # Migrate newly qualifying labels into FOCAL.
        while rest and rest[0][0] <= bound:
            _f, s, lab = heapq.heappop(rest)
            if lab.state == 0:
                heapq.heappush(focal, (lab.conf, lab.f, s, lab))
        while focal and focal[0][3].state != 0:
            heapq.heappop(focal)
        if not focal:
            continue  # stale entries only; recompute f_min
        _conf, _f, _s, label = heapq.heappop(focal)
        if label.f > bound:
            # f_min dropped since this label entered FOCAL (it can, when a
            # focally popped parent spawns a cheaper child); requeue it so
            # every expansion satisfies f <= w * f_min at its own pop.
            heapq.heappush(rest, (label.f, _s, label))
            continue
        label.state = 1
        expansions += 1

        if label.vertex == goal:
            legs = _reconstruct(label)
            return LegPlan(
                goal, weight_limit_km, legs, depart, label.time, label.dist, f_min,
                conflicts=label.conf,
            )

        for edge in graph.out_neighbors(
            label.vertex,
            label.time,
            weight_limit_km - label.dist,
            goal,
            prune=prune,
            constraints=cons,
        ):
            n_time = label.time + edge.t
            n_dist = label.dist + edge.dist
            if n_dist > weight_limit_km + EPS:
                continue
            if n_dist + bundle.dist_to_goal(edge.v, goal) > weight_limit_km + EPS:
                continue
            entry = frontier.setdefault(edge.v, [])
            if any(o.time <= n_time and o.dist <= n_dist for o in entry):
                continue
            dominated = False
            for o in entry:
                if n_time <= o.time and n_dist <= o.dist:
                    o.state = 2
                    dominated = True
            if dominated:
                entry[:] = [o for o in entry if o.state != 2]

            leg = PathLeg(
                "ride" if edge.ride else "fly",
                label.vertex,
                edge.v,
                label.time,
                n_time,
                _leg_ground_km(graph, label.vertex, edge),
                graph.trips[label.vertex[1]].trip_id if edge.ride else None,
            )
            child = _Label(
                edge.v,
                n_time,
                n_dist,
                label.conf + conflicts.delta(edge.ride, label.vertex, edge.v),
                label,
                leg,
                n_time + bundle.time_to_goal(graph, edge.v, goal),
            )
            entry.append(child)
            seq += 1
            heapq.heappush(open_all, (child.f, seq, child))
            heapq.heappush(rest, (child.f, seq, child))

    raise NoPathError(
        f"no route from {start!r} to {goal!r} within {weight_limit_km} km"
    )


def _leg_ground_km(graph: OperationGraph, frm: Vertex, edge) -> float:
    if not edge.ride:
        return edge.dist
    from .geo import distance_km

    return distance_km(graph.loc(frm), graph.loc(edge.v))


def _reconstruct(label: _Label) -> list[PathLeg]:
    legs: list[PathLeg] = []
    while label.parent is not None:
        legs.append(label.leg)
        label = label.parent
    legs.reverse()
    # A zero-length flight to a depot or package is a non-event.
    return [
        leg
        for leg in legs
        if not (leg.kind == "fly" and leg.to[0] != "t" and leg.dist_km <= EPS and leg.t_end - leg.t_start <= EPS)
    ]


@dataclass(frozen=True)
class LegSpec:
    """What one leg must achieve: reach ``goal`` within ``budget_km``.

    ``spent_km`` accounts for range already burned on this leg when a
    plan resumes mid-flight.
    """

    goal: Vertex
    budget_km: float
    spent_km: float = 0.0


def plan_legs(
    start: Vertex,
    start_time: float,
    specs: list[LegSpec],
    w: float,
    constraints: ConstraintSet | None,
    bundle: HeuristicBundle,
    graph: OperationGraph,
    agent: int | None = None,
    conflict_paths: list[AgentPath] | None = None,
    deadline: float | None = None,
) -> AgentPath:
    """Chain constrained searches; each leg departs when the previous ends."""
    legs: list[PathLeg] = []
    plans: list[LegPlan] = []
    at, t = start, start_time
    lb = start_time
    conf = 0
    for idx, spec in enumerate(specs, start=1):
        try:
            plan = focal_mcsp(
                at,
                spec.goal,
                t,
                w,
                spec.budget_km - spec.spent_km,
                constraints,
                bundle,
                graph,
                conflict_paths=conflict_paths,
                deadline=deadline,
            )
        except NoPathError as exc:
            raise TaskInfeasibleError(
                f"leg {idx} ({at!r} to {spec.goal!r}) is infeasible: {exc}", leg=idx
            ) from exc
        legs += plan.legs
        plans.append(plan)
        at, t = spec.goal, plan.arrival
        lb = plan.lb
        conf += plan.conflicts
    return AgentPath(
        agent=agent,
        depart=start_time,
        arrival=t,
        legs=legs,
        leg_plans=plans,
        flight_km=sum(p.flight_km for p in plans),
        lb=lb,
        conflict_count=conf,
    )


@dataclass(frozen=True)
class DeliveryTask:
    """Serve one package: depot -> package -> return depot."""

    depot: int
    package: int
    return_depot: int

    def specs(self, drone: DroneSpec) -> list[LegSpec]:
        half = drone.max_flight_km / 2.0
        return [
            LegSpec(("p", self.package), half),
            LegSpec(("d", self.return_depot), half),
        ]


def plan_task(
    task: DeliveryTask,
    depart: float,
    w: float,
    constraints: ConstraintSet | None,
    bundle: HeuristicBundle,
    graph: OperationGraph,
    agent: int | None = None,
    conflict_paths: list[AgentPath] | None = None,
    deadline: float | None = None,
) -> AgentPath:
    """Plan a full delivery; both halves fit half the flight range."""
    return plan_legs(
        ("d", task.depot),
        depart,
        task.specs(graph.drone),
        w,
        constraints,
        bundle,
        graph,
        agent=agent,
        conflict_paths=conflict_paths,
        deadline=deadline,
    )
