"""Receding-horizon execution of full delivery sequences.

The allocation layer hands every drone an alternating depot/package walk.
Execution plans one mission at a time: a drone gets its next mission
planned the moment it finishes the previous one, while the rest of the
fleet keeps flying.  Two strategies differ in what that moment triggers:

* ``replan1`` plans only the finished drone, treating the other committed
  paths as immovable traffic;
* ``replanm`` additionally re-solves the whole fleet from its current
  states (drones finish the move they are on, then are free to reroute)
  and keeps whichever of the two outcomes completes the current missions
  sooner, preferring the incumbent on ties.

Ties on completion events are broken by agent index.  If a solo replan
cannot place the new mission at all — every seat taken, say — it
escalates to the fleet-wide solve before giving up.
"""

from __future__ import annotations

import time as _time
from collections import deque
from dataclasses import dataclass, field

from .allocation import DeliveryPath
from .errors import SolverInfeasibleError, ValidationError
from .heuristics import HeuristicBundle
from .mapf import (
    AgentItinerary,
    MultiAgentSolution,
    solve_itineraries,
    validate_solution,
)
from .mcsp import AgentPath, LegSpec, PathLeg
from .network import DroneSpec, OperationGraph, Vertex


@dataclass(frozen=True)
class Mission:
    """One depot-anchored errand: deliver a package or reposition."""

    kind: str                # "delivery" | "relocate"
    start_depot: int
    end_depot: int
    package: int | None = None

    def specs(self, drone: DroneSpec) -> list[LegSpec]:
        if self.kind == "delivery":
            half = drone.max_flight_km / 2.0
            return [
                LegSpec(("p", self.package), half),
                LegSpec(("d", self.end_depot), half),
            ]
        return [LegSpec(("d", self.end_depot), drone.max_flight_km)]


def missions_from_path(path: DeliveryPath) -> list[Mission]:
    """Decompose an allocation walk into missions, in visiting order."""
    stops = path.stops
    missions: list[Mission] = []
    i = 0
    while i + 1 < len(stops):
        if stops[i][0] != "d":
            raise ValidationError(f"walk stop {i} is {stops[i]!r}, expected a depot")
        if stops[i + 1][0] == "p":
            if i + 2 >= len(stops) or stops[i + 2][0] != "d":
                raise ValidationError("package visit must be followed by a depot")
            missions.append(
                Mission("delivery", stops[i][1], stops[i + 2][1], stops[i + 1][1])
            )
            i += 2
        else:
            missions.append(Mission("relocate", stops[i][1], stops[i + 1][1]))
            i += 1
    return missions


@dataclass
class AgentState:
    agent: int
    vertex: Vertex | None           # where the drone is (or last parked)
    time: float                     # when it got there
    queue: deque                    # missions still to run
    committed: AgentPath | None = None   # path of the mission in flight
    mission: Mission | None = None       # the mission that path serves
    history: list[AgentPath] = field(default_factory=list)

    @property
    def busy(self) -> bool:
        return self.committed is not None


@dataclass
class FleetState:
    agents: list[AgentState]
    clock: float = 0.0

    def busy_agents(self) -> list[AgentState]:
        return [a for a in self.agents if a.busy]


@dataclass
class LogEntry:
    t: float
    event: str          # "initial" | "replan1" | "replanm" | "escalated" | "finish"
    agent: int          # event agent; -1 for fleet-wide entries
    plan_s: float       # wall-clock seconds spent planning at this event
    makespan: float     # max completion over paths committed so far
    replanned: list[int] = field(default_factory=list)
    conflicts_resolved: int = 0


@dataclass
class HorizonResult:
    paths: list[list[AgentPath]]    # per agent, one path per finished mission
    log: list[LogEntry]
    makespan: float
    events: int
    conflicts_resolved: int


def split_at(path: AgentPath, t_star: float, start: Vertex):
    """Cut a committed path at ``t_star``: moves already made or in
    progress are kept; the rest is replannable.

    Returns (kept legs, finished leg plans, resume vertex, resume time,
    remaining leg specs).  A move spanning ``t_star`` is kept whole — a
    drone cannot abandon a flight or hop off a moving vehicle.
    """
    kept: list[PathLeg] = []
    for leg in path.legs:
        if leg.t_start >= t_star - 1e-9:
            break
        kept.append(leg)
    resume_v = kept[-1].to if kept else start
    resume_t = kept[-1].t_end if kept else path.depart

    done_plans = []
    specs: list[LegSpec] = []
    consumed = 0
    for lp in path.leg_plans:
        n = len(lp.legs)
        if consumed >= len(kept):
            # untouched plan
            specs.append(LegSpec(lp.goal, lp.budget_km))
            consumed += n
            continue
        if consumed + n <= len(kept):
            # fully flown plan
            done_plans.append(lp)
            consumed += n
            continue
        # partially flown: remaining budget excludes what this leg burned
        spent = sum(l.dist_km for l in kept[consumed:] if l.kind == "fly")
        specs.append(LegSpec(lp.goal, lp.budget_km, spent))
        consumed += n
    return kept, done_plans, resume_v, resume_t, specs


def _stitch(agent: int, old: AgentPath, kept, done_plans, new: AgentPath) -> AgentPath:
    legs = kept + new.legs
    plans = done_plans + new.leg_plans
    return AgentPath(
        agent=agent,
        depart=old.depart,
        arrival=new.arrival,
        legs=legs,
        leg_plans=plans,
        flight_km=sum(l.dist_km for l in legs if l.kind == "fly"),
        lb=new.lb,
        conflict_count=new.conflict_count,
    )


class HorizonRunner:
    """Drives the event loop for one strategy over one fleet."""

    def __init__(
        self,
        sequences: list[DeliveryPath],
        strategy: str,
        w: float,
        graph: OperationGraph,
        bundle: HeuristicBundle,
        timeout_s: float | None = 180.0,
        full_capacity_split: bool = True,
    ):
        if strategy not in ("replan1", "replanm"):
            raise ValidationError(f"unknown strategy {strategy!r}")
        self.strategy = strategy
        self.w = w
        self.graph = graph
        self.bundle = bundle
        self.timeout_s = timeout_s
        self.full_capacity_split = full_capacity_split
        agents = []
        for i, seq in enumerate(sequences):
            missions = missions_from_path(seq)
            start = ("d", missions[0].start_depot) if missions else None
            agents.append(AgentState(i, start, 0.0, deque(missions)))
        self.state = FleetState(agents)
        self.log: list[LogEntry] = []
        self.conflicts_resolved = 0

    # -- solving helpers --------------------------------------------------

    def _solve(self, itineraries, static, order) -> MultiAgentSolution:
        sol = solve_itineraries(
            itineraries,
            self.w,
            self.graph,
            self.bundle,
            static_paths=static,
            timeout_s=self.timeout_s,
            full_capacity_split=self.full_capacity_split,
        )
        self.conflicts_resolved += sol.stats.conflicts_resolved
        for a, p in zip(order, sol.paths):
            p.agent = a.agent
        return sol

    def _static_for(self, exclude: set[int]) -> list[AgentPath]:
        return [a.committed for a in self.state.busy_agents() if a.agent not in exclude]

    def _plan_next(self, agent: AgentState) -> AgentPath:
        """Solo plan of the agent's next mission around committed traffic."""
        mission = agent.queue[0]
        itin = AgentItinerary(agent.vertex, agent.time, tuple(mission.specs(self.graph.drone)))
        sol = self._solve([itin], self._static_for({agent.agent}), [agent])
        return sol.paths[0]

    def _fleet_solve(self, event_agent: AgentState):
        """Re-solve everyone from their current states.

        The event agent plans its next queued mission; every other busy
        drone finishes its move in progress, then its remaining legs are
        up for rerouting.  Returns (candidate makespan over the missions
        in flight, commit closure) or None when infeasible.
        """
        t_star = self.state.clock
        itins = []
        order: list[AgentState] = []
        cuts = {}
        static: list[AgentPath] = []
        for a in self.state.busy_agents():
            kept, done_plans, v, t, specs = split_at(
                a.committed, t_star, ("d", a.mission.start_depot)
            )
            if not specs:  # nothing left to reroute; the tail stays committed
                static.append(a.committed)
                continue
            cuts[a.agent] = (kept, done_plans)
            if kept:
                # moves in progress still occupy seats and stop events
                static.append(
                    AgentPath(a.agent, a.committed.depart, t, kept, [],
                              sum(l.dist_km for l in kept if l.kind == "fly"), t, 0)
                )
            itins.append(AgentItinerary(v, t, tuple(specs)))
            order.append(a)
        mission = event_agent.queue[0]
        itins.append(
            AgentItinerary(event_agent.vertex, event_agent.time,
                           tuple(mission.specs(self.graph.drone)))
        )
        order.append(event_agent)

        try:
            sol = self._solve(itins, static, order)
        except SolverInfeasibleError:
            return None

        stitched: dict[int, AgentPath] = {}
        for a, p in zip(order, sol.paths):
            if a is event_agent:
                stitched[a.agent] = p
            else:
                kept, done_plans = cuts[a.agent]
                stitched[a.agent] = _stitch(a.agent, a.committed, kept, done_plans, p)
        untouched = [
            a.committed.arrival
            for a in self.state.busy_agents()
            if a.agent not in stitched and a is not event_agent
        ]
        cost = max([p.arrival for p in stitched.values()] + untouched)

        def commit():
            for a in self.state.busy_agents():
                if a.agent in stitched and a is not event_agent:
                    a.committed = stitched[a.agent]
            self._commit_mission(event_agent, stitched[event_agent.agent])

        return cost, commit

    def _commit_mission(self, agent: AgentState, path: AgentPath):
        agent.mission = agent.queue.popleft()
        agent.committed = path

    # -- event loop --------------------------------------------------------

    def _validate_committed(self):
        paths = [a.committed for a in self.state.busy_agents()]
        report = validate_solution(paths, self.graph)
        if not report.passed:
            raise ValidationError(
                f"committed paths violate the model at t={self.state.clock}: "
                f"{report.violations[:3]}"
            )

    def _committed_makespan(self) -> float:
        done = [p.arrival for a in self.state.agents for p in a.history]
        busy = [a.committed.arrival for a in self.state.busy_agents()]
        return max(done + busy, default=0.0)

    def run(self) -> HorizonResult:
        state = self.state
        events = 0

        # All first missions are planned together before anything lifts off.
        starters = [a for a in state.agents if a.queue]
        if starters:
            t0 = _time.perf_counter()
            itins = [
                AgentItinerary(a.vertex, 0.0, tuple(a.queue[0].specs(self.graph.drone)))
                for a in starters
            ]
            sol = self._solve(itins, [], starters)
            for a, p in zip(starters, sol.paths):
                self._commit_mission(a, p)
            self._validate_committed()
            self.log.append(
                LogEntry(0.0, "initial", -1, _time.perf_counter() - t0,
                         self._committed_makespan(),
                         [a.agent for a in starters], sol.stats.conflicts_resolved)
            )

        while True:
            busy = state.busy_agents()
            if not busy:
                break
            nxt = min(busy, key=lambda a: (a.committed.arrival, a.agent))
            state.clock = nxt.committed.arrival
            # the mission lands: the drone is parked at its end depot
            nxt.history.append(nxt.committed)
            nxt.vertex = ("d", nxt.mission.end_depot)
            nxt.time = state.clock
            nxt.committed = None
            nxt.mission = None
            events += 1

            if not nxt.queue:
                self.log.append(
                    LogEntry(state.clock, "finish", nxt.agent, 0.0,
                             self._committed_makespan())
                )
                continue

            t0 = _time.perf_counter()
            before = self.conflicts_resolved
            if self.strategy == "replan1":
                try:
                    path = self._plan_next(nxt)
                    self._commit_mission(nxt, path)
                    kind = "replan1"
                    replanned = [nxt.agent]
                except SolverInfeasibleError:
                    fleet = self._fleet_solve(nxt)
                    if fleet is None:
                        raise
                    fleet[1]()
                    kind = "escalated"
                    replanned = [a.agent for a in state.busy_agents()]
            else:
                try:
                    solo = self._plan_next(nxt)
                    solo_cost = max(
                        [solo.arrival]
                        + [a.committed.arrival for a in state.busy_agents()]
                    )
                except SolverInfeasibleError:
                    solo, solo_cost = None, None
                fleet = self._fleet_solve(nxt)
                if solo is None and fleet is None:
                    raise SolverInfeasibleError(
                        f"agent {nxt.agent} cannot start its next mission at "
                        f"t={state.clock}", agent=nxt.agent
                    )
                if fleet is not None and (solo is None or fleet[0] < solo_cost - 1e-9):
                    fleet[1]()
                    replanned = [a.agent for a in state.busy_agents()] + [nxt.agent]
                else:
                    self._commit_mission(nxt, solo)
                    replanned = [nxt.agent]
                kind = "replanm"
            self._validate_committed()
            self.log.append(
                LogEntry(state.clock, kind, nxt.agent, _time.perf_counter() - t0,
                         self._committed_makespan(), sorted(set(replanned)),
                         self.conflicts_resolved - before)
            )

        return HorizonResult(
            [a.history for a in state.agents],
            self.log,
            self._committed_makespan(),
            events,
            self.conflicts_resolved,
        )


def run_horizon(
    sequences: list[DeliveryPath],
    strategy: str,
    w: float,
    graph: OperationGraph,
    bundle: HeuristicBundle,
    timeout_s: float | None = 180.0,
    full_capacity_split: bool = True,
) -> HorizonResult:
    """Execute every delivery walk to completion under one strategy."""
    return HorizonRunner(
        sequences, strategy, w, graph, bundle, timeout_s, full_capacity_split
    ).run()
