"""Makespan-bounded task allocation over depots and packages.

The allocation layer works on a small abstract digraph: depot vertices
``("d", i)`` and package vertices ``("p", j)``, with edge costs giving
estimated travel seconds.  Depot-depot edges are always present; edges
touching a package exist only when the package is reachable within half
the drone's flight range (so each half of a delivery fits one charge).

Plans are built in three steps:

1. ``solve_mct`` finds a cheapest set of closed tours such that every
   package is dispatched from exactly one depot and returned to exactly
   one depot and every depot is entered as often as it is left.  The
   integer program is totally unimodular, so it is solved exactly as a
   min-cost circulation: each package ``p`` becomes a unit-lower-bound
   arc from its dispatch side to its return side, and depot-depot arcs
   carry whatever balancing flow is needed.

2. ``extract_tours`` decomposes the edge multiset into closed tours
   (one Euler circuit per connected component) and ``merge_tours`` glues
   tours together with the cheapest depot-depot edge pair until a single
   tour remains.

3. ``split_tour`` cuts the tour into ``m`` paths, each anchored at
   depots, by accumulating package visits until a path reaches a 1/m
   share of the tour; the final path absorbs any remainder.

The resulting makespan is within ``OPT + alpha + beta`` of the optimal
``m``-path makespan, where ``alpha`` bounds a depot round trip and
``beta`` bounds a single dispatch-plus-return detour.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

from .errors import AllocationInfeasibleError, ValidationError
from .geo import GeoPoint
from .mincirc import Arc, CirculationInfeasibleError, solve_circulation
from .network import DroneSpec, Vertex, depot_vertex, package_vertex


@dataclass
class AllocationGraph:
    """Complete-on-depots cost digraph for the allocation step."""

    num_depots: int
    num_packages: int
    cost: dict[tuple[Vertex, Vertex], float]  # present edges only

    def __post_init__(self):
        if self.num_depots < 1:
            raise ValidationError("allocation needs at least one depot")
        for (u, v), c in self.cost.items():
            if u == v:
                raise ValidationError(f"self loop on {u!r}")
            if c < 0:
                raise ValidationError(f"negative cost on edge {u!r}->{v!r}")

    @property
    def depot_vertices(self) -> list[Vertex]:
        return [depot_vertex(i) for i in range(self.num_depots)]

    @property
    def package_vertices(self) -> list[Vertex]:
        return [package_vertex(j) for j in range(self.num_packages)]

    def has_edge(self, u: Vertex, v: Vertex) -> bool:
        return (u, v) in self.cost

    def c(self, u: Vertex, v: Vertex) -> float:
        return self.cost[(u, v)]

    def dispatch_depots(self, j: int) -> list[int]:
        p = package_vertex(j)
        return [i for i in range(self.num_depots) if (depot_vertex(i), p) in self.cost]

    def return_depots(self, j: int) -> list[int]:
        p = package_vertex(j)
        return [i for i in range(self.num_depots) if (p, depot_vertex(i)) in self.cost]


def build_allocation_graph(
    depots: list[GeoPoint],
    packages: list[GeoPoint],
    travel_time,
    drone: DroneSpec,
) -> AllocationGraph:
    """Assemble the allocation graph from a travel-time estimator.

    ``travel_time`` is either a callable ``(GeoPoint, GeoPoint) -> seconds``
    (+inf meaning unreachable within half range) or an object with
    ``time(a, b)`` and ``reachable_half(a, b)`` methods.  Depot-depot
    edges are kept regardless of range: relocation legs recharge at both
    ends.
    """
    if hasattr(travel_time, "time"):
        time_fn = travel_time.time
        reach_fn = travel_time.reachable_half
    else:
        time_fn = travel_time
        reach_fn = lambda a, b: math.isfinite(time_fn(a, b))

    cost: dict[tuple[Vertex, Vertex], float] = {}
    for i, a in enumerate(depots):
        for i2, b in enumerate(depots):
            if i != i2:
                cost[(depot_vertex(i), depot_vertex(i2))] = time_fn(a, b)
    missing_in: list[int] = []
    missing_out: list[int] = []
    for j, p in enumerate(packages):
        any_in = any_out = False
        for i, d in enumerate(depots):
            if reach_fn(d, p):
                cost[(depot_vertex(i), package_vertex(j))] = time_fn(d, p)
                any_in = True
            if reach_fn(p, d):
                cost[(package_vertex(j), depot_vertex(i))] = time_fn(p, d)
                any_out = True
        if not any_in:
            missing_in.append(j)
        if not any_out:
            missing_out.append(j)
    if missing_in or missing_out:
        bad = sorted(set(missing_in) | set(missing_out))
        raise AllocationInfeasibleError(
            f"packages {bad} cannot be served from any depot within half the flight range"
        )
    return AllocationGraph(len(depots), len(packages), cost)


@dataclass
class MCTSolution:
    """Integral edge multiplicities of a cheapest tour cover."""

    x: dict[tuple[Vertex, Vertex], int]  # positive multiplicities only
    objective: float


def solve_mct(g: AllocationGraph) -> MCTSolution:
    """Solve the tour-cover program exactly via a min-cost circulation.

    Node layout of the circulation: depots first, then for each package a
    dispatch-side node (flow enters here from a depot) and a return-side
    node (flow leaves here for a depot) joined by a unit lower-bound arc.
    """
    ell, k = g.num_depots, g.num_packages
    for j in range(k):
        if not g.dispatch_depots(j) or not g.return_depots(j):
            raise AllocationInfeasibleError(f"package {j} has no usable depot edges")

    def pin(j: int) -> int:
        return ell + 2 * j

    def pout(j: int) -> int:
        return ell + 2 * j + 1

    arcs: list[Arc] = []
    edge_of_arc: list[tuple[Vertex, Vertex] | None] = []

    def add(u: int, v: int, lower: int, cap: int, cost: float, edge) -> None:
        arcs.append(Arc(u, v, lower, cap, cost))
        edge_of_arc.append(edge)

    for i in range(ell):
        for i2 in range(ell):
            if i != i2:
                d, d2 = depot_vertex(i), depot_vertex(i2)
                add(i, i2, 0, k + 1, g.c(d, d2), (d, d2))
    for j in range(k):
        p = package_vertex(j)
        for i in g.dispatch_depots(j):
            add(i, pin(j), 0, 1, g.c(depot_vertex(i), p), (depot_vertex(i), p))
        for i in g.return_depots(j):
            add(pout(j), i, 0, 1, g.c(p, depot_vertex(i)), (p, depot_vertex(i)))
        add(pin(j), pout(j), 1, 1, 0.0, None)

    try:
        objective = solve_circulation(ell + 2 * k, arcs)
    except CirculationInfeasibleError as exc:
        bad = sorted({(node - ell) // 2 for node in exc.unsatisfied_nodes if node >= ell})
        raise AllocationInfeasibleError(
            f"no tour cover exists; packages {bad} cannot be routed"
        ) from exc

    x: dict[tuple[Vertex, Vertex], int] = {}
    for arc, edge in zip(arcs, edge_of_arc):
        if edge is not None and arc.flow > 0:
            x[edge] = x.get(edge, 0) + arc.flow
    return MCTSolution(x, objective)


def check_mct_solution(g: AllocationGraph, sol: MCTSolution) -> None:
    """Raise ValidationError unless ``sol`` satisfies the tour-cover constraints."""
    out_deg: dict[Vertex, int] = {}
    in_deg: dict[Vertex, int] = {}
    for (u, v), mult in sol.x.items():
        if mult < 0 or mult != int(mult):
            raise ValidationError(f"edge {u!r}->{v!r} has multiplicity {mult!r}")
        if not g.has_edge(u, v):
            raise ValidationError(f"edge {u!r}->{v!r} is not in the graph")
        if (u[0] == "p" or v[0] == "p") and mult > 1:
            raise ValidationError(f"package edge {u!r}->{v!r} used {mult} times")
        out_deg[u] = out_deg.get(u, 0) + mult
        in_deg[v] = in_deg.get(v, 0) + mult
    for j in range(g.num_packages):
        p = package_vertex(j)
        if in_deg.get(p, 0) != 1 or out_deg.get(p, 0) != 1:
            raise ValidationError(f"package {j} is not visited exactly once")
    for v in set(out_deg) | set(in_deg):
        if out_deg.get(v, 0) != in_deg.get(v, 0):
            raise ValidationError(f"vertex {v!r} is unbalanced")


@dataclass
class Tour:
    """A closed walk; edge i runs from cycle[i] to cycle[(i+1) % n]."""

    cycle: list[Vertex]
    length: float

    @property
    def edges(self) -> list[tuple[Vertex, Vertex]]:
        n = len(self.cycle)
        return [(self.cycle[i], self.cycle[(i + 1) % n]) for i in range(n)]

    @property
    def depots(self) -> list[Vertex]:
        return sorted({v for v in self.cycle if v[0] == "d"})

    @property
    def packages(self) -> list[Vertex]:
        return sorted({v for v in self.cycle if v[0] == "p"})


def _euler_circuit(adj: dict[Vertex, list[Vertex]], start: Vertex) -> list[Vertex]:
    """Hierholzer's algorithm; consumes ``adj`` (targets kept sorted)."""
    stack = [start]
    walk: list[Vertex] = []
    while stack:
        v = stack[-1]
        targets = adj.get(v)
        if targets:
            stack.append(targets.pop(0))
        else:
            walk.append(stack.pop())
    walk.reverse()
    return walk


def extract_tours(g: AllocationGraph, sol: MCTSolution) -> list[Tour]:
    """Decompose a tour cover into vertex-disjoint closed tours.

    Every edge appears in the decomposition exactly as often as its
    multiplicity; every package lands in exactly one tour.
    """
    check_mct_solution(g, sol)
    if not sol.x:
        return []

    adj: dict[Vertex, list[Vertex]] = {}
    undirected: dict[Vertex, set[Vertex]] = {}
    for (u, v), mult in sorted(sol.x.items()):
        adj.setdefault(u, []).extend([v] * mult)
        undirected.setdefault(u, set()).add(v)
        undirected.setdefault(v, set()).add(u)

    # Connected components of the support (ignoring direction).
    comp: dict[Vertex, int] = {}
    n_comps = 0
    for root in sorted(adj):
        if root in comp:
            continue
        cid = n_comps
        n_comps += 1
        frontier = [root]
        comp[root] = cid
        while frontier:
            u = frontier.pop()
            for v in sorted(undirected.get(u, ())):
                if v not in comp:
                    comp[v] = cid
                    frontier.append(v)

    tours: list[Tour] = []
    for cid in range(n_comps):
        members = sorted(v for v, c in comp.items() if c == cid)
        start = members[0]
        walk = _euler_circuit(adj, start)
        if walk[0] != walk[-1] or any(adj.get(v) for v in members):
            raise ValidationError("component is not Eulerian")
        cycle = walk[:-1]
        if not any(v[0] == "d" for v in cycle):
            raise ValidationError("tour contains no depot")
        length = sum(g.c(u, v) for u, v in zip(walk, walk[1:]))
        tours.append(Tour(cycle, length))
    return tours


def merge_tours(tours: list[Tour], g: AllocationGraph) -> Tour:
    """Glue tours into one by repeatedly adding the cheapest depot pair.

    Each merge joins the two components whose depots ``d``, ``d2``
    minimise ``c(d, d2) + c(d2, d)`` and adds exactly that much length.
    """
    if not tours:
        raise ValidationError("nothing to merge")
    groups: list[dict] = [
        {"edges": list(t.edges), "depots": t.depots, "length": t.length} for t in tours
    ]
    while len(groups) > 1:
        best = None
        for a, b in itertools.combinations(range(len(groups)), 2):
            for d in groups[a]["depots"]:
                for d2 in groups[b]["depots"]:
                    if not (g.has_edge(d, d2) and g.has_edge(d2, d)):
                        raise ValidationError(
                            f"depot pair {d!r},{d2!r} is not joined both ways"
                        )
                    cost = g.c(d, d2) + g.c(d2, d)
                    key = (cost, min(d, d2), max(d, d2))
                    if best is None or key < best[0]:
                        best = (key, a, b, d, d2)
        (cost, _, _), a, b, d, d2 = best
        ga, gb = groups[a], groups[b]
        ga["edges"] += gb["edges"] + [(d, d2), (d2, d)]
        ga["depots"] = sorted(set(ga["depots"]) | set(gb["depots"]))
        ga["length"] += gb["length"] + cost
        groups.pop(b)

    merged = groups[0]
    adj: dict[Vertex, list[Vertex]] = {}
    for u, v in sorted(merged["edges"]):
        adj.setdefault(u, []).append(v)
    start = min(v for v in adj if v[0] == "d")
    walk = _euler_circuit(adj, start)
    if walk[0] != walk[-1] or any(adj.get(v) for v in adj):
        raise ValidationError("merged edge set is not Eulerian")
    return Tour(walk[:-1], merged["length"])


@dataclass
class DeliveryPath:
    """An open depot-to-depot walk serving zero or more packages."""

    stops: list[Vertex]  # alternating depots/packages; may hop depot to depot
    length: float

    @property
    def packages(self) -> list[Vertex]:
        return [v for v in self.stops if v[0] == "p"]


def split_tour(t: Tour, m: int, g: AllocationGraph) -> list[DeliveryPath]:
    """Cut a tour into ``m`` depot-anchored paths of balanced length.

    Paths accumulate whole package visits (the dispatch edge, the return
    edge, and any depot hops leading to the next dispatch) while their
    length stays below ``length(t) / m``; the last path absorbs whatever
    remains.  Depot hops falling on a path boundary are dropped: no drone
    travels them.
    """
    if m < 1:
        raise ValidationError("need at least one path")
    cycle = t.cycle
    n = len(cycle)
    pkg_positions = [i for i, v in enumerate(cycle) if v[0] == "p"]
    if not pkg_positions:
        return [DeliveryPath([], 0.0) for _ in range(m)]

    # Rotate so the cycle starts at the depot dispatching the first package.
    first = pkg_positions[0]
    startpos = (first - 1) % n
    cycle = cycle[startpos:] + cycle[:startpos]

    # Chunks: one per package visit.  A chunk holds the depot hops that
    # lead from the previous return depot to this dispatch depot, then
    # (d, p) and (p, d').
    chunks: list[dict] = []
    i = 0
    hops: list[tuple[Vertex, Vertex]] = []
    while i < len(cycle):
        u = cycle[i]
        v = cycle[(i + 1) % len(cycle)]
        if v[0] == "p":
            w = cycle[(i + 2) % len(cycle)]
            core = [(u, v), (v, w)]
            chunks.append(
                {
                    "lead": hops,
                    "core": core,
                    "lead_cost": sum(g.c(a, b) for a, b in hops),
                    "core_cost": sum(g.c(a, b) for a, b in core),
                }
            )
            hops = []
            i += 2
        else:
            hops.append((u, v))
            i += 1
    # Hops trailing the final package wrap back to the start; they bridge
    # no further package visit and are never travelled.

    threshold = t.length / m
    paths: list[DeliveryPath] = []
    j = 0
    for agent in range(m):
        edges: list[tuple[Vertex, Vertex]] = []
        length = 0.0
        while j < len(chunks) and (length < threshold or agent == m - 1):
            chunk = chunks[j]
            if edges:
                edges += chunk["lead"]
                length += chunk["lead_cost"]
            edges += chunk["core"]
            length += chunk["core_cost"]
            j += 1
        if edges:
            stops = [edges[0][0]] + [e[1] for e in edges]
            paths.append(DeliveryPath(stops, length))
        else:
            paths.append(DeliveryPath([], 0.0))
    return paths


@dataclass
class BoundReport:
    """Makespan guarantee attached to an allocation.

    The ``OPT + alpha + beta`` guarantee presumes the tour cover splits
    into at most ``m`` tours (always true when depots are scarcer than
    agents); ``num_tours`` lets callers check that premise.
    """

    makespan: float      # longest produced path, seconds
    alpha: float         # worst depot round trip
    beta: float          # worst dispatch-plus-return detour
    tour_length: float   # merged tour length
    mct_objective: float
    num_tours: int       # tours in the cover before merging

    @property
    def guarantee(self) -> float:
        """Additive slack of the makespan bound: OPT + alpha + beta."""
        return self.alpha + self.beta


def compute_alpha_beta(g: AllocationGraph) -> tuple[float, float]:
    alpha = 0.0
    for d in g.depot_vertices:
        for d2 in g.depot_vertices:
            if d != d2:
                alpha = max(alpha, g.c(d, d2) + g.c(d2, d))
    beta = 0.0
    for j in range(g.num_packages):
        p = package_vertex(j)
        for i in g.dispatch_depots(j):
            for i2 in g.return_depots(j):
                beta = max(beta, g.c(depot_vertex(i), p) + g.c(p, depot_vertex(i2)))
    return alpha, beta


def merge_split_tours(g: AllocationGraph, m: int) -> tuple[list[DeliveryPath], BoundReport]:
    """Full allocation: tours, merge, split; returns paths and the bound."""
    if m < 1:
        raise ValidationError("need at least one agent")
    _check_depot_clique(g)
    alpha, beta = compute_alpha_beta(g)
    if g.num_packages == 0:
        report = BoundReport(0.0, alpha, beta, 0.0, 0.0, 0)
        return [DeliveryPath([], 0.0) for _ in range(m)], report
    sol = solve_mct(g)
    tours = extract_tours(g, sol)
    tour = merge_tours(tours, g)
    paths = split_tour(tour, m, g)
    makespan = max(p.length for p in paths)
    report = BoundReport(makespan, alpha, beta, tour.length, sol.objective, len(tours))
    return paths, report


def _check_depot_clique(g: AllocationGraph) -> None:
    for d in g.depot_vertices:
        for d2 in g.depot_vertices:
            if d != d2 and not g.has_edge(d, d2):
                raise ValidationError(f"depot edge {d!r}->{d2!r} is missing")
