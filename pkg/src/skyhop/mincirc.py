"""Minimum-cost circulation with arc lower bounds.

Solved by successive shortest augmenting paths: lower bounds are pushed
as forced base flow, the resulting node imbalances are wired to a super
source and super sink, and the residual network is then augmented along
cheapest paths found by Dijkstra with node potentials (all arc costs must
be non-negative).  Capacities are integers, so every augmentation moves
an integer amount and the final flow is integral.

Ties in the shortest-path search break on node index, which makes the
returned flow deterministic for a fixed arc construction order.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

from .errors import ValidationError


class CirculationInfeasibleError(Exception):
    """The lower bounds cannot all be satisfied."""

    def __init__(self, message: str, unsatisfied_nodes: list[int]):
        super().__init__(message)
        # Nodes whose forced outflow could not be routed back around.
        self.unsatisfied_nodes = unsatisfied_nodes


@dataclass
class Arc:
    u: int
    v: int
    lower: int
    cap: int
    cost: float
    flow: int = 0  # filled in by the solver

    def __post_init__(self):
        if self.lower < 0 or self.cap < self.lower:
            raise ValidationError(f"bad arc bounds: lower={self.lower} cap={self.cap}")
        if self.cost < 0:
            raise ValidationError("arc costs must be non-negative")


@dataclass
class _ResidualEdge:
    to: int
    cap: int
    cost: float
    arc: int      # index of the originating arc, -1 for auxiliary arcs
    forward: bool
    partner: int = -1  # index of the reverse edge in adj[to]


@dataclass
class _Residual:
    n: int
    adj: list[list[_ResidualEdge]] = field(default_factory=list)

    def __post_init__(self):
        self.adj = [[] for _ in range(self.n)]

    def add(self, u: int, v: int, cap: int, cost: float, arc: int) -> None:
        fwd = _ResidualEdge(v, cap, cost, arc, True)
        rev = _ResidualEdge(u, 0, -cost, arc, False)
        self.adj[u].append(fwd)
        self.adj[v].append(rev)
        fwd.partner = len(self.adj[v]) - 1
        rev.partner = len(self.adj[u]) - 1


def solve_circulation(num_nodes: int, arcs: list[Arc]) -> float:
    """Fill ``arc.flow`` with a minimum-cost circulation; return its cost.

    Raises :class:`CirculationInfeasibleError` when the lower bounds admit
    no circulation.
    """
    n = num_nodes
    source, sink = n, n + 1
    res = _Residual(n + 2)

    # Forced base flow: push every lower bound, then balance the excess
    # through the super source and sink.
    demand = [0] * n  # net residual inflow each node still needs
    for idx, a in enumerate(arcs):
        if not (0 <= a.u < n and 0 <= a.v < n):
            raise ValidationError(f"arc {idx} endpoints out of range")
        if a.lower:
            demand[a.u] += a.lower
            demand[a.v] -= a.lower
        res.add(a.u, a.v, a.cap - a.lower, a.cost, idx)

    # A node whose forced outflow exceeds its forced inflow needs that
    # much net residual inflow, which the max-flow problem provides by
    # draining it into the sink; the mirrored case feeds from the source.
    need = 0
    for v in range(n):
        if demand[v] > 0:
            res.add(v, sink, demand[v], 0.0, -1)
            need += demand[v]
        elif demand[v] < 0:
            res.add(source, v, -demand[v], 0.0, -1)

    pushed = _min_cost_flow(res, source, sink, need)
    if pushed < need:
        unsatisfied = sorted(e.to for e in res.adj[source] if e.forward and e.cap > 0)
        raise CirculationInfeasibleError("lower bounds admit no circulation", unsatisfied)

    total = 0.0
    for idx, a in enumerate(arcs):
        a.flow = a.lower
        total += a.lower * a.cost
    for u in range(n):
        for e in res.adj[u]:
            if e.forward and e.arc >= 0:
                sent = _sent(arcs[e.arc], e)
                arcs[e.arc].flow += sent
                total += sent * e.cost
    return total


def _sent(arc: Arc, e: _ResidualEdge) -> int:
    # Flow pushed on a forward residual edge = initial capacity - remaining.
    return (arc.cap - arc.lower) - e.cap


def _min_cost_flow(res: _Residual, s: int, t: int, limit: int) -> int:
    """Push up to ``limit`` units from s to t along cheapest paths."""
    n = res.n
    potential = [0.0] * n
    flow = 0
    while flow < limit:
        dist = [math.inf] * n
        prev: list[tuple[int, int] | None] = [None] * n
        dist[s] = 0.0
        heap: list[tuple[float, int]] = [(0.0, s)]
        while heap:
            d, u = heapq.heappop(heap)
            if d > dist[u] + 1e-12:
                continue
            for ei, e in enumerate(res.adj[u]):
                if e.cap <= 0:
                    continue
                nd = d + max(0.0, e.cost + potential[u] - potential[e.to])
                if nd < dist[e.to] - 1e-12:
                    dist[e.to] = nd
                    prev[e.to] = (u, ei)
                    heapq.heappush(heap, (nd, e.to))
        if prev[t] is None:
            break
        # Keep reduced costs non-negative; nodes the search never reached
        # get the sink distance so later iterations stay consistent.
        d_t = dist[t]
        for v in range(n):
            potential[v] += min(dist[v], d_t)
        # Bottleneck along the augmenting path.
        push = limit - flow
        v = t
        while v != s:
            u, ei = prev[v]
            push = min(push, res.adj[u][ei].cap)
            v = u
        v = t
        while v != s:
            u, ei = prev[v]
            e = res.adj[u][ei]
            e.cap -= push
            res.adj[v][e.partner].cap += push
            v = u
        flow += push
    return flow
