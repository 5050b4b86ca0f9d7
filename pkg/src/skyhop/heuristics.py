"""Admissible search heuristics over the operation network.

Two heuristics guide the constrained search:

* ``h_time``: straight-line flight time to the goal.  Consistent, because
  every edge (riding or flying) covers its ground distance no faster than
  the drone could fly it.

* ``h_dist``: a lower bound on the flight distance still needed to reach
  the goal, looked up in an all-pairs table over a *trip metagraph*.  The
  metagraph has one vertex per trip plus one per depot/package; an edge
  cost is the least flight distance that can connect its endpoints:

  - location to location: direct distance;
  - trip to location (either direction): the closest stop;
  - trip to trip: the closest stop pair (u, v) a drone can actually
    transfer between, i.e. with ``speed * (t_v - t_u) >= dist(u, v)``;
    +inf when no such pair exists.

  Any feasible drone route decomposes into flight segments between these
  entities, each at least as long as the corresponding metagraph edge, so
  the all-pairs shortest distance is admissible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .geo import EARTH_RADIUS_KM, GeoPoint, distance_km
from .network import OperationGraph, TransitTrip, Vertex


@dataclass
class TripMetagraph:
    """Complete cost graph over depots, packages and trips.

    Row/column layout: depots first, then packages, then trips.
    """

    num_depots: int
    num_packages: int
    num_trips: int
    cost: np.ndarray  # (n, n) flight-distance lower bounds, km

    def index_of(self, v: Vertex) -> int:
        if v[0] == "d":
            return v[1]
        if v[0] == "p":
            return self.num_depots + v[1]
        if v[0] == "t":
            return self.num_depots + self.num_packages + v[1]
        raise ValidationError(f"unknown vertex {v!r}")


def _stop_arrays(trip: TransitTrip) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    lat = np.radians([s.location.lat for s in trip.stops])
    lon = np.radians([s.location.lon for s in trip.stops])
    t = np.array([s.t for s in trip.stops])
    return lat, lon, t


def _cross_distances(lat_a, lon_a, lat_b, lon_b) -> np.ndarray:
    """Pairwise haversine distances between two stop arrays (km)."""
    la, lb = lat_a[:, None], lat_b[None, :]
    dla = lb - la
    dlo = lon_b[None, :] - lon_a[:, None]
    h = np.sin(dla / 2.0) ** 2 + np.cos(la) * np.cos(lb) * np.sin(dlo / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.minimum(1.0, np.sqrt(h)))


def trip_pair_distance(a: TransitTrip, b: TransitTrip, speed_kms: float) -> float:
    """Least flight distance transferring from riding ``a`` to riding ``b``.

    Minimum of dist(u, v) over stop events u of ``a`` and v of ``b`` with
    the drone able to make the connection in time.  +inf when impossible.
    """
    lat_a, lon_a, t_a = _stop_arrays(a)
    lat_b, lon_b, t_b = _stop_arrays(b)
    d = _cross_distances(lat_a, lon_a, lat_b, lon_b)
    dt = t_b[None, :] - t_a[:, None]
    ok = speed_kms * dt + 1e-9 >= d
    if not ok.any():
        return math.inf
    return float(d[ok].min())


def location_trip_distance(p: GeoPoint, trip: TransitTrip) -> float:
    """Closest stop of ``trip`` to ``p`` (symmetric, no timing constraint)."""
    return min(distance_km(p, s.location) for s in trip.stops)


def build_trip_metagraph(
    trips: list[TransitTrip],
    depots: list[GeoPoint],
    packages: list[GeoPoint],
    speed_kmh: float,
    trip_block: np.ndarray | None = None,
) -> TripMetagraph:
    """Assemble the metagraph cost matrix.

    ``trip_block`` lets callers reuse a precomputed trip-to-trip cost
    block (the only scenario-independent and expensive part).
    """
    locs = list(depots) + list(packages)
    nl, nt = len(locs), len(trips)
    n = nl + nt
    cost = np.zeros((n, n))

    for a in range(nl):
        for b in range(nl):
            if a != b:
                cost[a, b] = distance_km(locs[a], locs[b])

    for a in range(nl):
        for ti in range(nt):
            d = location_trip_distance(locs[a], trips[ti])
            cost[a, nl + ti] = d
            cost[nl + ti, a] = d

    if trip_block is not None:
        if trip_block.shape != (nt, nt):
            raise ValidationError("trip block has the wrong shape")
        cost[nl:, nl:] = trip_block
    else:
        cost[nl:, nl:] = compute_trip_block(trips, speed_kmh)

    np.fill_diagonal(cost, 0.0)
    return TripMetagraph(len(depots), len(packages), nt, cost)


def compute_trip_block(trips: list[TransitTrip], speed_kmh: float) -> np.ndarray:
    """Trip-to-trip metagraph cost block (directional)."""
    speed_kms = speed_kmh / 3600.0
    nt = len(trips)
    block = np.zeros((nt, nt))
    for a in range(nt):
        for b in range(nt):
            if a != b:
                block[a, b] = trip_pair_distance(trips[a], trips[b], speed_kms)
    return block


@dataclass
class DistanceHeuristicTable:
    """All-pairs shortest metagraph distances, ready for h_dist lookups."""

    meta: TripMetagraph
    table: np.ndarray  # (n, n), km

    def lookup(self, v: Vertex, goal: Vertex) -> float:
        return float(self.table[self.meta.index_of(v), self.meta.index_of(goal)])


def all_pairs_min_distance(meta: TripMetagraph) -> DistanceHeuristicTable:
    """Floyd-Warshall over the metagraph (handles +inf sentinels)."""
    d = meta.cost.copy()
    n = d.shape[0]
    for h in range(n):
        np.minimum(d, d[:, h : h + 1] + d[h : h + 1, :], out=d)
    return DistanceHeuristicTable(meta, d)


def h_time(v_loc: GeoPoint, goal_loc: GeoPoint, reference_speed_kms: float) -> float:
    """Optimistic remaining seconds from ``v_loc`` to the goal.

    The reference speed is the fastest straight-line speed any movement
    can achieve — flying, or riding the quickest vehicle segment — so no
    mix of modes covers ground faster and the estimate never overshoots.
    """
    return distance_km(v_loc, goal_loc) / reference_speed_kms


def h_dist(v: Vertex, goal: Vertex, table: DistanceHeuristicTable) -> float:
    """Lower bound on remaining flight km from ``v`` to the goal."""
    return table.lookup(v, goal)


@dataclass
class HeuristicBundle:
    """The pair of heuristics a search needs, bound to one graph."""

    reference_speed_kms: float
    dist_table: DistanceHeuristicTable | None = None  # None disables h_dist

    def time_to_goal(self, graph: OperationGraph, v: Vertex, goal: Vertex) -> float:
        return h_time(graph.loc(v), graph.loc(goal), self.reference_speed_kms)

    def dist_to_goal(self, v: Vertex, goal: Vertex) -> float:
        if self.dist_table is None:
            return 0.0
        return self.dist_table.lookup(v, goal)


def build_bundle(graph: OperationGraph, trip_block: np.ndarray | None = None) -> HeuristicBundle:
    """Metagraph + all-pairs table + heuristics for ``graph``."""
    meta = build_trip_metagraph(
        graph.trips, graph.depots, graph.packages, graph.drone.speed_kmh, trip_block
    )
    return HeuristicBundle(graph.reference_speed_kms, all_pairs_min_distance(meta))
