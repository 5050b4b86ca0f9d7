"""Time-expanded operation network for drones riding public transit.

The network has three vertex kinds, encoded as plain tuples so they are
hashable and totally ordered (which keeps every search deterministic):

* ``("d", i)``        -- depot ``i``, reachable at any time
* ``("p", j)``        -- package ``j``, reachable at any time
* ``("t", ti, s)``    -- stop event ``s`` of trip ``ti``; a transit vertex
                         exists *at one instant*: the vehicle of trip ``ti``
                         is at that stop at that time.

Edges are generated on the fly rather than materialised:

* riding: ``("t", ti, s) -> ("t", ti, s+1)`` takes the timetable time,
  consumes no flight range, and is capacity-limited;
* flying to a vehicle: from any vertex to a stop event of a *different*
  trip, feasible when the drone can make it there before the vehicle does
  (``speed * (t_v - t_u) >= dist``) and the distance fits in the remaining
  range.  Per target trip only non-dominated stop events are kept: scanning
  candidates in time order, a later stop event survives only if it is
  strictly closer than every earlier reachable one;
* flying to the query goal: a direct flight at drone speed.

Flying to intermediate depots or packages is never useful for a single
bounded leg, so those edges are not generated.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np

from .errors import ValidationError
from .geo import GeoPoint, distance_km, distance_km_vec

# Vertices are ("d", i), ("p", j) or ("t", trip_index, stop_index).
Vertex = tuple

# Slack applied to reachability and budget comparisons so borderline
# floating point cases resolve towards feasibility.
EPS = 1e-9


def depot_vertex(i: int) -> Vertex:
    return ("d", i)


def package_vertex(j: int) -> Vertex:
    return ("p", j)


def transit_vertex(trip: int, stop: int) -> Vertex:
    return ("t", trip, stop)


@dataclass(frozen=True)
class DroneSpec:
    speed_kmh: float = 25.0     # cruise speed
    max_flight_km: float = 7.0  # flight range on a full charge

    def __post_init__(self):
        if self.speed_kmh <= 0:
            raise ValueError("drone speed must be positive")
        if self.max_flight_km <= 0:
            raise ValueError("flight range must be positive")

    @property
    def speed_kms(self) -> float:
        """Speed in km per second (all timestamps are seconds)."""
        return self.speed_kmh / 3600.0

    def flight_seconds(self, dist_km: float) -> float:
        return dist_km / self.speed_kms


@dataclass(frozen=True)
class TimedStop:
    seq: int            # ordinal within the trip, dense from 0
    location: GeoPoint
    t: float            # seconds since the start of the planning window


@dataclass
class TransitTrip:
    trip_id: str
    stops: list[TimedStop]

    def __post_init__(self):
        if len(self.stops) < 2:
            raise ValidationError(f"trip {self.trip_id!r} has fewer than two stops")
        for a, b in zip(self.stops, self.stops[1:]):
            if b.t <= a.t:
                raise ValidationError(
                    f"trip {self.trip_id!r} has non-increasing stop times "
                    f"({a.t} then {b.t})"
                )


class EdgeOut(NamedTuple):
    """One outgoing edge from a vertex at a given time."""

    v: Vertex          # head vertex
    ride: bool         # True for a riding edge, False for a flight
    t: float           # traversal seconds (flight time includes waiting)
    dist: float        # flight distance consumed, km (0 while riding)
    cap: float         # carrying capacity of the edge (inf for flights)


def assign_capacities(trips: list[TransitTrip], choices: Iterable[int], seed: int) -> dict[tuple[int, int], int]:
    """Draw a carrying capacity for every riding edge, reproducibly.

    Keys are ``(trip_index, stop_index)`` identifying the edge that leaves
    stop ``stop_index``.
    """
    rng = random.Random(seed)
    pool = sorted(choices)
    caps: dict[tuple[int, int], int] = {}
    for ti, trip in enumerate(trips):
        for s in range(len(trip.stops) - 1):
            caps[(ti, s)] = rng.choice(pool)
    return caps


@dataclass
class OperationGraph:
    """Depots, packages and a transit timetable, with on-demand edges."""

    depots: list[GeoPoint]
    packages: list[GeoPoint]
    trips: list[TransitTrip]
    drone: DroneSpec
    capacities: dict[tuple[int, int], int] = field(default_factory=dict)
    default_capacity: int = 1

    def __post_init__(self):
        # Per-trip coordinate/time arrays for vectorised flight queries.
        self._lat = [np.array([math.radians(s.location.lat) for s in t.stops]) for t in self.trips]
        self._lon = [np.array([math.radians(s.location.lon) for s in t.stops]) for t in self.trips]
        self._times = [np.array([s.t for s in t.stops]) for t in self.trips]
        # Fastest straight-line speed any movement can achieve: flying, or
        # sitting on the quickest vehicle segment.  Straight-line distance
        # over this speed is a sound remaining-time estimate.
        fastest = self.drone.speed_kms
        for trip in self.trips:
            for a, b in zip(trip.stops, trip.stops[1:]):
                seg = distance_km(a.location, b.location) / (b.t - a.t)
                if seg > fastest:
                    fastest = seg
        self.reference_speed_kms = fastest

    # -- basic lookups ---------------------------------------------------

    @property
    def num_transit_vertices(self) -> int:
        return sum(len(t.stops) for t in self.trips)

    def loc(self, v: Vertex) -> GeoPoint:
        kind = v[0]
        if kind == "d":
            return self.depots[v[1]]
        if kind == "p":
            return self.packages[v[1]]
        if kind == "t":
            return self.trips[v[1]].stops[v[2]].location
        raise ValidationError(f"unknown vertex {v!r}")

    def time_of(self, v: Vertex) -> float:
        if v[0] != "t":
            raise ValidationError(f"vertex {v!r} carries no timestamp")
        return self.trips[v[1]].stops[v[2]].t

    def capacity(self, trip: int, stop: int) -> int:
        return self.capacities.get((trip, stop), self.default_capacity)

    # -- edge generation -------------------------------------------------

    def out_neighbors(
        self,
        u: Vertex,
        t_u: float,
        budget_km: float,
        goal: Vertex,
        prune: bool = True,
        constraints=None,
    ) -> list[EdgeOut]:
        """Outgoing edges of ``u`` occupied at time ``t_u``.

        ``budget_km`` is the flight range still available; flights beyond
        it are not generated.  ``constraints`` (anything exposing
        ``forbidden_boardings`` and ``excluded_edges``) removes boardings
        and riding edges outright.  ``prune=False`` disables the per-trip
        dominance filter and returns every reachable stop event (used to
        check that the filter never changes an optimal cost).
        """
        forbidden = constraints.forbidden_boardings if constraints else ()
        excluded = constraints.excluded_edges if constraints else ()
        edges: list[EdgeOut] = []
        speed = self.drone.speed_kms
        u_loc = self.loc(u)
        u_lat = math.radians(u_loc.lat)
        u_lon = math.radians(u_loc.lon)
        own_trip = u[1] if u[0] == "t" else -1

        # (a) stay on the vehicle: ride to the next stop of the own trip.
        if u[0] == "t":
            ti, s = u[1], u[2]
            trip = self.trips[ti]
            if s + 1 < len(trip.stops) and (ti, s) not in excluded:
                nxt = trip.stops[s + 1]
                edges.append(
                    EdgeOut(
                        transit_vertex(ti, s + 1),
                        True,
                        nxt.t - t_u,
                        0.0,
                        float(self.capacity(ti, s)),
                    )
                )

        # (b) fly to a stop event of another trip.
        for ti in range(len(self.trips)):
            if ti == own_trip:
                continue
            times = self._times[ti]
            start = int(np.searchsorted(times, t_u - EPS, side="left"))
            if start >= len(times):
                continue
            d = distance_km_vec(u_lat, u_lon, self._lat[ti][start:], self._lon[ti][start:])
            dt = times[start:] - t_u
            ok = (speed * dt + EPS >= d) & (d <= budget_km + EPS)
            best = math.inf
            for off in range(len(dt)):
                s_idx = start + off
                if off and (ti, s_idx - 1) in excluded:
                    # Nobody boarding earlier can ride past this edge, so
                    # earlier stop events stop dominating later ones.
                    best = math.inf
                if not ok[off]:
                    continue
                if transit_vertex(ti, s_idx) in forbidden:
                    continue
                dist = float(d[off])
                # An earlier, still-ridable stop event of this trip that is
                # at least as close dominates this one; boarding later and
                # farther never helps.
                keep = (not prune) or dist < best - EPS
                if dist < best:
                    best = dist
                if keep:
                    edges.append(
                        EdgeOut(
                            transit_vertex(ti, s_idx),
                            False,
                            float(dt[off]),
                            dist,
                            math.inf,
                        )
                    )

        # (c) fly straight to the goal of the current query.
        if goal != u and goal[0] != "t":
            dist = distance_km(u_loc, self.loc(goal))
            if dist <= budget_km + EPS:
                edges.append(EdgeOut(goal, False, self.drone.flight_seconds(dist), dist, math.inf))

        return edges
