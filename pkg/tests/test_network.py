"""Operation network: vertices, on-demand edges, capacities."""

from __future__ import annotations

import math

import pytest

from skyhop.errors import ValidationError
from skyhop.geo import GeoPoint, distance_km
from skyhop.mcsp import ConstraintSet
from skyhop.network import (
    DroneSpec,
    OperationGraph,
    TimedStop,
    TransitTrip,
    assign_capacities,
    depot_vertex,
    package_vertex,
    transit_vertex,
)

LAT = 37.76


def stop(s: int, lon: float, t: float) -> TimedStop:
    return TimedStop(s, GeoPoint(LAT, lon), t)


def small_graph(caps: dict | None = None) -> OperationGraph:
    east = TransitTrip(
        "east",
        [stop(0, -122.450, 100.0), stop(1, -122.440, 220.0), stop(2, -122.430, 340.0)],
    )
    return OperationGraph(
        depots=[GeoPoint(LAT, -122.4505)],
        packages=[GeoPoint(LAT, -122.4295)],
        trips=[east],
        drone=DroneSpec(25.0, 7.0),
        capacities=caps or {(0, 0): 2, (0, 1): 3},
    )


def heads(edges) -> list:
    return [e.v for e in edges]


def test_drone_spec_units_and_validation():
    d = DroneSpec(36.0, 7.0)
    assert d.speed_kms == pytest.approx(0.01)
    assert d.flight_seconds(1.0) == pytest.approx(100.0)
    with pytest.raises(ValueError):
        DroneSpec(0.0, 7.0)
    with pytest.raises(ValueError):
        DroneSpec(25.0, -1.0)


def test_transit_trip_validation():
    with pytest.raises(ValidationError):
        TransitTrip("short", [stop(0, -122.45, 0.0)])
    with pytest.raises(ValidationError):
        TransitTrip("backwards", [stop(0, -122.45, 100.0), stop(1, -122.44, 100.0)])


def test_assign_capacities_reproducible_and_bounded():
    trips = [
        TransitTrip("a", [stop(0, -122.45, 0.0), stop(1, -122.44, 60.0), stop(2, -122.43, 120.0)]),
        TransitTrip("b", [stop(0, -122.45, 10.0), stop(1, -122.44, 70.0)]),
    ]
    caps = assign_capacities(trips, (3, 4, 5), seed=42)
    # One entry per riding edge: two for trip a, one for trip b.
    assert set(caps) == {(0, 0), (0, 1), (1, 0)}
    assert all(c in (3, 4, 5) for c in caps.values())
    assert caps == assign_capacities(trips, (3, 4, 5), seed=42)
    assert caps != assign_capacities(trips, (6, 7), seed=42)


def test_ride_edge_follows_timetable_and_capacity():
    g = small_graph()
    u = transit_vertex(0, 0)
    edges = g.out_neighbors(u, g.time_of(u), 7.0, depot_vertex(0))
    rides = [e for e in edges if e.ride]
    assert len(rides) == 1
    ride = rides[0]
    assert ride.v == transit_vertex(0, 1)
    assert ride.t == pytest.approx(120.0)
    assert ride.dist == 0.0
    assert ride.cap == 2.0

    last = transit_vertex(0, 2)
    edges = g.out_neighbors(last, g.time_of(last), 7.0, depot_vertex(0))
    assert not any(e.ride for e in edges)


def test_goal_flight_always_offered_within_budget():
    g = small_graph()
    d, p = depot_vertex(0), package_vertex(0)
    dist = distance_km(g.loc(d), g.loc(p))
    edges = g.out_neighbors(d, 0.0, 7.0, p)
    goal_edges = [e for e in edges if e.v == p]
    assert len(goal_edges) == 1
    assert goal_edges[0].dist == pytest.approx(dist)
    assert goal_edges[0].t == pytest.approx(g.drone.flight_seconds(dist))
    # Out of range: the flight is not generated.
    assert p not in heads(g.out_neighbors(d, 0.0, dist * 0.9, p))


def test_boarding_requires_catching_the_vehicle():
    g = small_graph()
    d = depot_vertex(0)
    # At t=0 every stop event is catchable; pruning keeps only the nearest.
    assert heads(g.out_neighbors(d, 0.0, 7.0, package_vertex(0)))[:1] == [transit_vertex(0, 0)]
    # After the trip ends nothing is boardable.
    vs = heads(g.out_neighbors(d, 341.0, 7.0, package_vertex(0)))
    assert not any(v[0] == "t" for v in vs)

    # A depot next to stop 1: the vehicle reaches stop 0 (0.84 km away,
    # a 120 s flight) at t=100, too soon to catch, but stop 1 is at hand.
    near1 = OperationGraph(
        [GeoPoint(LAT, -122.4405)], g.packages, g.trips, g.drone, g.capacities
    )
    vs = heads(near1.out_neighbors(depot_vertex(0), 0.0, 7.0, package_vertex(0)))
    assert transit_vertex(0, 0) not in vs
    assert transit_vertex(0, 1) in vs


def test_pruning_keeps_only_nondominated_stop_events():
    g = small_graph()
    d = depot_vertex(0)
    pruned = heads(g.out_neighbors(d, 0.0, 7.0, package_vertex(0), prune=True))
    full = heads(g.out_neighbors(d, 0.0, 7.0, package_vertex(0), prune=False))
    transit_pruned = [v for v in pruned if v[0] == "t"]
    transit_full = [v for v in full if v[0] == "t"]
    # Stop 0 is nearest and earliest, so it dominates stops 1 and 2.
    assert transit_pruned == [transit_vertex(0, 0)]
    assert transit_full == [transit_vertex(0, 0), transit_vertex(0, 1), transit_vertex(0, 2)]
    assert set(pruned) <= set(full)


def test_own_trip_is_not_a_flight_target():
    g = small_graph()
    u = transit_vertex(0, 0)
    edges = g.out_neighbors(u, g.time_of(u), 7.0, depot_vertex(0))
    assert all(e.ride for e in edges if e.v[0] == "t")


def test_forbidden_boarding_reveals_the_next_event():
    g = small_graph()
    d = depot_vertex(0)
    cons = ConstraintSet(forbidden_boardings=frozenset({transit_vertex(0, 0)}))
    vs = heads(g.out_neighbors(d, 0.0, 7.0, package_vertex(0), constraints=cons))
    # Stop 0 is gone, and it must not keep dominating stop 1.
    assert transit_vertex(0, 0) not in vs
    assert transit_vertex(0, 1) in vs


def test_excluded_ride_edge_breaks_the_dominance_window():
    g = small_graph()
    d = depot_vertex(0)
    cons = ConstraintSet(excluded_edges=frozenset({(0, 0)}))
    # The ride off stop 0 is barred for this agent...
    u = transit_vertex(0, 0)
    edges = g.out_neighbors(u, g.time_of(u), 7.0, depot_vertex(0), constraints=cons)
    assert not any(e.ride for e in edges)
    # ...so boarding at stop 1 is offered even though stop 0 is closer.
    vs = heads(g.out_neighbors(d, 0.0, 7.0, package_vertex(0), constraints=cons))
    assert transit_vertex(0, 0) in vs
    assert transit_vertex(0, 1) in vs
    assert transit_vertex(0, 2) not in vs  # still dominated by stop 1


def test_reference_speed_tracks_the_fastest_segment():
    slow = small_graph()
    # Every bus hop here is ~0.88 km / 120 s = 26.4 km/h > 25 km/h drone.
    seg = distance_km(GeoPoint(LAT, -122.450), GeoPoint(LAT, -122.440)) / 120.0
    assert slow.reference_speed_kms == pytest.approx(seg)

    crawl = TransitTrip("crawl", [stop(0, -122.450, 0.0), stop(1, -122.449, 600.0)])
    g = OperationGraph([GeoPoint(LAT, -122.45)], [], [crawl], DroneSpec(25.0, 7.0))
    assert g.reference_speed_kms == pytest.approx(25.0 / 3600.0)


def test_loc_and_time_of_lookups():
    g = small_graph()
    assert g.loc(depot_vertex(0)) == GeoPoint(LAT, -122.4505)
    assert g.loc(package_vertex(0)) == GeoPoint(LAT, -122.4295)
    assert g.loc(transit_vertex(0, 1)) == GeoPoint(LAT, -122.440)
    assert g.time_of(transit_vertex(0, 2)) == 340.0
    with pytest.raises(ValidationError):
        g.time_of(depot_vertex(0))
    with pytest.raises(ValidationError):
        g.loc(("x", 0))


def test_capacity_default_applies_to_unassigned_edges():
    g = small_graph(caps={(0, 0): 5})
    assert g.capacity(0, 0) == 5
    assert g.capacity(0, 1) == 1  # falls back to the default
