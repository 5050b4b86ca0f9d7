"""Search heuristics: trip metagraph, distance table, time estimate."""

from __future__ import annotations

import math
import random

import numpy as np
import pytest

from skyhop.geo import GeoPoint, distance_km
from skyhop.heuristics import (
    all_pairs_min_distance,
    build_bundle,
    build_trip_metagraph,
    compute_trip_block,
    h_dist,
    h_time,
    location_trip_distance,
    trip_pair_distance,
)
from skyhop.network import (
    DroneSpec,
    OperationGraph,
    TimedStop,
    TransitTrip,
    depot_vertex,
    package_vertex,
    transit_vertex,
)

from fixtures import random_operation_graph, random_point
from oracles import min_flight_within_budget, min_time_within_budget

LAT = 37.76


def make_trip(tid: str, lons: list[float], times: list[float], lat: float = LAT) -> TransitTrip:
    return TransitTrip(tid, [TimedStop(s, GeoPoint(lat, lon), t) for s, (lon, t) in enumerate(zip(lons, times))])


def test_trip_pair_distance_respects_timing():
    a = make_trip("a", [-122.450, -122.440], [0.0, 300.0])
    # Same stops, but running long before trip a: no transfer possible.
    early = make_trip("e", [-122.450, -122.440], [-900.0, -600.0])
    speed = DroneSpec(25.0, 7.0).speed_kms
    assert trip_pair_distance(a, early, speed) == math.inf
    # A trip passing nearby later is reachable at its closest stop.
    later = make_trip("l", [-122.441, -122.420], [900.0, 1200.0])
    d = trip_pair_distance(a, later, speed)
    expected = distance_km(GeoPoint(LAT, -122.440), GeoPoint(LAT, -122.441))
    assert d == pytest.approx(expected)


def test_location_trip_distance_picks_the_closest_stop():
    trip = make_trip("a", [-122.450, -122.440, -122.430], [0.0, 60.0, 120.0])
    p = GeoPoint(LAT, -122.4395)
    assert location_trip_distance(p, trip) == pytest.approx(
        distance_km(p, GeoPoint(LAT, -122.440))
    )


def test_metagraph_layout_and_symmetry():
    trips = [
        make_trip("a", [-122.450, -122.440], [0.0, 60.0]),
        make_trip("b", [-122.430, -122.420], [120.0, 180.0]),
    ]
    depots = [GeoPoint(LAT, -122.455)]
    packages = [GeoPoint(LAT, -122.415)]
    meta = build_trip_metagraph(trips, depots, packages, 25.0)
    assert meta.cost.shape == (4, 4)
    assert meta.index_of(depot_vertex(0)) == 0
    assert meta.index_of(package_vertex(0)) == 1
    assert meta.index_of(transit_vertex(1, 0)) == 3
    # Location rows are straight-line and symmetric.
    assert meta.cost[0, 1] == pytest.approx(distance_km(depots[0], packages[0]))
    assert meta.cost[0, 2] == meta.cost[2, 0]
    assert np.all(np.diag(meta.cost) == 0.0)


def test_metagraph_accepts_precomputed_trip_block():
    trips = [
        make_trip("a", [-122.450, -122.440], [0.0, 60.0]),
        make_trip("b", [-122.430, -122.420], [120.0, 180.0]),
    ]
    block = compute_trip_block(trips, 25.0)
    meta = build_trip_metagraph(trips, [GeoPoint(LAT, -122.455)], [], 25.0, block)
    assert np.array_equal(meta.cost[1:, 1:], block)


def floyd_warshall_reference(cost: np.ndarray) -> np.ndarray:
    n = cost.shape[0]
    d = cost.copy()
    for h in range(n):
        for i in range(n):
            for j in range(n):
                if d[i, h] + d[h, j] < d[i, j]:
                    d[i, j] = d[i, h] + d[h, j]
    return d


def test_all_pairs_table_matches_reference_floyd_warshall():
    rng = random.Random(5)
    g = random_operation_graph(rng, n_trips=4, stops_per_trip=3, n_depots=2, n_packages=2)
    meta = build_trip_metagraph(g.trips, g.depots, g.packages, g.drone.speed_kmh)
    table = all_pairs_min_distance(meta)
    ref = floyd_warshall_reference(meta.cost)
    assert np.allclose(table.table, ref, atol=1e-12)
    # Relaying through the metagraph never beats the direct entry by error.
    assert np.all(table.table <= meta.cost + 1e-12)


def test_h_time_uses_the_reference_speed():
    a, b = GeoPoint(LAT, -122.45), GeoPoint(LAT, -122.40)
    d = distance_km(a, b)
    assert h_time(a, b, 0.01) == pytest.approx(d / 0.01)

    # A bus segment faster than the drone lowers the estimate: the graph
    # exposes that via its reference speed.
    fast_bus = make_trip("f", [-122.450, -122.430], [0.0, 120.0])  # ~53 km/h
    g = OperationGraph([a], [b], [fast_bus], DroneSpec(25.0, 7.0))
    seg_speed = distance_km(g.loc(transit_vertex(0, 0)), g.loc(transit_vertex(0, 1))) / 120.0
    assert g.reference_speed_kms == pytest.approx(seg_speed)
    bundle = build_bundle(g)
    assert bundle.time_to_goal(g, depot_vertex(0), package_vertex(0)) == pytest.approx(d / seg_speed)


def test_heuristics_admissible_on_random_fixtures():
    rng = random.Random(90210)
    time_checked = dist_checked = 0
    for _ in range(25):
        g = random_operation_graph(rng, n_trips=3, stops_per_trip=4, n_depots=2, n_packages=2)
        bundle = build_bundle(g)
        starts = [depot_vertex(0), depot_vertex(1), package_vertex(0)]
        starts += [transit_vertex(rng.randrange(3), rng.randrange(4))]
        goals = [package_vertex(1), depot_vertex(1)]
        for s in starts:
            t0 = g.time_of(s) if s[0] == "t" else 0.0
            for goal in goals:
                if s == goal:
                    continue
                opt_t = min_time_within_budget(g, s, goal, t0, g.drone.max_flight_km)
                if math.isfinite(opt_t):
                    h = bundle.time_to_goal(g, s, goal)
                    assert h <= (opt_t - t0) + 1e-9
                    time_checked += 1
                opt_d = min_flight_within_budget(g, s, goal, t0, g.drone.max_flight_km)
                if math.isfinite(opt_d):
                    assert bundle.dist_to_goal(s, goal) <= opt_d + 1e-9
                    dist_checked += 1
    assert time_checked > 100 and dist_checked > 100


def test_h_dist_zero_without_table():
    from skyhop.heuristics import HeuristicBundle

    bundle = HeuristicBundle(25.0 / 3600.0, None)
    assert bundle.dist_to_goal(depot_vertex(0), package_vertex(0)) == 0.0
