"""Seeded synthetic fixtures shared by the test modules."""

from __future__ import annotations

import csv
import random
from pathlib import Path

from skyhop.geo import BoundingBox, GeoPoint
from skyhop.network import DroneSpec, OperationGraph, TimedStop, TransitTrip, assign_capacities

# A compact service area; 0.01 deg of latitude is roughly 1.1 km.
AREA = BoundingBox(GeoPoint(37.75, -122.45), GeoPoint(37.79, -122.40))


def random_point(rng: random.Random, box: BoundingBox = AREA) -> GeoPoint:
    return GeoPoint(
        rng.uniform(box.lo.lat, box.hi.lat),
        rng.uniform(box.lo.lon, box.hi.lon),
    )


def random_trip(rng: random.Random, tid: str, n_stops: int, horizon: float = 1800.0) -> TransitTrip:
    """A trip wandering the area with strictly increasing stop times."""
    t = rng.uniform(0.0, horizon * 0.3)
    stops = []
    lat = rng.uniform(AREA.lo.lat, AREA.hi.lat)
    lon = rng.uniform(AREA.lo.lon, AREA.hi.lon)
    for s in range(n_stops):
        stops.append(TimedStop(s, GeoPoint(lat, lon), t))
        lat = min(max(lat + rng.uniform(-0.008, 0.008), AREA.lo.lat), AREA.hi.lat)
        lon = min(max(lon + rng.uniform(-0.008, 0.008), AREA.lo.lon), AREA.hi.lon)
        t += rng.uniform(90.0, 300.0)
    return TransitTrip(tid, stops)


def write_feed(
    gtfs_dir: Path,
    stops: list[tuple[str, float, float]],
    trips: list[str],
    stop_times: list[tuple[str, str, str, int]],
) -> Path:
    """Write a minimal GTFS directory from row tuples.

    ``stops`` rows are (stop_id, lat, lon); ``stop_times`` rows are
    (trip_id, arrival "HH:MM:SS", stop_id, stop_sequence).
    """
    gtfs_dir.mkdir(parents=True, exist_ok=True)
    with open(gtfs_dir / "stops.txt", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["stop_id", "stop_lat", "stop_lon"])
        w.writerows(stops)
    with open(gtfs_dir / "trips.txt", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["route_id", "trip_id"])
        w.writerows([("r1", tid) for tid in trips])
    with open(gtfs_dir / "stop_times.txt", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trip_id", "arrival_time", "stop_id", "stop_sequence"])
        w.writerows(stop_times)
    return gtfs_dir


def corridor_graph(
    n_runs: int = 3,
    headway: float = 240.0,
    capacity: int = 1,
    n_depots: int = 2,
    drone: DroneSpec | None = None,
) -> OperationGraph:
    """An east-west bus corridor where deliveries must ride.

    Depots sit at the west end, packages at the east end, farther than
    half the flight range, so every delivery leg has to board; small
    capacities then force boarding/capacity conflicts between agents.
    """
    drone = drone or DroneSpec(25.0, 7.0)
    lats = [37.76 + 0.002 * i for i in range(n_depots)]
    lons = [-122.448 + 0.009 * s for s in range(6)]
    trips = []
    for r in range(n_runs):
        start = 60.0 + headway * r
        fwd = [TimedStop(s, GeoPoint(37.765, lons[s]), start + 120.0 * s) for s in range(6)]
        trips.append(TransitTrip(f"east{r}", fwd))
        rev = [TimedStop(s, GeoPoint(37.767, lons[5 - s]), start + 60.0 + 120.0 * s) for s in range(6)]
        trips.append(TransitTrip(f"west{r}", rev))
    caps = {}
    for ti in range(len(trips)):
        for s in range(5):
            caps[(ti, s)] = capacity
    depots = [GeoPoint(lat, -122.449) for lat in lats]
    packages = [GeoPoint(37.7665, -122.4035), GeoPoint(37.764, -122.404), GeoPoint(37.769, -122.4045)]
    return OperationGraph(depots, packages, trips, drone, caps)


def random_allocation_graph(
    rng: random.Random, ell: int, k: int, lo: float = 1.0, hi: float = 10.0
):
    """Complete allocation instance with single-scale uniform random costs."""
    from skyhop.allocation import AllocationGraph
    from skyhop.network import depot_vertex, package_vertex

    cost = {}
    for i in range(ell):
        for i2 in range(ell):
            if i != i2:
                cost[(depot_vertex(i), depot_vertex(i2))] = rng.uniform(lo, hi)
    for j in range(k):
        for i in range(ell):
            cost[(depot_vertex(i), package_vertex(j))] = rng.uniform(lo, hi)
            cost[(package_vertex(j), depot_vertex(i))] = rng.uniform(lo, hi)
    return AllocationGraph(ell, k, cost)


def random_operation_graph(
    rng: random.Random,
    n_trips: int = 3,
    stops_per_trip: int = 4,
    n_depots: int = 1,
    n_packages: int = 1,
    capacity_choices: tuple[int, ...] = (3, 4, 5),
    drone: DroneSpec | None = None,
) -> OperationGraph:
    drone = drone or DroneSpec(25.0, 7.0)
    trips = [random_trip(rng, f"trip{i}", stops_per_trip) for i in range(n_trips)]
    caps = assign_capacities(trips, capacity_choices, rng.randrange(1 << 30))
    depots = [random_point(rng) for _ in range(n_depots)]
    packages = [random_point(rng) for _ in range(n_packages)]
    return OperationGraph(depots, packages, trips, drone, caps)
