"""Surrogate travel-time estimation for the allocation layer.

Allocation edge costs should reflect how long a transit-riding drone
actually takes between two points, but running a full search per depot/
package pair is wasteful.  Instead the bounding box is covered with a
low-discrepancy set of sites (Halton sequence, bases 2 and 3) and a
site-to-site travel-time table is precomputed with the same constrained
search the routing layer uses, each leg limited to half the flight range.
At query time a pair of points maps to its nearest sites (a Voronoi
lookup, ties to the lowest site index); points sharing a cell fall back
to the direct flight time.

Unreachable site pairs keep a +inf sentinel; the allocation graph treats
+inf package edges as absent.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import NoPathError, ValidationError
from .geo import BoundingBox, GeoPoint, distance_km
from .network import DroneSpec, OperationGraph, TransitTrip


def van_der_corput(n: int, base: int) -> float:
    """The n-th radical-inverse value in the given base (n >= 1)."""
    value = 0.0
    denom = 1.0
    while n:
        n, digit = divmod(n, base)
        denom *= base
        value += digit / denom
    return value


def halton_sites(n: int, bbox: BoundingBox) -> list[GeoPoint]:
    """First ``n`` Halton points (bases 2, 3) scaled into the box.

    The unit-square sequence starts (1/2, 1/3), (1/4, 2/3), ...
    """
    return [
        bbox.scale(van_der_corput(i, 2), van_der_corput(i, 3))
        for i in range(1, n + 1)
    ]


@dataclass
class SurrogateTable:
    """Precomputed site-to-site travel times plus the Voronoi index."""

    sites: list[GeoPoint]
    seconds: np.ndarray  # (n, n), +inf where unreachable
    drone: DroneSpec

    def __post_init__(self):
        self._lat = np.radians([s.lat for s in self.sites])
        self._lon = np.radians([s.lon for s in self.sites])

    def site_of(self, p: GeoPoint) -> int:
        """Nearest site index (ties resolve to the lowest index)."""
        la, lo = math.radians(p.lat), math.radians(p.lon)
        dla = self._lat - la
        dlo = self._lon - lo
        h = np.sin(dla / 2) ** 2 + math.cos(la) * np.cos(self._lat) * np.sin(dlo / 2) ** 2
        return int(np.argmin(h))  # argmin takes the first minimum

    def time(self, a: GeoPoint, b: GeoPoint) -> float:
        sa, sb = self.site_of(a), self.site_of(b)
        if sa == sb:
            return self.drone.flight_seconds(distance_km(a, b))
        return float(self.seconds[sa, sb])

    def reachable_half(self, a: GeoPoint, b: GeoPoint) -> bool:
        """Can ``b`` be reached from ``a`` using at most half the range?

        Same-cell pairs are checked against a direct flight; distinct
        cells trust the precomputed table (built under the half-range
        limit).
        """
        sa, sb = self.site_of(a), self.site_of(b)
        if sa == sb:
            return distance_km(a, b) <= self.drone.max_flight_km / 2.0 + 1e-9
        return math.isfinite(self.seconds[sa, sb])


@dataclass
class DirectFlightSurrogate:
    """Fallback estimator: straight-line flight, no transit."""

    drone: DroneSpec

    def time(self, a: GeoPoint, b: GeoPoint) -> float:
        return self.drone.flight_seconds(distance_km(a, b))

    def reachable_half(self, a: GeoPoint, b: GeoPoint) -> bool:
        return distance_km(a, b) <= self.drone.max_flight_km / 2.0 + 1e-9


def build_surrogate(
    sites: list[GeoPoint],
    trips: list[TransitTrip],
    drone: DroneSpec,
    w: float = 1.1,
    deadline: float | None = None,
) -> SurrogateTable:
    """Compute the site-to-site table with per-leg half-range searches.

    Sites enter a throwaway operation graph as depots; each ordered pair
    is then a single constrained search identical to one delivery leg.
    """
    from .heuristics import build_bundle
    from .mcsp import focal_mcsp
    from .network import depot_vertex

    n = len(sites)
    graph = OperationGraph(list(sites), [], trips, drone, default_capacity=10**6)
    bundle = build_bundle(graph)
    seconds = np.full((n, n), math.inf)
    np.fill_diagonal(seconds, 0.0)
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            try:
                path = focal_mcsp(
                    depot_vertex(i),
                    depot_vertex(j),
                    0.0,
                    w,
                    drone.max_flight_km / 2.0,
                    None,
                    bundle,
                    graph,
                    deadline=deadline,
                )
            except NoPathError:
                continue  # +inf sentinel stays
            seconds[i, j] = path.arrival
    return SurrogateTable(list(sites), seconds, drone)


# ---------------------------------------------------------------------------
# binary cache
# ---------------------------------------------------------------------------

def preprocess_key(
    trips: list[TransitTrip],
    bbox: BoundingBox,
    n_sites: int,
    drone: DroneSpec,
) -> str:
    """Content hash identifying one preprocessing run."""
    payload = {
        "bbox": [bbox.lo.lat, bbox.lo.lon, bbox.hi.lat, bbox.hi.lon],
        "n_sites": n_sites,
        "speed_kmh": drone.speed_kmh,
        "max_flight_km": drone.max_flight_km,
        "trips": [
            [t.trip_id] + [[s.location.lat, s.location.lon, s.t] for s in t.stops]
            for t in trips
        ],
    }
    blob = json.dumps(payload, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def save_tables(
    path: str | Path,
    key: str,
    surrogate: SurrogateTable,
    trip_block: np.ndarray,
) -> None:
    np.savez_compressed(
        path,
        key=np.array(key),
        site_lat=np.array([s.lat for s in surrogate.sites]),
        site_lon=np.array([s.lon for s in surrogate.sites]),
        seconds=surrogate.seconds,
        trip_block=trip_block,
        speed_kmh=np.array(surrogate.drone.speed_kmh),
        max_flight_km=np.array(surrogate.drone.max_flight_km),
    )


def load_tables(path: str | Path, key: str) -> tuple[SurrogateTable, np.ndarray]:
    """Load cached tables; raise :class:`ValidationError` on a key mismatch."""
    with np.load(path) as data:
        if str(data["key"]) != key:
            raise ValidationError(f"cache {path} was built for different inputs")
        sites = [
            GeoPoint(float(la), float(lo))
            for la, lo in zip(data["site_lat"], data["site_lon"])
        ]
        drone = DroneSpec(float(data["speed_kmh"]), float(data["max_flight_km"]))
        return SurrogateTable(sites, data["seconds"].copy(), drone), data["trip_block"].copy()
