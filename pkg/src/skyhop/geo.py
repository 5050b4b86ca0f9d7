"""Geographic primitives: points, great-circle distance, bounding boxes."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Mean earth radius used for all great-circle computations.
EARTH_RADIUS_KM = 6371.0


@dataclass(frozen=True)
class GeoPoint:
    lat: float  # degrees, in [-90, 90]
    lon: float  # degrees, in [-180, 180]

    def __post_init__(self):
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude out of range: {self.lat!r}")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"longitude out of range: {self.lon!r}")


def distance_km(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle (haversine) distance between two points, in km."""
    la1, lo1 = math.radians(a.lat), math.radians(a.lon)
    la2, lo2 = math.radians(b.lat), math.radians(b.lon)
    dla = la2 - la1
    dlo = lo2 - lo1
    h = math.sin(dla / 2.0) ** 2 + math.cos(la1) * math.cos(la2) * math.sin(dlo / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(h)))


def distance_km_vec(lat_rad: float, lon_rad: float, lats_rad: np.ndarray, lons_rad: np.ndarray) -> np.ndarray:
    """Haversine distance from one point (radians) to arrays of points (radians)."""
    dla = lats_rad - lat_rad
    dlo = lons_rad - lon_rad
    h = np.sin(dla / 2.0) ** 2 + math.cos(lat_rad) * np.cos(lats_rad) * np.sin(dlo / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.minimum(1.0, np.sqrt(h)))


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned closed box in latitude/longitude coordinates."""

    lo: GeoPoint  # south-west corner
    hi: GeoPoint  # north-east corner

    def __post_init__(self):
        if self.lo.lat > self.hi.lat or self.lo.lon > self.hi.lon:
            raise ValueError("bounding box corners are not ordered")

    def contains(self, p: GeoPoint) -> bool:
        # Closed box: points on the boundary count as inside.
        return (
            self.lo.lat <= p.lat <= self.hi.lat
            and self.lo.lon <= p.lon <= self.hi.lon
        )

    def scale(self, x: float, y: float) -> GeoPoint:
        """Map unit-square coordinates (x, y) into the box (lon, lat order)."""
        return GeoPoint(
            self.lo.lat + y * (self.hi.lat - self.lo.lat),
            self.lo.lon + x * (self.hi.lon - self.lo.lon),
        )
