"""Geometry kernels shared by both query paths.

Coordinates are (lat, lon) in decimal degrees everywhere.  Containment is
evaluated in planar (lat, lon) space with the even-odd crossing rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

EARTH_RADIUS_M = 6_371_000.0


class GeometryError(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self) -> None:
        lat, lon = self.lat, self.lon
        if not (math.isfinite(lat) and math.isfinite(lon)):
            raise GeometryError(f"non-finite coordinate ({lat}, {lon})")
        if not -90.0 <= lat <= 90.0:
            raise GeometryError(f"latitude {lat} outside [-90, 90]")
        if not -180.0 <= lon <= 180.0:
            raise GeometryError(f"longitude {lon} outside [-180, 180]")


@dataclass(frozen=True)
class Ring:
    """Closed ring stored without its closing vertex."""

    vertices: tuple[GeoPoint, ...]

    def __post_init__(self) -> None:
        verts = tuple(self.vertices)
        if len(verts) > 1 and verts[0] == verts[-1]:
            verts = verts[:-1]
        object.__setattr__(self, "vertices", verts)
        if len(verts) < 3:
            raise GeometryError(f"ring needs at least 3 vertices, got {len(verts)}")
        for k in range(len(verts)):
            if verts[k] == verts[k - 1]:
                raise GeometryError(f"consecutive duplicate vertex at index {k}")
        if len(set(verts)) < 3:
            raise GeometryError("ring needs at least 3 distinct vertices")

    @classmethod
    def from_pairs(cls, pairs: Iterable[Sequence[float]]) -> "Ring":
        return cls(tuple(GeoPoint(float(a), float(b)) for a, b in pairs))

    def __len__(self) -> int:
        return len(self.vertices)

    @cached_property
    def lats(self) -> tuple[float, ...]:
        return tuple(v.lat for v in self.vertices)

    @cached_property
    def lons(self) -> tuple[float, ...]:
        return tuple(v.lon for v in self.vertices)


BBox = tuple[float, float, float, float]


@dataclass(frozen=True)
class PolygonBoundary:
    id: str
    name: str
    rings: tuple[Ring, ...]
    country: str | None = None
    bbox: BBox = field(init=False)

    def __post_init__(self) -> None:
        rings = tuple(self.rings)
        if not rings:
            raise GeometryError(f"boundary {self.id!r} has no rings")
        object.__setattr__(self, "rings", rings)
        object.__setattr__(self, "bbox", _bbox_of_rings(rings))

    @cached_property
    def edges(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Edge endpoint arrays (lat_i, lon_i, lat_j, lon_j) over every ring.

        Edge k joins vertex i to its predecessor j, the same pairing the
        scalar kernel walks.
        """
        lat_i, lon_i, lat_j, lon_j = [], [], [], []
        for ring in self.rings:
            lats = np.asarray(ring.lats, dtype=np.float64)
            lons = np.asarray(ring.lons, dtype=np.float64)
            lat_i.append(lats)
            lon_i.append(lons)
            lat_j.append(np.roll(lats, 1))
            lon_j.append(np.roll(lons, 1))
        return (np.concatenate(lat_i), np.concatenate(lon_i),
                np.concatenate(lat_j), np.concatenate(lon_j))

    @property
    def n_vertices(self) -> int:
        return sum(len(r) for r in self.rings)


def _bbox_of_rings(rings: Sequence[Ring]) -> BBox:
    lats = [v.lat for r in rings for v in r.vertices]
    lons = [v.lon for r in rings for v in r.vertices]
    return (min(lats), min(lons), max(lats), max(lons))


def bbox_of(b: PolygonBoundary) -> BBox:
    """Return ``(min_lat, min_lon, max_lat, max_lon)`` over all ring vertices."""
    return b.bbox


def in_bbox(p: GeoPoint, box: BBox) -> bool:
    return box[0] <= p.lat <= box[2] and box[1] <= p.lon <= box[3]


def _crossings(lat: float, lon: float, lats: Sequence[float], lons: Sequence[float]) -> int:
    # Franklin's ray cast: span test first, so horizontal edges never divide.
    inside = 0
    n = len(lats)
    j = n - 1
    for i in range(n):
        lat_i = lats[i]
        lat_j = lats[j]
        if (lat_i > lat) != (lat_j > lat):
            cx = (lons[j] - lons[i]) * (lat - lat_i) / (lat_j - lat_i) + lons[i]
            if lon < cx:
                inside ^= 1
        j = i
    return inside


def point_in_polygon(p: GeoPoint, ring: Ring) -> bool:
    """Even-odd ray-crossing test of ``p`` against a single ring.

    Points exactly on an edge get half-open behaviour: which side they fall
    on depends on the edge orientation.
    """
    return bool(_crossings(p.lat, p.lon, ring.lats, ring.lons))


def point_in_boundary(p: GeoPoint, b: PolygonBoundary) -> bool:
    """Combined crossing parity over every ring; holes subtract, parts union."""
    parity = 0
    for ring in b.rings:
        parity ^= _crossings(p.lat, p.lon, ring.lats, ring.lons)
    return bool(parity)


def points_in_boundary(lat: np.ndarray, lon: np.ndarray, b: PolygonBoundary) -> np.ndarray:
    """Vectorised :func:`point_in_boundary` over coordinate arrays.

    Uses the same floating-point expression per edge as the scalar kernel,
    so results agree bit for bit.
    """
    lat = np.asarray(lat, dtype=np.float64)
    lon = np.asarray(lon, dtype=np.float64)
    inside = np.zeros(lat.shape, dtype=bool)
    if lat.size == 0:
        return inside
    lat_i, lon_i, lat_j, lon_j = b.edges
    for k in range(lat_i.size):
        li, lj = lat_i[k], lat_j[k]
        span = (li > lat) != (lj > lat)
        if not span.any():
            continue
        idx = np.flatnonzero(span)
        cx = (lon_j[k] - lon_i[k]) * (lat[idx] - li) / (lj - li) + lon_i[k]
        hit = idx[lon[idx] < cx]
        inside[hit] = ~inside[hit]
    return inside


def haversine_length(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in metres on a sphere of radius 6,371 km."""
    phi1 = math.radians(a.lat)
    phi2 = math.radians(b.lat)
    dphi = phi2 - phi1
    dlmb = math.radians(b.lon - a.lon)
    h = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlmb / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def crosses_antimeridian(a: GeoPoint, b: GeoPoint) -> bool:
    return abs(a.lon - b.lon) >= 180.0


def midpoint(a: GeoPoint, b: GeoPoint) -> GeoPoint:
    """Arithmetic mean of the endpoints; rejects antimeridian-crossing pairs."""
    if crosses_antimeridian(a, b):
        raise GeometryError(f"segment {a} -> {b} crosses the antimeridian")
    return GeoPoint((a.lat + b.lat) / 2, (a.lon + b.lon) / 2)
