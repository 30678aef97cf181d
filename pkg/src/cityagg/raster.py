"""Raster grid metadata, cell/coordinate transforms and rasterization.

Row 0 is the northernmost row.  Cells are referenced by their centre point
both when raster data is turned into points and when a boundary is
rasterized, so the two query paths see identical coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .geometry import GeoPoint, PolygonBoundary, points_in_boundary

_EDGE_SLACK = 1e-9


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    top_lat: float
    left_lon: float
    cell_size: float
    nrows: int
    ncols: int

    def __post_init__(self) -> None:
        if not (math.isfinite(self.cell_size) and self.cell_size > 0):
            raise GridError(f"cell_size must be positive, got {self.cell_size}")
        if self.nrows < 1 or self.ncols < 1:
            raise GridError(f"grid must have at least one cell, got {self.nrows}x{self.ncols}")
        if self.top_lat > 90 + _EDGE_SLACK or self.bottom_lat < -90 - _EDGE_SLACK:
            raise GridError("grid extends beyond the poles")
        if self.left_lon < -180 - _EDGE_SLACK or self.right_lon > 180 + _EDGE_SLACK:
            raise GridError("grid extends beyond the antimeridian")

    @classmethod
    def global_30s(cls) -> "GridSpec":
        """The global 30 arc-second grid, 21600 x 43200 cells."""
        return cls(top_lat=90.0, left_lon=-180.0, cell_size=1 / 120, nrows=21600, ncols=43200)

    @property
    def bottom_lat(self) -> float:
        return self.top_lat - self.nrows * self.cell_size

    @property
    def right_lon(self) -> float:
        return self.left_lon + self.ncols * self.cell_size

    def to_dict(self) -> dict:
        return {"top_lat": self.top_lat, "left_lon": self.left_lon,
                "cell_size": self.cell_size, "nrows": self.nrows, "ncols": self.ncols}

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        try:
            return cls(float(d["top_lat"]), float(d["left_lon"]), float(d["cell_size"]),
                       int(d["nrows"]), int(d["ncols"]))
        except KeyError as exc:
            raise GridError(f"grid spec missing key {exc}") from None


class CellIndex(NamedTuple):
    row: int
    col: int


@dataclass(frozen=True, slots=True)
class CellRecord:
    cell: CellIndex
    value: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.value):
            raise GridError(f"non-finite value at cell {tuple(self.cell)}")


def cell_of(p: GeoPoint, spec: GridSpec) -> CellIndex:
    """Cell containing ``p``; points on the south/east edge map to the last row/col."""
    if not (spec.bottom_lat <= p.lat <= spec.top_lat and spec.left_lon <= p.lon <= spec.right_lon):
        raise GridError(f"point ({p.lat}, {p.lon}) lies outside the grid extent")
    row = math.floor((spec.top_lat - p.lat) / spec.cell_size)
    col = math.floor((p.lon - spec.left_lon) / spec.cell_size)
    return CellIndex(min(max(row, 0), spec.nrows - 1), min(max(col, 0), spec.ncols - 1))


def cells_of(lat: np.ndarray, lon: np.ndarray, spec: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`cell_of`."""
    lat = np.asarray(lat, dtype=np.float64)
    lon = np.asarray(lon, dtype=np.float64)
    outside = ((lat < spec.bottom_lat) | (lat > spec.top_lat)
               | (lon < spec.left_lon) | (lon > spec.right_lon))
    if outside.any():
        k = int(np.flatnonzero(outside)[0])
        raise GridError(f"point ({lat[k]}, {lon[k]}) lies outside the grid extent")
    rows = np.floor((spec.top_lat - lat) / spec.cell_size).astype(np.int64)
    cols = np.floor((lon - spec.left_lon) / spec.cell_size).astype(np.int64)
    np.clip(rows, 0, spec.nrows - 1, out=rows)
    np.clip(cols, 0, spec.ncols - 1, out=cols)
    return rows, cols


def _check_index(row, col, spec: GridSpec) -> None:
    if not (0 <= row < spec.nrows and 0 <= col < spec.ncols):
        raise GridError(f"cell ({row}, {col}) outside {spec.nrows}x{spec.ncols} grid")


def center_of(c: CellIndex, spec: GridSpec) -> GeoPoint:
    row, col = c
    _check_index(row, col, spec)
    return GeoPoint(spec.top_lat - (row + 0.5) * spec.cell_size,
                    spec.left_lon + (col + 0.5) * spec.cell_size)


def centers_of(rows: np.ndarray, cols: np.ndarray, spec: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`center_of`; same arithmetic, same bits."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    if rows.size:
        bad = (rows < 0) | (rows >= spec.nrows) | (cols < 0) | (cols >= spec.ncols)
        if bad.any():
            k = int(np.flatnonzero(bad)[0])
            raise GridError(f"cell ({rows[k]}, {cols[k]}) outside {spec.nrows}x{spec.ncols} grid")
    lat = spec.top_lat - (rows + 0.5) * spec.cell_size
    lon = spec.left_lon + (cols + 0.5) * spec.cell_size
    return lat, lon


def bbox_window(bbox, spec: GridSpec) -> tuple[int, int, int, int] | None:
    """Inclusive (row0, row1, col0, col1) window of cells overlapping ``bbox``."""
    min_lat, min_lon, max_lat, max_lon = bbox
    if (max_lat < spec.bottom_lat or min_lat > spec.top_lat
            or max_lon < spec.left_lon or min_lon > spec.right_lon):
        return None
    row0 = math.floor((spec.top_lat - max_lat) / spec.cell_size)
    row1 = math.floor((spec.top_lat - min_lat) / spec.cell_size)
    col0 = math.floor((min_lon - spec.left_lon) / spec.cell_size)
    col1 = math.floor((max_lon - spec.left_lon) / spec.cell_size)
    return (max(row0, 0), min(row1, spec.nrows - 1), max(col0, 0), min(col1, spec.ncols - 1))


def rasterize_boundary_arrays(b: PolygonBoundary, spec: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    """Rows and cols (row-major order) of cells whose centre lies inside ``b``."""
    window = bbox_window(b.bbox, spec)
    empty = np.empty(0, dtype=np.int64)
    if window is None:
        return empty, empty
    row0, row1, col0, col1 = window
    rr, cc = np.meshgrid(np.arange(row0, row1 + 1, dtype=np.int64),
                         np.arange(col0, col1 + 1, dtype=np.int64), indexing="ij")
    rr = rr.ravel()
    cc = cc.ravel()
    lat, lon = centers_of(rr, cc, spec)
    inside = points_in_boundary(lat, lon, b)
    return rr[inside], cc[inside]


def rasterize_boundary(b: PolygonBoundary, spec: GridSpec) -> frozenset[CellIndex]:
    rows, cols = rasterize_boundary_arrays(b, spec)
    return frozenset(CellIndex(int(r), int(c)) for r, c in zip(rows, cols))


def dense_raster_query(data, mask) -> float:
    """Sum of ``data * mask`` by a plain double loop over every cell.

    This is the brute-force reference for the sparse raster path; it is
    deliberately unvectorised.
    """
    data = np.asarray(data, dtype=np.float64)
    mask = np.asarray(mask)
    if data.shape != mask.shape or data.ndim != 2:
        raise GridError(f"shape mismatch: data {data.shape} vs mask {mask.shape}")
    nrows, ncols = data.shape
    d = data.tolist()
    m = mask.tolist()
    result = 0.0
    for i in range(nrows):
        drow, mrow = d[i], m[i]
        for j in range(ncols):
            result += drow[j] * mrow[j]
    return result


def to_dense(rows, cols, values, spec: GridSpec) -> np.ndarray:
    """Dense matrix with ``values`` placed at (rows, cols) and zeros elsewhere."""
    out = np.zeros((spec.nrows, spec.ncols), dtype=np.float64)
    np.add.at(out, (np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64)),
              np.asarray(values, dtype=np.float64))
    return out


def mask_of(cells, spec: GridSpec) -> np.ndarray:
    out = np.zeros((spec.nrows, spec.ncols), dtype=np.int8)
    for r, c in cells:
        out[r, c] = 1
    return out
