"""Parsers and writers for the engine's canonical tables.

External formats:

* boundary catalog: JSON lines ``{"id", "name", "country", "rings"}`` with
  rings as ``[[lat, lon], ...]``
* point table: CSV ``lat,lon,value``
* cell table: CSV ``row,col,value`` plus a grid-spec JSON sidecar
* edge table: CSV ``way_id,start_lat,start_lon,end_lat,end_lon``
* GDP table: CSV ``country,gdp_per_capita``
* city catalog: CSV ``id,name,country,population,gdp_per_capita``
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Sequence

import numpy as np

from .geometry import (GeoPoint, GeometryError, PolygonBoundary, Ring,
                       crosses_antimeridian, haversine_length, midpoint)
from .raster import CellIndex, CellRecord, GridError, GridSpec, centers_of


class ParseError(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class PointRecord:
    location: GeoPoint
    value: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.value):
            raise ParseError(f"non-finite value at {self.location}")


@dataclass(frozen=True, slots=True)
class EdgeRecord:
    start: GeoPoint
    end: GeoPoint
    way_id: str

    def __post_init__(self) -> None:
        if self.start == self.end:
            raise ParseError(f"edge of way {self.way_id} has identical endpoints")


@dataclass(frozen=True)
class CityMeta:
    id: str
    name: str
    country: str | None = None
    population: float | None = None
    gdp_per_capita: float | None = None


@dataclass(frozen=True, eq=False)
class PointTable:
    """Columnar point table; rows are (lat, lon, value)."""

    lat: np.ndarray
    lon: np.ndarray
    value: np.ndarray

    def __post_init__(self) -> None:
        for name in ("lat", "lon", "value"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not (self.lat.shape == self.lon.shape == self.value.shape) or self.lat.ndim != 1:
            raise ParseError("point table columns differ in length")
        if not np.isfinite(self.value).all():
            raise ParseError("point table contains non-finite values")

    def __len__(self) -> int:
        return self.lat.size

    def slice(self, start: int, stop: int) -> "PointTable":
        return PointTable(self.lat[start:stop], self.lon[start:stop], self.value[start:stop])

    @classmethod
    def from_records(cls, records: Iterable[PointRecord]) -> "PointTable":
        records = list(records)
        return cls(np.array([r.location.lat for r in records], dtype=np.float64),
                   np.array([r.location.lon for r in records], dtype=np.float64),
                   np.array([r.value for r in records], dtype=np.float64))

    def records(self) -> list[PointRecord]:
        return [PointRecord(GeoPoint(a, b), v)
                for a, b, v in zip(self.lat.tolist(), self.lon.tolist(), self.value.tolist())]


@dataclass(frozen=True, eq=False)
class CellTable:
    """Columnar sparse cell table bound to one grid."""

    spec: GridSpec
    row: np.ndarray
    col: np.ndarray
    value: np.ndarray

    def __post_init__(self) -> None:
        for name, dtype in (("row", np.int64), ("col", np.int64), ("value", np.float64)):
            arr = np.ascontiguousarray(getattr(self, name), dtype=dtype)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not (self.row.shape == self.col.shape == self.value.shape) or self.row.ndim != 1:
            raise ParseError("cell table columns differ in length")
        if self.row.size:
            if (self.row.min() < 0 or self.row.max() >= self.spec.nrows
                    or self.col.min() < 0 or self.col.max() >= self.spec.ncols):
                raise GridError("cell table has indices outside its grid")
        if not np.isfinite(self.value).all():
            raise ParseError("cell table contains non-finite values")

    def __len__(self) -> int:
        return self.row.size

    def slice(self, start: int, stop: int) -> "CellTable":
        return CellTable(self.spec, self.row[start:stop], self.col[start:stop],
                         self.value[start:stop])

    @classmethod
    def from_records(cls, spec: GridSpec, records: Iterable[CellRecord]) -> "CellTable":
        records = list(records)
        return cls(spec,
                   np.array([r.cell.row for r in records], dtype=np.int64),
                   np.array([r.cell.col for r in records], dtype=np.int64),
                   np.array([r.value for r in records], dtype=np.float64))

    def records(self) -> list[CellRecord]:
        return [CellRecord(CellIndex(r, c), v)
                for r, c, v in zip(self.row.tolist(), self.col.tolist(), self.value.tolist())]


# --------------------------------------------------------------------------
# Boundaries


def _ring_from_pairs(pairs, *, swap: bool, where: str) -> Ring:
    pts = []
    for pair in pairs:
        if not isinstance(pair, (list, tuple)) or len(pair) < 2:
            raise ParseError(f"{where}: coordinate needs two numbers, got {pair!r}")
        a, b = pair[0], pair[1]
        if not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in (a, b)):
            raise ParseError(f"{where}: non-numeric coordinate {pair!r}")
        try:
            pts.append(GeoPoint(float(b), float(a)) if swap else GeoPoint(float(a), float(b)))
        except GeometryError as exc:
            raise ParseError(f"{where}: {exc}") from None
    deduped = [p for k, p in enumerate(pts) if k == 0 or p != pts[k - 1]]
    if len(set(deduped)) < 3:
        raise ParseError(f"{where}: ring has fewer than 3 distinct vertices")
    try:
        return Ring(tuple(deduped))
    except GeometryError as exc:
        raise ParseError(f"{where}: {exc}") from None


def parse_polygon_string(text: str) -> Ring:
    """Parse ``[[lat, lon], ...]`` into a ring, dropping a repeated closing vertex."""
    try:
        pairs = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed polygon string: {exc}") from None
    if not isinstance(pairs, list):
        raise ParseError("polygon string must be an array of [lat, lon] pairs")
    if not pairs:
        raise ParseError("empty polygon")
    if not all(isinstance(p, list) for p in pairs):
        raise ParseError("polygon string must be an array of [lat, lon] pairs")
    return _ring_from_pairs(pairs, swap=False, where="polygon string")


def parse_boundary_geojson(text: str) -> list[PolygonBoundary]:
    """One boundary per Polygon/MultiPolygon feature, converted to (lat, lon)."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed GeoJSON: {exc}") from None
    if isinstance(doc, dict) and doc.get("type") == "Feature":
        features = [doc]
    elif isinstance(doc, dict) and doc.get("type") == "FeatureCollection":
        features = doc.get("features")
        if not isinstance(features, list):
            raise ParseError("FeatureCollection without a features array")
    else:
        raise ParseError("expected a GeoJSON FeatureCollection")

    out = []
    for idx, feat in enumerate(features):
        props = (feat.get("properties") or {}) if isinstance(feat, dict) else {}
        fid = props.get("id", props.get("osm_id", idx))
        where = f"feature {fid}"
        geom = feat.get("geometry") if isinstance(feat, dict) else None
        if not isinstance(geom, dict):
            raise ParseError(f"{where}: missing geometry")
        gtype = geom.get("type")
        coords = geom.get("coordinates")
        if gtype == "Polygon":
            polys = [coords]
        elif gtype == "MultiPolygon":
            polys = coords
        else:
            raise ParseError(f"{where}: unsupported geometry {gtype!r}")
        if not isinstance(polys, list) or not polys:
            raise ParseError(f"{where}: empty coordinates")
        rings = []
        for poly in polys:
            if not isinstance(poly, list) or not poly:
                raise ParseError(f"{where}: polygon without rings")
            for ring in poly:
                if not isinstance(ring, list):
                    raise ParseError(f"{where}: malformed ring")
                rings.append(_ring_from_pairs(ring, swap=True, where=where))
        country = props.get("country")
        out.append(PolygonBoundary(id=str(fid), name=str(props.get("name", "")),
                                   rings=tuple(rings),
                                   country=None if country is None else str(country)))
    return out


def boundary_to_json(b: PolygonBoundary) -> str:
    return json.dumps({
        "id": b.id,
        "name": b.name,
        "country": b.country,
        "rings": [[[v.lat, v.lon] for v in ring.vertices] for ring in b.rings],
    }, separators=(",", ":"))


def write_boundaries(path, boundaries: Iterable[PolygonBoundary]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for b in boundaries:
            fh.write(boundary_to_json(b) + "\n")


def read_boundaries(path) -> list[PolygonBoundary]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                rings = tuple(_ring_from_pairs(r, swap=False, where=f"line {lineno}")
                              for r in obj["rings"])
                out.append(PolygonBoundary(id=str(obj["id"]), name=str(obj.get("name", "")),
                                           rings=rings, country=obj.get("country")))
            except (json.JSONDecodeError, KeyError, TypeError, GeometryError) as exc:
                raise ParseError(f"{path}:{lineno}: bad boundary record ({exc})") from None
    ids = [b.id for b in out]
    if len(set(ids)) != len(ids):
        raise ParseError(f"{path}: duplicate boundary ids")
    return out


# --------------------------------------------------------------------------
# Rasters


_REQUIRED_KEYS = ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize")


def read_ascii_grid(stream: IO[str] | Iterable[str]) -> tuple[GridSpec, list[CellRecord]]:
    """Read an ESRI ASCII grid; cells equal to NODATA are skipped."""
    header: dict[str, float] = {}
    lines = iter(stream)
    lineno = 0
    first_data = None
    for line in lines:
        lineno += 1
        parts = line.split()
        if not parts:
            continue
        key = parts[0].lower()
        if key[0].isalpha():
            if len(parts) != 2:
                raise ParseError(f"line {lineno}: malformed header line")
            try:
                header[key] = float(parts[1])
            except ValueError:
                raise ParseError(f"line {lineno}: non-numeric header value {parts[1]!r}") from None
            continue
        first_data = (lineno, parts)
        break

    if "xllcenter" in header and "xllcorner" not in header and "cellsize" in header:
        header["xllcorner"] = header["xllcenter"] - header["cellsize"] / 2
    if "yllcenter" in header and "yllcorner" not in header and "cellsize" in header:
        header["yllcorner"] = header["yllcenter"] - header["cellsize"] / 2
    for key in _REQUIRED_KEYS:
        if key not in header:
            raise ParseError(f"missing header key {key!r}")
    nrows, ncols = int(header["nrows"]), int(header["ncols"])
    cs = header["cellsize"]
    nodata = header.get("nodata_value")
    spec = GridSpec(top_lat=header["yllcorner"] + nrows * cs, left_lon=header["xllcorner"],
                    cell_size=cs, nrows=nrows, ncols=ncols)

    records: list[CellRecord] = []
    row = 0

    def consume(ln: int, parts: list[str]) -> None:
        nonlocal row
        if row >= nrows:
            raise ParseError(f"line {ln}: row count mismatch (header says {nrows})")
        if len(parts) != ncols:
            raise ParseError(f"line {ln}: column count mismatch ({len(parts)} != {ncols})")
        for col, tok in enumerate(parts):
            try:
                v = float(tok)
            except ValueError:
                raise ParseError(f"line {ln}: non-numeric cell {tok!r}") from None
            if nodata is not None and v == nodata:
                continue
            if not math.isfinite(v):
                raise ParseError(f"line {ln}: non-finite cell {tok!r}")
            records.append(CellRecord(CellIndex(row, col), v))
        row += 1

    if first_data is not None:
        consume(*first_data)
    for line in lines:
        lineno += 1
        parts = line.split()
        if parts:
            consume(lineno, parts)
    if row != nrows:
        raise ParseError(f"row count mismatch: header says {nrows}, found {row}")
    return spec, records


def write_ascii_grid(stream: IO[str], matrix, spec: GridSpec, nodata: float = -9999.0) -> None:
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.shape != (spec.nrows, spec.ncols):
        raise GridError(f"matrix shape {matrix.shape} does not match grid")
    stream.write(f"ncols {spec.ncols}\nnrows {spec.nrows}\n")
    stream.write(f"xllcorner {spec.left_lon!r}\nyllcorner {spec.bottom_lat!r}\n")
    stream.write(f"cellsize {spec.cell_size!r}\nNODATA_value {nodata!r}\n")
    for r in range(spec.nrows):
        stream.write(" ".join(repr(v) for v in matrix[r].tolist()) + "\n")


def sparsify(cells: Sequence[CellRecord]) -> list[CellRecord]:
    return [c for c in cells if c.value != 0]


def cells_to_points(cells: Sequence[CellRecord], spec: GridSpec) -> list[PointRecord]:
    """Place each cell's value at its centre point."""
    if not cells:
        return []
    rows = np.array([c.cell.row for c in cells], dtype=np.int64)
    cols = np.array([c.cell.col for c in cells], dtype=np.int64)
    lat, lon = centers_of(rows, cols, spec)
    return [PointRecord(GeoPoint(a, b), c.value)
            for a, b, c in zip(lat.tolist(), lon.tolist(), cells)]


def cell_table_to_points(cells: CellTable) -> PointTable:
    lat, lon = centers_of(cells.row, cells.col, cells.spec)
    return PointTable(lat, lon, cells.value)


def edges_to_points(edges: Iterable[EdgeRecord]) -> tuple[list[PointRecord], int]:
    """Midpoint and haversine length per edge; returns ``(points, skipped)``.

    Edges crossing the antimeridian are skipped and counted.
    """
    points = []
    skipped = 0
    for e in edges:
        if crosses_antimeridian(e.start, e.end):
            skipped += 1
            continue
        points.append(PointRecord(midpoint(e.start, e.end), haversine_length(e.start, e.end)))
    return points, skipped


# --------------------------------------------------------------------------
# CSV tables


def fmt_coord(x: float) -> str:
    s = f"{x:.9f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


def fmt_float(x: float) -> str:
    return repr(float(x))


def _open_csv(path, expected: Sequence[str]):
    fh = open(path, newline="", encoding="utf-8")
    reader = csv.reader(fh)
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != list(expected):
        fh.close()
        raise ParseError(f"{path}: expected header {','.join(expected)}, got {header}")
    return fh, reader


def write_points(path, table: PointTable) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        buf = ["lat,lon,value\n"]
        for a, b, v in zip(table.lat.tolist(), table.lon.tolist(), table.value.tolist()):
            buf.append(f"{fmt_coord(a)},{fmt_coord(b)},{fmt_float(v)}\n")
        fh.write("".join(buf))


def read_points(path) -> PointTable:
    fh, reader = _open_csv(path, ("lat", "lon", "value"))
    with fh:
        text = fh.read()
    if not text.strip():
        return PointTable(np.empty(0), np.empty(0), np.empty(0))
    try:
        data = np.loadtxt(io.StringIO(text), delimiter=",", ndmin=2, dtype=np.float64)
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from None
    if data.shape[1] != 3:
        raise ParseError(f"{path}: expected 3 columns")
    bad = ((data[:, 0] < -90) | (data[:, 0] > 90) | (data[:, 1] < -180) | (data[:, 1] > 180)
           | ~np.isfinite(data).all(axis=1))
    if bad.any():
        raise ParseError(f"{path}:{int(np.flatnonzero(bad)[0]) + 2}: invalid point row")
    return PointTable(data[:, 0], data[:, 1], data[:, 2])


def write_cells(path, table: CellTable, spec_path=None) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        buf = ["row,col,value\n"]
        for r, c, v in zip(table.row.tolist(), table.col.tolist(), table.value.tolist()):
            buf.append(f"{r},{c},{fmt_float(v)}\n")
        fh.write("".join(buf))
    if spec_path is not None:
        write_grid_spec(spec_path, table.spec)


def read_cells(path, spec: GridSpec) -> CellTable:
    fh, reader = _open_csv(path, ("row", "col", "value"))
    with fh:
        text = fh.read()
    if not text.strip():
        return CellTable(spec, np.empty(0), np.empty(0), np.empty(0))
    try:
        data = np.loadtxt(io.StringIO(text), delimiter=",", ndmin=2, dtype=np.float64)
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from None
    if data.shape[1] != 3:
        raise ParseError(f"{path}: expected 3 columns")
    rows = data[:, 0].astype(np.int64)
    cols = data[:, 1].astype(np.int64)
    if not (np.array_equal(rows, data[:, 0]) and np.array_equal(cols, data[:, 1])):
        raise ParseError(f"{path}: non-integer cell index")
    return CellTable(spec, rows, cols, data[:, 2])


def write_grid_spec(path, spec: GridSpec) -> None:
    Path(path).write_text(json.dumps(spec.to_dict(), sort_keys=True) + "\n", encoding="utf-8")


def read_grid_spec(path) -> GridSpec:
    try:
        return GridSpec.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from None


def read_edges(path) -> list[EdgeRecord]:
    fh, reader = _open_csv(path, ("way_id", "start_lat", "start_lon", "end_lat", "end_lon"))
    out = []
    with fh:
        for lineno, row in enumerate(reader, 2):
            if not row:
                continue
            try:
                way, a, b, c, d = row
                out.append(EdgeRecord(GeoPoint(float(a), float(b)), GeoPoint(float(c), float(d)),
                                      way.strip()))
            except (ValueError, GeometryError) as exc:
                raise ParseError(f"{path}:{lineno}: bad edge row ({exc})") from None
    return out


def write_edges(path, edges: Iterable[EdgeRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("way_id,start_lat,start_lon,end_lat,end_lon\n")
        for e in edges:
            fh.write(f"{e.way_id},{fmt_coord(e.start.lat)},{fmt_coord(e.start.lon)},"
                     f"{fmt_coord(e.end.lat)},{fmt_coord(e.end.lon)}\n")


def read_gdp(path) -> dict[str, float]:
    fh, reader = _open_csv(path, ("country", "gdp_per_capita"))
    out = {}
    with fh:
        for lineno, row in enumerate(reader, 2):
            if not row:
                continue
            try:
                country, gdp = row
                value = float(gdp)
            except ValueError:
                raise ParseError(f"{path}:{lineno}: bad GDP row {row!r}") from None
            if not value > 0:
                raise ParseError(f"{path}:{lineno}: GDP per capita must be positive")
            out[country.strip()] = value
    return out


def write_gdp(path, gdp: dict[str, float]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("country,gdp_per_capita\n")
        for country in sorted(gdp):
            fh.write(f"{country},{fmt_float(gdp[country])}\n")


def _opt_float(s: str) -> float | None:
    s = s.strip()
    return float(s) if s else None


def read_cities(path) -> list[CityMeta]:
    fh, reader = _open_csv(path, ("id", "name", "country", "population", "gdp_per_capita"))
    out = []
    with fh:
        for lineno, row in enumerate(reader, 2):
            if not row:
                continue
            try:
                cid, name, country, pop, gdp = row
                out.append(CityMeta(cid, name, country or None, _opt_float(pop), _opt_float(gdp)))
            except ValueError:
                raise ParseError(f"{path}:{lineno}: bad city row {row!r}") from None
    ids = [c.id for c in out]
    if len(set(ids)) != len(ids):
        raise ParseError(f"{path}: duplicate city ids")
    return out


def write_cities(path, cities: Iterable[CityMeta]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "name", "country", "population", "gdp_per_capita"])
        for c in cities:
            pop = "" if c.population is None else fmt_float(c.population)
            gdp = "" if c.gdp_per_capita is None else fmt_float(c.gdp_per_capita)
            w.writerow([c.id, c.name, c.country or "", pop, gdp])
