"""Partitioned per-polygon aggregation over point and cell tables.

Both paths follow the same shape: split the input table into contiguous
shards, map every shard to per-city partial aggregates (at most ``workers``
shards in flight), then fold the partials in ascending shard order.  Shard
sums are exactly rounded (``math.fsum``), so results never depend on the
worker count and only differ in the last ulp across shard counts.
"""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .geometry import PolygonBoundary, points_in_boundary
from .ingest import CellTable, PointTable, fmt_float
from .raster import CellIndex, GridError, GridSpec, rasterize_boundary_arrays

MODES = ("vector", "raster")
AGGREGATES = ("sum", "count", "mean")


class QueryError(ValueError):
    pass


@dataclass(frozen=True)
class CityAggregate:
    city_id: str
    sum: float = 0.0
    count: int = 0

    def __post_init__(self) -> None:
        if self.count < 0:
            raise QueryError(f"negative count for {self.city_id}")
        if self.count == 0 and self.sum != 0:
            raise QueryError(f"empty aggregate for {self.city_id} has non-zero sum")

    @property
    def empty(self) -> bool:
        return self.count == 0

    @property
    def mean(self) -> float:
        return self.sum / self.count if self.count else math.nan

    def value(self, aggregate: str) -> float:
        if aggregate == "sum":
            return self.sum
        if aggregate == "count":
            return float(self.count)
        if aggregate == "mean":
            return self.mean
        raise QueryError(f"unknown aggregate {aggregate!r}")


def merge_aggregates(a: CityAggregate, b: CityAggregate) -> CityAggregate:
    if a.city_id != b.city_id:
        raise QueryError(f"cannot merge aggregates of {a.city_id!r} and {b.city_id!r}")
    return CityAggregate(a.city_id, a.sum + b.sum, a.count + b.count)


@dataclass(frozen=True)
class QueryPlan:
    mode: str = "vector"
    aggregate: str = "sum"
    partitions: int = 1
    workers: int = 1
    prefilter: bool = True

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise QueryError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.aggregate not in AGGREGATES:
            raise QueryError(f"aggregate must be one of {AGGREGATES}, got {self.aggregate!r}")
        if self.partitions < 1 or self.workers < 1:
            raise QueryError("partitions and workers must both be >= 1")


@dataclass
class ExecStats:
    wall_seconds: float = 0.0
    busy_core_seconds: float = 0.0
    rows_scanned: int = 0
    rows_matched: int = 0
    partitions: int = 1
    workers: int = 1
    mode: str = "vector"
    partition_seconds: list[float] = field(default_factory=list)

    @property
    def core_minutes(self) -> float:
        return self.busy_core_seconds / 60

    def to_dict(self) -> dict:
        return {
            "wall_seconds": self.wall_seconds,
            "busy_core_seconds": self.busy_core_seconds,
            "rows_scanned": self.rows_scanned,
            "rows_matched": self.rows_matched,
            "partitions": self.partitions,
            "workers": self.workers,
            "mode": self.mode,
        }


@dataclass(frozen=True, eq=False)
class RasterizedBoundaries:
    """Per-city cell sets on one grid, ready to serve as a join build side."""

    spec: GridSpec
    city_ids: tuple[str, ...]
    keys: tuple[np.ndarray, ...]  # sorted unique row * ncols + col, one array per city

    @classmethod
    def from_sets(cls, spec: GridSpec, sets: Mapping[str, object]) -> "RasterizedBoundaries":
        ids, keys = [], []
        for cid, cells in sets.items():
            cells = list(cells)
            rows = np.array([c[0] for c in cells], dtype=np.int64)
            cols = np.array([c[1] for c in cells], dtype=np.int64)
            ids.append(str(cid))
            keys.append(_cell_keys(rows, cols, spec))
        return cls(spec, tuple(ids), tuple(keys))

    def cells(self, city_id: str) -> frozenset[CellIndex]:
        k = self.keys[self.city_ids.index(city_id)]
        return frozenset(CellIndex(int(x // self.spec.ncols), int(x % self.spec.ncols)) for x in k)


def _cell_keys(rows: np.ndarray, cols: np.ndarray, spec: GridSpec) -> np.ndarray:
    if rows.size and (rows.min() < 0 or rows.max() >= spec.nrows
                      or cols.min() < 0 or cols.max() >= spec.ncols):
        raise GridError("cell set has indices outside its grid")
    return np.unique(rows * spec.ncols + cols)


def rasterize_catalog(boundaries: Sequence[PolygonBoundary], spec: GridSpec) -> RasterizedBoundaries:
    _check_ids([b.id for b in boundaries])
    keys = []
    for b in boundaries:
        rows, cols = rasterize_boundary_arrays(b, spec)
        keys.append(_cell_keys(rows, cols, spec))
    return RasterizedBoundaries(spec, tuple(b.id for b in boundaries), tuple(keys))


def _check_ids(ids: Sequence[str]) -> None:
    if len(set(ids)) != len(ids):
        raise QueryError("duplicate city ids in catalog")


# --------------------------------------------------------------------------
# Map functions.  Each returns (sums, counts, rows_matched) aligned to the
# city order of the catalog.


def _grouped_fsum(city: np.ndarray, values: np.ndarray, n_cities: int) -> tuple[list[float], np.ndarray]:
    counts = np.bincount(city, minlength=n_cities)
    order = np.argsort(city, kind="stable")
    splits = np.split(values[order], np.cumsum(counts)[:-1])
    return [math.fsum(s) if s.size else 0.0 for s in splits], counts


def _vector_map(shard: PointTable, boundaries: Sequence[PolygonBoundary], prefilter: bool):
    n = len(boundaries)
    sums = [0.0] * n
    counts = np.zeros(n, dtype=np.int64)
    matched = np.zeros(len(shard), dtype=bool)
    if prefilter:
        order = np.argsort(shard.lat, kind="stable")
        lat_s = shard.lat[order]
        lon_s = shard.lon[order]
    for k, b in enumerate(boundaries):
        if prefilter:
            min_lat, min_lon, max_lat, max_lon = b.bbox
            lo = np.searchsorted(lat_s, min_lat, side="left")
            hi = np.searchsorted(lat_s, max_lat, side="right")
            lon_win = lon_s[lo:hi]
            cand = order[lo:hi][(lon_win >= min_lon) & (lon_win <= max_lon)]
        else:
            cand = np.arange(len(shard))
        if cand.size == 0:
            continue
        hit = cand[points_in_boundary(shard.lat[cand], shard.lon[cand], b)]
        if hit.size:
            sums[k] = math.fsum(shard.value[hit])
            counts[k] = hit.size
            matched[hit] = True
    return sums, counts, int(matched.sum())


@dataclass(frozen=True, eq=False)
class _BuildSide:
    keys: np.ndarray   # sorted, one entry per (cell, city) pair
    city: np.ndarray   # city index for each key


def _build_side(rasterized: RasterizedBoundaries) -> _BuildSide:
    if rasterized.keys:
        keys = np.concatenate(rasterized.keys)
        city = np.concatenate([np.full(k.size, i, dtype=np.int64)
                               for i, k in enumerate(rasterized.keys)])
    else:
        keys = np.empty(0, dtype=np.int64)
        city = np.empty(0, dtype=np.int64)
    order = np.argsort(keys, kind="stable")
    return _BuildSide(keys[order], city[order])


def _raster_map(shard: CellTable, build: _BuildSide, n_cities: int):
    probe = shard.row * shard.spec.ncols + shard.col
    left = np.searchsorted(build.keys, probe, side="left")
    right = np.searchsorted(build.keys, probe, side="right")
    fan = right - left
    rows_matched = int(np.count_nonzero(fan))
    total = int(fan.sum())
    if total == 0:
        return [0.0] * n_cities, np.zeros(n_cities, dtype=np.int64), 0
    # Expand every probe row into one output row per matching city.
    src = np.repeat(np.arange(probe.size), fan)
    first = np.cumsum(fan) - fan
    pos = left[src] + (np.arange(total) - first[src])
    sums, counts = _grouped_fsum(build.city[pos], shard.value[src], n_cities)
    return sums, counts, rows_matched


# --------------------------------------------------------------------------
# Execution


def _shard_bounds(n: int, partitions: int) -> list[tuple[int, int]]:
    return [(p * n // partitions, (p + 1) * n // partitions) for p in range(partitions)]


def run_partitioned(table, target, plan: QueryPlan):
    """Run ``plan`` over ``table`` against boundaries (vector) or cell sets (raster).

    Returns ``(results, stats)`` where ``results`` maps city id to its
    :class:`CityAggregate`, in catalog order, including empty cities.
    """
    t0 = time.perf_counter()
    if plan.mode == "vector":
        if not isinstance(table, PointTable):
            raise QueryError("vector mode needs a point table")
        boundaries = list(target)
        city_ids = [b.id for b in boundaries]
        _check_ids(city_ids)
        mapper: Callable = lambda shard: _vector_map(shard, boundaries, plan.prefilter)
    else:
        if not isinstance(table, CellTable):
            raise QueryError("raster mode needs a cell table")
        if not isinstance(target, RasterizedBoundaries):
            raise QueryError("raster mode needs rasterized boundaries")
        if table.spec != target.spec:
            raise GridError(f"grid spec mismatch: cells {table.spec} vs boundaries {target.spec}")
        city_ids = list(target.city_ids)
        _check_ids(city_ids)
        build = _build_side(target)
        mapper = lambda shard: _raster_map(shard, build, len(city_ids))
    setup_seconds = time.perf_counter() - t0

    def task(bounds):
        start = time.perf_counter()
        out = mapper(table.slice(*bounds))
        return out, time.perf_counter() - start

    shards = _shard_bounds(len(table), plan.partitions)
    if plan.workers == 1:
        outputs = [task(b) for b in shards]
    else:
        with ThreadPoolExecutor(max_workers=plan.workers) as pool:
            outputs = list(pool.map(task, shards))

    t_merge = time.perf_counter()
    results = {cid: CityAggregate(cid) for cid in city_ids}
    rows_matched = 0
    for (sums, counts, matched), _ in outputs:
        rows_matched += matched
        for k, cid in enumerate(city_ids):
            if counts[k]:
                results[cid] = merge_aggregates(
                    results[cid], CityAggregate(cid, sums[k], int(counts[k])))
    merge_seconds = time.perf_counter() - t_merge

    part_seconds = [sec for _, sec in outputs]
    stats = ExecStats(
        wall_seconds=time.perf_counter() - t0,
        busy_core_seconds=setup_seconds + math.fsum(part_seconds) + merge_seconds,
        rows_scanned=len(table),
        rows_matched=rows_matched,
        partitions=plan.partitions,
        workers=plan.workers,
        mode=plan.mode,
        partition_seconds=part_seconds,
    )
    if stats.rows_matched > stats.rows_scanned:
        raise AssertionError("rows_matched exceeds rows_scanned")
    return results, stats


def vector_polygon_query(points: PointTable, boundaries: Sequence[PolygonBoundary],
                         plan: QueryPlan | None = None):
    plan = plan or QueryPlan(mode="vector")
    if plan.mode != "vector":
        raise QueryError("vector_polygon_query needs plan.mode == 'vector'")
    return run_partitioned(points, boundaries, plan)


def raster_polygon_query(cells: CellTable, rasterized: RasterizedBoundaries,
                         plan: QueryPlan | None = None):
    plan = plan or QueryPlan(mode="raster")
    if plan.mode != "raster":
        raise QueryError("raster_polygon_query needs plan.mode == 'raster'")
    return run_partitioned(cells, rasterized, plan)


# --------------------------------------------------------------------------
# Output


def aggregates_csv(results: Mapping[str, CityAggregate]) -> str:
    lines = ["city_id,sum,count,mean,empty_flag"]
    for cid, agg in results.items():
        mean = "" if agg.empty else fmt_float(agg.mean)
        lines.append(f"{cid},{fmt_float(agg.sum)},{agg.count},{mean},{int(agg.empty)}")
    return "\n".join(lines) + "\n"


def read_aggregates_csv(path) -> dict[str, CityAggregate]:
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["city_id", "sum", "count", "mean", "empty_flag"]:
            raise QueryError(f"{path}: not an aggregate table (header {reader.fieldnames})")
        for row in reader:
            out[row["city_id"]] = CityAggregate(row["city_id"], float(row["sum"]), int(row["count"]))
    return out


def stats_json(stats: ExecStats) -> str:
    return json.dumps(stats.to_dict(), indent=2) + "\n"
