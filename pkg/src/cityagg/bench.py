"""Vector vs raster timing on one semantic workload.

The point table is scattered uniformly over a grid; the cell table is the
same points binned into that grid (per-cell sums), i.e. the raster
representation of the same data.  Boundaries are star-shaped polygons.
"""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass

import numpy as np

from .engine import QueryPlan, RasterizedBoundaries, rasterize_catalog, run_partitioned
from .geometry import PolygonBoundary
from .ingest import CellTable, PointTable
from .raster import GridSpec, cells_of
from .synth import random_star_ring, rng_stream


@dataclass(frozen=True)
class BenchScenario:
    points: int = 1_000_000
    grid_side: int = 600
    cell_size: float = 0.01
    boundaries: int = 200
    vertices: int = 128
    min_radius: float = 0.1
    max_radius: float = 0.3
    repetitions: int = 5
    partitions: int = 1
    workers: int = 1
    seed: int = 0


@dataclass(frozen=True, eq=False)
class BenchWorkload:
    points: PointTable
    cells: CellTable
    boundaries: list[PolygonBoundary]
    rasterized: RasterizedBoundaries
    rasterize_seconds: float


def build_workload(sc: BenchScenario) -> BenchWorkload:
    spec = GridSpec(10.0, 20.0, sc.cell_size, sc.grid_side, sc.grid_side)
    rng = rng_stream(sc.seed, "bench-points")
    lat = rng.uniform(spec.bottom_lat, spec.top_lat, sc.points)
    lon = rng.uniform(spec.left_lon, spec.right_lon, sc.points)
    val = rng.lognormal(0.0, 1.0, sc.points)
    points = PointTable(lat, lon, val)

    rows, cols = cells_of(lat, lon, spec)
    keys = rows * spec.ncols + cols
    sums = np.bincount(keys, weights=val, minlength=spec.nrows * spec.ncols)
    nz = np.flatnonzero(sums)
    cells = CellTable(spec, nz // spec.ncols, nz % spec.ncols, sums[nz])

    brng = rng_stream(sc.seed, "bench-boundaries")
    extent = sc.grid_side * sc.cell_size
    boundaries = []
    for i in range(sc.boundaries):
        radius = brng.uniform(sc.min_radius, sc.max_radius)
        margin = min(radius, extent / 2)
        center = (brng.uniform(spec.bottom_lat + margin, spec.top_lat - margin),
                  brng.uniform(spec.left_lon + margin, spec.right_lon - margin))
        ring = random_star_ring(brng, sc.vertices, center, radius)
        boundaries.append(PolygonBoundary(f"b{i:04d}", f"boundary {i}", (ring,)))
    t0 = time.perf_counter()
    rasterized = rasterize_catalog(boundaries, spec)
    return BenchWorkload(points, cells, boundaries, rasterized, time.perf_counter() - t0)


def run_bench(sc: BenchScenario, workload: BenchWorkload | None = None) -> list[dict]:
    """One row per (mode, repetition) followed by one median row per mode."""
    wl = workload or build_workload(sc)
    rows: list[dict] = []
    for mode in ("vector", "raster"):
        plan = QueryPlan(mode=mode, partitions=sc.partitions, workers=sc.workers)
        table, target = (wl.points, wl.boundaries) if mode == "vector" else (wl.cells, wl.rasterized)
        mode_rows = []
        for rep in range(sc.repetitions):
            _, stats = run_partitioned(table, target, plan)
            mode_rows.append({"mode": mode, "rep": str(rep), "rows": stats.rows_scanned,
                              "wall_seconds": stats.wall_seconds,
                              "busy_core_seconds": stats.busy_core_seconds,
                              "core_min": stats.core_minutes})
        rows.extend(mode_rows)
        rows.append({"mode": mode, "rep": "median", "rows": len(table),
                     "wall_seconds": statistics.median(r["wall_seconds"] for r in mode_rows),
                     "busy_core_seconds": statistics.median(r["busy_core_seconds"] for r in mode_rows),
                     "core_min": statistics.median(r["core_min"] for r in mode_rows)})
    return rows


def median_of(rows: list[dict], mode: str, key: str = "wall_seconds") -> float:
    return next(r[key] for r in rows if r["mode"] == mode and r["rep"] == "median")


def bench_csv(rows: list[dict]) -> str:
    lines = ["mode,rep,rows,wall_seconds,busy_core_seconds,core_min"]
    for r in rows:
        lines.append(f"{r['mode']},{r['rep']},{r['rows']},{r['wall_seconds']:.6f},"
                     f"{r['busy_core_seconds']:.6f},{r['core_min']:.8f}")
    return "\n".join(lines) + "\n"
