"""Seeded synthetic worlds for tests, benchmarks and pipeline round trips.

Cities are axis-aligned rectangles snapped to cell edges, laid out one per
slot on a regular grid with at least one empty cell between neighbours.
Each city's total property ``Y = y0 * N**beta * exp(eps)`` is spread over
the cells it covers; a sprinkling of background cells outside every city
keeps the queries honest.  Point and cell tables describe the same data:
each point sits at its cell's centre.
"""

from __future__ import annotations

import json
import math
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .geometry import GeoPoint, PolygonBoundary, Ring
from .ingest import (CellTable, CityMeta, PointTable, cell_table_to_points, write_boundaries,
                     write_cells, write_cities, write_gdp, write_points)
from .raster import GridSpec

SLOT = 6  # cells per slot side; cities span 2..SLOT-1 cells


def rng_stream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for one named purpose, derived from ``seed``."""
    return np.random.default_rng([seed, zlib.crc32(name.encode())])


@dataclass(frozen=True)
class Cohort:
    name: str
    countries: tuple[str, ...]
    gdp_per_capita: tuple[float, ...]
    beta: float
    y0: float
    weight: float = 1.0
    log10_n_min: float = 3.0
    log10_n_max: float = 7.0

    def __post_init__(self) -> None:
        if not self.countries or len(self.countries) != len(self.gdp_per_capita):
            raise ValueError(f"cohort {self.name}: need one GDP value per country")
        if self.y0 <= 0 or self.weight <= 0:
            raise ValueError(f"cohort {self.name}: y0 and weight must be positive")
        if not self.log10_n_min < self.log10_n_max:
            raise ValueError(f"cohort {self.name}: empty population range")


@dataclass(frozen=True)
class SyntheticConfig:
    n_cities: int
    beta_true: float = 0.85
    y0: float = 1.0
    noise_sigma: float = 0.1
    seed: int = 0
    cohorts: tuple[Cohort, ...] | None = None
    cell_size: float = 0.01
    top_lat: float = 10.0
    left_lon: float = 20.0
    background_fraction: float = 0.05

    def __post_init__(self) -> None:
        if self.n_cities < 2:
            raise ValueError("n_cities must be >= 2")
        if not self.y0 > 0:
            raise ValueError("y0 must be positive")
        if not self.noise_sigma >= 0:
            raise ValueError("noise_sigma must be >= 0")
        if not 0 <= self.background_fraction <= 1:
            raise ValueError("background_fraction must lie in [0, 1]")

    def resolved_cohorts(self) -> tuple[Cohort, ...]:
        if self.cohorts:
            return self.cohorts
        return (Cohort("all", ("AA", "AB", "AC", "AD"), (12_000.0, 25_000.0, 40_000.0, 60_000.0),
                       self.beta_true, self.y0),)


def two_cohort_config(n_cities: int = 1000, *, seed: int = 0, noise_sigma: float = 0.1,
                      developed_beta: float = 0.83, y0: float = 1.0) -> SyntheticConfig:
    """Developed cities on the reference law plus a large-city, low-``Y0`` poor cohort."""
    developed = Cohort("developed", ("DA", "DB", "DC", "DD"),
                       (9_000.0, 18_000.0, 35_000.0, 62_000.0),
                       beta=developed_beta, y0=y0, weight=0.7)
    poor = Cohort("underdeveloped", ("UA", "UB", "UC"), (900.0, 1_600.0, 2_500.0),
                  beta=0.7, y0=y0 * 0.08, weight=0.3, log10_n_min=4.5, log10_n_max=7.0)
    return SyntheticConfig(n_cities=n_cities, beta_true=developed_beta, y0=y0,
                           noise_sigma=noise_sigma, seed=seed, cohorts=(developed, poor))


@dataclass(frozen=True, eq=False)
class SyntheticWorld:
    config: SyntheticConfig
    boundaries: list[PolygonBoundary]
    points: PointTable
    cells: CellTable
    cities: list[CityMeta]
    gdp: dict[str, float]
    ledger: dict = field(repr=False)

    @property
    def spec(self) -> GridSpec:
        return self.cells.spec


def generate_synthetic_world(config: SyntheticConfig) -> SyntheticWorld:
    cohorts = config.resolved_cohorts()
    n = config.n_cities
    slots_x = math.ceil(math.sqrt(n))
    slots_y = math.ceil(n / slots_x)
    cs = config.cell_size
    spec = GridSpec(config.top_lat, config.left_lon, cs, slots_y * SLOT, slots_x * SLOT)

    layout = rng_stream(config.seed, "layout")
    assign = rng_stream(config.seed, "cohort")
    pop_rng = rng_stream(config.seed, "population")
    noise = rng_stream(config.seed, "noise")
    split = rng_stream(config.seed, "split")
    background = rng_stream(config.seed, "background")

    weights = np.array([c.weight for c in cohorts], dtype=np.float64)
    cohort_idx = assign.choice(len(cohorts), size=n, p=weights / weights.sum())
    country_pick = assign.random(n)

    covered = np.zeros((spec.nrows, spec.ncols), dtype=bool)
    boundaries, cities, ledger_cities = [], [], []
    cell_rows, cell_cols, cell_vals = [], [], []
    gdp: dict[str, float] = {}
    for c in cohorts:
        gdp.update(zip(c.countries, c.gdp_per_capita))

    for i in range(n):
        cohort = cohorts[cohort_idx[i]]
        k = min(int(country_pick[i] * len(cohort.countries)), len(cohort.countries) - 1)
        country = cohort.countries[k]
        slot_r, slot_c = divmod(i, slots_x)
        h, w = layout.integers(2, SLOT, size=2)
        off_r = layout.integers(1, SLOT - h + 1)
        off_c = layout.integers(1, SLOT - w + 1)
        r0 = slot_r * SLOT + off_r
        c0 = slot_c * SLOT + off_c
        north = spec.top_lat - r0 * cs
        south = spec.top_lat - (r0 + h) * cs
        west = spec.left_lon + c0 * cs
        east = spec.left_lon + (c0 + w) * cs
        ring = Ring((GeoPoint(south, west), GeoPoint(north, west),
                     GeoPoint(north, east), GeoPoint(south, east)))
        cid = f"c{i:05d}"
        boundaries.append(PolygonBoundary(cid, f"city {i}", (ring,), country=country))

        log_n = pop_rng.uniform(cohort.log10_n_min, cohort.log10_n_max)
        population = float(10.0 ** log_n)
        eps = float(noise.normal(0.0, config.noise_sigma)) if config.noise_sigma > 0 else 0.0
        y_total = cohort.y0 * population ** cohort.beta * math.exp(eps)
        share = split.dirichlet(np.ones(h * w))
        rr, cc = np.meshgrid(np.arange(r0, r0 + h), np.arange(c0, c0 + w), indexing="ij")
        covered[r0:r0 + h, c0:c0 + w] = True
        cell_rows.append(rr.ravel())
        cell_cols.append(cc.ravel())
        cell_vals.append(y_total * share)

        cities.append(CityMeta(cid, f"city {i}", country, population, gdp[country]))
        ledger_cities.append({"id": cid, "cohort": cohort.name, "country": country,
                              "population": population, "y_true": y_total, "cells": int(h * w)})

    free_r, free_c = np.nonzero(~covered)
    take = background.random(free_r.size) < config.background_fraction
    cell_rows.append(free_r[take])
    cell_cols.append(free_c[take])
    cell_vals.append(background.uniform(0.01, 1.0, size=int(take.sum())))

    rows = np.concatenate(cell_rows)
    cols = np.concatenate(cell_cols)
    vals = np.concatenate(cell_vals)
    order = np.argsort(rows * spec.ncols + cols, kind="stable")
    cells = CellTable(spec, rows[order], cols[order], vals[order])
    points = cell_table_to_points(cells)

    ledger = {
        "config": _config_dict(config),
        "beta_true": config.beta_true,
        "cohorts": [asdict(c) for c in cohorts],
        "cities": ledger_cities,
    }
    return SyntheticWorld(config, boundaries, points, cells, cities, gdp, ledger)


def _config_dict(config: SyntheticConfig) -> dict:
    d = asdict(config)
    d.pop("cohorts")
    return d


def write_world(world: SyntheticWorld, out_dir) -> dict[str, Path]:
    """Write a fixture directory; returns the written paths by role."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "boundaries": out / "boundaries.jsonl",
        "points": out / "points.csv",
        "cells": out / "cells.csv",
        "grid": out / "grid.json",
        "cities": out / "cities.csv",
        "gdp": out / "gdp.csv",
        "ledger": out / "ledger.json",
    }
    write_boundaries(paths["boundaries"], world.boundaries)
    write_points(paths["points"], world.points)
    write_cells(paths["cells"], world.cells, paths["grid"])
    write_cities(paths["cities"], world.cities)
    write_gdp(paths["gdp"], world.gdp)
    paths["ledger"].write_text(json.dumps(world.ledger, indent=2, sort_keys=True) + "\n",
                               encoding="utf-8")
    return paths


def random_star_ring(rng: np.random.Generator, n_vertices: int, center: tuple[float, float],
                     radius: float, jitter: float = 0.5) -> Ring:
    """Simple ring with vertices at sorted angles around ``center``.

    Star-shaped about its centre, hence never self-intersecting.
    """
    while True:
        angles = np.sort(rng.uniform(0, 2 * np.pi, n_vertices))
        if np.unique(angles).size == n_vertices:
            break
    r = radius * (1 - jitter * rng.random(n_vertices))
    lat = center[0] + r * np.sin(angles)
    lon = center[1] + r * np.cos(angles)
    return Ring(tuple(GeoPoint(float(a), float(b)) for a, b in zip(lat, lon)))
