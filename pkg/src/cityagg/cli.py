"""Command-line entry point: ``cityagg <subcommand> ...``.

Exit codes: 0 success, 1 user or input error, 2 internal invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import shutil
import sys
from contextlib import contextmanager
from pathlib import Path

from . import engine, ingest, scaling, synth
from .bench import BenchScenario, bench_csv, median_of, run_bench
from .raster import GridError

log = logging.getLogger("cityagg")


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected an integer >= 1, got {text}")
    return value


@contextmanager
def _outputs():
    """Track written files; remove them all if the command fails."""
    written: list[Path] = []
    try:
        yield written
    except BaseException:
        for p in written:
            Path(p).unlink(missing_ok=True)
        raise


def _write(written: list, path, text: str) -> None:
    path = Path(path)
    written.append(path)
    path.write_text(text, encoding="utf-8", newline="")


def _emit(args, summary: dict, text: str) -> None:
    if args.json:
        print(json.dumps(summary, sort_keys=True))
    else:
        print(text)


# --------------------------------------------------------------------------


def cmd_ingest(args) -> int:
    with _outputs() as written:
        if args.format == "geojson-boundaries":
            boundaries = ingest.parse_boundary_geojson(Path(args.input).read_text(encoding="utf-8"))
            written.append(Path(args.out))
            ingest.write_boundaries(args.out, boundaries)
            summary = {"boundaries": len(boundaries)}
        elif args.format == "ascii-grid":
            if not args.spec_out:
                raise UsageError("--spec-out is required for ascii-grid")
            with open(args.input, encoding="utf-8") as fh:
                spec, records = ingest.read_ascii_grid(fh)
            n_read = len(records)
            if args.drop_zeros:
                records = ingest.sparsify(records)
            table = ingest.CellTable.from_records(spec, records)
            written += [Path(args.out), Path(args.spec_out)]
            ingest.write_cells(args.out, table, args.spec_out)
            summary = {"cells_read": n_read, "cells_written": len(table)}
            if args.points_out:
                written.append(Path(args.points_out))
                ingest.write_points(args.points_out, ingest.cell_table_to_points(table))
                summary["points_written"] = len(table)
        elif args.format == "edge-csv":
            edges = ingest.read_edges(args.input)
            points, skipped = ingest.edges_to_points(edges)
            written.append(Path(args.out))
            ingest.write_points(args.out, ingest.PointTable.from_records(points))
            summary = {"edges": len(edges), "points_written": len(points), "skipped": skipped}
        elif args.format == "point-csv":
            table = ingest.read_points(args.input)
            written.append(Path(args.out))
            ingest.write_points(args.out, table)
            summary = {"points_written": len(table)}
        else:  # gdp-csv
            gdp = ingest.read_gdp(args.input)
            written.append(Path(args.out))
            ingest.write_gdp(args.out, gdp)
            summary = {"countries": len(gdp)}
    summary["format"] = args.format
    _emit(args, summary, " ".join(f"{k}={v}" for k, v in sorted(summary.items())))
    return 0


def _read_cell_sets(path, spec) -> engine.RasterizedBoundaries:
    sets: dict[str, list[tuple[int, int]]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        if next(reader, None) != ["city_id", "row", "col"]:
            raise ingest.ParseError(f"{path}: expected header city_id,row,col")
        for lineno, row in enumerate(reader, 2):
            if not row:
                continue
            try:
                cid, r, c = row
                cells = sets.setdefault(cid, [])
                if r != "":
                    cells.append((int(r), int(c)))
            except ValueError:
                raise ingest.ParseError(f"{path}:{lineno}: bad cell-set row {row!r}") from None
    return engine.RasterizedBoundaries.from_sets(spec, sets)


def _cell_sets_csv(rb: engine.RasterizedBoundaries) -> str:
    lines = ["city_id,row,col"]
    ncols = rb.spec.ncols
    for cid, keys in zip(rb.city_ids, rb.keys):
        if keys.size == 0:
            lines.append(f"{cid},,")
        lines.extend(f"{cid},{k // ncols},{k % ncols}" for k in keys.tolist())
    return "\n".join(lines) + "\n"


def cmd_rasterize(args) -> int:
    spec = ingest.read_grid_spec(args.grid)
    rb = engine.rasterize_catalog(ingest.read_boundaries(args.boundaries), spec)
    with _outputs() as written:
        _write(written, args.out, _cell_sets_csv(rb))
    n_cells = sum(k.size for k in rb.keys)
    _emit(args, {"cities": len(rb.city_ids), "cells": n_cells},
          f"cities={len(rb.city_ids)} cells={n_cells}")
    return 0


def cmd_query(args) -> int:
    plan = engine.QueryPlan(mode=args.mode, aggregate=args.agg, partitions=args.partitions,
                            workers=args.workers, prefilter=not args.no_prefilter)
    if args.mode == "vector":
        if not (args.points and args.boundaries):
            raise UsageError("vector mode needs --points and --boundaries")
        results, stats = engine.vector_polygon_query(
            ingest.read_points(args.points), ingest.read_boundaries(args.boundaries), plan)
    else:
        if not (args.cells and args.grid):
            raise UsageError("raster mode needs --cells and --grid")
        spec = ingest.read_grid_spec(args.grid)
        cells = ingest.read_cells(args.cells, spec)
        if args.cell_sets:
            sets_spec = ingest.read_grid_spec(args.cell_sets_grid) if args.cell_sets_grid else spec
            rasterized = _read_cell_sets(args.cell_sets, sets_spec)
        elif args.boundaries:
            rasterized = engine.rasterize_catalog(ingest.read_boundaries(args.boundaries), spec)
        else:
            raise UsageError("raster mode needs --boundaries or --cell-sets")
        results, stats = engine.raster_polygon_query(cells, rasterized, plan)
    with _outputs() as written:
        _write(written, args.out, engine.aggregates_csv(results))
        if args.stats_out:
            _write(written, args.stats_out, engine.stats_json(stats))
    empty = sum(1 for a in results.values() if a.empty)
    summary = {"cities": len(results), "empty": empty, "aggregate": args.agg, **stats.to_dict()}
    _emit(args, summary, f"mode={args.mode} cities={len(results)} empty={empty} "
                         f"rows_scanned={stats.rows_scanned} rows_matched={stats.rows_matched} "
                         f"wall={stats.wall_seconds:.3f}s")
    return 0


def cmd_join(args) -> int:
    """Join a property aggregate with the city catalog into the fit input table."""
    cities = ingest.read_cities(args.cities)
    prop = engine.read_aggregates_csv(args.aggregates)
    pop = engine.read_aggregates_csv(args.population) if args.population else None
    gdp = ingest.read_gdp(args.gdp) if args.gdp else {}
    lines = ["city_id,population,property,country,gdp_per_capita"]
    missing = 0
    for c in cities:
        if c.id not in prop:
            missing += 1
            continue
        population = pop[c.id].sum if pop is not None and c.id in pop else c.population
        g = c.gdp_per_capita if c.gdp_per_capita is not None else gdp.get(c.country or "")
        lines.append(",".join([
            c.id,
            "" if population is None else ingest.fmt_float(population),
            ingest.fmt_float(prop[c.id].value(args.agg)),
            c.country or "",
            "" if g is None else ingest.fmt_float(g),
        ]))
    with _outputs() as written:
        _write(written, args.out, "\n".join(lines) + "\n")
    _emit(args, {"rows": len(lines) - 1, "missing": missing},
          f"rows={len(lines) - 1} missing={missing}")
    return 0


def _read_joined(path):
    points, catalog = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        need = {"city_id", "population", "property", "country"}
        if not reader.fieldnames or not need <= set(reader.fieldnames):
            raise ingest.ParseError(f"{path}: need columns {sorted(need)}")
        for lineno, row in enumerate(reader, 2):
            try:
                n = float(row["population"]) if row["population"] else 0.0
                y = float(row["property"]) if row["property"] else 0.0
                g = row.get("gdp_per_capita") or ""
                gdp = float(g) if g else None
            except ValueError:
                raise ingest.ParseError(f"{path}:{lineno}: non-numeric value") from None
            points.append(scaling.ScalingPoint(row["city_id"], n, y))
            catalog.append(ingest.CityMeta(row["city_id"], "", row["country"] or None, n, gdp))
    return points, catalog


def cmd_fit(args) -> int:
    points, catalog = _read_joined(args.input)
    gdp = ingest.read_gdp(args.gdp) if args.gdp else None
    n_removed = 0
    if args.country:
        points = scaling.filter_by_country(points, catalog, args.country)
    if args.min_gdp is not None:
        points, removed = scaling.filter_by_gdp(points, catalog, args.min_gdp, gdp)
        n_removed = len(removed)
    fit = scaling.fit_power_law(points)
    with _outputs() as written:
        _write(written, args.out, fit.to_json())
        if args.scatter_out:
            _write(written, args.scatter_out, scaling.scatter_csv(points, fit))
    summary = {**fit.to_dict(), "n_removed_by_gdp": n_removed}
    _emit(args, summary, f"beta={fit.beta:.4f} CI=[{fit.ci_low:.4f}, {fit.ci_high:.4f}] "
                         f"r2={fit.r2:.4f} n={fit.n_obs} regime={fit.regime}")
    return 0


def cmd_rank(args) -> int:
    points, catalog = _read_joined(args.input)
    values = scaling.per_capita(p for p in points if p.y_value > 0)
    ranked = scaling.bottom_k(values, args.k)
    country = {c.id: c.country or "" for c in catalog}
    hist = scaling.country_histogram((cid, country[cid]) for cid, _ in ranked)
    with _outputs() as written:
        _write(written, args.out, "rank,city_id,country,per_capita\n" + "".join(
            f"{i},{cid},{country[cid]},{ingest.fmt_float(v)}\n"
            for i, (cid, v) in enumerate(ranked, 1)))
        if args.histogram_out:
            _write(written, args.histogram_out,
                   "country,count\n" + "".join(f"{c},{n}\n" for c, n in hist))
    _emit(args, {"ranked": len(ranked), "countries": len(hist)},
          f"ranked={len(ranked)} countries={len(hist)}")
    return 0


def cmd_synth(args) -> int:
    if args.preset == "two-cohort":
        config = synth.two_cohort_config(args.cities, seed=args.seed, noise_sigma=args.sigma,
                                         developed_beta=args.beta, y0=args.y0)
    else:
        config = synth.SyntheticConfig(n_cities=args.cities, beta_true=args.beta, y0=args.y0,
                                       noise_sigma=args.sigma, seed=args.seed)
    world = synth.generate_synthetic_world(config)
    out = Path(args.out)
    created = not out.exists()
    try:
        paths = synth.write_world(world, out)
    except BaseException:
        if created:
            shutil.rmtree(out, ignore_errors=True)
        raise
    summary = {"cities": len(world.boundaries), "points": len(world.points),
               "cells": len(world.cells), "out": str(out), "beta": config.beta_true}
    _emit(args, summary, f"cities={len(world.boundaries)} cells={len(world.cells)} "
                         f"files={len(paths)} out={out}")
    return 0


def cmd_bench(args) -> int:
    sc = BenchScenario(points=args.points, grid_side=args.grid_side, boundaries=args.boundaries,
                       vertices=args.vertices, repetitions=args.repetitions,
                       partitions=args.partitions, workers=args.workers, seed=args.seed)
    rows = run_bench(sc)
    text = bench_csv(rows)
    if args.out:
        with _outputs() as written:
            _write(written, args.out, text)
    vec, ras = median_of(rows, "vector"), median_of(rows, "raster")
    summary = {"vector_median_wall": vec, "raster_median_wall": ras,
               "speedup": vec / ras if ras > 0 else None, "repetitions": sc.repetitions}
    if args.json:
        print(json.dumps(summary, sort_keys=True))
    else:
        sys.stdout.write(text)
        print(f"median wall: vector={vec:.3f}s raster={ras:.3f}s")
    return 0


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cityagg", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--json", action="store_true", help="single JSON summary line on stdout")
        p.set_defaults(func=func)
        return p

    p = add("ingest", cmd_ingest, "convert external data into canonical tables")
    p.add_argument("--format", required=True, choices=["geojson-boundaries", "ascii-grid",
                                                       "point-csv", "edge-csv", "gdp-csv"])
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--spec-out")
    p.add_argument("--points-out", help="ascii-grid only: also write cell centres as points")
    p.add_argument("--drop-zeros", action="store_true")

    p = add("rasterize", cmd_rasterize, "turn boundaries into per-city cell sets")
    p.add_argument("--boundaries", required=True)
    p.add_argument("--grid", required=True)
    p.add_argument("--out", required=True)

    p = add("query", cmd_query, "per-city aggregation (vector or raster path)")
    p.add_argument("--mode", required=True, choices=engine.MODES)
    p.add_argument("--agg", default="sum", choices=engine.AGGREGATES)
    p.add_argument("--workers", type=_positive_int, default=1)
    p.add_argument("--partitions", type=_positive_int, default=1)
    p.add_argument("--boundaries")
    p.add_argument("--points")
    p.add_argument("--cells")
    p.add_argument("--grid")
    p.add_argument("--cell-sets")
    p.add_argument("--cell-sets-grid")
    p.add_argument("--no-prefilter", action="store_true")
    p.add_argument("--out", required=True)
    p.add_argument("--stats-out")

    p = add("join", cmd_join, "join aggregates with the city catalog")
    p.add_argument("--aggregates", required=True)
    p.add_argument("--cities", required=True)
    p.add_argument("--population", help="aggregate table whose sums replace catalog populations")
    p.add_argument("--gdp")
    p.add_argument("--agg", default="sum", choices=engine.AGGREGATES)
    p.add_argument("--out", required=True)

    p = add("fit", cmd_fit, "fit Y = Y0 N^beta")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--min-gdp", type=float)
    p.add_argument("--country")
    p.add_argument("--gdp")
    p.add_argument("--out", required=True)
    p.add_argument("--scatter-out")

    p = add("rank", cmd_rank, "cities with the lowest per-capita property")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--k", type=_positive_int, default=10)
    p.add_argument("--out", required=True)
    p.add_argument("--histogram-out")

    p = add("synth", cmd_synth, "generate a seeded synthetic world")
    p.add_argument("--cities", type=int, required=True)
    p.add_argument("--beta", type=float, default=0.85)
    p.add_argument("--sigma", type=float, default=0.1)
    p.add_argument("--y0", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--preset", choices=["single", "two-cohort"], default="single")
    p.add_argument("--out", required=True)

    p = add("bench", cmd_bench, "time vector vs raster on one workload")
    d = BenchScenario()
    p.add_argument("--points", type=_positive_int, default=d.points)
    p.add_argument("--grid-side", type=_positive_int, default=d.grid_side)
    p.add_argument("--boundaries", type=_positive_int, default=d.boundaries)
    p.add_argument("--vertices", type=_positive_int, default=d.vertices)
    p.add_argument("--repetitions", type=_positive_int, default=d.repetitions)
    p.add_argument("--workers", type=_positive_int, default=d.workers)
    p.add_argument("--partitions", type=_positive_int, default=d.partitions)
    p.add_argument("--seed", type=int, default=d.seed)
    p.add_argument("--out")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (AssertionError, RuntimeError) as exc:
        print(f"cityagg: internal error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, GridError) as exc:
        print(f"cityagg: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
