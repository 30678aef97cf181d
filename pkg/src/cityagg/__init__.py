"""Partition-parallel per-city aggregation over point and raster data, plus
urban scaling fits on the results."""

from .engine import (CityAggregate, ExecStats, QueryPlan, RasterizedBoundaries, merge_aggregates,
                     raster_polygon_query, rasterize_catalog, run_partitioned, vector_polygon_query)
from .geometry import (GeoPoint, PolygonBoundary, Ring, bbox_of, haversine_length, midpoint,
                       point_in_boundary, point_in_polygon)
from .ingest import CellTable, CityMeta, PointRecord, PointTable
from .raster import CellIndex, CellRecord, GridSpec, cell_of, center_of, dense_raster_query, rasterize_boundary
from .scaling import FitResult, ScalingPoint, classify_regime, fit_power_law

__version__ = "0.1.0"
