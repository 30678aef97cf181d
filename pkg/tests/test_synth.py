import filecmp
import math

import numpy as np
import pytest

from cityagg.engine import raster_polygon_query, rasterize_catalog
from cityagg.geometry import GeoPoint, point_in_boundary
from cityagg.scaling import ScalingPoint, filter_by_gdp, fit_power_law
from cityagg.synth import (SyntheticConfig, generate_synthetic_world, random_star_ring,
                           two_cohort_config, write_world)


def fit_world(world):
    res, _ = raster_polygon_query(world.cells, rasterize_catalog(world.boundaries, world.spec))
    return [ScalingPoint(c.id, c.population, res[c.id].sum) for c in world.cities]


class TestGenerator:
    def test_deterministic_files(self, tmp_path):
        cfg = SyntheticConfig(n_cities=40, seed=5)
        write_world(generate_synthetic_world(cfg), tmp_path / "a")
        write_world(generate_synthetic_world(cfg), tmp_path / "b")
        names = sorted(p.name for p in (tmp_path / "a").iterdir())
        match, mismatch, errors = filecmp.cmpfiles(tmp_path / "a", tmp_path / "b", names, shallow=False)
        assert mismatch == [] and errors == [] and len(match) == 7

    def test_seed_changes_output(self):
        a = generate_synthetic_world(SyntheticConfig(n_cities=10, seed=1))
        b = generate_synthetic_world(SyntheticConfig(n_cities=10, seed=2))
        assert not np.array_equal(a.cells.value, b.cells.value)

    def test_noiseless_recovers_beta(self):
        world = generate_synthetic_world(SyntheticConfig(n_cities=100, beta_true=0.85,
                                                         noise_sigma=0, seed=3))
        fit = fit_power_law(fit_world(world))
        assert abs(fit.beta - 0.85) <= 1e-9

    def test_city_sums_match_ledger(self):
        world = generate_synthetic_world(SyntheticConfig(n_cities=50, seed=4))
        for entry, b in zip(world.ledger["cities"], world.boundaries):
            inside = [v for a, c, v in zip(world.points.lat, world.points.lon, world.points.value)
                      if point_in_boundary(GeoPoint(a, c), b)]
            assert len(inside) == entry["cells"]
            assert math.fsum(inside) == pytest.approx(entry["y_true"], rel=1e-6)

    def test_boundaries_do_not_overlap(self):
        world = generate_synthetic_world(SyntheticConfig(n_cities=30, seed=6))
        boxes = [b.bbox for b in world.boundaries]
        for i, a in enumerate(boxes):
            for b in boxes[i + 1:]:
                assert a[2] < b[0] or b[2] < a[0] or a[3] < b[1] or b[3] < a[1]

    def test_population_range(self):
        world = generate_synthetic_world(SyntheticConfig(n_cities=300, seed=7))
        pops = [c.population for c in world.cities]
        assert 1e3 <= min(pops) and max(pops) <= 1e7

    @pytest.mark.parametrize("kw", [dict(n_cities=1), dict(n_cities=5, y0=0),
                                    dict(n_cities=5, noise_sigma=-1)])
    def test_invalid_config(self, kw):
        with pytest.raises(ValueError):
            SyntheticConfig(**kw)

    def test_ledger_records_truth(self):
        world = generate_synthetic_world(SyntheticConfig(n_cities=5, beta_true=0.91, seed=0))
        assert world.ledger["beta_true"] == 0.91


class TestTwoCohort:
    def test_gdp_filter_moves_toward_developed_exponent(self):
        world = generate_synthetic_world(two_cohort_config(600, seed=8))
        pts = fit_world(world)
        pooled = fit_power_law(pts)
        kept, removed = filter_by_gdp(pts, world.cities, 3000)
        developed = fit_power_law(kept)
        assert abs(developed.beta - 0.83) < abs(pooled.beta - 0.83)
        assert developed.r2 > pooled.r2
        cohorts = {e["id"]: e["cohort"] for e in world.ledger["cities"]}
        assert {cohorts[p.city_id] for p, _ in removed} == {"underdeveloped"}


def test_star_ring_is_simple_and_sized():
    rng = np.random.default_rng(0)
    ring = random_star_ring(rng, 128, (5.0, 5.0), 0.3)
    assert len(ring) == 128
    assert all(abs(v.lat - 5) <= 0.3 + 1e-12 and abs(v.lon - 5) <= 0.3 + 1e-12 for v in ring.vertices)
