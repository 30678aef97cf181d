import json
from pathlib import Path

import pytest

from cityagg.cli import main

DATA = Path(__file__).parent / "data"


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def fixture_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("world")
    assert run("synth", "--cities", 30, "--seed", 7, "--out", out) == 0
    return out


def query(world, out, mode, *extra):
    args = ["query", "--mode", mode, "--boundaries", world / "boundaries.jsonl", "--out", out]
    if mode == "vector":
        args += ["--points", world / "points.csv"]
    else:
        args += ["--cells", world / "cells.csv", "--grid", world / "grid.json"]
    return run(*args, *extra)


def read_rows(path):
    lines = Path(path).read_text().splitlines()[1:]
    return {l.split(",")[0]: l.split(",") for l in lines}


class TestQuery:
    def test_vector_matches_golden(self, fixture_dir, tmp_path):
        assert query(fixture_dir, tmp_path / "a.csv", "vector", "--stats-out", tmp_path / "s.json") == 0
        assert (tmp_path / "a.csv").read_bytes() == (DATA / "golden_vector.csv").read_bytes()
        stats = json.loads((tmp_path / "s.json").read_text())
        assert set(stats) == {"wall_seconds", "busy_core_seconds", "rows_scanned", "rows_matched",
                              "partitions", "workers", "mode"}

    def test_raster_agrees_with_vector(self, fixture_dir, tmp_path):
        assert query(fixture_dir, tmp_path / "v.csv", "vector") == 0
        assert query(fixture_dir, tmp_path / "r.csv", "raster") == 0
        v, r = read_rows(tmp_path / "v.csv"), read_rows(tmp_path / "r.csv")
        assert v.keys() == r.keys()
        for cid in v:
            assert v[cid][2] == r[cid][2]
            assert float(v[cid][1]) == pytest.approx(float(r[cid][1]), rel=1e-9)

    def test_workers_do_not_change_output(self, fixture_dir, tmp_path):
        for w in (1, 8):
            assert query(fixture_dir, tmp_path / f"w{w}.csv", "vector",
                         "--workers", w, "--partitions", 4) == 0
        assert (tmp_path / "w1.csv").read_bytes() == (tmp_path / "w8.csv").read_bytes()

    def test_cell_sets_file_and_grid_mismatch(self, fixture_dir, tmp_path):
        assert run("rasterize", "--boundaries", fixture_dir / "boundaries.jsonl",
                   "--grid", fixture_dir / "grid.json", "--out", tmp_path / "sets.csv") == 0
        base = ["query", "--mode", "raster", "--cells", fixture_dir / "cells.csv",
                "--grid", fixture_dir / "grid.json", "--cell-sets", tmp_path / "sets.csv"]
        assert run(*base, "--out", tmp_path / "a.csv") == 0
        assert query(fixture_dir, tmp_path / "b.csv", "raster") == 0
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

        other = json.loads((fixture_dir / "grid.json").read_text())
        other["cell_size"] /= 2
        other["nrows"] *= 2
        other["ncols"] *= 2
        (tmp_path / "other.json").write_text(json.dumps(other))
        code = run(*base, "--cell-sets-grid", tmp_path / "other.json", "--out", tmp_path / "c.csv")
        assert code == 1
        assert not (tmp_path / "c.csv").exists()

    def test_missing_input(self, tmp_path, capsys):
        assert run("query", "--mode", "vector", "--points", tmp_path / "nope.csv",
                   "--boundaries", tmp_path / "nope.jsonl", "--out", tmp_path / "o.csv") == 1
        assert "error" in capsys.readouterr().err

    def test_json_summary(self, fixture_dir, tmp_path, capsys):
        assert query(fixture_dir, tmp_path / "a.csv", "raster", "--json") == 0
        line = capsys.readouterr().out.strip()
        assert json.loads(line)["mode"] == "raster"


class TestIngest:
    def test_ascii_grid(self, tmp_path, capsys):
        (tmp_path / "g.asc").write_text("ncols 3\nnrows 2\nxllcorner 0\nyllcorner 0\n"
                                        "cellsize 1\nNODATA_value -9999\n0 2 -9999\n3 0 4\n")
        assert run("ingest", "--format", "ascii-grid", "--in", tmp_path / "g.asc",
                   "--out", tmp_path / "cells.csv", "--spec-out", tmp_path / "spec.json",
                   "--drop-zeros", "--json") == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["cells_read"] == 5 and summary["cells_written"] == 3
        assert (tmp_path / "cells.csv").read_text() == "row,col,value\n0,1,2.0\n1,0,3.0\n1,2,4.0\n"
        assert json.loads((tmp_path / "spec.json").read_text())["nrows"] == 2

    def test_edge_csv(self, tmp_path, capsys):
        (tmp_path / "e.csv").write_text("way_id,start_lat,start_lon,end_lat,end_lon\n"
                                        "1,0,0,0,1\n2,0,179.9,0,-179.9\n")
        assert run("ingest", "--format", "edge-csv", "--in", tmp_path / "e.csv",
                   "--out", tmp_path / "p.csv") == 0
        assert "skipped=1" in capsys.readouterr().out
        lines = (tmp_path / "p.csv").read_text().splitlines()
        assert lines[0] == "lat,lon,value" and len(lines) == 2
        assert lines[1].startswith("0,0.5,111194.92")

    def test_geojson(self, tmp_path):
        (tmp_path / "b.geojson").write_text(json.dumps({"type": "FeatureCollection", "features": [
            {"type": "Feature", "properties": {"id": "a", "name": "A"},
             "geometry": {"type": "Polygon", "coordinates": [[[0, 0], [1, 0], [1, 1], [0, 0]]]}}]}))
        assert run("ingest", "--format", "geojson-boundaries", "--in", tmp_path / "b.geojson",
                   "--out", tmp_path / "b.jsonl") == 0
        assert json.loads((tmp_path / "b.jsonl").read_text())["rings"] == [[[0, 0], [0, 1], [1, 1]]]

    def test_unknown_format(self, tmp_path, capsys):
        with pytest.raises(SystemExit) as exc:
            run("ingest", "--format", "tiff", "--in", "x", "--out", "y")
        assert exc.value.code == 1
        assert "usage" in capsys.readouterr().err

    def test_parse_failure_removes_partial_outputs(self, tmp_path):
        (tmp_path / "g.asc").write_text("ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\n"
                                        "cellsize 1\n1 2\n3 4\n5 6\n")
        code = run("ingest", "--format", "ascii-grid", "--in", tmp_path / "g.asc",
                   "--out", tmp_path / "c.csv", "--spec-out", tmp_path / "s.json")
        assert code == 1
        assert not (tmp_path / "c.csv").exists() and not (tmp_path / "s.json").exists()


@pytest.fixture(scope="module")
def joined(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("fit")
    assert run("synth", "--cities", 400, "--preset", "two-cohort", "--beta", 0.83,
               "--seed", 2, "--out", tmp / "w") == 0
    w = tmp / "w"
    assert run("query", "--mode", "raster", "--boundaries", w / "boundaries.jsonl",
               "--cells", w / "cells.csv", "--grid", w / "grid.json", "--out", tmp / "agg.csv") == 0
    assert run("join", "--aggregates", tmp / "agg.csv", "--cities", w / "cities.csv",
               "--out", tmp / "joined.csv") == 0
    return tmp / "joined.csv"


class TestFitAndRank:
    def test_fit_and_min_gdp(self, joined, tmp_path):
        assert run("fit", "--in", joined, "--out", tmp_path / "all.json",
                   "--scatter-out", tmp_path / "sc.csv") == 0
        assert run("fit", "--in", joined, "--min-gdp", 3000, "--out", tmp_path / "dev.json") == 0
        pooled = json.loads((tmp_path / "all.json").read_text())
        dev = json.loads((tmp_path / "dev.json").read_text())
        assert abs(dev["beta"] - 0.83) < abs(pooled["beta"] - 0.83)
        assert dev["r2"] > pooled["r2"]
        assert (tmp_path / "sc.csv").read_text().startswith("city_id,ln_n,ln_y,fitted_ln_y\n")

    def test_country_filter(self, joined, tmp_path):
        assert run("fit", "--in", joined, "--country", "DA", "--out", tmp_path / "f.json") == 0
        assert run("fit", "--in", joined, "--country", "NOPE", "--out", tmp_path / "g.json") == 1
        assert not (tmp_path / "g.json").exists()

    def test_too_few_cities(self, joined, tmp_path):
        lines = joined.read_text().splitlines()[:3]
        (tmp_path / "few.csv").write_text("\n".join(lines) + "\n")
        assert run("fit", "--in", tmp_path / "few.csv", "--out", tmp_path / "f.json") == 1
        assert not (tmp_path / "f.json").exists()

    def test_rank(self, joined, tmp_path):
        assert run("rank", "--in", joined, "--k", 10, "--out", tmp_path / "r.csv",
                   "--histogram-out", tmp_path / "h.csv") == 0
        rows = (tmp_path / "r.csv").read_text().splitlines()
        assert len(rows) == 11
        vals = [float(r.split(",")[3]) for r in rows[1:]]
        assert vals == sorted(vals)
        hist = (tmp_path / "h.csv").read_text().splitlines()[1:]
        assert sum(int(h.split(",")[1]) for h in hist) == 10
        # the low per-capita tail is the underdeveloped cohort
        assert all(h.startswith("U") for h in hist)

    def test_noiseless_fit(self, tmp_path):
        assert run("synth", "--cities", 50, "--sigma", 0, "--seed", 1, "--out", tmp_path / "w") == 0
        w = tmp_path / "w"
        assert run("query", "--mode", "raster", "--boundaries", w / "boundaries.jsonl",
                   "--cells", w / "cells.csv", "--grid", w / "grid.json", "--out", tmp_path / "a.csv") == 0
        assert run("join", "--aggregates", tmp_path / "a.csv", "--cities", w / "cities.csv",
                   "--out", tmp_path / "j.csv") == 0
        assert run("fit", "--in", tmp_path / "j.csv", "--out", tmp_path / "f.json") == 0
        assert json.loads((tmp_path / "f.json").read_text())["r2"] == pytest.approx(1, abs=1e-12)


class TestSynth:
    def test_same_seed_same_bytes(self, tmp_path):
        for d in ("a", "b"):
            assert run("synth", "--cities", 20, "--seed", 9, "--out", tmp_path / d) == 0
        for f in (tmp_path / "a").iterdir():
            assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()

    def test_ledger_beta(self, tmp_path):
        assert run("synth", "--cities", 20, "--beta", 0.77, "--out", tmp_path / "w") == 0
        assert json.loads((tmp_path / "w" / "ledger.json").read_text())["beta_true"] == 0.77

    def test_invalid(self, tmp_path):
        assert run("synth", "--cities", 1, "--out", tmp_path / "w") == 1


class TestBench:
    def test_small_scenario(self, tmp_path, capsys):
        assert run("bench", "--points", 20000, "--grid-side", 100, "--boundaries", 10,
                   "--vertices", 32, "--repetitions", 3, "--out", tmp_path / "b.csv", "--json") == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["repetitions"] == 3
        rows = (tmp_path / "b.csv").read_text().splitlines()[1:]
        for mode in ("vector", "raster"):
            mine = [r for r in rows if r.startswith(mode + ",")]
            assert len(mine) == 4 and mine[-1].split(",")[1] == "median"


def test_round_trip_recovers_exponent(tmp_path):
    w = tmp_path / "w"
    assert run("synth", "--cities", 200, "--beta", 0.9, "--sigma", 0.05, "--seed", 11, "--out", w) == 0
    assert run("query", "--mode", "vector", "--boundaries", w / "boundaries.jsonl",
               "--points", w / "points.csv", "--workers", 2, "--partitions", 4,
               "--out", tmp_path / "a.csv") == 0
    assert run("join", "--aggregates", tmp_path / "a.csv", "--cities", w / "cities.csv",
               "--out", tmp_path / "j.csv") == 0
    assert run("fit", "--in", tmp_path / "j.csv", "--out", tmp_path / "f.json") == 0
    fit = json.loads((tmp_path / "f.json").read_text())
    assert fit["ci_low"] <= 0.9 <= fit["ci_high"] or abs(fit["beta"] - 0.9) < 0.02
    assert fit["n_obs"] == 200
