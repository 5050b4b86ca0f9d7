"""End-to-end tests of the pipeline stages, artifacts, and command line."""

from __future__ import annotations

import csv
import json

import pytest

from fixtures import write_feed
from skyhop.cli import main, run
from skyhop.errors import ConfigError
from skyhop.geo import BoundingBox, GeoPoint
from skyhop.network import DroneSpec
from skyhop.pipeline import (
    BENCH_COLUMNS,
    CACHE_NAME,
    STATS_COLUMNS,
    preprocess,
    run_allocate,
    run_bench,
    run_preprocess,
    run_route,
    run_simulate,
)
from skyhop.scenario import ScenarioConfig
from skyhop.surrogate import DirectFlightSurrogate, SurrogateTable


def hms(sec: int) -> str:
    return f"{sec // 3600:02d}:{sec % 3600 // 60:02d}:{sec % 60:02d}"


@pytest.fixture(scope="module")
def feed_dir(tmp_path_factory):
    """A small east/west corridor feed inside the test bounding box."""
    lons = [-122.448 + 0.009 * s for s in range(6)]
    stops = [(f"e{s}", 37.765, lons[s]) for s in range(6)]
    stops += [(f"w{s}", 37.767, lons[5 - s]) for s in range(6)]
    trips, rows = [], []
    for r in range(4):
        start = 28800 + 240 * r
        trips.append(f"east{r}")
        rows += [(f"east{r}", hms(start + 120 * s), f"e{s}", s + 1) for s in range(6)]
        trips.append(f"west{r}")
        rows += [(f"west{r}", hms(start + 60 + 120 * s), f"w{s}", s + 1) for s in range(6)]
    return write_feed(tmp_path_factory.mktemp("gtfs"), stops, trips, rows)


def make_config(feed_dir, **overrides):
    base = dict(
        gtfs_dir=str(feed_dir),
        bbox=BoundingBox(GeoPoint(37.758, -122.449), GeoPoint(37.772, -122.402)),
        window=(28800.0, 32400.0),
        num_depots=2,
        num_packages=3,
        num_agents=2,
        seed=3,
        drone=DroneSpec(25.0, 16.0),
        capacity_choices=(2,),
        w=1.1,
        surrogate="direct_flight",
        strategy="replan1",
        timeout_s=60.0,
        sites=4,
    )
    base.update(overrides)
    return ScenarioConfig(**base)


def test_preprocess_direct_flight_mode(feed_dir, tmp_path):
    pre = preprocess(make_config(feed_dir), tmp_path)
    assert pre.cache == "direct"
    assert isinstance(pre.surrogate, DirectFlightSurrogate)
    assert len(pre.trips) == 8
    assert pre.capacities  # seeded per-edge capacities exist
    assert not (tmp_path / CACHE_NAME).exists()


def test_preprocess_builds_then_reuses_cache(feed_dir, tmp_path):
    cfg = make_config(feed_dir, surrogate="preprocessed")
    first = preprocess(cfg, tmp_path)
    assert first.cache == "built"
    assert isinstance(first.surrogate, SurrogateTable)
    assert (tmp_path / CACHE_NAME).exists()

    second = preprocess(cfg, tmp_path)
    assert second.cache == "loaded"
    assert second.surrogate.seconds.tolist() == first.surrogate.seconds.tolist()

    rebuilt = preprocess(make_config(feed_dir, surrogate="preprocessed", sites=5), tmp_path)
    assert rebuilt.cache == "built"  # key changed with the knobs
    assert len(rebuilt.surrogate.sites) == 5


def test_run_preprocess_summary(feed_dir, tmp_path):
    summary = run_preprocess(make_config(feed_dir), tmp_path)
    assert summary == {"trips": 8, "surrogate": "direct_flight", "cache": "direct", "sites": 0}
    cfg = make_config(feed_dir, surrogate="preprocessed")
    summary = run_preprocess(cfg, tmp_path)
    assert summary["cache"] == "built" and summary["sites"] == 4
    assert summary["file"] == str(tmp_path / CACHE_NAME)


def test_run_allocate_artifacts(feed_dir, tmp_path):
    cfg = make_config(feed_dir)
    summary = run_allocate(cfg, tmp_path)
    assert summary["agents"] == 2 and summary["packages"] == 3
    assert summary["makespan_s"] > 0.0
    assert (tmp_path / "scenario.json").exists()

    alloc = json.loads((tmp_path / "allocation.json").read_text())
    assert len(alloc["paths"]) == 2
    served = [s[1] for path in alloc["paths"] for s in path["stops"] if s[0] == "p"]
    assert sorted(served) == [0, 1, 2]
    for path in alloc["paths"]:
        assert path["stops"][0][0] == "d" and path["stops"][-1][0] == "d"
        assert path["length_s"] >= 0.0
        assert path["packages"] == sum(1 for s in path["stops"] if s[0] == "p")

    report = json.loads((tmp_path / "bound_report.json").read_text())
    assert report["makespan_s"] == summary["makespan_s"]
    assert report["guarantee_slack_s"] == pytest.approx(report["alpha_s"] + report["beta_s"])
    assert report["num_tours"] >= 1
    assert isinstance(report["premise_holds"], bool)


def test_run_route_writes_routes_and_stats(feed_dir, tmp_path):
    cfg = make_config(feed_dir)
    summary = run_route(cfg, tmp_path)
    assert summary["makespan_s"] > 0.0

    geo = json.loads((tmp_path / "routes.geojson").read_text())
    assert geo["type"] == "FeatureCollection"
    assert geo["features"]
    for feat in geo["features"]:
        assert feat["type"] == "Feature"
        assert feat["geometry"]["type"] == "LineString"
        coords = feat["geometry"]["coordinates"]
        assert len(coords) == 2 and all(len(c) == 2 for c in coords)
        props = feat["properties"]
        base_keys = {"agent", "leg_kind", "t_start", "t_end", "dist_km"}
        if props["leg_kind"] == "ride":
            assert set(props) == base_keys | {"trip_id"}
        else:
            assert set(props) == base_keys
        assert props["t_end"] >= props["t_start"]

    with open(tmp_path / "stats.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == list(STATS_COLUMNS)
    assert len(rows) == 2
    record = dict(zip(rows[0], rows[1]))
    assert float(record["makespan_s"]) == summary["makespan_s"]
    assert record["agents"] == "2" and record["packages"] == "3"
    assert record["events"] == "0"  # the route stage stops after mission one


def test_run_simulate_is_reproducible(feed_dir, tmp_path):
    cfg = make_config(feed_dir)
    a, b = tmp_path / "a", tmp_path / "b"
    s1 = run_simulate(cfg, a)
    s2 = run_simulate(cfg, b)
    assert s1["makespan_s"] == s2["makespan_s"]
    assert s1["events"] == s2["events"] >= 3  # one event per mission
    for name in ("routes.geojson", "stats.csv", "scenario.json", "allocation.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()

    lines = [json.loads(l) for l in (a / "execution_log.jsonl").read_text().splitlines()]
    kinds = [l["type"] for l in lines]
    assert kinds[0] == "event" and kinds[-1] == "summary"
    events = [l for l in lines if l["type"] == "event"]
    assert events[0]["event"] == "initial"
    missions = [l for l in lines if l["type"] == "mission"]
    assert len(missions) == s1["events"]
    summary = lines[-1]
    assert summary["makespan"] == s1["makespan_s"]
    assert summary["conflicts_resolved"] == s1["conflicts_resolved"]


def test_run_simulate_stats_row_matches_execution(feed_dir, tmp_path):
    cfg = make_config(feed_dir)
    summary = run_simulate(cfg, tmp_path)
    with open(tmp_path / "stats.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    record = dict(zip(rows[0], rows[1]))
    assert float(record["makespan_s"]) == summary["makespan_s"]
    assert int(record["events"]) == summary["events"]
    assert float(record["avg_range_ext"]) > 0.0
    assert float(record["max_transit_used"]) >= float(record["avg_transit_used"])


def test_bench_matrix_with_pairing_and_failures(feed_dir, tmp_path):
    base = make_config(feed_dir).to_dict()
    spec = {
        "base": base,
        "trials": 2,
        "cells": [
            {"name": "solo", "strategy": "replan1"},
            {"name": "fleet", "strategy": "replanm"},
            {"name": "broken", "drone": {"speed_kmh": 25.0, "max_flight_km": 0.8}},
        ],
        "discard_timeouts": True,
    }
    summary = run_bench(spec, tmp_path)
    assert summary["cells"] == 3 and summary["trials"] == 2
    assert summary["completed"] == 4  # both strategy cells, every trial
    assert summary["errors"] == 2    # the broken cell fails every trial

    with open(tmp_path / "bench.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == list(BENCH_COLUMNS)
    table = {r[0]: dict(zip(rows[0], r)) for r in rows[1:]}
    assert set(table) == {"solo", "fleet", "broken"}
    assert table["solo"]["status"] == "ok"
    assert table["broken"]["status"] == "failed"
    assert table["broken"]["errors"] == "2"
    assert table["broken"]["makespan_mean"] == ""
    delta_solo = float(table["solo"]["makespan_delta_vs_pair"])
    delta_fleet = float(table["fleet"]["makespan_delta_vs_pair"])
    assert delta_solo == pytest.approx(-delta_fleet)
    assert delta_solo >= -1e-9  # the fleet strategy never finishes later

    trials = json.loads((tmp_path / "bench_trials.json").read_text())
    assert [t["name"] for t in trials] == ["solo", "fleet", "broken"]
    assert all(len(t["trials"]) == 2 for t in trials)
    broken = trials[2]["trials"]
    assert all(t["status"] == "error" and "Infeasible" in t["error"] for t in broken)


def test_bench_rejects_bad_specs(tmp_path):
    with pytest.raises(ConfigError, match="at least one trial"):
        run_bench({"base": {}, "trials": 0}, tmp_path)
    with pytest.raises(ConfigError, match="cells"):
        run_bench({"base": {}, "cells": 5}, tmp_path)
    with pytest.raises(ConfigError, match="bad scenario config"):
        run_bench({"base": {"gtfs_dir": "x"}, "cells": [{}]}, tmp_path)


def _write_config(path, cfg):
    path.write_text(json.dumps(cfg.to_dict()))
    return str(path)


def test_cli_simulate_prints_summary(feed_dir, tmp_path, capsys):
    cfg_path = _write_config(tmp_path / "config.json", make_config(feed_dir))
    code = run(["simulate", "--config", cfg_path, "--out", str(tmp_path / "out")])
    assert code == 0
    out = capsys.readouterr().out
    keys = [line.split("=")[0] for line in out.strip().splitlines()]
    assert keys == sorted(keys)
    assert "makespan_s" in keys and "events" in keys


def test_cli_exit_codes(feed_dir, tmp_path, capsys):
    ok = _write_config(tmp_path / "ok.json", make_config(feed_dir))
    with pytest.raises(SystemExit) as exc:
        main(["preprocess", "--config", ok, "--out", str(tmp_path / "o0")])
    assert exc.value.code == 0

    unreachable = _write_config(
        tmp_path / "infeasible.json", make_config(feed_dir, drone=DroneSpec(25.0, 0.8))
    )
    with pytest.raises(SystemExit) as exc:
        main(["allocate", "--config", unreachable, "--out", str(tmp_path / "o2")])
    assert exc.value.code == 2
    assert capsys.readouterr().err.startswith("error:")

    hurried = _write_config(
        tmp_path / "hurried.json", make_config(feed_dir, timeout_s=1e-9)
    )
    with pytest.raises(SystemExit) as exc:
        main(["route", "--config", hurried, "--out", str(tmp_path / "o3")])
    assert exc.value.code == 3

    with pytest.raises(SystemExit) as exc:
        main(["simulate", "--config", str(tmp_path / "absent.json"), "--out", str(tmp_path / "o4")])
    assert exc.value.code == 4
    assert "error:" in capsys.readouterr().err
