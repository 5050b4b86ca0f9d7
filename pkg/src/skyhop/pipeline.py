"""End-to-end orchestration: preprocess, allocate, route, simulate, bench.

Every stage is a pure function of the scenario config plus the GTFS feed
on disk, so later stages re-derive earlier ones and two runs with the
same config produce byte-identical artifacts.  Wall-clock timings never
enter the deterministic outputs (routes.geojson, stats.csv, the
allocation and bound reports); they go to the execution log and the
bench table only.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from statistics import mean, median

import numpy as np

from .allocation import (
    BoundReport,
    DeliveryPath,
    build_allocation_graph,
    merge_split_tours,
)
from .errors import ConfigError, SkyhopError, SolveTimeoutError, ValidationError
from .gtfs import load_timetable
from .heuristics import HeuristicBundle, build_bundle, compute_trip_block
from .mapf import AgentItinerary, MultiAgentSolution, solve_itineraries
from .mcsp import AgentPath
from .network import OperationGraph, TransitTrip, assign_capacities
from .replanner import HorizonResult, missions_from_path, run_horizon
from .scenario import Scenario, ScenarioConfig, generate_scenario, save_scenario
from .surrogate import (
    DirectFlightSurrogate,
    SurrogateTable,
    build_surrogate,
    halton_sites,
    load_tables,
    preprocess_key,
    save_tables,
)

CACHE_NAME = "preprocess.npz"


# -- preprocessing ---------------------------------------------------------


@dataclass
class PreprocessResult:
    trips: list[TransitTrip]
    capacities: dict[tuple[int, int], int]
    trip_block: np.ndarray
    surrogate: SurrogateTable | DirectFlightSurrogate
    cache: str  # "built" | "loaded" | "direct"


def preprocess(config: ScenarioConfig, cache_dir: str | Path | None = None) -> PreprocessResult:
    """Load the timetable and prepare the travel-time surrogate.

    With ``cache_dir`` set, a previously saved table is reused when its
    content key still matches the feed and parameters; a stale table is
    rebuilt and overwritten.
    """
    trips = load_timetable(config.gtfs_dir, config.bbox, config.window)
    caps = assign_capacities(trips, config.capacity_choices, config.seed)

    if config.surrogate == "direct_flight":
        block = compute_trip_block(trips, config.drone.speed_kmh)
        return PreprocessResult(trips, caps, block, DirectFlightSurrogate(config.drone), "direct")

    key = preprocess_key(trips, config.bbox, config.sites, config.drone)
    path = Path(cache_dir) / CACHE_NAME if cache_dir is not None else None
    if path is not None and path.exists():
        try:
            table, cached_block = load_tables(path, key)
            return PreprocessResult(trips, caps, cached_block, table, "loaded")
        except ValidationError:
            pass  # parameters changed since the table was written

    block = compute_trip_block(trips, config.drone.speed_kmh)
    sites = halton_sites(config.sites, config.bbox)
    table = build_surrogate(sites, trips, config.drone, config.w)
    if path is not None:
        save_tables(path, key, table, block)
    return PreprocessResult(trips, caps, block, table, "built")


def make_graph(
    config: ScenarioConfig, pre: PreprocessResult, scenario: Scenario
) -> tuple[OperationGraph, HeuristicBundle]:
    graph = OperationGraph(
        scenario.depots, scenario.packages, pre.trips, config.drone, pre.capacities
    )
    return graph, build_bundle(graph, pre.trip_block)


# -- allocation ------------------------------------------------------------


def allocate(
    config: ScenarioConfig, pre: PreprocessResult, scenario: Scenario
) -> tuple[list[DeliveryPath], BoundReport]:
    """Assign packages to agents as depot-anchored delivery walks."""
    g = build_allocation_graph(scenario.depots, scenario.packages, pre.surrogate, config.drone)
    return merge_split_tours(g, config.num_agents)


# -- one-shot routing ------------------------------------------------------


@dataclass
class RouteResult:
    solution: MultiAgentSolution | None  # None when no agent has a mission
    per_agent: list[list[AgentPath]]     # at most one path per agent here
    walks: list[DeliveryPath]
    report: BoundReport


def route_first_missions(
    config: ScenarioConfig, pre: PreprocessResult, scenario: Scenario
) -> RouteResult:
    """Jointly route every agent's first mission from its walk."""
    walks, report = allocate(config, pre, scenario)
    graph, bundle = make_graph(config, pre, scenario)

    missions = [missions_from_path(p) for p in walks]
    active = [(i, ms[0]) for i, ms in enumerate(missions) if ms]
    per_agent: list[list[AgentPath]] = [[] for _ in walks]
    if not active:
        return RouteResult(None, per_agent, walks, report)

    itins = [
        AgentItinerary(("d", m.start_depot), 0.0, tuple(m.specs(config.drone)))
        for _, m in active
    ]
    sol = solve_itineraries(
        itins, config.w, graph, bundle, timeout_s=config.timeout_s
    )
    for (i, _), p in zip(active, sol.paths):
        p.agent = i
        per_agent[i].append(p)
    return RouteResult(sol, per_agent, walks, report)


# -- artifact writers ------------------------------------------------------


def write_routes_geojson(
    path: str | Path, graph: OperationGraph, per_agent: list[list[AgentPath]]
) -> None:
    """One LineString feature per traversed leg, in agent then time order."""
    features = []
    for agent, paths in enumerate(per_agent):
        for p in paths:
            for leg in p.legs:
                a = graph.loc(leg.frm)
                b = graph.loc(leg.to)
                props = {
                    "agent": agent,
                    "leg_kind": leg.kind,
                    "t_start": leg.t_start,
                    "t_end": leg.t_end,
                    "dist_km": leg.dist_km,
                }
                if leg.trip_id is not None:
                    props["trip_id"] = leg.trip_id
                features.append(
                    {
                        "type": "Feature",
                        "geometry": {
                            "type": "LineString",
                            "coordinates": [[a.lon, a.lat], [b.lon, b.lat]],
                        },
                        "properties": props,
                    }
                )
    payload = {"type": "FeatureCollection", "features": features}
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")


def solution_stats(per_agent: list[list[AgentPath]], max_flight_km: float) -> dict:
    """Fleet usage aggregates over the produced paths."""
    transit = [sum(p.transit_used for p in paths) for paths in per_agent]
    ext = [sum(p.ground_km for p in paths) / max_flight_km for paths in per_agent]
    n = len(per_agent) or 1
    return {
        "avg_transit_used": sum(transit) / n,
        "max_transit_used": max(transit, default=0),
        "avg_range_ext": sum(ext) / n,
        "max_range_ext": max(ext, default=0.0),
    }


STATS_COLUMNS = (
    "makespan_s",
    "avg_transit_used",
    "max_transit_used",
    "avg_range_ext",
    "max_range_ext",
    "conflicts_resolved",
    "events",
    "agents",
    "packages",
)


def write_stats_csv(path: str | Path, row: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(STATS_COLUMNS) + "\n")
        fh.write(",".join(str(row[c]) for c in STATS_COLUMNS) + "\n")


def write_bound_report(path: str | Path, report: BoundReport, num_agents: int) -> None:
    payload = {
        "makespan_s": report.makespan,
        "alpha_s": report.alpha,
        "beta_s": report.beta,
        "guarantee_slack_s": report.guarantee,
        "tour_length_s": report.tour_length,
        "mct_objective_s": report.mct_objective,
        "num_tours": report.num_tours,
        "premise_holds": report.num_tours <= num_agents,
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")


def write_allocation(path: str | Path, walks: list[DeliveryPath]) -> None:
    payload = {
        "paths": [
            {
                "agent": i,
                "stops": [list(v) for v in p.stops],
                "length_s": p.length,
                "packages": len(p.packages),
            }
            for i, p in enumerate(walks)
        ]
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")


def write_execution_log(path: str | Path, result: HorizonResult, wall_s: float) -> None:
    """Replay record: every event, every mission path, one summary line."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for e in result.log:
            fh.write(
                json.dumps(
                    {
                        "type": "event",
                        "t": e.t,
                        "event": e.event,
                        "agent": e.agent,
                        "plan_s": e.plan_s,
                        "makespan": e.makespan,
                        "replanned": e.replanned,
                        "conflicts_resolved": e.conflicts_resolved,
                    },
                    sort_keys=True,
                )
                + "\n"
            )
        for agent, paths in enumerate(result.paths):
            for seq, p in enumerate(paths):
                fh.write(
                    json.dumps(
                        {
                            "type": "mission",
                            "agent": agent,
                            "seq": seq,
                            "depart": p.depart,
                            "arrival": p.arrival,
                            "flight_km": p.flight_km,
                            "ground_km": p.ground_km,
                            "transit_used": p.transit_used,
                        },
                        sort_keys=True,
                    )
                    + "\n"
                )
        fh.write(
            json.dumps(
                {
                    "type": "summary",
                    "makespan": result.makespan,
                    "events": result.events,
                    "conflicts_resolved": result.conflicts_resolved,
                    "wall_s": wall_s,
                },
                sort_keys=True,
            )
            + "\n"
        )


# -- stage runners (what the command line calls) ----------------------------


def _outdir(out_dir: str | Path) -> Path:
    p = Path(out_dir)
    p.mkdir(parents=True, exist_ok=True)
    return p


def run_preprocess(config: ScenarioConfig, out_dir: str | Path) -> dict:
    out = _outdir(out_dir)
    pre = preprocess(config, out)
    summary = {
        "trips": len(pre.trips),
        "surrogate": config.surrogate,
        "cache": pre.cache,
        "sites": config.sites if config.surrogate == "preprocessed" else 0,
    }
    if config.surrogate == "preprocessed":
        summary["file"] = str(out / CACHE_NAME)
    return summary


def run_allocate(config: ScenarioConfig, out_dir: str | Path) -> dict:
    out = _outdir(out_dir)
    pre = preprocess(config, out)
    scenario = generate_scenario(config)
    save_scenario(scenario, out / "scenario.json")
    walks, report = allocate(config, pre, scenario)
    write_allocation(out / "allocation.json", walks)
    write_bound_report(out / "bound_report.json", report, config.num_agents)
    return {
        "agents": config.num_agents,
        "packages": config.num_packages,
        "makespan_s": report.makespan,
        "guarantee_slack_s": report.guarantee,
        "num_tours": report.num_tours,
    }


def run_route(config: ScenarioConfig, out_dir: str | Path) -> dict:
    out = _outdir(out_dir)
    pre = preprocess(config, out)
    scenario = generate_scenario(config)
    save_scenario(scenario, out / "scenario.json")
    result = route_first_missions(config, pre, scenario)
    write_allocation(out / "allocation.json", result.walks)
    write_bound_report(out / "bound_report.json", result.report, config.num_agents)

    graph, _ = make_graph(config, pre, scenario)
    write_routes_geojson(out / "routes.geojson", graph, result.per_agent)
    conflicts = result.solution.stats.conflicts_resolved if result.solution else 0
    row = {
        "makespan_s": result.solution.makespan if result.solution else 0.0,
        "conflicts_resolved": conflicts,
        "events": 0,
        "agents": config.num_agents,
        "packages": config.num_packages,
        **solution_stats(result.per_agent, config.drone.max_flight_km),
    }
    write_stats_csv(out / "stats.csv", row)
    return {"makespan_s": row["makespan_s"], "conflicts_resolved": conflicts}


def run_simulate(config: ScenarioConfig, out_dir: str | Path) -> dict:
    out = _outdir(out_dir)
    pre = preprocess(config, out)
    scenario = generate_scenario(config)
    save_scenario(scenario, out / "scenario.json")
    walks, report = allocate(config, pre, scenario)
    write_allocation(out / "allocation.json", walks)
    write_bound_report(out / "bound_report.json", report, config.num_agents)

    graph, bundle = make_graph(config, pre, scenario)
    t0 = time.perf_counter()
    result = run_horizon(
        walks, config.strategy, config.w, graph, bundle, config.timeout_s
    )
    wall_s = time.perf_counter() - t0

    write_routes_geojson(out / "routes.geojson", graph, result.paths)
    row = {
        "makespan_s": result.makespan,
        "conflicts_resolved": result.conflicts_resolved,
        "events": result.events,
        "agents": config.num_agents,
        "packages": config.num_packages,
        **solution_stats(result.paths, config.drone.max_flight_km),
    }
    write_stats_csv(out / "stats.csv", row)
    write_execution_log(out / "execution_log.jsonl", result, wall_s)
    return {
        "makespan_s": result.makespan,
        "events": result.events,
        "conflicts_resolved": result.conflicts_resolved,
        "wall_s": wall_s,
    }


# -- benchmarking ----------------------------------------------------------


def _bench_trial(raw: dict) -> dict:
    """One benchmark run, fully described by a plain config dict."""
    try:
        config = ScenarioConfig.from_dict(raw)
        t0 = time.perf_counter()
        pre = preprocess(config, None)
        scenario = generate_scenario(config)
        walks, _report = allocate(config, pre, scenario)
        alloc_s = time.perf_counter() - t0
        graph, bundle = make_graph(config, pre, scenario)
        t1 = time.perf_counter()
        result = run_horizon(
            walks, config.strategy, config.w, graph, bundle, config.timeout_s
        )
        wall_s = time.perf_counter() - t1
        stats = solution_stats(result.paths, config.drone.max_flight_km)
        return {
            "status": "ok",
            "seed": config.seed,
            "makespan_s": result.makespan,
            "plan_s": sum(e.plan_s for e in result.log),
            "wall_s": wall_s,
            "alloc_s": alloc_s,
            "events": result.events,
            "conflicts_resolved": result.conflicts_resolved,
            "avg_transit_used": stats["avg_transit_used"],
            "avg_range_ext": stats["avg_range_ext"],
        }
    except SolveTimeoutError as exc:
        return {"status": "timeout", "seed": raw.get("seed"), "error": str(exc)}
    except SkyhopError as exc:
        return {
            "status": "error",
            "seed": raw.get("seed"),
            "error": f"{type(exc).__name__}: {exc}",
        }


BENCH_COLUMNS = (
    "name",
    "strategy",
    "surrogate",
    "depots",
    "packages",
    "agents",
    "w",
    "trials",
    "completed",
    "timeouts",
    "errors",
    "status",
    "makespan_mean",
    "makespan_median",
    "plan_s_mean",
    "plan_s_median",
    "alloc_s_mean",
    "transit_used_mean",
    "range_ext_mean",
    "conflicts_mean",
    "makespan_delta_vs_pair",
)


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return f"{x:.6f}"
    return str(x)


def run_bench(spec: dict, out_dir: str | Path) -> dict:
    """Run a config matrix and aggregate per-cell results.

    ``spec`` holds a ``base`` config, a list of ``cells`` overriding it
    (each may carry a ``name``), ``trials`` per cell (trial ``t`` shifts
    the seed by ``t``), optional ``workers`` for parallel trials, and
    ``discard_timeouts`` (default true: timed-out trials never enter the
    aggregates, only the ``timeouts`` column).  A failing cell is
    recorded and the run continues.
    """
    if not isinstance(spec, dict):
        raise ConfigError("bench spec must be a JSON object")
    base = dict(spec.get("base") or {})
    cells = spec.get("cells") or [{}]
    if not isinstance(cells, list):
        raise ConfigError("bench 'cells' must be a list of override objects")
    trials = int(spec.get("trials", 1))
    if trials < 1:
        raise ConfigError("bench needs at least one trial")
    workers = int(spec.get("workers", 1))
    discard = bool(spec.get("discard_timeouts", True))
    out = _outdir(out_dir)

    jobs: list[dict] = []
    cell_meta: list[dict] = []
    for idx, cell in enumerate(cells):
        overrides = {k: v for k, v in cell.items() if k != "name"}
        raw = {**base, **overrides}
        name = str(cell.get("name", f"cell{idx}"))
        ScenarioConfig.from_dict(raw)  # fail fast on a malformed cell
        cell_meta.append({"name": name, "raw": raw})
        for t in range(trials):
            jobs.append({**raw, "seed": int(raw.get("seed", 0)) + t})

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_bench_trial, jobs))
    else:
        results = [_bench_trial(j) for j in jobs]

    # Pair cells that differ only in strategy for head-to-head deltas.
    def pair_key(raw: dict) -> str:
        trimmed = {k: v for k, v in raw.items() if k != "strategy"}
        return json.dumps(trimmed, sort_keys=True)

    rows: list[dict] = []
    for idx, meta in enumerate(cell_meta):
        chunk = results[idx * trials : (idx + 1) * trials]
        ok = [r for r in chunk if r["status"] == "ok"]
        timeouts = sum(r["status"] == "timeout" for r in chunk)
        errors = sum(r["status"] == "error" for r in chunk)
        status = "ok" if len(ok) == trials else ("partial" if ok else "failed")
        if timeouts and not discard:
            status = "timeout"
        cfg = ScenarioConfig.from_dict(meta["raw"])
        row = {
            "name": meta["name"],
            "strategy": cfg.strategy,
            "surrogate": cfg.surrogate,
            "depots": cfg.num_depots,
            "packages": cfg.num_packages,
            "agents": cfg.num_agents,
            "w": cfg.w,
            "trials": trials,
            "completed": len(ok),
            "timeouts": timeouts,
            "errors": errors,
            "status": status,
            "makespan_mean": mean(r["makespan_s"] for r in ok) if ok else None,
            "makespan_median": median(r["makespan_s"] for r in ok) if ok else None,
            "plan_s_mean": mean(r["plan_s"] for r in ok) if ok else None,
            "plan_s_median": median(r["plan_s"] for r in ok) if ok else None,
            "alloc_s_mean": mean(r["alloc_s"] for r in ok) if ok else None,
            "transit_used_mean": mean(r["avg_transit_used"] for r in ok) if ok else None,
            "range_ext_mean": mean(r["avg_range_ext"] for r in ok) if ok else None,
            "conflicts_mean": mean(r["conflicts_resolved"] for r in ok) if ok else None,
            "makespan_delta_vs_pair": None,
            "_pair_key": pair_key(meta["raw"]),
            "_trials": chunk,
        }
        rows.append(row)

    by_key: dict[str, list[dict]] = {}
    for row in rows:
        by_key.setdefault(row["_pair_key"], []).append(row)
    for group in by_key.values():
        if len(group) == 2 and group[0]["strategy"] != group[1]["strategy"]:
            a, b = group
            if a["makespan_mean"] is not None and b["makespan_mean"] is not None:
                a["makespan_delta_vs_pair"] = a["makespan_mean"] - b["makespan_mean"]
                b["makespan_delta_vs_pair"] = b["makespan_mean"] - a["makespan_mean"]

    with open(out / "bench.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(BENCH_COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(row[c]) for c in BENCH_COLUMNS) + "\n")
    with open(out / "bench_trials.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(
            [
                {"name": row["name"], "trials": row["_trials"]}
                for row in rows
            ],
            fh,
            sort_keys=True,
            indent=1,
        )
        fh.write("\n")

    return {
        "cells": len(rows),
        "trials": trials,
        "completed": sum(r["completed"] for r in rows),
        "timeouts": sum(r["timeouts"] for r in rows),
        "errors": sum(r["errors"] for r in rows),
        "file": str(out / "bench.csv"),
    }
