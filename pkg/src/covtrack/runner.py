"""Run scenarios and batches and write their artifacts.

All output files are deterministic for a given configuration: no
timestamps, stable row order, shortest round-trip float formatting.
"""

from __future__ import annotations

import itertools
import json
import logging
import math
from collections import Counter
from pathlib import Path

import numpy as np
import yaml

from .config import (ConfigError, ScenarioConfig, config_from_dict,
                     config_to_dict, resolve_catalog)
from .engine import RunResult, Simulation
from .metrics import moving_average, team_stats
from .partition import (ccvd_swap, initial_block_assignment, lloyd_functional,
                        power_partition, proportional_capacities,
                        voronoi_partition)
from .netsim import NeighborGraph
from .sensors import (SensorCatalog, detection_capability, load_catalog,
                      rated_capacity)
from .world import GridWorld

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _write_csv(path: Path, header: list[str], rows) -> None:
    with path.open("w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def summarize(result: RunResult) -> dict:
    """Scalar digest of a run, the same dict that lands in summary.json."""
    cfg = result.config
    records = result.records
    summary: dict = {
        "schema": SCHEMA_VERSION,
        "name": cfg.name,
        "method": cfg.method,
        "seed": cfg.seed,
        "steps": len(records),
        "n_robots": len(result.sensor_types),
        "sensor_types": list(result.sensor_types),
    }
    catalog = resolve_catalog(cfg)
    rated = [rated_capacity(catalog.spec(t), catalog.mu_over_cell_area)
             for t in result.sensor_types]
    stats = team_stats(rated)
    summary["team"] = {
        "total_rated_capacity": stats.total_capacity,
        "heterogeneity_sqrt": stats.heterogeneity_sqrt,
        "heterogeneity_disc": stats.heterogeneity_disc,
    }
    if not records:
        summary["ospa"] = None
        summary["traffic"] = {"total_bytes": 0, "per_kind": {},
                              "dropped": result.ledger.dropped}
        summary["events"] = {"count": 0, "kinds": {}}
        return summary

    times = result.times()
    series = result.ospa_series()
    ma = moving_average(series, cfg.ma_window)
    steady = times >= cfg.steady_after
    if not steady.any():
        steady = times >= times[-1] / 2.0
    early = slice(0, min(10, len(series)))
    ratio_std = np.array([r.area_ratio_std for r in records])
    summary["ospa"] = {
        "mean": float(series.mean()),
        "final": float(series[-1]),
        "first10_mean": float(series[early].mean()),
        "steady_mean": float(series[steady].mean()),
        "steady_median": float(np.median(series[steady])),
        "steady_ma_mean": float(ma[steady].mean()),
    }
    summary["steady_after"] = float(cfg.steady_after)
    summary["area_ratio_std_steady_mean"] = float(ratio_std[steady].mean())
    summary["phd_mass_final"] = records[-1].phd_mass
    summary["n_estimates_final"] = records[-1].n_estimates
    summary["n_targets_final"] = records[-1].n_targets
    summary["swap_sweeps_max"] = max(r.swap_sweeps for r in records)

    per_kind: dict[str, int] = {}
    total = 0
    for (_, kind), (nbytes, _) in sorted(result.ledger.total_sent.items()):
        per_kind[kind] = per_kind.get(kind, 0) + nbytes
        total += nbytes
    duration = cfg.duration if cfg.duration > 0 else 1.0
    summary["traffic"] = {
        "total_bytes": total,
        "per_kind": per_kind,
        "dropped": result.ledger.dropped,
        "mean_bytes_per_robot_per_s": total / summary["n_robots"] / duration,
    }
    kinds = Counter(kind for _, kind, _ in result.events)
    summary["events"] = {"count": len(result.events),
                         "kinds": dict(sorted(kinds.items()))}
    return summary


def write_artifacts(result: RunResult, out_dir: str | Path) -> dict:
    """Write the standard artifact set; returns the summary dict."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = result.config
    n = len(result.sensor_types)

    header = ["step", "time", "ospa", f"ospa_ma{cfg.ma_window}", "n_targets",
              "n_estimates", "phd_mass", "area_ratio_std", "swap_sweeps"]
    header += [f"unused_{i}" for i in range(n)]
    header += [f"cells_{i}" for i in range(n)]
    header += [f"detections_{i}" for i in range(n)]
    ma = moving_average([r.ospa for r in result.records], cfg.ma_window) \
        if result.records else []
    rows = []
    for k, r in enumerate(result.records):
        row = [r.step, r.time, r.ospa, float(ma[k]), r.n_targets,
               r.n_estimates, r.phd_mass, r.area_ratio_std, r.swap_sweeps]
        row += [float(u) for u in r.unused]
        row += [int(c) for c in r.cell_counts]
        row += [int(d) for d in r.detections]
        rows.append(row)
    _write_csv(out / "metrics.csv", header, rows)

    _write_csv(out / "trajectories.csv",
               ["step", "time", "robot", "x", "y", "theta"],
               [(s, s * cfg.dt, i, x, y, th)
                for s, i, x, y, th in result.robot_log])
    _write_csv(out / "targets.csv",
               ["step", "time", "target", "x", "y"],
               [(s, s * cfg.dt, tid, x, y)
                for s, tid, x, y in result.target_log])
    _write_csv(out / "ledger.csv",
               ["step", "robot", "kind", "bytes", "messages"],
               result.ledger.rows())
    if result.events:
        _write_csv(out / "events.csv", ["step", "kind", "detail"],
                   result.events)
    if cfg.outputs.dump_partitions and result.partition_log:
        rows = [(step, cell, int(owner[cell]))
                for step, owner in result.partition_log
                for cell in range(len(owner))]
        _write_csv(out / "partitions.csv", ["step", "cell", "owner"], rows)
    if cfg.outputs.dump_phd:
        np.savez_compressed(out / "phd_final.npz", values=result.final_phd,
                            cells_x=result.world.cells_x,
                            cells_y=result.world.cells_y)

    summary = summarize(result)
    summary["config"] = config_to_dict(cfg)
    (out / "summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n")
    (out / "config.yaml").write_text(
        yaml.safe_dump(config_to_dict(cfg), sort_keys=False))
    return summary


def run_and_write(config: ScenarioConfig, out_dir: str | Path) -> dict:
    result = Simulation(config).run()
    return write_artifacts(result, out_dir)


# -- batches -------------------------------------------------------------


def _assign_dotted(data: dict, dotted: str, value) -> dict:
    out = dict(data)
    node = out
    parts = dotted.split(".")
    for part in parts[:-1]:
        child = node.get(part)
        child = dict(child) if isinstance(child, dict) else {}
        node[part] = child
        node = child
    node[parts[-1]] = value
    return out


def expand_batch(spec: dict) -> list[tuple[dict, dict]]:
    """Expand a batch spec into (axis-values, scenario-dict) pairs.

    ``spec`` holds ``base`` (a scenario mapping) and ``sweep`` (dotted
    key -> list of values). The cartesian product is taken in the order
    the sweep keys are written.
    """
    if not isinstance(spec, dict):
        raise ConfigError("batch spec must be a mapping")
    base = spec.get("base", {})
    sweep = spec.get("sweep", {})
    unknown = set(spec) - {"base", "sweep"}
    if unknown:
        raise ConfigError(
            f"unknown batch key(s): {', '.join(sorted(unknown))}")
    if not isinstance(sweep, dict) or not sweep:
        raise ConfigError("batch spec needs a non-empty 'sweep' mapping")
    axes = [(key, list(values)) for key, values in sweep.items()]
    combos = []
    for values in itertools.product(*(v for _, v in axes)):
        data = dict(base)
        axis_values = {}
        for (key, _), value in zip(axes, values):
            data = _assign_dotted(data, key, value)
            axis_values[key] = value
        combos.append((axis_values, data))
    return combos


def run_batch(spec: dict, out_dir: str | Path) -> dict:
    """Run every combination in a batch spec and aggregate across seeds."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    combos = expand_batch(spec)
    axis_names = list(combos[0][0].keys())
    group_axes = [a for a in axis_names if a != "seed"]

    run_rows = []
    groups: dict[tuple, list[dict]] = {}
    for k, (axis_values, data) in enumerate(combos):
        config = config_from_dict(data)
        run_dir = out / "runs" / f"run-{k:03d}"
        log.info("batch run %d/%d: %s", k + 1, len(combos),
                 ", ".join(f"{a}={v}" for a, v in axis_values.items()))
        summary = run_and_write(config, run_dir)
        row = dict(axis_values)
        row["run"] = f"run-{k:03d}"
        if summary["ospa"] is not None:
            row.update({
                "ospa_mean": summary["ospa"]["mean"],
                "ospa_steady_mean": summary["ospa"]["steady_mean"],
                "ospa_first10_mean": summary["ospa"]["first10_mean"],
                "ospa_steady_ma_mean": summary["ospa"]["steady_ma_mean"],
                "area_ratio_std": summary["area_ratio_std_steady_mean"],
                "bytes_total": summary["traffic"]["total_bytes"],
            })
        run_rows.append(row)
        key = tuple(axis_values[a] for a in group_axes)
        groups.setdefault(key, []).append(row)

    cols = axis_names + ["run", "ospa_mean", "ospa_steady_mean",
                         "ospa_first10_mean", "ospa_steady_ma_mean",
                         "area_ratio_std", "bytes_total"]
    _write_csv(out / "runs.csv", cols,
               [[row.get(c, "") for c in cols] for row in run_rows])

    agg_rows = []
    for key in sorted(groups, key=str):
        rows = groups[key]
        vals = np.array([r["ospa_steady_mean"] for r in rows
                         if "ospa_steady_mean" in r])
        if len(vals) == 0:
            continue
        agg = dict(zip(group_axes, key))
        agg.update({
            "n_runs": len(vals),
            "ospa_median": float(np.median(vals)),
            "ospa_q1": float(np.quantile(vals, 0.25)),
            "ospa_q3": float(np.quantile(vals, 0.75)),
            "ospa_mean": float(vals.mean()),
            "ospa_std": float(vals.std()),
        })
        agg_rows.append(agg)
    agg_cols = group_axes + ["n_runs", "ospa_median", "ospa_q1", "ospa_q3",
                             "ospa_mean", "ospa_std"]
    _write_csv(out / "aggregate.csv", agg_cols,
               [[row.get(c, "") for c in agg_cols] for row in agg_rows])

    report = {"schema": SCHEMA_VERSION, "n_runs": len(run_rows),
              "axes": axis_names, "runs": run_rows, "aggregate": agg_rows}
    (out / "batch.json").write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n")
    return report


# -- capacity table --------------------------------------------------------


def capacity_table(catalog_name: str) -> dict:
    """Sensor capacities and team statistics for one catalog."""
    try:
        catalog: SensorCatalog = load_catalog(catalog_name)
    except KeyError as exc:
        raise ConfigError(str(exc)) from exc
    types = []
    for name in sorted(catalog.sensors):
        spec = catalog.spec(name)
        computed = rated_capacity(spec, catalog.mu_over_cell_area)
        quoted = spec.rated_capacity
        row = {
            "type": name,
            "viewing_angle_deg": math.degrees(spec.viewing_angle),
            "radius_m": spec.radius,
            "law": spec.law_kind,
            "basis": spec.rated_basis,
            "capability": detection_capability(spec),
            "capacity": computed,
        }
        if quoted is not None:
            row["capacity_quoted"] = quoted
            row["deviation_pct"] = 100.0 * (computed - quoted) / quoted
        types.append(row)
    teams = []
    for team_name in sorted(catalog.teams):
        composition = catalog.teams[team_name]
        rated = []
        for type_name, count in sorted(composition.items()):
            spec = catalog.spec(type_name)
            rated += [rated_capacity(spec, catalog.mu_over_cell_area)] * count
        stats = team_stats(rated)
        teams.append({
            "team": team_name,
            "composition": " ".join(f"{t}:{c}"
                                    for t, c in sorted(composition.items())),
            "size": stats.size,
            "total_capacity": stats.total_capacity,
            "heterogeneity_sqrt": stats.heterogeneity_sqrt,
            "heterogeneity_disc": stats.heterogeneity_disc,
        })
    return {"catalog": catalog.name,
            "mu_over_cell_area": catalog.mu_over_cell_area,
            "types": types, "teams": teams}


# -- partition demo ---------------------------------------------------------


def partition_demo(method: str, n_sites: int = 5, seed: int = 0,
                   grid: int = 40, size: float = 40.0,
                   include_owner: bool = False) -> dict:
    """Small self-contained partition example for the demo endpoint."""
    from .config import canonical_method
    method = canonical_method(method)
    if method == "zigzag":
        raise ConfigError("the demo covers the partition methods only")
    if n_sites < 1:
        raise ConfigError("n_sites must be >= 1")
    world = GridWorld(size, size, grid, grid)
    rng = np.random.default_rng(seed)
    sites = rng.uniform([0, 0], [size, size], size=(n_sites, 2))
    shares = rng.uniform(0.5, 2.0, size=n_sites)
    if method == "voronoi" or method == "voronoi-cod":
        assign = voronoi_partition(sites, world)
    elif method == "power-cod":
        assign = power_partition(sites, np.sqrt(shares / np.pi) * size / 4,
                                 world)
    else:
        caps = proportional_capacities(world.n_cells, shares)
        owner0 = initial_block_assignment(caps)
        result = ccvd_swap(owner0, sites, caps, NeighborGraph.complete(n_sites),
                           world)
        assign = result.assignment
    values = np.ones(world.n_cells)
    counts = np.bincount(assign.owner, minlength=n_sites)
    out = {
        "method": method,
        "n_sites": n_sites,
        "seed": seed,
        "grid": grid,
        "sites": [[float(x), float(y)] for x, y in sites],
        "shares": [float(s) for s in shares],
        "counts": [int(c) for c in counts],
        "cost": lloyd_functional(assign, values, world),
        "ascii": render_partition(assign.owner, world),
    }
    if include_owner:
        out["owner"] = [int(o) for o in assign.owner]
    return out


_GLYPHS = "0123456789abcdefghijklmnopqrstuvwxyz"


def render_partition(owner: np.ndarray, world: GridWorld) -> list[str]:
    """Rows of owner glyphs, top of the world first."""
    grid = np.asarray(owner).reshape(world.cells_y, world.cells_x)
    lines = []
    for row in grid[::-1]:
        lines.append("".join(_GLYPHS[int(o) % len(_GLYPHS)] for o in row))
    return lines
