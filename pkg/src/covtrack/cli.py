"""Command line client for the simulator service.

By default every command talks to an in-process instance of the HTTP
app, so no server needs to be running; pass ``--server URL`` to target a
remote one instead. Exit codes: 0 success, 1 configuration or input
problems, 2 runtime failures.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import logging
import sys
from pathlib import Path

import httpx
import yaml


def _client_call(server: str | None, method: str, path: str,
                 payload: dict | None = None, params: dict | None = None):
    """One request against a remote server or the in-process app."""
    if server:
        with httpx.Client(base_url=server, timeout=None) as client:
            return client.request(method, path, json=payload, params=params)

    from .service import create_app

    async def go():
        transport = httpx.ASGITransport(app=create_app())
        async with httpx.AsyncClient(transport=transport,
                                     base_url="http://covtrack",
                                     timeout=None) as client:
            return await client.request(method, path, json=payload,
                                        params=params)

    return asyncio.run(go())


def _call_or_exit(args, method: str, path: str, payload=None, params=None):
    try:
        resp = _client_call(args.server, method, path, payload, params)
    except httpx.HTTPError as exc:
        print(f"error: cannot reach {args.server}: {exc}", file=sys.stderr)
        raise SystemExit(2)
    if resp.status_code >= 500:
        print(f"error: {_detail(resp)}", file=sys.stderr)
        raise SystemExit(2)
    if resp.status_code >= 400:
        print(f"error: {_detail(resp)}", file=sys.stderr)
        raise SystemExit(1)
    return resp.json()


def _detail(resp: httpx.Response) -> str:
    try:
        return str(resp.json().get("detail", resp.text))
    except ValueError:
        return resp.text


def _load_yaml_file(path: str) -> dict:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except OSError as exc:
        print(f"error: cannot read {path}: {exc}", file=sys.stderr)
        raise SystemExit(1)
    except yaml.YAMLError as exc:
        print(f"error: {path} is not valid YAML: {exc}", file=sys.stderr)
        raise SystemExit(1)
    if data is None:
        return {}
    if not isinstance(data, dict):
        print(f"error: {path} must hold a mapping", file=sys.stderr)
        raise SystemExit(1)
    return data


def _gather_overrides(args) -> list[str]:
    out = list(args.set or [])
    # common knobs get their own flags; they become overrides here
    for flag, key in [("method", "method"), ("seed", "seed"),
                      ("duration", "duration"), ("team", "robots.team"),
                      ("targets", "targets.count")]:
        value = getattr(args, flag, None)
        if value is not None:
            out.append(f"{key}={value}")
    return out


def cmd_run(args) -> int:
    payload = {
        "config": _load_yaml_file(args.config) if args.config else {},
        "preset": args.preset,
        "overrides": _gather_overrides(args),
        "out_dir": args.out,
    }
    data = _call_or_exit(args, "POST", "/runs", payload)
    summary = data["summary"]
    if args.json:
        print(json.dumps(summary, indent=2, sort_keys=True))
        return 0
    o = summary.get("ospa")
    print(f"run '{summary['name']}' method={summary['method']} "
          f"seed={summary['seed']} steps={summary['steps']}")
    if o:
        print(f"  ospa mean {o['mean']:.3f}  steady {o['steady_mean']:.3f}  "
              f"first10 {o['first10_mean']:.3f}  final {o['final']:.3f}")
        traffic = summary["traffic"]
        print(f"  traffic {traffic['total_bytes']} B total, "
              f"{traffic['mean_bytes_per_robot_per_s']:.1f} B/robot/s")
    if data.get("out_dir"):
        print(f"  artifacts in {data['out_dir']}")
    return 0


def cmd_batch(args) -> int:
    spec = _load_yaml_file(args.config)
    if args.set:
        base = spec.get("base", {})
        from .config import apply_overrides
        spec["base"] = apply_overrides(base, list(args.set))
    payload = {"base": spec.get("base", {}), "sweep": spec.get("sweep", {}),
               "out_dir": args.out}
    data = _call_or_exit(args, "POST", "/batches", payload)
    report = data["report"]
    if args.json:
        print(json.dumps(report, indent=2, sort_keys=True))
        return 0
    print(f"batch: {report['n_runs']} runs -> {data['out_dir']}")
    for row in report["aggregate"]:
        label = " ".join(f"{k}={v}" for k, v in row.items()
                         if k not in ("n_runs", "ospa_median", "ospa_q1",
                                      "ospa_q3", "ospa_mean", "ospa_std"))
        print(f"  {label}: steady ospa median {row['ospa_median']:.3f} "
              f"(q1 {row['ospa_q1']:.3f}, q3 {row['ospa_q3']:.3f}, "
              f"n={row['n_runs']})")
    return 0


def cmd_capacity_table(args) -> int:
    data = _call_or_exit(args, "GET", "/capacity-table",
                         params={"catalog": args.catalog})
    if args.json:
        print(json.dumps(data, indent=2, sort_keys=True))
        return 0
    print(f"catalog '{data['catalog']}' "
          f"(mu/cell_area = {data['mu_over_cell_area']})")
    print(f"{'type':>6} {'fov_deg':>8} {'radius':>7} {'law':>9} "
          f"{'basis':>10} {'capacity':>9} {'quoted':>8} {'dev%':>6}")
    for row in data["types"]:
        quoted = row.get("capacity_quoted")
        dev = row.get("deviation_pct")
        print(f"{row['type']:>6} {row['viewing_angle_deg']:8.1f} "
              f"{row['radius_m']:7.2f} {row['law']:>9} {row['basis']:>10} "
              f"{row['capacity']:9.2f} "
              f"{quoted if quoted is not None else '-':>8} "
              f"{f'{dev:+.2f}' if dev is not None else '-':>6}")
    if data["teams"]:
        print(f"\n{'team':>6} {'size':>4} {'total':>9} {'level':>7} "
              f"{'level(disc)':>11}  composition")
        for row in data["teams"]:
            print(f"{row['team']:>6} {row['size']:>4} "
                  f"{row['total_capacity']:9.1f} "
                  f"{row['heterogeneity_sqrt']:7.2f} "
                  f"{row['heterogeneity_disc']:11.2f}  {row['composition']}")
    return 0


def cmd_partition_demo(args) -> int:
    payload = {"method": args.method, "n_sites": args.sites,
               "seed": args.seed, "grid": args.grid, "size": args.size}
    data = _call_or_exit(args, "POST", "/partition-demo", payload)
    if args.json:
        print(json.dumps(data, indent=2, sort_keys=True))
        return 0
    print(f"{data['method']} partition, {data['n_sites']} sites, "
          f"{data['grid']}x{data['grid']} cells, cost {data['cost']:.1f}")
    print("cells per robot:", " ".join(str(c) for c in data["counts"]))
    for line in data["ascii"]:
        print(line)
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port,
                log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="covtrack",
        description="multi-robot coverage and target-tracking simulator")
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--server", default=None,
                       help="base URL of a running service "
                            "(default: in-process)")
        p.add_argument("--json", action="store_true",
                       help="print the raw JSON response")

    p = sub.add_parser("run", help="run one scenario")
    common(p)
    p.add_argument("--config", help="scenario YAML file")
    p.add_argument("--preset", help="built-in scenario preset "
                                    "(arena100, lab10)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config key (dotted path)")
    p.add_argument("--method", help="voronoi | voronoi-cod | power-cod | "
                                    "ccvd-cod | zigzag")
    p.add_argument("--seed", type=int)
    p.add_argument("--duration", type=float)
    p.add_argument("--team", help="team preset from the sensor catalog")
    p.add_argument("--targets", type=int, help="initial target count")
    p.add_argument("--out", help="artifact directory")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("batch", help="run a parameter sweep")
    common(p)
    p.add_argument("--config", required=True, help="batch YAML file "
                   "(keys: base, sweep)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a base-config key")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_batch)

    p = sub.add_parser("capacity-table",
                       help="print sensor and team capacities")
    common(p)
    p.add_argument("--catalog", default="longrange")
    p.set_defaults(func=cmd_capacity_table)

    p = sub.add_parser("partition-demo",
                       help="render a small partition example")
    common(p)
    p.add_argument("--method", default="ccvd-cod")
    p.add_argument("--sites", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid", type=int, default=40)
    p.add_argument("--size", type=float, default=40.0)
    p.set_defaults(func=cmd_partition_demo)

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
