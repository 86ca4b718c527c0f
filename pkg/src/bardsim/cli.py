"""Command line entry point: ``bardsim {run,sweep,audit,routes}``."""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from . import audit as audit_mod
from .config import SimConfig, config_hash, from_dict, load_config, to_dict
from .engine import EventLog, Simulation, read_traffic_csv, write_route_csv
from .errors import ConfigError
from .harness import CODE_VERSION, SweepError, load_sweep, run_sweep

EXIT_OK, EXIT_CONFIG, EXIT_RUN, EXIT_AUDIT = 0, 1, 2, 3


def _config(args) -> SimConfig:
    cfg = load_config(args.config) if args.config else SimConfig()
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if getattr(args, "algorithm", None):
        over["algorithm"] = args.algorithm
    if getattr(args, "bands", None):
        over["band_restriction"] = tuple(args.bands.split(","))
    return cfg.with_(engine=over) if over else cfg


def _header(cfg):
    return [f"config_hash={config_hash(cfg)}", f"code_version={CODE_VERSION}", f"seed={cfg.engine.seed}"]


def write_metrics_csv(path, cfg, m) -> None:
    head = "\n".join(f"# {h}" for h in _header(cfg))
    fields = ["config_hash", "seed", "algorithm", "mdr", "latency", "num_messages",
              "delivered_messages", "generated_packets", "delivered_packets", "dropped_ttl",
              "dropped_full", "in_flight", "tx_success"] + [f"usage_{b}" for b in m.band_usage]
    d = dataclasses.asdict(m)
    d.update(config_hash=config_hash(cfg), **{f"usage_{b}": u for b, u in m.band_usage.items()})
    vals = [repr(d[f]) if isinstance(d[f], float) else str(d[f]) for f in fields]
    Path(path).write_text(f"{head}\n{','.join(fields)}\n{','.join(vals)}\n")


def cmd_run(args) -> int:
    cfg = _config(args)
    messages = None
    if args.traffic:
        messages = read_traffic_csv(args.traffic, cfg.traffic.message_sizes, cfg.traffic.packet_size)
    sim = Simulation(cfg, messages)
    try:
        metrics, log = sim.run()
    except Exception as exc:  # surfaced as a run failure, not a crash
        print(f"run failed (config {config_hash(cfg)}, seed {cfg.engine.seed}): {exc!r}", file=sys.stderr)
        return EXIT_RUN
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    head = _header(cfg)
    log.write_csv(out / "events.csv", head)
    write_metrics_csv(out / "metrics.csv", cfg, metrics)
    (out / "scenario.json").write_text(json.dumps(sim.scenario_dict(), indent=1))
    (out / "config.json").write_text(json.dumps(to_dict(cfg), indent=1))
    sim.write_traffic_csv(out / "traffic.csv")
    if sim.routes is not None:
        sim.write_routes(out / "routes.csv")
    if args.qtables and sim.agents is not None:
        sim.write_qtables(out / "qtables.csv")
    mdr = "no traffic" if metrics.no_traffic else f"{metrics.mdr:.4f}"
    print(f"{cfg.label()} seed={cfg.engine.seed} messages={metrics.num_messages} "
          f"MDR={mdr} latency={metrics.latency:.3f}s")
    print("band usage: " + " ".join(f"{b}={u:.3f}" for b, u in metrics.band_usage.items()))
    return EXIT_OK


def cmd_sweep(args) -> int:
    spec = load_sweep(args.spec)
    over = {}
    if args.rounds is not None:
        over["rounds"] = args.rounds
    if args.seed is not None:
        over["seed_base"] = args.seed
    if over:
        spec = dataclasses.replace(spec, **over)
    try:
        agg = run_sweep(spec, args.out_dir, workers=args.workers)
    except SweepError as exc:
        print(f"sweep aborted: {exc} (config {exc.cfg_hash}, seed {exc.seed})", file=sys.stderr)
        return EXIT_RUN
    print((Path(args.out_dir) / "summary.txt").read_text(), end="")
    print(f"{len(agg)} aggregate rows written to {args.out_dir}")
    return EXIT_OK


def cmd_audit(args) -> int:
    run_dir = Path(args.run_dir)
    cfg = from_dict(json.loads((run_dir / "config.json").read_text()))
    scenario = json.loads((run_dir / "scenario.json").read_text())
    log = EventLog.read_csv(run_dir / "events.csv")
    messages = read_traffic_csv(run_dir / "traffic.csv", cfg.traffic.message_sizes, cfg.traffic.packet_size)
    rep = audit_mod.audit(log.records, scenario, messages)
    cons = rep["conservation"]
    print(f"interference violations: {len(rep['interference'])}")
    print(f"conservation: generated={cons['generated']} delivered={cons['delivered']} "
          f"ttl={cons['dropped_ttl']} full={cons['dropped_full']} in_flight={cons['in_flight']} "
          f"balanced={cons['balanced']}")
    print(f"time budget violations: {len(rep['time_budget'])}")
    print(f"out-of-range hops: {len(rep['link_rule'])}")
    print(f"late deliveries: {len(rep['late'])}")
    print(f"timestamps ordered: {rep['ordered']}")
    print("audit " + ("passed" if rep["ok"] else "FAILED"))
    return EXIT_OK if rep["ok"] else EXIT_AUDIT


def cmd_routes(args) -> int:
    cfg = _config(args).with_(engine={"algorithm": "DDSAAR"})
    sim = Simulation(cfg)
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_route_csv(sim.routes, sim.band_names, out / "routes.csv")
    for (s, d), hops in sorted(sim.routes.items()):
        path = " ".join(f"-{sim.band_names[h.band]}-> {h.next_node}" for h in hops) or "(unreachable)"
        print(f"{s} {path}" if hops else f"{s} -> {d} {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bardsim", description="Band-aware DSA routing simulator")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a single configuration")
    r.add_argument("--config", help="JSON configuration file (defaults if omitted)")
    r.add_argument("--seed", type=int)
    r.add_argument("--algorithm", choices=("BARD", "DDSAAR"))
    r.add_argument("--bands", help="comma-separated band restriction, e.g. TV")
    r.add_argument("--traffic", help="replay a traffic.csv instead of generating traffic")
    r.add_argument("--qtables", action="store_true", help="also dump Q-tables")
    r.add_argument("--out-dir", default="run_out")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="run a sweep specification")
    s.add_argument("spec")
    s.add_argument("--rounds", type=int)
    s.add_argument("--seed", type=int, help="seed base")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out-dir", default="sweep_out")
    s.set_defaults(func=cmd_sweep)

    a = sub.add_parser("audit", help="check an exported run directory")
    a.add_argument("run_dir")
    a.set_defaults(func=cmd_audit)

    t = sub.add_parser("routes", help="dump the baseline route table")
    t.add_argument("--config")
    t.add_argument("--seed", type=int)
    t.add_argument("--out-dir")
    t.set_defaults(func=cmd_routes)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUN
