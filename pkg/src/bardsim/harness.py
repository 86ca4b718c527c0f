"""Seeded experiment sweeps with per-run and aggregated CSV output."""
from __future__ import annotations

import csv
import json
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .config import SimConfig, config_hash, from_dict, load_config, to_dict
from .engine import EventLog, RunMetrics, Simulation, compute_metrics
from .errors import BardSimError, ConfigError

CODE_VERSION = "0.1.0"
VARIED = ("sim_time_checkpoints", "num_pus", "num_sus", "pu_concentration_band")


class SweepError(BardSimError):
    """A run inside a sweep failed; carries the offending config and seed."""

    def __init__(self, message, cfg_hash, seed):
        super().__init__(message)
        self.cfg_hash = cfg_hash
        self.seed = seed


@dataclass(frozen=True)
class SweepSpec:
    varied_parameter: str
    values: tuple
    algorithms: tuple = ("BARD", "DDSAAR")
    rounds: int = 20
    seed_base: int = 0
    base_config: SimConfig = field(default_factory=SimConfig)
    # PU counts crossed with the concentration band (concentration sweeps only)
    pu_counts: tuple | None = None

    def __post_init__(self):
        if self.varied_parameter not in VARIED:
            raise ConfigError(f"varied_parameter must be one of {VARIED}", key="varied_parameter")
        if not self.values:
            raise ConfigError("values must be non-empty", key="values")
        if self.rounds < 1:
            raise ConfigError("rounds must be >= 1", key="rounds")
        for a in self.algorithms:
            algo_config(self.base_config, a)

    def grid(self):
        """(value, num_pus) cells of the sweep, in output order."""
        if self.varied_parameter == "pu_concentration_band":
            counts = self.pu_counts or (self.base_config.scenario.num_pus,)
            return [(v, n) for v in self.values for n in counts]
        return [(v, None) for v in self.values]


def load_sweep(path) -> SweepSpec:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    data = dict(data)
    base = data.pop("base_config", {})
    if isinstance(base, str):
        base_cfg = load_config(path.parent / base)
    else:
        base_cfg = from_dict(base)
    for k in ("values", "algorithms", "pu_counts"):
        if data.get(k) is not None:
            data[k] = tuple(data[k])
    try:
        return SweepSpec(base_config=base_cfg, **data)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def algo_config(base: SimConfig, label: str) -> SimConfig:
    """Config for an algorithm label such as ``BARD``, ``DDSAAR`` or ``BARD:TV``."""
    algo, _, bands = label.partition(":")
    restriction = tuple(bands.split("+")) if bands else None
    return base.with_(engine={"algorithm": algo, "band_restriction": restriction})


def cell_config(spec: SweepSpec, label: str, value, num_pus, rnd: int) -> SimConfig:
    cfg = algo_config(spec.base_config, label)
    p = spec.varied_parameter
    over = {"engine": {"seed": spec.seed_base + rnd}}
    if p == "num_pus":
        over["scenario"] = {"num_pus": int(value)}
    elif p == "num_sus":
        over["scenario"] = {"num_sus": int(value)}
    elif p == "pu_concentration_band":
        over["scenario"] = {"pu_concentration": value, "num_pus": int(num_pus)}
    else:
        # one run to the last checkpoint; earlier checkpoints are read from its log
        over["engine"]["horizon"] = float(max(spec.values))
    return cfg.with_(**over)


def metrics_at(log: EventLog, messages, band_names, checkpoint: float, **kw) -> RunMetrics:
    """Metrics as if the run had been cut at ``checkpoint``."""
    cut = EventLog([r for r in log.records if r[0] <= checkpoint])
    born = [m for m in messages if m.created_at < checkpoint]
    return compute_metrics(cut, born, band_names, **kw)


def _execute(job):
    label, value, num_pus, rnd, cfg_dict, varied, checkpoints = job
    cfg = from_dict(cfg_dict)
    sim = Simulation(cfg)
    metrics, log = sim.run()
    if varied != "sim_time_checkpoints":
        return [(label, value, num_pus, rnd, metrics)]
    return [(label, cp, num_pus, rnd,
             metrics_at(log, sim.messages, sim.band_names, cp, algorithm=metrics.algorithm,
                        seed=metrics.seed))
            for cp in checkpoints]


RUN_FIELDS = ("algorithm", "parameter", "value", "num_pus", "round", "seed", "config_hash",
              "mdr", "latency", "num_messages", "delivered_messages", "generated_packets",
              "delivered_packets", "dropped_ttl", "dropped_full", "in_flight", "tx_success")


def _fmt(x):
    if isinstance(x, float):
        return repr(x)
    return "" if x is None else str(x)


def _mean_std(xs):
    xs = [x for x in xs if not math.isnan(x)]
    if not xs:
        return math.nan, math.nan
    return statistics.fmean(xs), (statistics.stdev(xs) if len(xs) > 1 else 0.0)


def _provenance(spec):
    return [f"config_hash={config_hash(spec.base_config, ignore_seed=True)}",
            f"code_version={CODE_VERSION}", f"seed_base={spec.seed_base}",
            f"varied_parameter={spec.varied_parameter}", f"rounds={spec.rounds}"]


def run_sweep(spec: SweepSpec, out_dir=None, workers: int = 1) -> list[dict]:
    """Run algorithms x values x rounds and return one aggregate row per cell.

    With ``out_dir`` set, writes ``runs.csv``, ``aggregate.csv`` and ``summary.txt``.
    """
    jobs = []
    cells = spec.grid() if spec.varied_parameter != "sim_time_checkpoints" else [(None, None)]
    for label in spec.algorithms:
        for value, num_pus in cells:
            for rnd in range(spec.rounds):
                cfg = cell_config(spec, label, value, num_pus, rnd)
                jobs.append((label, value, num_pus, rnd, to_dict(cfg), spec.varied_parameter,
                             tuple(sorted(spec.values))))
    results = []
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            futures = [pool.submit(_execute, j) for j in jobs]
            for j, f in zip(jobs, futures):
                results += _collect(j, f.result)
    else:
        for j in jobs:
            results += _collect(j, lambda j=j: _execute(j))

    order = {a: k for k, a in enumerate(spec.algorithms)}
    vals = {v: k for k, v in enumerate(spec.values)}
    results.sort(key=lambda r: (order[r[0]], vals[r[1]], r[2] or 0, r[3]))
    band_names = [b.band_id for b in spec.base_config.bands]
    rows = [_run_row(spec, r) for r in results]
    agg = aggregate(rows, band_names)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        head = _provenance(spec)
        _write_csv(out / "runs.csv", head, list(RUN_FIELDS) + [f"usage_{b}" for b in band_names], rows)
        _write_csv(out / "aggregate.csv", head, list(agg[0]) if agg else [], agg)
        (out / "summary.txt").write_text(summary_text(spec, agg, band_names))
    return agg


def _collect(job, get):
    label, value, num_pus, rnd, cfg_dict = job[:5]
    try:
        return get()
    except Exception as exc:
        cfg = from_dict(cfg_dict)
        raise SweepError(f"run failed for {label} value={value} seed={cfg.engine.seed}: {exc!r}",
                         config_hash(cfg), cfg.engine.seed) from exc


def _run_row(spec, result):
    label, value, num_pus, rnd, m = result
    cfg = cell_config(spec, label, value if spec.varied_parameter != "sim_time_checkpoints" else None,
                      num_pus, rnd)
    row = {
        "algorithm": label, "parameter": spec.varied_parameter, "value": value,
        "num_pus": num_pus if num_pus is not None else cfg.scenario.num_pus,
        "round": rnd, "seed": spec.seed_base + rnd, "config_hash": config_hash(cfg),
        "mdr": m.mdr, "latency": m.latency, "num_messages": m.num_messages,
        "delivered_messages": m.delivered_messages, "generated_packets": m.generated_packets,
        "delivered_packets": m.delivered_packets, "dropped_ttl": m.dropped_ttl,
        "dropped_full": m.dropped_full, "in_flight": m.in_flight, "tx_success": m.tx_success,
    }
    for b, u in m.band_usage.items():
        row[f"usage_{b}"] = u
    return row


def aggregate(rows, band_names) -> list[dict]:
    """Mean and sample standard deviation per (algorithm, value, num_pus) cell."""
    groups = {}
    for r in rows:
        groups.setdefault((r["algorithm"], r["value"], r["num_pus"]), []).append(r)
    out = []
    for (algo, value, npu), rs in groups.items():
        row = {"algorithm": algo, "parameter": rs[0]["parameter"], "value": value,
               "num_pus": npu, "rounds": len(rs)}
        metrics = ["mdr", "latency"] + [f"usage_{b}" for b in band_names]
        for k in metrics:
            row[f"{k}_mean"], row[f"{k}_std"] = _mean_std([float(r[k]) for r in rs])
        out.append(row)
    return out


def _write_csv(path, header_lines, fields, rows):
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for r in rows:
            w.writerow([_fmt(r.get(f)) for f in fields])


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(line for line in fh if not line.startswith("#")))


def summary_text(spec, agg, band_names) -> str:
    lines = [f"# {h}" for h in _provenance(spec)]
    lines.append("")
    lines.append(f"{'algorithm':<12}{'value':>10}{'PUs':>6}{'MDR':>16}{'latency (s)':>20}")
    for r in agg:
        lines.append(f"{r['algorithm']:<12}{str(r['value']):>10}{r['num_pus']:>6}"
                     f"{r['mdr_mean']:>9.3f} ±{r['mdr_std']:.3f}"
                     f"{r['latency_mean']:>12.2f} ±{r['latency_std']:.2f}")
    lines.append("")
    lines.append("Band usage (% of successful transmissions)")
    if spec.varied_parameter == "pu_concentration_band":
        conc = list(spec.values)
        head = f"{'protocol':<12}{'PUs':>6}"
        for c in conc:
            head += "  | " + " ".join(f"{b:>6}" for b in band_names) + f"  (all PUs in {c})"
        lines.append(head)
        counts = sorted({r["num_pus"] for r in agg})
        for algo in spec.algorithms:
            for n in counts:
                line = f"{algo:<12}{n:>6}"
                for c in conc:
                    r = next(x for x in agg if x["algorithm"] == algo and x["value"] == c and x["num_pus"] == n)
                    line += "  | " + " ".join(f"{100 * r[f'usage_{b}_mean']:>6.2f}" for b in band_names)
                    line += " " * (len(f"  (all PUs in {c})"))
                lines.append(line.rstrip())
    else:
        lines.append(f"{'algorithm':<12}{'value':>10}" + "".join(f"{b:>8}" for b in band_names))
        for r in agg:
            lines.append(f"{r['algorithm']:<12}{str(r['value']):>10}"
                         + "".join(f"{100 * r[f'usage_{b}_mean']:>8.2f}" for b in band_names))
    return "\n".join(lines) + "\n"
