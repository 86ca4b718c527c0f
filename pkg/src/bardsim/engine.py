"""Timestepped simulation loop for BARD and the route-following baseline.

Every step of length ``tau_delta``: purge finished secondary transmissions,
inject due traffic, expire TTLs, then let each node (ascending id) work
through its queue with a transmit-time budget of ``tau_delta`` seconds.
"""
from __future__ import annotations

import csv
import math
import random
from dataclasses import dataclass, field

import numpy as np

from . import agent as rl
from .baseline import build_route_table, build_stb_static
from .config import SimConfig
from .radio import distance
from .spectrum import SpectrumWorld, SuTransmission, build_timeline, start_pu
from .topology import NodeQueue, build_action_space, deploy, generate_traffic, packetize

EVENT_COLUMNS = ("time", "event_type", "node_from", "node_to", "band", "channel",
                 "packet_id", "message_id", "reason")
EVENT_TYPES = ("tx_attempt", "tx_success", "delivery", "drop_ttl", "drop_full", "no_channel")

MBIT = 1e6


class EventLog:
    """Append-only audit records; :meth:`finalize` orders them by time."""

    def __init__(self, records=None):
        self.records = list(records or [])

    def add(self, time, event_type, node_from, node_to="", band="", channel="",
            packet_id="", message_id="", reason=""):
        self.records.append((time, event_type, node_from, node_to, band, channel,
                             packet_id, message_id, reason))

    def finalize(self) -> "EventLog":
        self.records.sort(key=lambda r: r[0])  # stable: ties keep insertion order
        return self

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def of_type(self, event_type):
        return [r for r in self.records if r[1] == event_type]

    def write_csv(self, path, header_lines=()) -> None:
        with open(path, "w", newline="") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(EVENT_COLUMNS)
            for r in self.records:
                w.writerow((repr(r[0]),) + r[1:])

    @classmethod
    def read_csv(cls, path) -> "EventLog":
        records = []
        with open(path, newline="") as fh:
            rows = csv.reader(line for line in fh if not line.startswith("#"))
            header = next(rows)
            if tuple(header) != EVENT_COLUMNS:
                raise ValueError(f"{path}: unexpected event log columns {header}")
            for row in rows:
                t, et, nf, nt, band, ch, pid, mid, reason = row
                records.append((float(t), et, _int_or_blank(nf), _int_or_blank(nt), band,
                                _int_or_blank(ch), _int_or_blank(pid), _int_or_blank(mid), reason))
        return cls(records)


def _int_or_blank(s):
    return int(s) if s != "" else ""


@dataclass
class RunMetrics:
    algorithm: str
    seed: int
    num_messages: int
    delivered_messages: int
    mdr: float  # nan when no traffic was generated
    latency: float  # mean over delivered messages, nan if none
    band_usage: dict
    tx_success: int
    generated_packets: int
    delivered_packets: int
    dropped_ttl: int
    dropped_full: int
    in_flight: int
    timeseries: list = field(default_factory=list)  # (checkpoint, mdr, latency)

    @property
    def no_traffic(self) -> bool:
        return self.num_messages == 0


def compute_metrics(log: EventLog, messages, band_names, horizon: float = None,
                    bucket: float = 60.0, algorithm: str = "", seed: int = 0,
                    in_flight: int = 0) -> RunMetrics:
    """Aggregate delivery ratio, latency and band usage from an event log."""
    need = {m.message_id: m.num_packets for m in messages}
    created = {m.message_id: m.created_at for m in messages}
    got, last = {}, {}
    counts = dict.fromkeys(EVENT_TYPES, 0)
    usage = dict.fromkeys(band_names, 0)
    for r in log.records:
        et = r[1]
        counts[et] = counts.get(et, 0) + 1
        if et == "tx_success":
            usage[r[4]] += 1
        elif et == "delivery":
            mid = r[7]
            got[mid] = got.get(mid, 0) + 1
            last[mid] = max(last.get(mid, -math.inf), r[0])
    done = {mid: last[mid] for mid, k in got.items() if k == need[mid]}
    lat = [done[mid] - created[mid] for mid in done]
    n_tx = counts["tx_success"]
    usage = {b: (v / n_tx if n_tx else 0.0) for b, v in usage.items()}
    series = []
    if horizon:
        cp = bucket
        while cp <= horizon + 1e-9:
            born = [m.message_id for m in messages if m.created_at < cp]
            ok = [mid for mid in born if mid in done and done[mid] <= cp]
            series.append((cp, len(ok) / len(born) if born else math.nan,
                           float(np.mean([done[m] - created[m] for m in ok])) if ok else math.nan))
            cp += bucket
    n_msg = len(messages)
    return RunMetrics(
        algorithm=algorithm, seed=seed, num_messages=n_msg, delivered_messages=len(done),
        mdr=len(done) / n_msg if n_msg else math.nan,
        latency=float(np.mean(lat)) if lat else math.nan,
        band_usage=usage, tx_success=n_tx,
        generated_packets=sum(need.values()), delivered_packets=counts["delivery"],
        dropped_ttl=counts["drop_ttl"], dropped_full=counts["drop_full"], in_flight=in_flight,
        timeseries=series)


class Simulation:
    """One run: world, traffic, agents/routes and the event log."""

    def __init__(self, cfg: SimConfig, messages=None):
        self.cfg = cfg
        eng = cfg.engine
        self.bands = cfg.band_catalog()
        self.band_names = [b.band_id.value for b in self.bands]
        self.allowed = cfg.allowed_band_indices()
        ss = np.random.SeedSequence(eng.seed)
        s_deploy, s_pu, s_traffic, s_agents = ss.spawn(4)
        self.topology = topo = deploy(cfg.scenario, self.bands, np.random.default_rng(s_deploy))
        self.positions = [tuple(map(float, p)) for p in topo.positions]
        n = self.n = len(self.positions)

        pu_rng = np.random.default_rng(s_pu)
        horizon = eng.horizon + eng.tau_delta
        self.timelines = []
        for k in range(cfg.scenario.num_pus):
            proc = start_pu(k, topo.pu_positions[k], topo.pu_bands[k], topo.pu_channels[k],
                            pu_rng, cfg.scenario.pu_duration_bounds)
            self.timelines.append(build_timeline(proc, horizon, pu_rng))
        self.world = SpectrumWorld(self.bands, self.positions, self.timelines)

        self.sources = topo.sources
        self.destinations = topo.destinations
        self.dest_index = {d: k for k, d in enumerate(self.destinations)}
        if messages is None:
            tr_rng = np.random.default_rng(s_traffic)
            messages = []
            for s in self.sources:
                messages += generate_traffic(s, eng.horizon, tr_rng, self.destinations,
                                             cfg.traffic, first_id=len(messages))
        self.messages = sorted(messages, key=lambda m: (m.created_at, m.message_id))

        self.packet_bits = cfg.traffic.packet_size * MBIT
        self.c = cfg.radio.speed_of_light
        self.t_d = [self.packet_bits / b.bit_rate for b in self.bands]
        self.r_min = min(self.bands[b].bit_rate for b in self.allowed)
        self.dist = [[distance(p, q) for q in self.positions] for p in self.positions]
        self.actions = [build_action_space(i, self.positions, self.bands, self.allowed) for i in range(n)]
        # smallest transmit time any of node i's links could use
        self.min_td = [min((self.t_d[a.band] for a in acts), default=math.inf) for acts in self.actions]
        self.queues = [NodeQueue(cfg.traffic.queue_capacity) for _ in range(n)]
        self.neighbors = [[[a.next_node for a in acts if a.band == b] for b in range(len(self.bands))]
                          for acts in self.actions]
        self.num_sizes = len(cfg.traffic.message_sizes)
        self.width = 1 << len(self.bands)
        # progress[i][dest_idx][a] = (d(i, y) - d(j, y)) in km
        self.progress = [[[(self.dist[i][y] - self.dist[a.next_node][y]) / 1000.0 for a in self.actions[i]]
                          for y in self.destinations] for i in range(n)]

        self.log = EventLog()
        self.delivered_packets = 0
        self.budget_used = []
        self.agents = None
        self.routes = None
        if eng.algorithm == "BARD":
            n_states = rl.num_states(len(self.destinations), self.num_sizes, len(self.bands))
            seeds = s_agents.generate_state(n)
            self.agents = [rl.BardAgent(i, self.actions[i], n_states, cfg.rl, random.Random(int(seeds[i])))
                           for i in range(n)]
        else:
            self.edges = build_stb_static(self.positions, self.bands, self.packet_bits, self.c, self.allowed)
            self.routes = build_route_table(self.sources, self.destinations, self.edges, n)
        self._next_msg = 0
        self._next_pid = 0
        self._mask_key = None
        self._mask_val = 0
        self.done = False

    # -- sensing -----------------------------------------------------------

    def sense(self, i: int, t: float) -> int:
        """Bitmask of bands with a usable channel towards at least one neighbor."""
        if self._mask_key == (i, t):
            return self._mask_val
        w = self.world
        mask = 0
        for b in self.allowed:
            nbrs = self.neighbors[i][b]
            if not nbrs:
                continue
            occ = w.occupancy[b]
            pm = w.pu_masks[b]
            found = False
            for c in range(self.bands[b].num_channels):
                on = occ[c].on_at(t)
                m = pm[c]
                if on & m[i]:
                    continue
                busy = bool(w._active[b][c])
                for j in nbrs:
                    if on & m[j]:
                        continue
                    if busy and w.su_busy(i, j, b, c, t):
                        continue
                    found = True
                    break
                if found:
                    break
            if found:
                mask |= 1 << b
        self._mask_key = (i, t)
        self._mask_val = mask
        return mask

    def state_index(self, i: int, p, t: float) -> int:
        return (self.dest_index[p.destination] * self.num_sizes + p.size_bin) * self.width + self.sense(i, t)

    # -- packet movement ---------------------------------------------------

    def _drop(self, p, node, t, kind):
        self.log.add(t, kind, node, "", "", "", p.packet_id, p.message_id, kind[5:])

    def _transmit(self, p, i, j, b, c, t, td):
        self.world.register_transmission(SuTransmission(i, b, c, t, t + td, self.positions[i]))
        band = self.band_names[b]
        self.log.add(t, "tx_success", i, j, band, c, p.packet_id, p.message_id)
        p.hop_trace.append((i, b, t))
        arrival = t + td + self.dist[i][j] / self.c
        if arrival > p.ttl_deadline:
            self._drop(p, j, arrival, "drop_ttl")
        elif j == p.destination:
            self.delivered_packets += 1
            self.log.add(arrival, "delivery", i, j, band, c, p.packet_id, p.message_id)
        else:
            q = self.queues[j]
            if len(q) >= q.capacity:
                self._drop(p, j, arrival, "drop_full")
            else:
                p.ready_at = arrival
                q.items.append(p)

    # -- per-node step -----------------------------------------------------

    def step_node(self, i: int, tau: float) -> float:
        """Process node ``i``'s queue for one timestep; returns transmit time used."""
        q = self.queues[i]
        if not q.items:
            return 0.0
        if self.agents is not None:
            return self._step_bard(i, tau)
        return self._step_route(i, tau)

    def _step_bard(self, i, tau):
        cfg = self.cfg
        agent = self.agents[i]
        actions = self.actions[i]
        world = self.world
        queues = self.queues
        t_d = self.t_d
        log_attempts = cfg.engine.log_attempts
        rate = [b.bit_rate for b in self.bands]
        min_td = self.min_td[i]
        t = tau
        rem = cfg.engine.tau_delta
        keep = []
        stop = rem <= min_td
        for p in self.queues[i].items:
            if stop or p.ready_at > t:
                keep.append(p)
                continue
            if t > p.ttl_deadline:
                self._drop(p, i, t, "drop_ttl")
                continue
            if not actions:
                keep.append(p)
                continue
            didx = self.dest_index[p.destination]
            base = (didx * self.num_sizes + p.size_bin) * self.width
            s = base + self.sense(i, t)
            a = agent.choose(s)
            j, b = actions[a]
            td = t_d[b]
            n_j = len(queues[j])
            if td >= rem:
                # no time left for this choice: nothing sent, no delivery credit
                keep.append(p)
                r = rl.compute_reward(n_j, self.packet_bits, self.r_min, rate[b],
                                      self.progress[i][didx][a], 0, 0, cfg.rl)
                agent.learn(s, a, r, s)
                continue
            if log_attempts:
                self.log.add(t, "tx_attempt", i, j, self.band_names[b], "", p.packet_id, p.message_id)
            c = world.find_common_channel(i, j, b, t)
            if c is None:
                theta, phi = 0, 1
                keep.append(p)
                s_next = s
                if log_attempts:
                    self.log.add(t, "no_channel", i, j, self.band_names[b], "", p.packet_id,
                                 p.message_id, "no_channel")
            else:
                phi = 0
                theta = 1 if j == p.destination else 0
                self._transmit(p, i, j, b, c, t, td)
                t += td
                rem -= td
                s_next = None if theta else base + self.sense(i, t)
                stop = rem <= min_td
            r = rl.compute_reward(n_j, self.packet_bits, self.r_min, rate[b],
                                  self.progress[i][didx][a], theta, phi, cfg.rl)
            agent.learn(s, a, r, s_next)
        self.queues[i].replace(keep)
        return cfg.engine.tau_delta - rem

    def _step_route(self, i, tau):
        cfg = self.cfg
        world = self.world
        t_d = self.t_d
        log_attempts = cfg.engine.log_attempts
        min_td = self.min_td[i]
        t = tau
        rem = cfg.engine.tau_delta
        keep = []
        stop = rem <= min_td
        for p in self.queues[i].items:
            if stop or p.ready_at > t:
                keep.append(p)
                continue
            if t > p.ttl_deadline:
                self._drop(p, i, t, "drop_ttl")
                continue
            route = self.routes.get((self._source_of(p), p.destination), [])
            if not route:
                keep.append(p)
                continue
            j, b = route[p.route_pos]
            td = t_d[b]
            if td >= rem:
                keep.append(p)
                continue
            if log_attempts:
                self.log.add(t, "tx_attempt", i, j, self.band_names[b], "", p.packet_id, p.message_id)
            c = world.find_common_channel(i, j, b, t)
            if c is None:
                keep.append(p)
                if log_attempts:
                    self.log.add(t, "no_channel", i, j, self.band_names[b], "", p.packet_id,
                                 p.message_id, "no_channel")
                continue
            p.route_pos += 1
            self._transmit(p, i, j, b, c, t, td)
            t += td
            rem -= td
            stop = rem <= min_td
        self.queues[i].replace(keep)
        return cfg.engine.tau_delta - rem

    def _source_of(self, p):
        return self._msg_source[p.message_id]

    # -- main loop ---------------------------------------------------------

    def inject(self, tau: float) -> None:
        """Packetize every message created before the end of this step."""
        until = tau + self.cfg.engine.tau_delta
        msgs = self.messages
        while self._next_msg < len(msgs) and msgs[self._next_msg].created_at < until:
            m = msgs[self._next_msg]
            self._next_msg += 1
            q = self.queues[m.source]
            for p in packetize(m, self.cfg.traffic, self._next_pid):
                if len(q) >= q.capacity:
                    self._drop(p, m.source, m.created_at, "drop_full")
                else:
                    q.items.append(p)
            self._next_pid += m.num_packets

    def run(self) -> tuple[RunMetrics, EventLog]:
        if self.done:
            raise RuntimeError("simulation already run")
        eng = self.cfg.engine
        self._msg_source = {m.message_id: m.source for m in self.messages}
        for k in range(eng.num_steps):
            tau = k * eng.tau_delta
            self.world.purge(tau)
            self.inject(tau)
            for i, q in enumerate(self.queues):
                for p in q.expire(tau):
                    self._drop(p, i, tau, "drop_ttl")
            for i in range(self.n):
                used = self.step_node(i, tau)
                if used:
                    self.budget_used.append((i, tau, used))
        self.log.finalize()
        self.done = True
        return self.metrics(), self.log

    def in_flight(self) -> int:
        return sum(len(q) for q in self.queues)

    def metrics(self) -> RunMetrics:
        return compute_metrics(self.log, self.messages, self.band_names, self.cfg.engine.horizon,
                               algorithm=self.cfg.label(), seed=self.cfg.engine.seed,
                               in_flight=self.in_flight())

    # -- exports -----------------------------------------------------------

    def scenario_dict(self) -> dict:
        horizon = self.cfg.engine.horizon + self.cfg.engine.tau_delta
        return {
            "horizon": self.cfg.engine.horizon,
            "tau_delta": self.cfg.engine.tau_delta,
            "ttl": self.cfg.traffic.ttl,
            "bands": [{"band": b.band_id.value, "range": b.range, "bit_rate": b.bit_rate,
                       "num_channels": b.num_channels} for b in self.bands],
            "packet_bits": self.packet_bits,
            "nodes": [{"id": i, "role": r.value, "x": p[0], "y": p[1]}
                      for i, (r, p) in enumerate(zip(self.topology.roles, self.positions))],
            "pus": [{"id": k, "x": float(tl.process.position[0]), "y": float(tl.process.position[1]),
                     "band": self.band_names[tl.process.band], "channel": tl.process.channel,
                     "on_intervals": [[a, b if math.isfinite(b) else None]
                                      for a, b in tl.on_intervals(horizon)]}
                    for k, tl in enumerate(self.timelines)],
            "generated_packets": sum(m.num_packets for m in self.messages),
            "in_flight": self.in_flight() if self.done else None,
        }

    def write_traffic_csv(self, path) -> None:
        write_traffic_csv(self.messages, path)

    def write_qtables(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("node", "state_index", "action_index", "next_node", "band", "q_value"))
            for ag in self.agents or []:
                rows, cols = np.nonzero(ag.q)
                for s, a in zip(rows.tolist(), cols.tolist()):
                    act = ag.actions[a]
                    w.writerow((ag.node_id, s, a, act.next_node, self.band_names[act.band], repr(float(ag.q[s, a]))))

    def write_routes(self, path) -> None:
        write_route_csv(self.routes or {}, self.band_names, path)


def write_route_csv(routes, band_names, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("source", "destination", "hop_index", "next_node", "band"))
        for (s, d), hops in sorted(routes.items()):
            for k, h in enumerate(hops):
                w.writerow((s, d, k, h.next_node, band_names[h.band]))


def write_traffic_csv(messages, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("message_id", "source", "destination", "size", "created_at"))
        for m in messages:
            w.writerow((m.message_id, m.source, m.destination, repr(m.size), repr(m.created_at)))


def read_traffic_csv(path, message_sizes, packet_size):
    from .topology import Message, num_packets
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(line for line in fh if not line.startswith("#")):
            size = float(row["size"])
            out.append(Message(int(row["message_id"]), int(row["source"]), int(row["destination"]),
                               size, list(message_sizes).index(size), num_packets(size, packet_size),
                               float(row["created_at"])))
    return out


def run(cfg: SimConfig, messages=None) -> tuple[RunMetrics, EventLog]:
    return Simulation(cfg, messages).run()
