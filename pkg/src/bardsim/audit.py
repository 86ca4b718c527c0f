"""Post-hoc checks of a finished run.

These work from the exported artifacts only (event records, the scenario dump
and the traffic trace) and recompute geometry and PU activity from scratch, so
they do not share code paths with the engine's bitset occupancy tables.
"""
from __future__ import annotations

import math
from collections import defaultdict


def _pu_on(intervals, t):
    for a, b in intervals:
        if a <= t and (b is None or t < b):
            return True
    return False


def non_interference(records, scenario) -> list:
    """tx_success events that started while an in-range PU on the same channel was ON."""
    ranges = {b["band"]: b["range"] for b in scenario["bands"]}
    nodes = {n["id"]: (n["x"], n["y"]) for n in scenario["nodes"]}
    by_channel = defaultdict(list)
    for pu in scenario["pus"]:
        by_channel[(pu["band"], pu["channel"])].append(pu)
    bad = []
    for r in records:
        if r[1] != "tx_success":
            continue
        t, _, src, dst, band, ch = r[:6]
        reach = ranges[band]
        for pu in by_channel.get((band, ch), ()):
            near = any(math.hypot(nodes[k][0] - pu["x"], nodes[k][1] - pu["y"]) <= reach for k in (src, dst))
            if near and _pu_on(pu["on_intervals"], t):
                bad.append((r, pu["id"]))
    return bad


def conservation(records, generated_packets: int, in_flight: int) -> dict:
    c = defaultdict(int)
    for r in records:
        c[r[1]] += 1
    out = {
        "generated": generated_packets,
        "delivered": c["delivery"],
        "dropped_ttl": c["drop_ttl"],
        "dropped_full": c["drop_full"],
        "in_flight": in_flight,
    }
    out["balanced"] = generated_packets == c["delivery"] + c["drop_ttl"] + c["drop_full"] + in_flight
    return out


def time_budget(records, scenario) -> list:
    """(node, step, used) triples whose summed transmit time exceeds the step length."""
    tau = scenario["tau_delta"]
    t_d = {b["band"]: scenario["packet_bits"] / b["bit_rate"] for b in scenario["bands"]}
    used = defaultdict(float)
    for r in records:
        if r[1] == "tx_success":
            used[(r[2], int(math.floor(r[0] / tau + 1e-12)))] += t_d[r[4]]
    return [(n, k, u) for (n, k), u in sorted(used.items()) if u > tau + 1e-9]


def ordering(records) -> bool:
    return all(records[k][0] <= records[k + 1][0] for k in range(len(records) - 1))


def link_rule(records, scenario) -> list:
    ranges = {b["band"]: b["range"] for b in scenario["bands"]}
    nodes = {n["id"]: (n["x"], n["y"]) for n in scenario["nodes"]}
    return [r for r in records if r[1] == "tx_success"
            and math.hypot(nodes[r[2]][0] - nodes[r[3]][0], nodes[r[2]][1] - nodes[r[3]][1]) > ranges[r[4]]]


def late_deliveries(records, messages, ttl: float) -> list:
    created = {m.message_id: m.created_at for m in messages}
    return [r for r in records if r[1] == "delivery" and r[0] - created[r[7]] > ttl + 1e-9]


def audit(records, scenario, messages) -> dict:
    """Run every check; ``ok`` is True only if all pass."""
    report = {
        "interference": non_interference(records, scenario),
        "conservation": conservation(records, scenario["generated_packets"], scenario["in_flight"] or 0),
        "time_budget": time_budget(records, scenario),
        "ordered": ordering(records),
        "link_rule": link_rule(records, scenario),
        "late": late_deliveries(records, messages, scenario["ttl"]),
    }
    report["ok"] = (not report["interference"] and report["conservation"]["balanced"]
                    and not report["time_budget"] and report["ordered"]
                    and not report["link_rule"] and not report["late"])
    return report
