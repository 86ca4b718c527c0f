"""Centralized least-delay-cost routing over the static band multigraph.

With fixed node positions the space-time-band graph collapses to one static
multigraph: a parallel edge per band whose range covers the pair. Routes are
computed once and followed blindly; a blocked hop makes the packet wait.
"""
from __future__ import annotations

import heapq
from dataclasses import replace
from typing import NamedTuple, Sequence

from .radio import BandProfile, distance


class StbEdge(NamedTuple):
    src: int
    dst: int
    band: int
    weight: float  # seconds


class Hop(NamedTuple):
    next_node: int
    band: int


def edge_weight(d: float, profile: BandProfile, packet_bits: float, c: float) -> float:
    return packet_bits / profile.bit_rate + d / c


def build_stb_static(positions, bands: Sequence[BandProfile], packet_bits: float,
                     speed_of_light: float, allowed=None) -> list[StbEdge]:
    """One edge per (i, j, b) satisfying the range rule, ordered by (i, j, b)."""
    allowed = range(len(bands)) if allowed is None else sorted(allowed)
    edges = []
    n = len(positions)
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            d = distance(positions[i], positions[j])
            for b in allowed:
                if d <= bands[b].range:
                    edges.append(StbEdge(i, j, b, edge_weight(d, bands[b], packet_bits, speed_of_light)))
    return edges


def _adjacency(edges, n):
    adj = [[] for _ in range(n)]
    for e in edges:
        adj[e.src].append(e)
    return adj


def ldc_route(source: int, destination: int, edges: Sequence[StbEdge], num_nodes: int | None = None):
    """Least-delay-cost hop list from ``source`` to ``destination``.

    Dijkstra on labels (cost, hops, node sequence): ties on cost go to fewer
    hops, then to the lexicographically lowest node sequence. Returns ``[]``
    when unreachable or when source == destination.
    """
    if source == destination:
        return []
    n = num_nodes if num_nodes is not None else 1 + max(
        [source, destination] + [max(e.src, e.dst) for e in edges])
    adj = _adjacency(edges, n)
    best = {}
    heap = [(0.0, 0, (source,), ())]
    while heap:
        cost, hops, nodes, bands = heapq.heappop(heap)
        u = nodes[-1]
        if u in best:
            continue
        best[u] = (cost, nodes, bands)
        if u == destination:
            break
        for e in adj[u]:
            if e.dst in best or e.dst in nodes:
                continue
            # among parallel edges only the cheapest matters; ties -> lower band index
            heapq.heappush(heap, (cost + e.weight, hops + 1, nodes + (e.dst,), bands + (e.band,)))
    if destination not in best:
        return []
    _, nodes, bands = best[destination]
    return [Hop(v, b) for v, b in zip(nodes[1:], bands)]


def route_cost(source: int, route, edges) -> float:
    w = {(e.src, e.dst, e.band): e.weight for e in edges}
    total, u = 0.0, source
    for hop in route:
        total += w[(u, hop.next_node, hop.band)]
        u = hop.next_node
    return total


def build_route_table(sources, destinations, edges, num_nodes) -> dict:
    return {(s, d): ldc_route(s, d, edges, num_nodes) for s in sources for d in destinations if s != d}


def restrict_to_band(config, band):
    """Copy of ``config`` whose usable band set is ``{band}``."""
    band = getattr(band, "value", band)
    return replace(config, engine=replace(config.engine, band_restriction=(band,)))
