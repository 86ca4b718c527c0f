import math

import numpy as np
import pytest

from bardsim.baseline import (Hop, StbEdge, build_route_table, build_stb_static, ldc_route, restrict_to_band,
                              route_cost)
from bardsim.config import SimConfig
from bardsim.radio import default_catalog

C = 299_792_458.0
BITS = 5e6


def brute_force_all(source, edges, n):
    """(min cost, hops) over every simple path from ``source`` to each node."""
    # a path only ever uses the cheapest of several parallel band edges
    cheapest = {}
    for e in edges:
        if e.weight < cheapest.get((e.src, e.dst), StbEdge(0, 0, 0, math.inf)).weight:
            cheapest[(e.src, e.dst)] = e
    adj = {}
    for e in cheapest.values():
        adj.setdefault(e.src, []).append(e)
    best = {}

    def dfs(u, seen, cost, hops):
        if u != source:
            best[u] = min(best.get(u, (math.inf, math.inf)), (cost, hops))
        for e in adj.get(u, ()):
            if e.dst not in seen:
                dfs(e.dst, seen | {e.dst}, cost + e.weight, hops + 1)

    dfs(source, {source}, 0.0, 0)
    return best


def brute_force(source, dest, edges, n):
    return brute_force_all(source, edges, n).get(dest, (math.inf, math.inf))


def test_parallel_edges_and_ranges():
    bands = default_catalog()
    e = build_stb_static([(0.0, 0.0), (0.0, 0.0)], bands, BITS, C)
    assert len([x for x in e if x.src == 0]) == 4 and len([x for x in e if x.src == 1]) == 4
    e = build_stb_static([(0.0, 0.0), (3000.0, 0.0)], bands, BITS, C)
    assert [(x.src, x.dst, x.band) for x in e] == [(0, 1, 0), (1, 0, 0)]
    e = build_stb_static([(0.0, 0.0), (100.0, 0.0), (9000.0, 0.0)], bands, BITS, C)
    assert not any(2 in (x.src, x.dst) for x in e)
    assert all(x.weight > 0 for x in e)


def test_direct_cbrs_beats_two_hop_tv():
    bands = default_catalog()
    pos = [(0.0, 0.0), (1500.0, 0.0), (750.0, 0.0)]
    edges = [e for e in build_stb_static(pos, bands, BITS, C) if e.band in (0, 3)]
    # the direct pair only via CBRS, the relay via TV
    edges = [e for e in edges if (e.band == 3) == ({e.src, e.dst} == {0, 1})]
    route = ldc_route(0, 1, edges, 3)
    assert route == [Hop(1, 3)]
    assert route_cost(0, route, edges) == pytest.approx(0.0608, abs=1e-4)
    two_hop = route_cost(0, [Hop(2, 0), Hop(1, 0)], edges)
    assert two_hop == pytest.approx(0.8102, abs=1e-3)  # 2 x 0.40505 s
    assert route_cost(0, route, edges) == brute_force(0, 1, edges, 3)[0]


def test_trivial_routes():
    edges = [StbEdge(0, 1, 2, 0.5)]
    assert ldc_route(0, 1, edges, 2) == [Hop(1, 2)]
    assert ldc_route(1, 0, edges, 2) == []
    assert ldc_route(0, 0, edges, 2) == []
    assert ldc_route(0, 3, edges, 4) == []


def test_tie_prefers_fewer_hops():
    edges = [StbEdge(0, 1, 0, 1.0), StbEdge(1, 2, 0, 1.0), StbEdge(0, 2, 0, 2.0)]
    assert ldc_route(0, 2, edges, 3) == [Hop(2, 0)]
    edges = [StbEdge(0, 2, 0, 1.0), StbEdge(2, 3, 0, 1.0), StbEdge(0, 1, 0, 1.0), StbEdge(1, 3, 0, 1.0)]
    assert ldc_route(0, 3, edges, 4) == [Hop(1, 0), Hop(3, 0)]


def test_matches_exhaustive_enumeration():
    rng = np.random.default_rng(0)
    bands = default_catalog()
    for _ in range(100):
        n = int(rng.integers(3, 9))
        pos = [tuple(p) for p in rng.uniform(0, 6000, (n, 2))]
        edges = build_stb_static(pos, bands, BITS, C)
        for s in range(n):
            oracle = brute_force_all(s, edges, n)
            for d in range(n):
                if s == d:
                    continue
                route = ldc_route(s, d, edges, n)
                cost, hops = oracle.get(d, (math.inf, math.inf))
                if math.isinf(cost):
                    assert route == []
                    continue
                nodes = [s] + [h.next_node for h in route]
                assert len(set(nodes)) == len(nodes) and nodes[-1] == d
                assert route_cost(s, route, edges) == pytest.approx(cost, rel=1e-12, abs=1e-15)
                assert len(route) == hops


def test_adding_nodes_never_increases_cost():
    rng = np.random.default_rng(5)
    bands = default_catalog()
    for _ in range(30):
        pos = [tuple(p) for p in rng.uniform(0, 5000, (6, 2))]
        small = build_stb_static(pos, bands, BITS, C)
        big_pos = pos + [tuple(p) for p in rng.uniform(0, 5000, (3, 2))]
        big = build_stb_static(big_pos, bands, BITS, C)
        for (s, d), r in build_route_table([0, 1], [4, 5], small, 6).items():
            if r:
                r2 = ldc_route(s, d, big, 9)
                assert route_cost(s, r2, big) <= route_cost(s, r, small) + 1e-15


def test_band_restriction_filters_edges():
    bands = default_catalog()
    rng = np.random.default_rng(2)
    pos = [tuple(p) for p in rng.uniform(0, 2000, (10, 2))]
    e = build_stb_static(pos, bands, BITS, C, allowed=[0])
    assert e and all(x.band == 0 for x in e)
    cfg = restrict_to_band(SimConfig(), "CBRS")
    assert cfg.engine.band_restriction == ("CBRS",)
    assert cfg.allowed_band_indices() == [3]
