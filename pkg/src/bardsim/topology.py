"""Node deployment, action spaces, bursty message traffic and node queues."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ConfigError
from .radio import BandProfile, distance


class Role(str, Enum):
    SOURCE = "source"
    RELAY = "relay"
    DESTINATION = "destination"


class Action(NamedTuple):
    next_node: int
    band: int  # index into the band catalog


@dataclass
class Topology:
    area: float
    positions: np.ndarray  # (num_sus, 2)
    roles: list[Role]
    pu_positions: np.ndarray  # (num_pus, 2)
    pu_bands: list[int]
    pu_channels: list[int]

    @property
    def sources(self) -> list[int]:
        return [i for i, r in enumerate(self.roles) if r is Role.SOURCE]

    @property
    def destinations(self) -> list[int]:
        return [i for i, r in enumerate(self.roles) if r is Role.DESTINATION]

    def distance(self, i: int, j: int) -> float:
        return distance(self.positions[i], self.positions[j])


def assign_roles(num_sus: int, num_sources: int, num_destinations: int) -> list[Role]:
    if min(num_sus, num_sources, num_destinations) < 0 or num_sources + num_destinations > num_sus:
        raise ConfigError(
            f"role split inconsistent: {num_sources} sources + {num_destinations} destinations"
            f" > {num_sus} SUs")
    return ([Role.SOURCE] * num_sources + [Role.DESTINATION] * num_destinations
            + [Role.RELAY] * (num_sus - num_sources - num_destinations))


def deploy(scenario, bands: Sequence[BandProfile], rng: np.random.Generator) -> Topology:
    """Uniform random placement of SUs and PUs over a square field.

    PUs draw their (band, channel) uniformly over every band and channel of
    the catalog, or over the channels of ``scenario.pu_concentration`` only.
    """
    roles = assign_roles(scenario.num_sus, scenario.num_sources, scenario.num_destinations)
    side = scenario.area
    positions = rng.uniform(0.0, side, size=(scenario.num_sus, 2))
    pu_positions = rng.uniform(0.0, side, size=(scenario.num_pus, 2))
    if scenario.pu_concentration is not None:
        names = [p.band_id.value for p in bands]
        conc = getattr(scenario.pu_concentration, "value", scenario.pu_concentration)
        if conc not in names:
            raise ConfigError(f"pu_concentration band {conc!r} not in catalog {names}")
        b = names.index(conc)
        slots = [(b, c) for c in range(bands[b].num_channels)]
    else:
        slots = [(b, c) for b, p in enumerate(bands) for c in range(p.num_channels)]
    picks = rng.integers(0, len(slots), size=scenario.num_pus)
    return Topology(float(side), positions, roles, pu_positions,
                    [slots[k][0] for k in picks], [slots[k][1] for k in picks])


def build_action_space(i: int, positions, bands: Sequence[BandProfile], allowed=None) -> list[Action]:
    """All (j, b) with j != i and d_ij within the range of band b.

    Ordered by ascending j, then catalog band order. ``allowed`` optionally
    restricts the usable band indices.
    """
    allowed = range(len(bands)) if allowed is None else sorted(allowed)
    out = []
    for j in range(len(positions)):
        if j == i:
            continue
        d = distance(positions[i], positions[j])
        for b in allowed:
            if d <= bands[b].range:
                out.append(Action(j, b))
    return out


@dataclass
class Message:
    message_id: int
    source: int
    destination: int
    size: float  # Mbit
    size_bin: int
    num_packets: int
    created_at: float


@dataclass(eq=False)
class Packet:
    packet_id: int
    message_id: int
    destination: int
    size_bin: int
    size: float
    created_at: float
    ttl_deadline: float
    ready_at: float = 0.0  # earliest time the holder may forward it
    hop_trace: list = field(default_factory=list)  # (node, band, time)
    route_pos: int = 0  # used by the route-following baseline


@dataclass(frozen=True)
class TrafficParams:
    burst_mean_interval: float = 15.0
    burst_size_range: tuple[int, int] = (5, 15)
    message_sizes: tuple[float, ...] = (5.0, 20.0, 40.0, 60.0)  # Mbit
    packet_size: float = 5.0  # Mbit
    ttl: float = 60.0
    queue_capacity: int = 200


def num_packets(size: float, packet_size: float) -> int:
    n = size / packet_size
    if n != int(n) or n < 1:
        raise ConfigError(f"message size {size} is not a multiple of packet size {packet_size}")
    return int(n)


def generate_bursts(horizon: float, rng, params: TrafficParams = TrafficParams()) -> list[tuple[float, int]]:
    """(burst time, burst length) pairs with exponential inter-arrivals, all < horizon."""
    out = []
    t = 0.0
    lo, hi = params.burst_size_range
    while True:
        t += float(rng.exponential(params.burst_mean_interval))
        if t >= horizon:
            return out
        out.append((t, int(rng.integers(lo, hi + 1))))


def generate_traffic(source: int, horizon: float, rng, destinations: Sequence[int],
                     params: TrafficParams = TrafficParams(), first_id: int = 0) -> list[Message]:
    if horizon <= 0:
        raise ConfigError("horizon must be positive")
    messages = []
    mid = first_id
    sizes = params.message_sizes
    for t, count in generate_bursts(horizon, rng, params):
        for _ in range(count):
            q = int(rng.integers(0, len(sizes)))
            dest = destinations[int(rng.integers(0, len(destinations)))]
            messages.append(Message(mid, source, dest, sizes[q], q,
                                    num_packets(sizes[q], params.packet_size), t))
            mid += 1
    return messages


def packetize(message: Message, params: TrafficParams, first_id: int) -> list[Packet]:
    return [Packet(first_id + k, message.message_id, message.destination, message.size_bin,
                   params.packet_size, message.created_at, message.created_at + params.ttl,
                   ready_at=message.created_at)
            for k in range(message.num_packets)]


class NodeQueue:
    """Bounded FIFO of packets with TTL expiry."""

    def __init__(self, capacity: int = 200):
        self.capacity = capacity
        self.items: deque[Packet] = deque()

    def __len__(self):
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    def expire(self, t: float) -> list[Packet]:
        """Remove and return every packet whose deadline is before ``t``."""
        if not any(p.ttl_deadline < t for p in self.items):
            return []
        dropped = [p for p in self.items if p.ttl_deadline < t]
        self.items = deque(p for p in self.items if p.ttl_deadline >= t)
        return dropped

    def enqueue(self, packet: Packet, t: float) -> str:
        if t > packet.ttl_deadline:
            return "drop_ttl"
        self.expire(t)
        if len(self.items) >= self.capacity:
            return "drop_full"
        self.items.append(packet)
        return "accept"

    def dequeue(self, t: float) -> Packet | None:
        self.expire(t)
        return self.items.popleft() if self.items else None

    def replace(self, packets) -> None:
        self.items = deque(packets)
