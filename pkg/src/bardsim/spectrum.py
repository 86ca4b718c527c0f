"""Primary-user ON/OFF renewal processes and listen-before-talk availability.

Each PU timeline is generated once for the whole horizon by repeatedly
advancing its renewal process. Per (band, channel) the PU timelines are merged
into a step function of "which PUs are ON", stored as Python int bitsets so an
availability query is a bisect plus a couple of bitwise ANDs.
"""
from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, replace
from enum import IntEnum
from typing import Sequence

from .errors import DuplicateTransmissionError, TemporalOrderError
from .radio import BandProfile, distance


class PuState(IntEnum):
    OFF = 0
    ON = 1


@dataclass(frozen=True)
class PuProcess:
    pu_id: int
    position: tuple[float, float]
    band: int  # index into the band catalog
    channel: int
    state: PuState
    next_transition_time: float
    duration_bounds: tuple[float, float] = (1.0, 4.0)
    last_time: float = 0.0


def draw_sojourn(bounds, rng) -> float:
    return float(rng.uniform(bounds[0], bounds[1]))


def start_pu(pu_id, position, band, channel, rng, duration_bounds=(1.0, 4.0)) -> PuProcess:
    """Fresh process at t=0 with a fair-coin initial state."""
    state = PuState.ON if rng.random() < 0.5 else PuState.OFF
    return PuProcess(pu_id, tuple(position), band, channel, state,
                     draw_sojourn(duration_bounds, rng), tuple(duration_bounds), 0.0)


def advance_pu(process: PuProcess, t: float, rng) -> PuProcess:
    """Return the process state at time ``t``, applying every renewal up to ``t``.

    A transition scheduled exactly at ``t`` is applied.
    """
    if t < process.last_time:
        raise TemporalOrderError(f"PU {process.pu_id}: t={t} precedes last update {process.last_time}")
    state, nxt = process.state, process.next_transition_time
    while nxt <= t:
        state = PuState.OFF if state == PuState.ON else PuState.ON
        nxt += draw_sojourn(process.duration_bounds, rng)
    return replace(process, state=state, next_transition_time=nxt, last_time=t)


@dataclass
class PuTimeline:
    """Initial state plus the ordered transition instants of one PU."""

    process: PuProcess  # state at t=0
    transitions: list[float]

    def state_at(self, t: float) -> PuState:
        flips = bisect_right(self.transitions, t)
        return PuState(self.process.state ^ (flips & 1))

    def on_intervals(self, horizon: float) -> list[tuple[float, float]]:
        out = []
        on = self.process.state == PuState.ON
        start = 0.0
        for tt in self.transitions:
            if on:
                out.append((start, tt))
            on = not on
            start = tt
        if on and start < horizon:
            out.append((start, math.inf))
        return out


def build_timeline(process: PuProcess, horizon: float, rng) -> PuTimeline:
    transitions = []
    p = process
    while p.next_transition_time <= horizon:
        transitions.append(p.next_transition_time)
        p = advance_pu(p, p.next_transition_time, rng)
    return PuTimeline(process, transitions)


@dataclass(frozen=True)
class SuTransmission:
    transmitter: int
    band: int
    channel: int
    start: float
    end: float
    origin_position: tuple[float, float] = (0.0, 0.0)


class _ChannelOccupancy:
    __slots__ = ("times", "bits")

    def __init__(self, timelines: Sequence[tuple[int, PuTimeline]]):
        events = []
        bits = 0
        for bit, tl in timelines:
            if tl.process.state == PuState.ON:
                bits |= 1 << bit
            events.extend((tt, bit) for tt in tl.transitions)
        events.sort()
        self.times = [-math.inf]
        self.bits = [bits]
        for tt, bit in events:
            bits ^= 1 << bit
            if self.times[-1] == tt:
                self.bits[-1] = bits
            else:
                self.times.append(tt)
                self.bits.append(bits)

    def on_at(self, t: float) -> int:
        return self.bits[bisect_right(self.times, t) - 1]


class SpectrumWorld:
    """Channel occupancy seen by the secondary network.

    ``bands`` is the full band catalog; ``node_positions`` the SU positions.
    """

    def __init__(self, bands: Sequence[BandProfile], node_positions, timelines: Sequence[PuTimeline]):
        self.bands = list(bands)
        self.positions = [tuple(map(float, p)) for p in node_positions]
        self.timelines = list(timelines)
        n = len(self.positions)
        # pu_masks[b][c][node]: PUs on (b, c) whose interference radius covers node
        self.pu_masks = []
        # nb_masks[b][node]: SUs (incl. node itself) within range of node on band b
        self.nb_masks = []
        self.occupancy = []
        for b, prof in enumerate(self.bands):
            rng_b = prof.range
            per_channel = []
            occ = []
            for c in range(prof.num_channels):
                on_ch = [(k, tl) for k, tl in enumerate(self.timelines)
                         if tl.process.band == b and tl.process.channel == c]
                occ.append(_ChannelOccupancy(on_ch))
                masks = []
                for i in range(n):
                    m = 0
                    for k, tl in on_ch:
                        if distance(self.positions[i], tl.process.position) <= rng_b:
                            m |= 1 << k
                    masks.append(m)
                per_channel.append(masks)
            self.pu_masks.append(per_channel)
            self.occupancy.append(occ)
            nb = []
            for i in range(n):
                m = 0
                for j in range(n):
                    if distance(self.positions[i], self.positions[j]) <= rng_b:
                        m |= 1 << j
                nb.append(m)
            self.nb_masks.append(nb)
        self._active = [[[] for _ in range(p.num_channels)] for p in self.bands]
        self._keys = set()

    def pu_on_bits(self, b: int, c: int, t: float) -> int:
        return self.occupancy[b][c].on_at(t)

    def su_busy(self, i: int, j: int, b: int, c: int, t: float, duration: float = 0.0) -> bool:
        active = self._active[b][c]
        if not active:
            return False
        near = self.nb_masks[b][i] | self.nb_masks[b][j]
        t_end = t + duration
        for tx in active:
            if tx.end > t and (tx.start < t_end if duration > 0 else tx.start <= t):
                if near >> tx.transmitter & 1:
                    return True
        return False

    def channel_free(self, i: int, j: int, b: int, c: int, t: float, duration: float = 0.0) -> bool:
        masks = self.pu_masks[b][c]
        if self.occupancy[b][c].on_at(t) & (masks[i] | masks[j]):
            return False
        return not self.su_busy(i, j, b, c, t, duration)

    def find_common_channel(self, i: int, j: int, b: int, t: float, duration: float = 0.0):
        """Lowest-indexed channel of band ``b`` usable between ``i`` and ``j`` at ``t``.

        With ``duration > 0`` secondary transmissions are checked for overlap
        with the whole interval ``[t, t + duration)``; PUs are sensed at ``t``.
        Returns None when every channel is busy.
        """
        masks = self.pu_masks[b]
        occ = self.occupancy[b]
        for c in range(self.bands[b].num_channels):
            m = masks[c]
            if occ[c].on_at(t) & (m[i] | m[j]):
                continue
            if self.su_busy(i, j, b, c, t, duration):
                continue
            return c
        return None

    def register_transmission(self, tx: SuTransmission) -> None:
        key = (tx.transmitter, tx.band, tx.channel, tx.start, tx.end)
        if key in self._keys:
            raise DuplicateTransmissionError(f"transmission already registered: {tx}")
        self._keys.add(key)
        self._active[tx.band][tx.channel].append(tx)

    def purge(self, t: float) -> None:
        """Forget secondary transmissions that ended at or before ``t``."""
        for per_band in self._active:
            for c, active in enumerate(per_band):
                if active:
                    keep = [tx for tx in active if tx.end > t]
                    for tx in active:
                        if tx.end <= t:
                            self._keys.discard((tx.transmitter, tx.band, tx.channel, tx.start, tx.end))
                    per_band[c] = keep

    def active_transmissions(self):
        for per_band in self._active:
            for active in per_band:
                yield from active
