"""Per-node tabular Q-learning agent for joint next-hop and band selection."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import EncodingError, NumericError, ParameterError


@dataclass(frozen=True)
class RlParams:
    alpha: float = 0.2
    gamma: float = 0.6
    epsilon0: float = 1.0
    epsilon_decay: float = 0.95
    epsilon_min: float = 0.1
    eta1: float = 2.0
    eta2: float = 2.0
    eta3: float = 2.0
    delta: float = 10.0  # destination reward
    mu: float = 2.5  # relay penalty
    rho: float = 1.0  # weight of the link terms

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ParameterError("alpha must be in (0, 1]")
        if not 0 <= self.gamma <= 1:
            raise ParameterError("gamma must be in [0, 1]")
        if not 0 <= self.epsilon_min <= self.epsilon0:
            raise ParameterError("epsilon_min must be in [0, epsilon0]")
        if not 0 < self.epsilon_decay < 1:
            raise ParameterError("epsilon_decay must be in (0, 1)")


class StateKey(NamedTuple):
    dest_idx: int
    size_bin: int
    mask: int  # bit b set iff band b currently has a usable channel to some neighbor

    def index(self, num_sizes: int, num_bands: int) -> int:
        width = 1 << num_bands
        return (self.dest_idx * num_sizes + self.size_bin) * width + self.mask


def num_states(num_destinations: int, num_sizes: int, num_bands: int) -> int:
    return num_destinations * num_sizes * (1 << num_bands)


def encode_state(destination: int, size_bin: int, mask: int, dest_index: dict,
                 num_sizes: int, num_bands: int) -> StateKey:
    try:
        d = dest_index[destination]
    except KeyError:
        raise EncodingError(f"unknown destination {destination}") from None
    if not 0 <= size_bin < num_sizes or not 0 <= mask < (1 << num_bands):
        raise EncodingError(f"size bin {size_bin} or mask {mask} out of range")
    return StateKey(d, size_bin, mask)


def new_qtable(n_states: int, n_actions: int) -> np.ndarray:
    return np.zeros((n_states, n_actions))


def select_action(q: np.ndarray, s: int, epsilon: float, epsilon_min: float, rng) -> int:
    """Epsilon-greedy choice over the columns of ``q``; lowest index wins ties."""
    n = q.shape[1]
    if n == 0:
        raise ParameterError("empty action space")
    if rng.random() <= max(epsilon, epsilon_min):
        return min(int(rng.random() * n), n - 1)
    return int(q[s].argmax())


def queuing_delay(n_j: int, packet_size: float, r_min: float) -> float:
    """Worst-case time to drain ``n_j`` packets at the slowest band rate."""
    return n_j * packet_size / r_min


def compute_reward(n_j: int, packet_size: float, r_min: float, r_b: float,
                   progress_km: float, theta: int, phi: int, params: RlParams) -> float:
    """Reward for forwarding a packet to ``j`` over band ``b``.

    ``packet_size`` and the rates must share units (e.g. bits and bit/s).
    ``progress_km`` is d(i, dest) - d(j, dest) in kilometers.
    """
    if r_b <= 0 or r_min <= 0:
        raise ParameterError("bit rates must be positive")
    t_q = n_j * packet_size / r_min
    t_d = packet_size / r_b
    p = params
    return (p.eta1 * math.asinh(-t_q) + p.delta * (theta - phi) - p.mu * (1 - theta)
            + p.rho * (p.eta2 * math.asinh(-t_d) + p.eta3 * math.asinh(progress_km)))


def q_update(q: np.ndarray, s: int, a: int, r: float, s_next: int | None,
             params: RlParams) -> float:
    """In-place temporal-difference update; ``s_next=None`` marks a terminal step."""
    if not math.isfinite(r):
        raise NumericError(f"non-finite reward {r}")
    future = 0.0 if s_next is None or q.shape[1] == 0 else float(q[s_next].max())
    new = (1.0 - params.alpha) * q[s, a] + params.alpha * (r + params.gamma * future)
    q[s, a] = new
    return float(new)


class BardAgent:
    """Q-table, exploration rate and action space of one node."""

    def __init__(self, node_id: int, actions: Sequence, n_states: int, params: RlParams, rng):
        self.node_id = node_id
        self.actions = list(actions)
        self.params = params
        self.q = new_qtable(n_states, len(self.actions))
        self.epsilon = params.epsilon0
        self.rng = rng
        self.decisions = 0

    def choose(self, s: int) -> int:
        a = select_action(self.q, s, self.epsilon, self.params.epsilon_min, self.rng)
        self.epsilon *= self.params.epsilon_decay
        self.decisions += 1
        return a

    def learn(self, s: int, a: int, r: float, s_next: int | None) -> float:
        return q_update(self.q, s, a, r, s_next, self.params)
