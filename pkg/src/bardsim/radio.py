"""Band catalog and link-budget derived quantities.

Range comes from the close-in (CI) free-space reference distance path-loss
model, bit rate from Shannon-Hartley at the SNR implied by the receive
threshold.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence

from .errors import ParameterError

SPEED_OF_LIGHT = 299_792_458.0


class BandId(str, Enum):
    TV = "TV"
    ISM = "ISM"
    LTE = "LTE"
    CBRS = "CBRS"


@dataclass(frozen=True)
class RadioParams:
    path_loss_exponent: float = 2.8
    rx_power_threshold: float = -95.0  # dBm
    noise_floor: float = -100.0  # dBm
    reference_distance: float = 1.0  # m
    speed_of_light: float = SPEED_OF_LIGHT

    def __post_init__(self):
        if self.path_loss_exponent < 2:
            raise ParameterError("path_loss_exponent must be >= 2")
        if self.rx_power_threshold <= self.noise_floor:
            raise ParameterError("rx_power_threshold must exceed noise_floor")
        if self.reference_distance <= 0 or self.speed_of_light <= 0:
            raise ParameterError("reference_distance and speed_of_light must be positive")


@dataclass(frozen=True)
class BandProfile:
    """Per-band EM characteristics. ``range`` and ``bit_rate`` are derived."""

    band_id: BandId
    carrier_freq: float  # Hz
    channel_bandwidth: float  # Hz
    transmit_power: float  # W
    num_channels: int = 6
    range: float = field(default=float("nan"), compare=False)
    bit_rate: float = field(default=float("nan"), compare=False)

    def __post_init__(self):
        if not (self.carrier_freq > 0 and self.channel_bandwidth > 0 and self.transmit_power > 0):
            raise ParameterError(f"{self.band_id}: frequency, bandwidth and power must be positive")
        if self.num_channels < 1:
            raise ParameterError(f"{self.band_id}: need at least one channel")

    @classmethod
    def build(cls, band_id, carrier_freq, channel_bandwidth, transmit_power,
              num_channels=6, params: RadioParams | None = None) -> "BandProfile":
        """Construct a profile and fill in range and bit rate from ``params``."""
        params = params or RadioParams()
        raw = cls(BandId(band_id), float(carrier_freq), float(channel_bandwidth),
                  float(transmit_power), int(num_channels))
        return cls(raw.band_id, raw.carrier_freq, raw.channel_bandwidth, raw.transmit_power,
                   raw.num_channels, compute_range(raw, params), compute_bit_rate(raw, params))


def watts_to_dbm(p_w: float) -> float:
    return 10.0 * math.log10(p_w * 1e3)


def ci_path_loss_db(distance: float, freq: float, params: RadioParams) -> float:
    """CI model: FSPL(d0, f) + 10 n log10(d / d0)."""
    d0 = params.reference_distance
    fspl_d0 = 20.0 * math.log10(4.0 * math.pi * d0 * freq / params.speed_of_light)
    return fspl_d0 + 10.0 * params.path_loss_exponent * math.log10(distance / d0)


def compute_range(profile: BandProfile, params: RadioParams) -> float:
    """Distance at which received power drops to the receive threshold."""
    try:
        d0 = params.reference_distance
        fspl_d0 = 20.0 * math.log10(4.0 * math.pi * d0 * profile.carrier_freq / params.speed_of_light)
        budget = watts_to_dbm(profile.transmit_power) - params.rx_power_threshold - fspl_d0
        d = d0 * 10.0 ** (budget / (10.0 * params.path_loss_exponent))
    except (ValueError, OverflowError, ZeroDivisionError) as exc:
        raise ParameterError(f"cannot compute range for {profile.band_id}: {exc}") from exc
    if not math.isfinite(d) or d <= 0:
        raise ParameterError(f"non-finite range for {profile.band_id}")
    return d


def snr_at_threshold(params: RadioParams) -> float:
    return 10.0 ** ((params.rx_power_threshold - params.noise_floor) / 10.0)


def compute_bit_rate(profile: BandProfile, params: RadioParams) -> float:
    return profile.channel_bandwidth * math.log2(1.0 + snr_at_threshold(params))


def distance(a, b) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def link_exists(i, j, b, positions: Mapping | Sequence, profiles: Mapping) -> bool:
    """True iff nodes ``i`` and ``j`` are within the range of band ``b``."""
    try:
        pi, pj = positions[i], positions[j]
    except (IndexError, KeyError) as exc:
        raise KeyError(f"unknown node id in ({i}, {j})") from exc
    return distance(pi, pj) <= profiles[b].range


DEFAULT_BANDS = (
    # band, carrier Hz, channel bandwidth Hz, transmit power W
    (BandId.TV, 600e6, 6e6, 4.0),
    (BandId.ISM, 2.4e9, 20e6, 1.0),
    (BandId.LTE, 1.9e9, 20e6, 4.0),
    (BandId.CBRS, 3.5e9, 40e6, 10.0),
)


def default_catalog(params: RadioParams | None = None, num_channels: int = 6) -> list[BandProfile]:
    return [BandProfile.build(b, f, bw, p, num_channels, params) for b, f, bw, p in DEFAULT_BANDS]
