"""Run configuration: dataclasses with built-in defaults and a JSON loader."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from .agent import RlParams
from .errors import BardSimError, ConfigError
from .radio import DEFAULT_BANDS, BandId, BandProfile, RadioParams
from .topology import TrafficParams

ALGORITHMS = ("BARD", "DDSAAR")


@dataclass(frozen=True)
class BandSpec:
    band_id: str
    carrier_freq: float
    channel_bandwidth: float
    transmit_power: float
    num_channels: int = 6


@dataclass(frozen=True)
class ScenarioConfig:
    area: float = 2000.0  # side of the square field, m
    num_sus: int = 30
    num_sources: int = 3
    num_destinations: int = 3
    num_pus: int = 150
    pu_concentration: str | None = None
    pu_duration_bounds: tuple[float, float] = (1.0, 4.0)


@dataclass(frozen=True)
class EngineConfig:
    horizon: float = 480.0
    tau_delta: float = 1.0
    algorithm: str = "BARD"
    band_restriction: tuple[str, ...] | None = None
    seed: int = 0
    log_attempts: bool = False

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if self.tau_delta <= 0 or self.horizon < 0:
            raise ConfigError("horizon must be >= 0 and tau_delta > 0")
        steps = self.horizon / self.tau_delta
        if abs(steps - round(steps)) > 1e-9:
            raise ConfigError("horizon must be an integer multiple of tau_delta")

    @property
    def num_steps(self) -> int:
        return int(round(self.horizon / self.tau_delta))


def _default_bands():
    return tuple(BandSpec(b.value, f, bw, p) for b, f, bw, p in DEFAULT_BANDS)


@dataclass(frozen=True)
class SimConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    traffic: TrafficParams = field(default_factory=TrafficParams)
    radio: RadioParams = field(default_factory=RadioParams)
    rl: RlParams = field(default_factory=RlParams)
    engine: EngineConfig = field(default_factory=EngineConfig)
    bands: tuple[BandSpec, ...] = field(default_factory=_default_bands)

    def band_catalog(self) -> list[BandProfile]:
        return [BandProfile.build(b.band_id, b.carrier_freq, b.channel_bandwidth,
                                  b.transmit_power, b.num_channels, self.radio) for b in self.bands]

    def allowed_band_indices(self) -> list[int]:
        names = [b.band_id for b in self.bands]
        if self.engine.band_restriction is None:
            return list(range(len(names)))
        missing = [b for b in self.engine.band_restriction if b not in names]
        if missing:
            raise ConfigError(f"band_restriction {missing} not in catalog {names}")
        return [k for k, n in enumerate(names) if n in self.engine.band_restriction]

    def with_(self, **sections) -> "SimConfig":
        """Copy with per-section overrides, e.g. ``cfg.with_(engine={"seed": 3})``."""
        return from_dict(_merge(to_dict(self), sections))

    def label(self) -> str:
        algo = self.engine.algorithm
        if self.engine.band_restriction is not None:
            algo += ":" + "+".join(self.engine.band_restriction)
        return algo


_SECTIONS = {
    "scenario": ScenarioConfig,
    "traffic": TrafficParams,
    "radio": RadioParams,
    "rl": RlParams,
    "engine": EngineConfig,
}


def to_dict(cfg: SimConfig) -> dict:
    return json.loads(json.dumps(dataclasses.asdict(cfg)))


def config_hash(cfg: SimConfig, ignore_seed: bool = False) -> str:
    d = to_dict(cfg)
    if ignore_seed:
        d["engine"].pop("seed")
    return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:12]


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    names = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(names))
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {unknown}", key=unknown[0])
    kwargs = {}
    for k, v in data.items():
        if isinstance(v, list):
            v = tuple(v)
        kwargs[k] = v
    try:
        return cls(**kwargs)
    except (BardSimError, TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}", key=where.split("[")[0]) from exc


def from_dict(data: dict) -> SimConfig:
    if not isinstance(data, dict):
        raise ConfigError("configuration root must be an object")
    allowed = set(_SECTIONS) | {"bands"}
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(f"unknown top-level key(s) {unknown}", key=unknown[0])
    kwargs = {name: _build(cls, data.get(name, {}), name) for name, cls in _SECTIONS.items()}
    if "bands" in data:
        kwargs["bands"] = tuple(_build(BandSpec, b, f"bands[{k}]") for k, b in enumerate(data["bands"]))
        for b in kwargs["bands"]:
            try:
                BandId(b.band_id)
            except ValueError:
                raise ConfigError(f"bands: unknown band id {b.band_id!r}") from None
    cfg = SimConfig(**kwargs)
    validate(cfg)
    return cfg


def validate(cfg: SimConfig) -> None:
    try:
        catalog = cfg.band_catalog()
    except BardSimError as exc:
        raise ConfigError(f"bands: {exc}") from exc
    names = [b.band_id.value for b in catalog]
    if len(set(names)) != len(names):
        raise ConfigError("bands: duplicate band ids")
    sc = cfg.scenario
    if sc.pu_concentration is not None and sc.pu_concentration not in names:
        raise ConfigError(f"scenario: pu_concentration {sc.pu_concentration!r} not in {names}")
    if sc.num_sources + sc.num_destinations > sc.num_sus:
        raise ConfigError("scenario: num_sources + num_destinations exceeds num_sus", key="num_sus")
    if sc.num_pus < 0 or sc.area <= 0:
        raise ConfigError("scenario: num_pus must be >= 0 and area > 0")
    lo, hi = sc.pu_duration_bounds
    if not 0 < lo <= hi:
        raise ConfigError("scenario: pu_duration_bounds must satisfy 0 < lo <= hi")
    tr = cfg.traffic
    if tr.queue_capacity < 1 or tr.packet_size <= 0 or tr.ttl <= 0:
        raise ConfigError("traffic: queue_capacity, packet_size and ttl must be positive")
    for s in tr.message_sizes:
        if s <= 0 or (s / tr.packet_size) != int(s / tr.packet_size):
            raise ConfigError(f"traffic: message size {s} not a multiple of packet_size")
    cfg.allowed_band_indices()


def _line_of(text: str, key: str | None) -> int | None:
    if key is None:
        return None
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def load_config(path) -> SimConfig:
    """Load a JSON run configuration; missing keys take the built-in defaults."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not text.strip():
        return SimConfig()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: {exc.msg}") from exc
    try:
        return from_dict(data)
    except ConfigError as exc:
        line = _line_of(text, exc.key)
        loc = f"{path}:{line}" if line else str(path)
        raise ConfigError(f"{loc}: {exc}", key=exc.key) from exc
