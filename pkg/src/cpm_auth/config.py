"""Scenario configuration: dataclasses, YAML loading and ``key=value`` overrides.

A config file is a YAML mapping whose sections mirror the dataclasses below.
Every field is optional; absent fields take the documented defaults, which
reproduce the 64-bin / 16-sample-CP / 3.125 MSps numerology at 2.45 GHz.
Unknown keys are rejected.
"""
from __future__ import annotations

import dataclasses
import math
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .channel import SpatialGeometry
from .detector import PCC_MODES, UpdatePolicy
from .ofdm import OfdmNumerology

CALIBRATE_FIRST = "calibrate-first"
ATTACK_KINDS = ("none", "interleaved", "burst", "replay")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


@dataclass(frozen=True)
class AttackSchedule:
    """Which packet slots Eve transmits in.

    ``interleaved`` spreads Eve packets evenly at ``eve_fraction`` (0.5 gives
    strict Bob/Eve alternation starting with Bob). ``burst`` hands slots
    ``[start, start + length)`` to Eve. ``replay`` alternates like
    ``interleaved`` at 0.5, with each Eve packet re-sending the payload of the
    last Bob packet at least ``delay_packets`` slots older.
    """

    kind: str = "interleaved"
    eve_fraction: float = 0.5
    start: int = 0
    length: int = 0
    delay_packets: int = 1

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise ValueError(f"kind must be one of {ATTACK_KINDS}, got {self.kind!r}")
        if not 0.0 <= self.eve_fraction <= 1.0:
            raise ValueError(f"eve_fraction must lie in [0, 1], got {self.eve_fraction}")
        if self.start < 0 or self.length < 0:
            raise ValueError("burst start and length must be >= 0")
        if self.delay_packets < 1:
            raise ValueError(f"delay_packets must be >= 1, got {self.delay_packets}")

    def eve_slots(self, n: int) -> np.ndarray:
        """Boolean mask over ``n`` packets, True where Eve transmits."""
        k = np.arange(n)
        if self.kind == "none":
            return np.zeros(n, dtype=bool)
        if self.kind == "interleaved":
            f = self.eve_fraction
            return np.floor((k + 1) * f) > np.floor(k * f)
        if self.kind == "burst":
            return (k >= self.start) & (k < self.start + self.length)
        return k % 2 == 1

    def replay_sources(self, n: int) -> np.ndarray:
        """Index of the Bob packet each Eve packet replays, -1 otherwise.

        Indices refer to the same ``n``-packet sequence; -2 means the
        bootstrap packet sent before the run.
        """
        src = np.full(n, -1, dtype=np.int64)
        if self.kind != "replay":
            return src
        eve = self.eve_slots(n)
        bob_idx = np.flatnonzero(~eve)
        for k in np.flatnonzero(eve):
            pos = np.searchsorted(bob_idx, k - self.delay_packets, side="right") - 1
            src[k] = bob_idx[pos] if pos >= 0 else -2
        return src


@dataclass(frozen=True)
class ChannelConfig:
    num_taps: int = 8
    pdp_decay: float | None = None

    def __post_init__(self):
        if self.num_taps < 1:
            raise ValueError(f"num_taps must be >= 1, got {self.num_taps}")
        if self.pdp_decay is not None and not self.pdp_decay > 0:
            raise ValueError(f"pdp_decay must be > 0, got {self.pdp_decay}")


@dataclass(frozen=True)
class DetectorConfig:
    """``e_th`` is a fixed threshold, or ``None`` to calibrate first.

    Calibration places Eve at ``calibration_d_be`` metres from Bob (``None``
    reuses the scenario geometry), keeping Bob's placement.
    """

    e_th: float | None = None
    threshold_rule: str = "half-gap"
    pcc_mode: str = "complex"
    calibration_d_be: float | None = 0.10

    def __post_init__(self):
        if self.e_th is not None and not (math.isfinite(self.e_th) and self.e_th >= 0):
            raise ValueError(f"e_th must be a finite value >= 0, got {self.e_th}")
        if self.threshold_rule not in ("half-gap", "midpoint"):
            raise ValueError(f"threshold_rule must be half-gap or midpoint, got {self.threshold_rule!r}")
        if self.pcc_mode not in PCC_MODES:
            raise ValueError(f"pcc_mode must be one of {sorted(PCC_MODES)}, got {self.pcc_mode!r}")
        if self.calibration_d_be is not None and not self.calibration_d_be >= 0:
            raise ValueError(f"calibration_d_be must be >= 0, got {self.calibration_d_be}")


@dataclass(frozen=True)
class ReceiverConfig:
    pn_seed: int = 1
    sync_threshold: float = 0.3
    cfo_floor: float = 0.3
    guard: int = 16
    bob_cfo_hz: float = 0.0
    eve_cfo_hz: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.sync_threshold <= 1.0:
            raise ValueError(f"sync_threshold must lie in [0, 1], got {self.sync_threshold}")
        if not 0.0 <= self.cfo_floor <= 1.0:
            raise ValueError(f"cfo_floor must lie in [0, 1], got {self.cfo_floor}")
        if self.guard < 0:
            raise ValueError(f"guard must be >= 0, got {self.guard}")


@dataclass(frozen=True)
class ScenarioConfig:
    geometry: SpatialGeometry = field(default_factory=SpatialGeometry)
    numerology: OfdmNumerology = field(default_factory=OfdmNumerology)
    snr_db: float = 20.0
    temporal_rho: float = 1.0
    num_packets: int = 10000
    attack: AttackSchedule = field(default_factory=AttackSchedule)
    seed: int = 0
    update_policy: str = UpdatePolicy.ON_ACCEPT.value
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    receiver: ReceiverConfig = field(default_factory=ReceiverConfig)

    def __post_init__(self):
        if self.num_packets < 1:
            raise ConfigError(f"num_packets: must be >= 1, got {self.num_packets}")
        if not 0.0 <= self.temporal_rho <= 1.0:
            raise ConfigError(f"temporal_rho: must lie in [0, 1], got {self.temporal_rho}")
        if math.isnan(self.snr_db) or self.snr_db == -math.inf:
            raise ConfigError(f"snr_db: must be finite or +inf, got {self.snr_db}")
        if self.update_policy not in {p.value for p in UpdatePolicy}:
            raise ConfigError(f"update_policy: must be on-accept or always, got {self.update_policy!r}")
        if self.geometry.carrier_freq != self.numerology.carrier_freq:
            raise ConfigError("numerology.carrier_freq: must equal geometry.carrier_freq")

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)


def _coerce(value, hint, path):
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)
    if origin in (typing.Union, types.UnionType):
        if value is None and type(None) in args:
            return None
        hint = next(a for a in args if a is not type(None))
    if dataclasses.is_dataclass(hint):
        if not isinstance(value, dict):
            raise ConfigError(f"{path}: expected a mapping, got {type(value).__name__}")
        return _build(hint, value, path)
    if hint is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false, got {value!r}")
        return value
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            if isinstance(value, float) and value.is_integer():
                return int(value)
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if hint is float:
        if isinstance(value, str):
            try:
                return float(value)
            except ValueError:
                raise ConfigError(f"{path}: expected a number, got {value!r}") from None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if hint is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    return value


def _build(cls, data: dict, path: str = ""):
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        where = f"{path}." if path else ""
        raise ConfigError(f"{where}{unknown[0]}: unknown key")
    kwargs = {}
    for name, value in data.items():
        full = f"{path}.{name}" if path else name
        if cls is DetectorConfig and name == "e_th" and value == CALIBRATE_FIRST:
            value = None
        kwargs[name] = _coerce(value, hints[name], full)
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        msg = str(exc)
        field_name = next((n for n in names if msg.startswith(n)), None)
        label = path if field_name is None else (f"{path}.{field_name}" if path else field_name)
        raise ConfigError(f"{label or cls.__name__}: {msg}") from None


def _sync_carrier(data: dict) -> dict:
    geo = data.get("geometry") or {}
    num = data.get("numerology") or {}
    if isinstance(geo, dict) and isinstance(num, dict):
        if "carrier_freq" in geo and "carrier_freq" not in num:
            data = {**data, "numerology": {**num, "carrier_freq": geo["carrier_freq"]}}
        elif "carrier_freq" in num and "carrier_freq" not in geo:
            data = {**data, "geometry": {**geo, "carrier_freq": num["carrier_freq"]}}
    return data


def config_from_dict(data: dict | None) -> ScenarioConfig:
    data = dict(data or {})
    return _build(ScenarioConfig, _sync_carrier(data))


def config_to_dict(config: ScenarioConfig) -> dict:
    out = dataclasses.asdict(config)
    if out["detector"]["e_th"] is None:
        out["detector"]["e_th"] = CALIBRATE_FIRST
    return out


def apply_overrides(data: dict, overrides) -> dict:
    """Apply ``key=value`` strings (dotted keys for sections) onto raw config data.

    Values are parsed as YAML scalars. Keys that are not config fields raise
    ConfigError.
    """
    data = _deepcopy(data or {})
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r}: expected key=value")
        key, raw = item.split("=", 1)
        key = key.strip()
        parts = key.split(".")
        _check_key(parts, key)
        value = yaml.safe_load(raw) if raw.strip() else None
        node = data
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"{key}: parent section is not a mapping")
        node[parts[-1]] = value
    return data


def _check_key(parts, key):
    cls = ScenarioConfig
    for i, part in enumerate(parts):
        fields = {f.name: f for f in dataclasses.fields(cls)}
        if part not in fields:
            raise ConfigError(f"{key}: unknown key")
        hint = typing.get_type_hints(cls)[part]
        if i < len(parts) - 1:
            if not dataclasses.is_dataclass(hint):
                raise ConfigError(f"{key}: {part} is not a section")
            cls = hint


def _deepcopy(obj):
    if isinstance(obj, dict):
        return {k: _deepcopy(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_deepcopy(v) for v in obj]
    return obj


def load_config_data(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"{path}: config file not found")
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: malformed YAML: {exc}") from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


def parse_config(path, overrides=()) -> ScenarioConfig:
    """Load, override and validate a scenario config file."""
    return config_from_dict(apply_overrides(load_config_data(path), overrides))


def dump_config(config: ScenarioConfig) -> str:
    return yaml.safe_dump(config_to_dict(config), sort_keys=False)
