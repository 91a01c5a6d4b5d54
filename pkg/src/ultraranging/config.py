"""Scenario files: YAML in, validated dataclasses out.

Schema (every key optional except ``distances_m`` and ``devices``)::

    name: outdoor-clean
    mode: pair                # pair | broadcast
    seed: 12345               # master seed, 64-bit
    trials_per_distance: 30
    distances_m: [0.6096, 1.2192]
    waveform:  {kind, pulse_width, center_freq, sample_rate, bandwidth, ramp, tone_level}
    protocol:  {leader_tx_delay, follower_tx_delay, record_window,
                processing_budget, exchange_budget, ble_latency_max}
    broadcast: {leader_tx_delay, response_delay, slot_width, n_slots,
                ble_latency_max, margin, analysis_segment}
    detector:  {threshold_factor, window, separation, freq_search_halfwidth,
                tone_notch_width, max_paths}
    channel:   {sound_speed, direct_gain, snr_db, freq_offset,
                multipath: [{extra_delay, gain}, ...]}
    devices:   [{id, loopback_delay, clock_offset, timestamp_jitter_std,
                 volume, tx_share, response: none | default}, ...]
    randomize: {clock_offset_max, loopback_delay_range: [lo, hi]}

``randomize`` redraws each device's clock offset (uniform within
``+/-clock_offset_max``) and loopback delay per trial.
"""
from __future__ import annotations

import dataclasses
import importlib.resources
import math
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .channel import ChannelModel, DeviceModel, default_device_response
from .detector import DetectorConfig
from .protocol import Device, MultiDeviceConfig, ProtocolConfig
from .waveform import DeviceId, InvalidSpecError, WaveformSpec

PRESETS = ("laptop-mode", "outdoor-clean", "indoor-multipath", "outdoor-clean-plus-noise")


class ConfigError(ValueError):
    """A scenario field is missing, unknown or out of range; ``field`` names it."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class Randomization:
    clock_offset_max: float = 0.0
    loopback_delay_range: tuple | None = None


@dataclass(frozen=True)
class ScenarioConfig:
    devices: tuple
    distances: tuple
    name: str = "scenario"
    mode: str = "pair"
    seed: int = 0
    trials_per_distance: int = 1
    waveform: WaveformSpec = WaveformSpec()
    protocol: ProtocolConfig = ProtocolConfig()
    broadcast: MultiDeviceConfig = MultiDeviceConfig()
    detector: DetectorConfig = DetectorConfig()
    channel: ChannelModel = ChannelModel(1.0)
    randomize: Randomization = field(default_factory=Randomization)

    def channel_at(self, distance: float) -> ChannelModel:
        return dataclasses.replace(self.channel, distance=distance)


def _section(raw: dict, key: str, cls, path: str):
    data = raw.get(key) or {}
    if not isinstance(data, dict):
        raise ConfigError(path, "expected a mapping")
    names = {f.name for f in dataclasses.fields(cls)}
    for k in data:
        if k not in names:
            raise ConfigError(f"{path}.{k}", "unknown field")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(path, str(exc)) from None


def _number(value, path: str, *, positive=False, non_negative=False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(path, f"expected a finite number, got {value!r}")
    if positive and value <= 0:
        raise ConfigError(path, "must be positive")
    if non_negative and value < 0:
        raise ConfigError(path, "must be non-negative")
    return float(value)


_DEVICE_FIELDS = {"id", "loopback_delay", "clock_offset", "timestamp_jitter_std", "volume", "tx_share", "response"}


def _device(raw, index: int, spec: WaveformSpec) -> Device:
    path = f"devices[{index}]"
    if not isinstance(raw, dict):
        raise ConfigError(path, "expected a mapping")
    for k in raw:
        if k not in _DEVICE_FIELDS:
            raise ConfigError(f"{path}.{k}", "unknown field")
    if "id" not in raw:
        raise ConfigError(f"{path}.id", "required")
    try:
        dev_id = DeviceId.parse(str(raw["id"]))
    except ValueError as exc:
        raise ConfigError(f"{path}.id", str(exc)) from None
    response = raw.get("response", "none")
    if response not in ("none", "default", None):
        raise ConfigError(f"{path}.response", "expected 'none' or 'default'")
    kwargs = {k: _number(raw[k], f"{path}.{k}") for k in _DEVICE_FIELDS - {"id", "response"} if k in raw}
    try:
        model = DeviceModel(
            response=default_device_response(spec.sample_rate) if response == "default" else None,
            **kwargs,
        )
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from None
    return Device(dev_id, model)


def parse_scenario(raw: dict) -> ScenarioConfig:
    """Validate a decoded YAML mapping; raises :class:`ConfigError` on the first bad field."""
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "expected a mapping")
    known = {f.name for f in dataclasses.fields(ScenarioConfig)} - {"distances"} | {"distances_m"}
    for k in raw:
        if k not in known:
            raise ConfigError(k, "unknown field")

    wave = dict(raw.get("waveform") or {})
    try:
        spec = _section({"waveform": wave}, "waveform", WaveformSpec, "waveform")
    except InvalidSpecError as exc:
        raise ConfigError("waveform", str(exc)) from None
    protocol = _section(raw, "protocol", ProtocolConfig, "protocol")
    broadcast = _section(raw, "broadcast", MultiDeviceConfig, "broadcast")
    detector = _section(raw, "detector", DetectorConfig, "detector")

    ch_raw = dict(raw.get("channel") or {})
    if "distance" in ch_raw:
        raise ConfigError("channel.distance", "set distances with distances_m")
    taps = ch_raw.pop("multipath", None) or []
    if not isinstance(taps, list):
        raise ConfigError("channel.multipath", "expected a list")
    multipath = []
    for i, tap in enumerate(taps):
        if not isinstance(tap, dict) or set(tap) != {"extra_delay", "gain"}:
            raise ConfigError(f"channel.multipath[{i}]", "expected {extra_delay, gain}")
        multipath.append(
            (
                _number(tap["extra_delay"], f"channel.multipath[{i}].extra_delay", positive=True),
                _number(tap["gain"], f"channel.multipath[{i}].gain"),
            )
        )
    channel = _section(
        {"channel": {"distance": 1.0, "multipath": tuple(multipath), **ch_raw}},
        "channel",
        ChannelModel,
        "channel",
    )

    distances = raw.get("distances_m")
    if not isinstance(distances, list) or not distances:
        raise ConfigError("distances_m", "required non-empty list")
    distances = tuple(_number(d, f"distances_m[{i}]", non_negative=True) for i, d in enumerate(distances))

    devices_raw = raw.get("devices")
    if not isinstance(devices_raw, list) or not 2 <= len(devices_raw) <= 8:
        raise ConfigError("devices", "expected a list of 2 to 8 devices")
    devices = tuple(_device(d, i, spec) for i, d in enumerate(devices_raw))
    if len({d.id for d in devices}) != len(devices):
        raise ConfigError("devices", "device ids must be distinct")

    mode = raw.get("mode", "pair")
    if mode not in ("pair", "broadcast"):
        raise ConfigError("mode", "expected 'pair' or 'broadcast'")
    if mode == "pair" and len(devices) != 2:
        raise ConfigError("devices", "pair mode needs exactly two devices")
    if mode == "broadcast" and spec.kind.value != "pn_noise":
        raise ConfigError("waveform.kind", "broadcast mode needs pn_noise waveforms")

    seed = raw.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
        raise ConfigError("seed", "expected an integer in [0, 2**64)")
    trials = raw.get("trials_per_distance", 1)
    if isinstance(trials, bool) or not isinstance(trials, int) or trials < 1:
        raise ConfigError("trials_per_distance", "expected a positive integer")

    rnd_raw = dict(raw.get("randomize") or {})
    for k in rnd_raw:
        if k not in ("clock_offset_max", "loopback_delay_range"):
            raise ConfigError(f"randomize.{k}", "unknown field")
    rng_lb = rnd_raw.get("loopback_delay_range")
    if rng_lb is not None:
        if not isinstance(rng_lb, list) or len(rng_lb) != 2:
            raise ConfigError("randomize.loopback_delay_range", "expected [low, high]")
        lo = _number(rng_lb[0], "randomize.loopback_delay_range[0]", non_negative=True)
        hi = _number(rng_lb[1], "randomize.loopback_delay_range[1]", non_negative=True)
        if hi < lo:
            raise ConfigError("randomize.loopback_delay_range", "high must not be below low")
        rng_lb = (lo, hi)
    randomize = Randomization(
        _number(rnd_raw.get("clock_offset_max", 0.0), "randomize.clock_offset_max", non_negative=True),
        rng_lb,
    )

    if mode == "pair":
        try:
            protocol.validate_for(spec, max(distances), channel.sound_speed)
        except ValueError as exc:
            raise ConfigError("protocol.record_window", str(exc)) from None

    return ScenarioConfig(
        devices=devices,
        distances=distances,
        name=str(raw.get("name", "scenario")),
        mode=mode,
        seed=seed,
        trials_per_distance=trials,
        waveform=spec,
        protocol=protocol,
        broadcast=broadcast,
        detector=detector,
        channel=channel,
        randomize=randomize,
    )


def load_scenario(path: str | Path) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        try:
            raw = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError("<file>", f"invalid YAML: {exc}") from None
    return parse_scenario(raw)


def preset_text(name: str) -> str:
    if name not in PRESETS:
        raise ConfigError("preset", f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return importlib.resources.files("ultraranging").joinpath(f"presets/{name}.yaml").read_text("utf-8")


def load_preset(name: str) -> ScenarioConfig:
    return parse_scenario(yaml.safe_load(preset_text(name)))
