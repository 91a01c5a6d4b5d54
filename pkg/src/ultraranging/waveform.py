"""Deterministic transmit-waveform synthesis.

Every device derives its ranging pulse from its identifier alone:

    id --FNV-1a--> seed --splitmix64/Box-Muller--> white noise
       --> windowed-sinc bandpass --> peak-normalise to 1/sqrt(2)
       --> + tone at ``tone_level`` dBFS --> linear ramps

so two devices that know each other's identifier reproduce each other's
reference samples exactly.  LFM up/down chirps are provided for the
laptop-style sample-counting experiment.
"""
from __future__ import annotations

import enum
import functools
import math
import re
import uuid as _uuid
from dataclasses import dataclass, field

import numpy as np

from . import kernels

FNV64_OFFSET = 0xCBF29CE484222325
FNV64_PRIME = 0x100000001B3
NOISE_PEAK = 1.0 / math.sqrt(2.0)
DEFAULT_BANDPASS_TAPS = 511

_UUID_RE = re.compile(
    r"^[0-9a-f]{8}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{12}$"
)


class InvalidSpecError(ValueError):
    """A waveform or filter parameter set violates its invariants."""


class WaveformKind(str, enum.Enum):
    PN_NOISE = "pn_noise"
    LFM_UP = "lfm_up"
    LFM_DOWN = "lfm_down"


@dataclass(frozen=True, order=True)
class DeviceId:
    """128-bit device identifier in canonical 8-4-4-4-12 lowercase hex."""

    uuid: str

    def __post_init__(self):
        canonical = str(self.uuid).strip().lower()
        if not _UUID_RE.match(canonical):
            raise ValueError(f"malformed device id {self.uuid!r}")
        object.__setattr__(self, "uuid", canonical)

    @classmethod
    def parse(cls, text: str) -> "DeviceId":
        return cls(text)

    @classmethod
    def from_int(cls, value: int) -> "DeviceId":
        return cls(str(_uuid.UUID(int=value & ((1 << 128) - 1))))

    @property
    def bytes(self) -> bytes:
        return _uuid.UUID(self.uuid).bytes

    def __str__(self) -> str:
        return self.uuid


@dataclass(frozen=True)
class WaveformSpec:
    pulse_width: float = 0.100
    center_freq: float = 18500.0
    sample_rate: float = 48000.0
    bandwidth: float = 500.0
    ramp: float = 0.0025
    tone_level: float = -10.0
    kind: WaveformKind = WaveformKind.PN_NOISE

    def __post_init__(self):
        object.__setattr__(self, "kind", WaveformKind(self.kind))
        self.validate()

    def validate(self) -> None:
        if self.sample_rate <= 0 or self.pulse_width <= 0:
            raise InvalidSpecError("sample_rate and pulse_width must be positive")
        if self.bandwidth < 0 or self.center_freq <= 0:
            raise InvalidSpecError("center_freq must be positive, bandwidth non-negative")
        if self.center_freq + self.bandwidth / 2 >= self.sample_rate / 2:
            raise InvalidSpecError(
                f"band edge {self.center_freq + self.bandwidth / 2} Hz is not below "
                f"Nyquist {self.sample_rate / 2} Hz"
            )
        if self.center_freq - self.bandwidth / 2 <= 0:
            raise InvalidSpecError("lower band edge must be above 0 Hz")
        if self.ramp < 0 or 2 * self.ramp >= self.pulse_width:
            raise InvalidSpecError("ramps must satisfy 0 <= 2*ramp < pulse_width")
        if self.tone_level > 0:
            raise InvalidSpecError("tone_level is dBFS and must be <= 0")

    @property
    def num_samples(self) -> int:
        return int(round(self.pulse_width * self.sample_rate))

    @classmethod
    def smartphone(cls) -> "WaveformSpec":
        """Phone parameters: 100 ms, 18.5 kHz, 48 kHz, 500 Hz, 2.5 ms ramps."""
        return cls()

    @classmethod
    def laptop(cls, kind=WaveformKind.LFM_UP) -> "WaveformSpec":
        """Laptop chirp parameters: 200 ms, 20 kHz, 48 kHz, 2 kHz, 10 ms ramps."""
        return cls(
            pulse_width=0.200,
            center_freq=20000.0,
            sample_rate=48000.0,
            bandwidth=2000.0,
            ramp=0.010,
            kind=kind,
        )


@dataclass(frozen=True, eq=False)
class AudioBuffer:
    """Uniformly sampled real signal.

    ``flags`` carries simulation metadata such as ``"truncated"`` or
    ``"clipped"``; it does not take part in equality.
    """

    samples: np.ndarray
    sample_rate: float
    flags: frozenset = field(default=frozenset())

    def __post_init__(self):
        data = np.array(self.samples, dtype=np.float64, copy=True).reshape(-1)
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if not np.all(np.isfinite(data)):
            raise ValueError("samples must be finite")
        data.setflags(write=False)
        object.__setattr__(self, "samples", data)
        object.__setattr__(self, "flags", frozenset(self.flags))

    def __len__(self) -> int:
        return len(self.samples)

    def __eq__(self, other):
        if not isinstance(other, AudioBuffer):
            return NotImplemented
        return self.sample_rate == other.sample_rate and np.array_equal(
            self.samples, other.samples
        )

    __hash__ = None

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    def energy(self) -> float:
        return float(np.dot(self.samples, self.samples))

    def with_samples(self, samples, flags=None) -> "AudioBuffer":
        return AudioBuffer(
            samples, self.sample_rate, self.flags if flags is None else flags
        )


@dataclass(frozen=True, eq=False)
class FilterCoefficients:
    taps: np.ndarray

    def __post_init__(self):
        taps = np.array(self.taps, dtype=np.float64, copy=True).reshape(-1)
        if len(taps) % 2 == 0:
            raise InvalidSpecError("FIR tap count must be odd")
        if not np.allclose(taps, taps[::-1], rtol=0, atol=1e-12):
            raise InvalidSpecError("FIR taps must be symmetric (linear phase)")
        taps.setflags(write=False)
        object.__setattr__(self, "taps", taps)

    @property
    def group_delay_samples(self) -> int:
        return (len(self.taps) - 1) // 2

    def response(self, freqs, sample_rate: float) -> np.ndarray:
        """Complex frequency response evaluated at ``freqs`` (Hz)."""
        n = np.arange(len(self.taps))
        w = 2 * np.pi * np.atleast_1d(np.asarray(freqs, dtype=float)) / sample_rate
        return np.exp(-1j * np.outer(w, n)) @ self.taps

    def magnitude_db(self, freqs, sample_rate: float) -> np.ndarray:
        return 20 * np.log10(np.abs(self.response(freqs, sample_rate)) + 1e-300)

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Filter with the group delay trimmed so the output keeps ``x``'s timeline."""
        gd = self.group_delay_samples
        full = np.convolve(np.asarray(x, dtype=np.float64), self.taps)
        return full[gd : gd + len(x)]


def fnv1a64(data: bytes) -> int:
    h = FNV64_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV64_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def hash_device_id(device: DeviceId | str) -> int:
    """64-bit FNV-1a over the 16 raw UUID bytes (big-endian, RFC 4122 order)."""
    if not isinstance(device, DeviceId):
        device = DeviceId.parse(device)
    return fnv1a64(device.bytes)


def _lowpass_sinc(cutoff: float, sample_rate: float, taps: int) -> np.ndarray:
    m = np.arange(taps) - (taps - 1) / 2
    return 2 * cutoff / sample_rate * np.sinc(2 * cutoff / sample_rate * m)


def design_bandpass(
    center: float, bandwidth: float, sample_rate: float, taps: int = DEFAULT_BANDPASS_TAPS
) -> FilterCoefficients:
    """Hamming-windowed sinc bandpass.

    The design edges sit half a Hamming transition band (``1.65*fs/taps``)
    outside ``center +/- bandwidth/2`` so the nominal band stays within 1 dB.
    Gain is normalised to exactly 0 dB at ``center``.
    """
    if taps % 2 == 0:
        raise InvalidSpecError("taps must be odd")
    if taps < 63:
        raise InvalidSpecError("taps must be >= 63")
    if bandwidth <= 0:
        raise InvalidSpecError("bandwidth must be positive")
    half_transition = 1.65 * sample_rate / taps
    lo = center - bandwidth / 2 - half_transition
    hi = center + bandwidth / 2 + half_transition
    if lo <= 0 or hi >= sample_rate / 2:
        raise InvalidSpecError(
            f"band [{center - bandwidth / 2}, {center + bandwidth / 2}] Hz does not fit "
            f"below Nyquist {sample_rate / 2} Hz with {taps} taps"
        )
    h = _lowpass_sinc(hi, sample_rate, taps) - _lowpass_sinc(lo, sample_rate, taps)
    h *= np.hamming(taps)
    h = 0.5 * (h + h[::-1])
    coeffs = FilterCoefficients(h)
    gain = abs(coeffs.response(center, sample_rate)[0])
    return FilterCoefficients(h / gain)


def apply_ramp(buf: AudioBuffer, ramp: float) -> AudioBuffer:
    """Multiply the first/last ``round(ramp*fs)`` samples by 0->1 / 1->0 lines."""
    if ramp < 0:
        raise InvalidSpecError("ramp must be non-negative")
    n_ramp = int(round(ramp * buf.sample_rate))
    if 2 * n_ramp > len(buf):
        raise InvalidSpecError("ramps longer than half the buffer")
    if n_ramp == 0:
        return buf
    env = np.ones(len(buf))
    up = np.arange(n_ramp) / n_ramp
    env[:n_ramp] = up
    env[len(buf) - n_ramp :] = up[::-1]
    return buf.with_samples(buf.samples * env)


def _tone(num: int, freq: float, sample_rate: float, level_db: float) -> np.ndarray:
    # phase is formed per-sample in float64 (no accumulated increment)
    n = np.arange(num, dtype=np.float64)
    return 10 ** (level_db / 20) * np.cos(2 * np.pi * freq * n / sample_rate)


@functools.lru_cache(maxsize=256)
def _pn_samples(device: DeviceId, spec: WaveformSpec, taps: int) -> np.ndarray:
    n = spec.num_samples
    bpf = design_bandpass(spec.center_freq, spec.bandwidth, spec.sample_rate, taps)
    # one full filter length of extra draws so every output sample is steady-state
    white = kernels.gaussian_fill(hash_device_id(device), n + taps - 1)
    noise = np.convolve(white, bpf.taps, mode="valid")
    noise *= NOISE_PEAK / np.max(np.abs(noise))
    x = noise + _tone(n, spec.center_freq, spec.sample_rate, spec.tone_level)
    peak = np.max(np.abs(x))
    if peak > 1.0:
        x /= peak
    x = apply_ramp(AudioBuffer(x, spec.sample_rate), spec.ramp).samples
    assert np.max(np.abs(x)) <= 1.0
    x = x.copy()
    x.setflags(write=False)
    return x


def generate_pn_waveform(
    device: DeviceId | str, spec: WaveformSpec, taps: int = DEFAULT_BANDPASS_TAPS
) -> AudioBuffer:
    """Bandpass pseudonoise pulse with an embedded carrier tone.

    If noise peak plus tone amplitude would exceed full scale the composite is
    scaled back to a peak of exactly 1.0 before ramping.
    """
    if not isinstance(device, DeviceId):
        device = DeviceId.parse(device)
    if spec.kind is not WaveformKind.PN_NOISE:
        raise InvalidSpecError(f"generate_pn_waveform needs kind=pn_noise, got {spec.kind.value}")
    spec.validate()
    return AudioBuffer(_pn_samples(device, spec, taps), spec.sample_rate)


def generate_lfm_chirp(spec: WaveformSpec) -> AudioBuffer:
    """Unit-amplitude linear FM sweep over ``center +/- bandwidth/2`` with ramps."""
    if spec.kind not in (WaveformKind.LFM_UP, WaveformKind.LFM_DOWN):
        raise InvalidSpecError(f"generate_lfm_chirp needs an LFM kind, got {spec.kind.value}")
    spec.validate()
    n = spec.num_samples
    t = np.arange(n, dtype=np.float64) / spec.sample_rate
    sign = 1.0 if spec.kind is WaveformKind.LFM_UP else -1.0
    f0 = spec.center_freq - sign * spec.bandwidth / 2
    rate = sign * spec.bandwidth / spec.pulse_width
    phase = 2 * np.pi * (f0 * t + 0.5 * rate * t * t)
    return apply_ramp(AudioBuffer(np.cos(phase), spec.sample_rate), spec.ramp)


def generate_waveform(device: DeviceId | str | None, spec: WaveformSpec) -> AudioBuffer:
    """Dispatch on ``spec.kind``; ``device`` is ignored for chirps."""
    if spec.kind is WaveformKind.PN_NOISE:
        if device is None:
            raise InvalidSpecError("PN waveforms need a device id")
        return generate_pn_waveform(device, spec)
    return generate_lfm_chirp(spec)
