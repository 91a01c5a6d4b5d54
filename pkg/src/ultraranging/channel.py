"""Acoustic propagation and device-imperfection models for simulation."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .detector import shift_frequency
from .ranging import DEFAULT_SOUND_SPEED, SoundSpeed
from .waveform import AudioBuffer, FilterCoefficients, InvalidSpecError


@dataclass(frozen=True)
class SimRng:
    """Seeded random stream; equal ``(seed, stream)`` pairs give equal draws."""

    seed: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        return np.random.default_rng(
            [self.seed & 0xFFFFFFFFFFFFFFFF, self.stream & 0xFFFFFFFFFFFFFFFF]
        )

    def child(self, stream: int) -> "SimRng":
        return SimRng(self.seed, (self.stream * 1_000_003 + stream) & 0xFFFFFFFFFFFFFFFF)


@dataclass(frozen=True)
class ChannelModel:
    distance: float
    sound_speed: float = DEFAULT_SOUND_SPEED
    direct_gain: float = 1.0
    multipath: tuple[tuple[float, float], ...] = ()
    snr_db: float | None = None
    freq_offset: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "sound_speed", SoundSpeed(self.sound_speed))
        object.__setattr__(
            self, "multipath", tuple((float(d), float(g)) for d, g in self.multipath)
        )
        if self.distance < 0:
            raise InvalidSpecError("distance must be non-negative")
        if not math.isfinite(self.direct_gain):
            raise InvalidSpecError("direct_gain must be finite")
        for delay, gain in self.multipath:
            if not delay > 0:
                raise InvalidSpecError("multipath extra_delay must be positive")
            if not math.isfinite(gain):
                raise InvalidSpecError("multipath gain must be finite")
        if self.snr_db is not None and not math.isfinite(self.snr_db):
            raise InvalidSpecError("snr_db must be finite or None")

    @property
    def delay(self) -> float:
        return self.distance / self.sound_speed


@dataclass(frozen=True)
class DeviceModel:
    """Per-device latency, clock and hardware imperfections.

    ``loopback_delay`` lumps transmit and receive latency; ``tx_share`` of it
    is spent before emission and the rest between arrival and timestamping.
    """

    loopback_delay: float = 0.0
    clock_offset: float = 0.0
    timestamp_jitter_std: float = 0.0
    response: FilterCoefficients | None = None
    volume: float = 1.0
    tx_share: float = 0.5

    def __post_init__(self):
        if self.loopback_delay < 0:
            raise InvalidSpecError("loopback_delay must be non-negative")
        if self.timestamp_jitter_std < 0:
            raise InvalidSpecError("timestamp_jitter_std must be non-negative")
        if not 0 <= self.tx_share <= 1:
            raise InvalidSpecError("tx_share must be within [0, 1]")

    @property
    def tx_delay(self) -> float:
        return self.tx_share * self.loopback_delay

    @property
    def rx_delay(self) -> float:
        return self.loopback_delay - self.tx_delay


def inband_power(samples: np.ndarray, sample_rate: float, center: float, bandwidth: float) -> float:
    """Mean power of ``samples`` inside ``center +/- bandwidth/2``."""
    x = np.asarray(samples, dtype=np.float64)
    n = len(x)
    spec = np.abs(np.fft.rfft(x)) ** 2
    freqs = np.fft.rfftfreq(n, 1.0 / sample_rate)
    band = np.abs(freqs - center) <= bandwidth / 2
    return float(2.0 * spec[band].sum() / (n * n))


def _place(out: np.ndarray, x: np.ndarray, start: int, gain: float) -> bool:
    """Add ``gain*x`` at ``start``; returns True if anything fell outside ``out``."""
    lo = max(start, 0)
    hi = min(start + len(x), len(out))
    if hi > lo:
        out[lo:hi] += gain * x[lo - start : hi - start]
    return lo != start or hi != start + len(x)


def propagate(
    buf: AudioBuffer,
    ch: ChannelModel,
    start_offset: float,
    rng: SimRng | None = None,
    *,
    window: float | None = None,
    band: tuple[float, float] | None = None,
) -> AudioBuffer:
    """Delay, attenuate and sum the direct path and echoes, then add AWGN.

    Every path lands at ``round((start_offset + distance/c + extra_delay)*fs)``.
    The carrier offset translates the summed paths in the output's own time
    frame, so a receiver correcting on its buffer restores the phase. Noise is
    scaled so that the direct path's power inside ``band = (center,
    bandwidth)`` over the pulse, divided by the noise power in the same band,
    equals ``ch.snr_db``. The output spans ``window`` seconds (or just covers
    the last path); ``"truncated"`` is flagged when a path does not fit.
    """
    fs = buf.sample_rate
    x = buf.samples
    paths = [(0.0, ch.direct_gain)] + list(ch.multipath)
    starts = [int(round((start_offset + ch.delay + d) * fs)) for d, _ in paths]
    if window is None:
        length = max(starts) + len(x)
    else:
        length = int(round(window * fs))
    out = np.zeros(length)
    truncated = False
    for (_, gain), start in zip(paths, starts):
        truncated |= _place(out, x, start, gain)
    if ch.freq_offset:
        out = shift_frequency(out, ch.freq_offset, fs)

    if ch.snr_db is not None:
        if band is None:
            raise ValueError("band=(center, bandwidth) is required when snr_db is set")
        if rng is None:
            raise ValueError("an rng is required when snr_db is set")
        center, bandwidth = band
        sig = inband_power(ch.direct_gain * x, fs, center, bandwidth)
        noise_inband = sig / 10 ** (ch.snr_db / 10)
        sigma = math.sqrt(noise_inband * fs / (2.0 * bandwidth))
        out += sigma * rng.generator().standard_normal(length)

    flags = set(buf.flags)
    if truncated:
        flags.add("truncated")
    return AudioBuffer(out, fs, frozenset(flags))


def awgn_sigma(signal_inband_power: float, snr_db: float, sample_rate: float, bandwidth: float) -> float:
    """White-noise std giving ``snr_db`` against ``signal_inband_power`` in ``bandwidth``."""
    return math.sqrt(signal_inband_power / 10 ** (snr_db / 10) * sample_rate / (2.0 * bandwidth))


def default_device_response(sample_rate: float = 48000.0, taps: int = 101) -> FilterCoefficients:
    """Speaker+microphone stand-in: flat through 19 kHz, steep roll-off above 20 kHz."""
    cutoff = 19800.0
    m = np.arange(taps) - (taps - 1) / 2
    h = 2 * cutoff / sample_rate * np.sinc(2 * cutoff / sample_rate * m) * np.hamming(taps)
    h /= h.sum()
    return FilterCoefficients(0.5 * (h + h[::-1]))


def apply_device_response(buf: AudioBuffer, response: FilterCoefficients) -> AudioBuffer:
    return buf.with_samples(response.apply(buf.samples))


def apply_carrier_offset(buf: AudioBuffer, offset: float) -> AudioBuffer:
    """Translate band content by ``+offset`` Hz (the detector undoes it with ``-offset``)."""
    return buf.with_samples(shift_frequency(buf.samples, offset, buf.sample_rate))


def mix(components, window: float, fs: float) -> AudioBuffer:
    """Sum ``(AudioBuffer, start_offset_seconds)`` pairs into a ``window``-second buffer.

    No normalisation: samples beyond +/-1 are kept and flagged ``"clipped"``.
    """
    out = np.zeros(int(round(window * fs)))
    flags = set()
    for comp, offset in components:
        if offset < 0:
            raise ValueError("component offsets must be non-negative")
        if comp.sample_rate != fs:
            raise ValueError("component sample rate differs from mix rate")
        if _place(out, comp.samples, int(round(offset * fs)), 1.0):
            flags.add("truncated")
        flags |= comp.flags
    if np.any(np.abs(out) > 1.0):
        flags.add("clipped")
    return AudioBuffer(out, fs, frozenset(flags))


def add_buffers(*bufs: AudioBuffer) -> AudioBuffer:
    """Sample-wise sum of equal-length buffers, merging flags."""
    out = np.sum([b.samples for b in bufs], axis=0)
    flags = frozenset().union(*(b.flags for b in bufs))
    return AudioBuffer(out, bufs[0].sample_rate, flags)
