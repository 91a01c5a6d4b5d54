"""Matched-filter arrival-time estimation.

Receiver order for one recording::

    own matched filter -> detect -> excise own pulse
      -> tone-based frequency recovery -> remote matched filter -> detect

For tone-bearing waveforms both matched filters see the buffer and the
reference through a narrow zero-phase notch at the pilot frequency. The
pilot carries no timing information, and its wide correlation ridge would
otherwise dominate the mean power that sets the threshold.

Detection thresholds the squared magnitude of the analytic matched-filter
output (the envelope power). The adaptive rule is: threshold at
``threshold_factor`` x mean power, take ``window`` samples from the first
crossing, compare the two largest maxima, keep the earlier one if they are
more than ``separation`` samples apart and otherwise the larger one.

A short noise pulse has autocorrelation sidelobes only 7-12 dB below its
peak, which the first-crossing rule would mistake for an early path. When
the series carries the reference's own autocorrelation, responses are first
extracted one at a time, strongest first, each removed together with its
sidelobes by subtracting the scaled and shifted autocorrelation. The rule
then runs over the extracted responses instead of the raw envelope.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np
from scipy import signal

from . import kernels
from .waveform import AudioBuffer

DEFAULT_GUARD = 240


class DetectionError(RuntimeError):
    """No matched-filter output sample crossed the adaptive threshold."""


class FrequencyOffsetError(RuntimeError):
    """The tone peak lies on the edge of the frequency search window."""


@dataclass(frozen=True)
class DetectorConfig:
    threshold_factor: float = 15.0
    window: int = 50
    separation: int = 15
    freq_search_halfwidth: float = 100.0
    tone_notch_width: float = 20.0
    max_paths: int = 8

    def __post_init__(self):
        if self.threshold_factor <= 1:
            raise ValueError("threshold_factor must exceed 1")
        if not 0 < self.separation < self.window:
            raise ValueError("need 0 < separation < window")
        if self.freq_search_halfwidth <= 0:
            raise ValueError("freq_search_halfwidth must be positive")
        if self.max_paths < 1:
            raise ValueError("max_paths must be at least 1")
        if self.tone_notch_width < 0:
            raise ValueError("tone_notch_width must be non-negative")


@dataclass(frozen=True)
class DetectionResult:
    arrival_index: int
    arrival_time: float
    peak_power: float
    noise_power: float
    snr_db: float
    first_crossing: int = -1


@dataclass(frozen=True, eq=False)
class CorrelationSeries:
    """Matched-filter output aligned so ``values[n]`` is the reference starting at sample n.

    ``kernel`` is the reference autocorrelation (odd length, zero lag in the
    middle) when the series came from :func:`matched_filter`.
    """

    values: np.ndarray
    sample_rate: float
    lag_zero_index: int = 0
    kernel: np.ndarray | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64, copy=True).reshape(-1)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if self.kernel is not None:
            k = np.array(self.kernel, dtype=np.float64, copy=True).reshape(-1)
            if len(k) % 2 == 0:
                raise ValueError("kernel length must be odd")
            k.setflags(write=False)
            object.__setattr__(self, "kernel", k)

    def __len__(self):
        return len(self.values)

    def analytic(self) -> np.ndarray:
        return signal.hilbert(self.values)

    def envelope_power(self) -> np.ndarray:
        return np.abs(self.analytic()) ** 2


def matched_filter(
    buf: AudioBuffer, reference: AudioBuffer, method: str = "fft"
) -> CorrelationSeries:
    """Sliding dot product of ``reference`` against ``buf``.

    ``method="direct"`` evaluates the definition with the compiled kernel;
    ``"fft"`` (default) uses FFT correlation and agrees to rounding error.
    """
    if buf.sample_rate != reference.sample_rate:
        raise ValueError(
            f"sample rate mismatch: {buf.sample_rate} vs {reference.sample_rate}"
        )
    if len(reference) > len(buf):
        raise ValueError("reference longer than buffer")
    if method == "direct":
        values = kernels.correlate_direct(buf.samples, reference.samples)
    elif method == "fft":
        padded = np.concatenate([buf.samples, np.zeros(len(reference) - 1)])
        values = signal.correlate(padded, reference.samples, mode="valid", method="fft")
    else:
        raise ValueError(f"unknown method {method!r}")
    kernel = signal.correlate(reference.samples, reference.samples, mode="full", method="fft")
    return CorrelationSeries(values, buf.sample_rate, kernel=kernel)


def extract_responses(
    corr: CorrelationSeries, threshold: float, max_paths: int, refine_passes: int = 3, reach: int = 8
) -> list[tuple[int, float]]:
    """Strongest-first ``(index, power)`` responses above ``threshold``.

    Each found response is removed from the analytic output together with
    its sidelobes by subtracting the complex-scaled, shifted analytic
    autocorrelation of the reference. Overlapping responses bias one
    another's peaks, so each is then re-located ``refine_passes`` times
    within ``reach`` samples with all the others subtracted.
    """
    if corr.kernel is None:
        raise ValueError("series has no reference autocorrelation")
    residual = corr.analytic()
    shape = signal.hilbert(corr.kernel)
    half = len(shape) // 2
    n = len(residual)

    def place(idx, amp, sign):
        lo, hi = max(idx - half, 0), min(idx + half + 1, n)
        residual[lo:hi] += sign * amp * shape[lo - idx + half : hi - idx + half]

    found = []
    for _ in range(max_paths):
        power = np.abs(residual) ** 2
        idx = int(np.argmax(power))
        if power[idx] <= threshold:
            break
        amp = residual[idx] / shape[half]
        found.append([idx, amp])
        place(idx, amp, -1.0)

    for _ in range(refine_passes if len(found) > 1 else 0):
        moved = False
        for path in found:
            place(path[0], path[1], 1.0)
            lo, hi = max(path[0] - reach, 0), min(path[0] + reach + 1, n)
            idx = lo + int(np.argmax(np.abs(residual[lo:hi])))
            moved |= idx != path[0]
            path[0], path[1] = idx, residual[idx] / shape[half]
            place(idx, path[1], -1.0)
        if not moved:
            break
    return [(idx, float(np.abs(amp * shape[half]) ** 2)) for idx, amp in found]


def detect_first_arrival(
    corr: CorrelationSeries, cfg: DetectorConfig = DetectorConfig()
) -> DetectionResult:
    if len(corr) == 0:
        raise ValueError("empty correlation series")
    power = corr.envelope_power()
    threshold = cfg.threshold_factor * float(power.mean())
    if corr.kernel is None:
        first, chosen = kernels.scan_first_arrival(power, threshold, cfg.window, cfg.separation)
    else:
        # run the same scan over a series holding only the extracted responses
        sparse = np.zeros(len(power))
        for idx, p in extract_responses(corr, threshold, cfg.max_paths):
            sparse[idx] = p
        first, chosen = kernels.scan_first_arrival(sparse, threshold, cfg.window, cfg.separation)
    if chosen < 0:
        raise DetectionError(
            f"no sample above {cfg.threshold_factor:g}x mean matched-filter power"
        )

    n = len(power)
    idx = int(chosen)
    keep = np.ones(n, dtype=bool)
    keep[max(idx - cfg.window, 0) : idx + cfg.window + 1] = False
    noise = float(power[keep].mean()) if keep.any() else float(power.mean())
    peak = float(power[idx])
    snr_db = 10 * math.log10(peak / noise) if noise > 0 and peak > 0 else math.inf
    return DetectionResult(
        arrival_index=idx,
        arrival_time=idx / corr.sample_rate,
        peak_power=peak,
        noise_power=noise,
        snr_db=snr_db,
        first_crossing=int(first),
    )


def excise(buf: AudioBuffer, arrival_index: int, ref_len: int, guard: int = DEFAULT_GUARD) -> AudioBuffer:
    """Zero samples ``arrival_index - guard`` up to (not including)
    ``arrival_index + ref_len + guard``, clamped to the buffer."""
    lo = max(arrival_index - guard, 0)
    hi = min(arrival_index + ref_len + guard, len(buf))
    out = buf.samples.copy()
    if hi > lo:
        out[lo:hi] = 0.0
    return buf.with_samples(out)


def estimate_freq_offset(
    buf: AudioBuffer, nominal_fc: float, cfg: DetectorConfig = DetectorConfig()
) -> float:
    """Distance in Hz from the DFT bin nearest ``nominal_fc`` to the peak bin.

    Zeroed (excised) samples stay in the transform; resolution is
    ``fs/len(buf)``. Measuring from the nominal's own bin means a tone that
    sits on the nominal frequency reports exactly zero at any buffer length.
    """
    n = len(buf)
    df = buf.sample_rate / n
    spectrum = np.abs(np.fft.rfft(buf.samples))
    freqs = np.fft.rfftfreq(n, 1.0 / buf.sample_rate)
    in_window = np.flatnonzero(np.abs(freqs - nominal_fc) <= cfg.freq_search_halfwidth)
    if len(in_window) < 3:
        raise FrequencyOffsetError("frequency search window narrower than three bins")
    k = int(np.argmax(spectrum[in_window]))
    if k == 0 or k == len(in_window) - 1:
        raise FrequencyOffsetError(
            f"tone peak at {freqs[in_window[k]]:.1f} Hz is at the edge of the "
            f"+/-{cfg.freq_search_halfwidth:g} Hz search window"
        )
    return float((in_window[k] - round(nominal_fc / df)) * df)


def shift_frequency(samples: np.ndarray, shift_hz: float, sample_rate: float) -> np.ndarray:
    """Single-sideband translation by ``shift_hz`` via the analytic signal."""
    if abs(shift_hz) >= sample_rate / 4:
        raise ValueError("frequency shift must be below fs/4")
    if shift_hz == 0:
        return np.array(samples, dtype=np.float64, copy=True)
    n = np.arange(len(samples), dtype=np.float64)
    analytic = signal.hilbert(samples)
    return np.real(analytic * np.exp(2j * np.pi * shift_hz * n / sample_rate))


def correct_freq_offset(buf: AudioBuffer, offset: float) -> AudioBuffer:
    """Translate band content by ``-offset`` Hz."""
    return buf.with_samples(shift_frequency(buf.samples, -offset, buf.sample_rate))


def welch_psd(buf: AudioBuffer, segment: int, overlap: float = 0.5):
    """One-sided Hann-window Welch estimate. Returns ``(freqs, density)``."""
    if segment > len(buf) or segment < 2:
        raise ValueError("segment must be between 2 and the buffer length")
    if not 0 <= overlap < 1:
        raise ValueError("overlap must be in [0, 1)")
    freqs, density = signal.welch(
        buf.samples,
        fs=buf.sample_rate,
        window="hann",
        nperseg=segment,
        noverlap=int(round(overlap * segment)),
        detrend=False,
        scaling="density",
    )
    return freqs, density


def notch_tone(buf: AudioBuffer, freq: float, width: float) -> AudioBuffer:
    """Zero-phase second-order notch of ``width`` Hz (-3 dB) at ``freq``; width 0 is a no-op."""
    if width == 0:
        return buf
    b, a = signal.iirnotch(freq, freq / width, buf.sample_rate)
    return buf.with_samples(signal.filtfilt(b, a, buf.samples))


def tone_suppressed_filter(
    buf: AudioBuffer, reference: AudioBuffer, tone_freq: float | None, cfg: DetectorConfig
) -> CorrelationSeries:
    """Matched filter with the pilot notched out of the buffer when ``tone_freq`` is set.

    Only the buffer is notched: the zero-phase notch then acts on the
    correlation as a whole, which keeps every response symmetric about its
    true lag. The autocorrelation kernel gets the same notch.
    """
    if tone_freq is None or cfg.tone_notch_width == 0:
        return matched_filter(buf, reference)
    corr = matched_filter(notch_tone(buf, tone_freq, cfg.tone_notch_width), reference)
    # pad so the notch's ringing is kept rather than folded back at the ends
    pad = len(reference) // 2
    kernel = np.concatenate([np.zeros(pad), corr.kernel, np.zeros(pad)])
    kernel = notch_tone(AudioBuffer(kernel, buf.sample_rate), tone_freq, cfg.tone_notch_width).samples
    return dataclasses.replace(corr, kernel=0.5 * (kernel + kernel[::-1]))


def detect_from(
    buf: AudioBuffer,
    reference: AudioBuffer,
    tone_freq: float | None,
    cfg: DetectorConfig,
    start: int = 0,
    stop: int | None = None,
) -> DetectionResult:
    """Detect ``reference`` in ``buf[start:stop]``; indices refer to the whole buffer.

    A slice that starts inside the recording is preceded by one reference
    length of zeros, so a pulse right at ``start`` still shows its full
    correlation response instead of a truncated one.
    """
    stop = len(buf) if stop is None else min(stop, len(buf))
    if not 0 <= start < stop:
        raise ValueError("search range outside the buffer")
    if (start, stop) == (0, len(buf)):
        return detect_first_arrival(tone_suppressed_filter(buf, reference, tone_freq, cfg), cfg)
    pad = len(reference) if start > 0 else 0
    segment = buf.with_samples(np.concatenate([np.zeros(pad), buf.samples[start:stop]]))
    det = detect_first_arrival(tone_suppressed_filter(segment, reference, tone_freq, cfg), cfg)
    shift = start - pad
    return dataclasses.replace(
        det,
        arrival_index=det.arrival_index + shift,
        arrival_time=(det.arrival_index + shift) / buf.sample_rate,
        first_crossing=det.first_crossing + shift,
    )


def detect_successive(
    buf: AudioBuffer,
    references: dict,
    cfg: DetectorConfig = DetectorConfig(),
    tone_freq: float | None = None,
    guard: int = DEFAULT_GUARD,
    segment: int | None = None,
) -> dict:
    """Detect several references in one recording, strongest first.

    Every pulse is detected with the other pulses excised, so another
    sender's cross-correlation cannot pose as an early path. Pulses already
    detected are excised at their arrival; the rest at their coarse peak,
    unless that peak overlaps the pulse being detected. With ``segment`` set
    the rule runs on ``segment`` samples centred on the coarse peak, which
    keeps the mean-power threshold comparable to a single record window in
    long recordings; tone-bearing segments also get their own frequency
    recovery, since each sender has its own offset. Missing pulses map to
    ``None``.
    """
    coarse = {}
    for key, ref in references.items():
        power = tone_suppressed_filter(buf, ref, tone_freq, cfg).envelope_power()
        coarse[key] = (float(np.max(power)), int(np.argmax(power)))
    order = sorted(references, key=lambda k: -coarse[k][0])

    found = {}
    for key in order:
        ref = references[key]
        at = coarse[key][1]
        isolated = buf
        for other in order:
            if other == key:
                continue
            if found.get(other) is not None:
                isolated = excise(isolated, found[other].arrival_index, len(references[other]), guard)
            elif other not in found and abs(coarse[other][1] - at) > len(ref) + guard:
                isolated = excise(isolated, coarse[other][1], len(references[other]), guard)
        lo = 0
        if segment is not None and segment < len(buf):
            lo = min(max(at - segment // 2, 0), len(buf) - segment)
            isolated = isolated.with_samples(isolated.samples[lo : lo + segment])
        try:
            if tone_freq is not None and segment is not None:
                offset = estimate_freq_offset(isolated, tone_freq, cfg)
                if offset:
                    isolated = correct_freq_offset(isolated, offset)
            det = detect_first_arrival(tone_suppressed_filter(isolated, ref, tone_freq, cfg), cfg)
        except (DetectionError, FrequencyOffsetError):
            found[key] = None
            continue
        idx = det.arrival_index + lo
        found[key] = dataclasses.replace(
            det,
            arrival_index=idx,
            arrival_time=idx / buf.sample_rate,
            first_crossing=det.first_crossing + lo,
        )
    return {k: found[k] for k in references}


@dataclass(frozen=True)
class PairDetection:
    """Own and remote detections from one recording."""

    own: DetectionResult
    remote: DetectionResult
    freq_offset: float


def detect_own_and_remote(
    buf: AudioBuffer,
    own_ref: AudioBuffer,
    remote_ref: AudioBuffer,
    cfg: DetectorConfig = DetectorConfig(),
    nominal_fc: float | None = None,
    guard: int = DEFAULT_GUARD,
    own_search_start: int = 0,
) -> PairDetection:
    """Full receive chain on one recording.

    Frequency recovery runs only when ``nominal_fc`` is given (tone-bearing
    waveforms); for chirps pass ``None``. The own pulse cannot precede the
    emission command, so its search begins at ``own_search_start``, which
    keeps an earlier remote pulse's cross-correlation out of the own search.
    """
    own = detect_from(buf, own_ref, nominal_fc, cfg, own_search_start)
    cleaned = excise(buf, own.arrival_index, len(own_ref), guard)
    offset = 0.0
    if nominal_fc is not None:
        offset = estimate_freq_offset(cleaned, nominal_fc, cfg)
        if offset != 0.0:
            cleaned = correct_freq_offset(cleaned, offset)
    remote = detect_first_arrival(
        tone_suppressed_filter(cleaned, remote_ref, nominal_fc, cfg), cfg
    )
    return PairDetection(own, remote, offset)
