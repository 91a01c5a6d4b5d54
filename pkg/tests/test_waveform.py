import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import signal

from ultraranging.waveform import (
    AudioBuffer,
    DeviceId,
    FilterCoefficients,
    InvalidSpecError,
    WaveformKind,
    WaveformSpec,
    apply_ramp,
    design_bandpass,
    fnv1a64,
    generate_lfm_chirp,
    generate_pn_waveform,
    generate_waveform,
    hash_device_id,
)

ZERO_ID = "00000000-0000-0000-0000-000000000000"


# --- identifiers and hashing ----------------------------------------------


def test_fnv1a64_published_vectors():
    assert fnv1a64(b"") == 0xCBF29CE484222325
    assert fnv1a64(b"a") == 0xAF63DC4C8601EC8C
    assert fnv1a64(b"foobar") == 0x85944171F73967E8


def test_hash_all_zero_id_is_documented_constant():
    assert hash_device_id(ZERO_ID) == 0x88201FB960FF6465
    assert hash_device_id(ZERO_ID) == hash_device_id(DeviceId(ZERO_ID))


def test_hash_single_digit_perturbations_do_not_collide():
    rng = np.random.default_rng(5)
    hexdigits = "0123456789abcdef"
    for _ in range(100):
        base = DeviceId.from_int(int(rng.integers(2**62)) << 66 | int(rng.integers(2**62)))
        text = list(base.uuid)
        positions = [i for i, ch in enumerate(text) if ch != "-"]
        pos = positions[int(rng.integers(len(positions)))]
        text[pos] = hexdigits[(hexdigits.index(text[pos]) + 1 + int(rng.integers(15))) % 16]
        assert hash_device_id(base) != hash_device_id("".join(text))


@pytest.mark.parametrize(
    "bad", ["", "1234", "3f2b8c1e7d4a4b6e9a512c8d0e6f1a73", "3f2b8c1e-7d4a-4b6e-9a51-2c8d0e6f1a7g"]
)
def test_malformed_ids_rejected(bad):
    with pytest.raises(ValueError):
        DeviceId.parse(bad)


def test_id_equality_is_canonical():
    assert DeviceId("3F2B8C1E-7D4A-4B6E-9A51-2C8D0E6F1A73") == DeviceId("3f2b8c1e-7d4a-4b6e-9a51-2c8d0e6f1a73")


# --- spec validation ------------------------------------------------------


@pytest.mark.parametrize(
    "changes",
    [
        {"center_freq": 23900.0},  # band edge beyond Nyquist
        {"ramp": 0.05},  # 2*ramp == pulse_width
        {"tone_level": 1.0},
        {"sample_rate": 0.0},
    ],
)
def test_spec_invariants(changes):
    with pytest.raises(InvalidSpecError):
        dataclasses.replace(WaveformSpec.smartphone(), **changes)


# --- bandpass --------------------------------------------------------------


def test_bandpass_passband_and_stopband():
    bpf = design_bandpass(18500, 500, 48000, 511)
    assert -1.0 <= bpf.magnitude_db([18500], 48000)[0] <= 1e-9
    band = np.linspace(18250, 18750, 101)
    assert bpf.magnitude_db(band, 48000).min() >= -1.0
    assert bpf.magnitude_db([17000], 48000)[0] <= -40.0
    stop = np.r_[np.linspace(0, 18500 - 1500, 400), np.linspace(18500 + 1500, 24000, 200)]
    assert bpf.magnitude_db(stop, 48000).max() <= -40.0


def test_bandpass_is_linear_phase():
    bpf = design_bandpass(18500, 500, 48000, 511)
    assert bpf.group_delay_samples == 255
    np.testing.assert_allclose(bpf.taps, bpf.taps[::-1], atol=1e-12)


@pytest.mark.parametrize("kwargs", [{"taps": 510}, {"taps": 61}, {"center": 23900.0}])
def test_bandpass_rejects_bad_design(kwargs):
    args = {"center": 18500.0, "bandwidth": 500.0, "sample_rate": 48000.0, "taps": 511, **kwargs}
    with pytest.raises(InvalidSpecError):
        design_bandpass(**args)


def test_filter_coefficients_need_odd_symmetric_taps():
    with pytest.raises(InvalidSpecError):
        FilterCoefficients(np.ones(4))
    with pytest.raises(InvalidSpecError):
        FilterCoefficients(np.array([1.0, 2.0, 3.0]))


# --- PN waveform -----------------------------------------------------------


def test_pn_length_and_determinism(spec, ids):
    a = generate_pn_waveform(ids[0], spec)
    assert len(a) == 4800
    assert a.sample_rate == 48000
    assert np.array_equal(a.samples, generate_pn_waveform(ids[0], spec).samples)
    assert not np.array_equal(a.samples, generate_pn_waveform(ids[1], spec).samples)


def test_pn_is_not_clipped_and_ramped(spec, ids):
    x = generate_pn_waveform(ids[0], spec).samples
    assert np.max(np.abs(x)) <= 1.0
    assert x[0] == 0.0


def test_pn_spectral_peak_at_tone(spec, ids):
    x = generate_pn_waveform(ids[0], spec).samples
    mag = np.abs(np.fft.rfft(x, 19200))
    peak_bin = int(np.argmax(mag))
    assert abs(peak_bin - 18500 / 2.5) <= 2


def test_pn_spectral_confinement(spec, ids):
    x = generate_pn_waveform(ids[1], spec).samples
    power = np.abs(np.fft.rfft(x)) ** 2
    freqs = np.fft.rfftfreq(len(x), 1 / 48000)
    inside = np.abs(freqs - 18500) <= 500
    assert power[inside].sum() / power.sum() >= 0.95


def test_pn_autocorrelation_sharpness(spec, ids):
    # envelope of the autocorrelation: main peak at lag 0, 10 dB down beyond 50 lags
    x = generate_pn_waveform(ids[0], spec).samples
    env = np.abs(signal.hilbert(signal.correlate(x, x, "full")))
    mid = len(x) - 1
    assert int(np.argmax(env)) == mid
    far = np.r_[env[: mid - 50], env[mid + 51 :]]
    # the shared pilot tone leaves a broad ridge; the limit is checked on the tone-free part
    from ultraranging.detector import notch_tone

    y = notch_tone(AudioBuffer(x, 48000), 18500, 20).samples
    env_y = np.abs(signal.hilbert(signal.correlate(y, y, "full")))
    far_y = np.r_[env_y[: mid - 50], env_y[mid + 51 :]]
    assert 20 * np.log10(far_y.max() / env_y[mid]) <= -10.0
    assert far.max() < env[mid]


def test_pn_rejects_chirp_kind(ids):
    with pytest.raises(InvalidSpecError):
        generate_pn_waveform(ids[0], WaveformSpec.laptop())


# --- chirps ----------------------------------------------------------------


def test_laptop_chirp_length(laptop_spec):
    assert len(generate_lfm_chirp(laptop_spec)) == 9600


def _inst_freq(x):
    return np.diff(np.unwrap(np.angle(signal.hilbert(x)))) * 48000 / (2 * np.pi)


def test_up_down_chirps_are_distinct(laptop_spec):
    up = generate_lfm_chirp(laptop_spec).samples
    down = generate_lfm_chirp(dataclasses.replace(laptop_spec, kind=WaveformKind.LFM_DOWN)).samples
    # the down sweep's frequency track is the up sweep's, reversed in time
    f_up, f_down = _inst_freq(up)[600:-600], _inst_freq(down)[::-1][600:-600]
    assert np.median(np.abs(f_up - f_down)) < 5.0
    np.testing.assert_allclose(np.abs(signal.hilbert(up)), np.abs(signal.hilbert(down))[::-1], atol=0.02)
    auto = np.max(np.abs(signal.correlate(up, up, "full")))
    cross = np.max(np.abs(signal.correlate(up, down, "full")))
    assert 20 * np.log10(cross / auto) <= -10.0


def test_chirp_sweeps_the_band(laptop_spec):
    x = generate_lfm_chirp(laptop_spec).samples
    inst = _inst_freq(x)
    core = inst[1000:-1000]
    assert np.all(np.diff(core[::200]) > 0)
    assert 19000 - 50 < inst[600] < 19300
    assert 20700 < inst[-600] < 21000 + 50


def test_zero_bandwidth_chirp_is_a_tone():
    spec = WaveformSpec(pulse_width=0.1, center_freq=18500, bandwidth=0.0, ramp=0.0, kind="lfm_up")
    x = generate_lfm_chirp(spec).samples
    n = np.arange(len(x))
    np.testing.assert_allclose(x, np.cos(2 * np.pi * 18500 * n / 48000), atol=1e-9)


def test_generate_waveform_dispatch(spec, laptop_spec, ids):
    assert generate_waveform(ids[0], spec) == generate_pn_waveform(ids[0], spec)
    assert generate_waveform(None, laptop_spec) == generate_lfm_chirp(laptop_spec)
    with pytest.raises(InvalidSpecError):
        generate_waveform(None, spec)


# --- ramps -----------------------------------------------------------------


def test_ramp_zero_is_identity():
    buf = AudioBuffer(np.ones(100), 1000.0)
    assert apply_ramp(buf, 0.0) == buf


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 50))
def test_ramp_envelope(n_ramp):
    buf = AudioBuffer(np.ones(100), 1000.0)
    out = apply_ramp(buf, n_ramp / 1000.0).samples
    assert out[0] == 0.0
    np.testing.assert_array_equal(out[n_ramp : 100 - n_ramp], 1.0)
    assert np.dot(out, out) < buf.energy()


def test_ramp_too_long():
    with pytest.raises(InvalidSpecError):
        apply_ramp(AudioBuffer(np.ones(100), 1000.0), 0.051)


# --- buffers ---------------------------------------------------------------


def test_audio_buffer_invariants():
    buf = AudioBuffer([0.0, 0.5, -0.5, 1.0], 4.0)
    assert buf.duration == 1.0
    with pytest.raises(ValueError):
        AudioBuffer([0.0, np.nan], 48000)
    with pytest.raises(ValueError):
        AudioBuffer([0.0], 0)
    with pytest.raises(ValueError):
        buf.samples[0] = 1.0
