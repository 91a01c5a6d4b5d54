import uuid

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import ID_A, ID_B, load_fixture
from ultraranging.channel import ChannelModel, DeviceModel, SimRng
from ultraranging.protocol import (
    ControlMessage,
    Device,
    MessageKind,
    PairStatus,
    ProtocolConfig,
    SessionStatus,
    run_multi_device,
    run_pair,
    run_session,
    select_leader,
)
from ultraranging.ranging import range_loopback_form
from ultraranging.waveform import DeviceId, WaveformSpec, hash_device_id

SPEC = WaveformSpec.smartphone()
FS = SPEC.sample_rate
C = 346.0
SAMPLE_M = C / FS


def pair(offsets=(0.0, 0.0), loopbacks=(0.0, 0.0), jitter=0.0):
    leader, follower = select_leader(ID_A, ID_B)
    return (
        Device(leader, DeviceModel(loopbacks[0], offsets[0], jitter)),
        Device(follower, DeviceModel(loopbacks[1], offsets[1], jitter)),
    )


# --- configuration and messages ---------------------------------------------


def test_config_defaults_and_invariants():
    cfg = ProtocolConfig()
    assert (cfg.leader_tx_delay, cfg.follower_tx_delay, cfg.record_window) == (0.05, 0.25, 0.4)
    assert cfg.session_budget == pytest.approx(1.8)
    with pytest.raises(ValueError):
        ProtocolConfig(leader_tx_delay=0.3, follower_tx_delay=0.25)
    with pytest.raises(ValueError):
        ProtocolConfig().validate_for(SPEC, 20.0, C)
    ProtocolConfig().validate_for(SPEC, 3.6576, C)


def test_control_payload_must_be_finite():
    ControlMessage(MessageKind.MEASUREMENT_REPORT, ID_A, 0.2)
    with pytest.raises(ValueError):
        ControlMessage(MessageKind.MEASUREMENT_REPORT, ID_A, float("inf"))
    with pytest.raises(ValueError):
        ControlMessage(MessageKind.BROADCAST, ID_A, {"x": float("nan")})


# --- leader election ----------------------------------------------------------


def test_select_leader_definition_and_symmetry():
    leader, follower = select_leader(ID_A, ID_B)
    assert select_leader(ID_B, ID_A) == (leader, follower)
    assert hash_device_id(leader) < hash_device_id(follower)
    with pytest.raises(ValueError):
        select_leader(ID_A, ID_A)


def test_select_leader_random_pairs():
    rng = np.random.default_rng(11)
    for _ in range(1000):
        a = DeviceId(str(uuid.UUID(bytes=rng.bytes(16), version=4)))
        b = DeviceId(str(uuid.UUID(bytes=rng.bytes(16), version=4)))
        leader, follower = select_leader(a, b)
        assert {leader, follower} == {a, b}
        assert select_leader(b, a) == (leader, follower)


@settings(max_examples=50, deadline=None)
@given(st.uuids(), st.uuids())
def test_select_leader_property(a, b):
    if a == b:
        return
    a, b = DeviceId(str(a)), DeviceId(str(b))
    leader, _ = select_leader(a, b)
    assert leader == min((a, b), key=lambda d: (hash_device_id(d), d.uuid))


# --- two-device sessions ------------------------------------------------------


def test_noiseless_session_short_range():
    leader, follower = pair()
    res = run_session(leader, follower, ChannelModel(0.6), SPEC, rng=SimRng(1))
    assert res.status is SessionStatus.OK
    assert abs(res.range_leader.raw - 0.6) <= SAMPLE_M
    assert abs(res.range_follower.raw - 0.6) <= SAMPLE_M
    assert abs(res.range_leader.raw - res.range_follower.raw) <= 1e-9
    assert abs(res.oracle_range.raw - 0.6) <= 1e-9


def test_offsets_and_loopbacks_cancel():
    ch = ChannelModel(0.6)
    base = run_session(*pair(), ch, SPEC, rng=SimRng(2))
    for offsets, loopbacks in [((0.1, -0.1), (0.005, 0.05)), ((-0.1, 0.07), (0.05, 0.005)), ((0.03, 0.0), (0.02, 0.03))]:
        res = run_session(*pair(offsets, loopbacks), ch, SPEC, rng=SimRng(2))
        assert res.ok
        assert abs(res.oracle_range.raw - base.oracle_range.raw) <= 1e-9
        assert abs(res.range_leader.raw - base.range_leader.raw) <= SAMPLE_M + 1e-9


@settings(max_examples=40, deadline=None)
@given(
    st.floats(-0.1, 0.1), st.floats(-0.1, 0.1), st.floats(0.0, 0.05), st.floats(0.0, 0.05), st.floats(0.3, 3.6)
)
def test_oracle_timestamps_cancel_offsets(off_l, off_f, lb_l, lb_f, d):
    leader, follower = pair((off_l, off_f), (lb_l, lb_f))
    res = run_session(leader, follower, ChannelModel(d), SPEC, rng=SimRng(3))
    assert abs(range_loopback_form(res.oracle_leader, res.oracle_follower, C).raw - d) <= 1e-9


def test_oracle_consistency_with_jitter():
    jitter = 1e-4
    for seed in range(10):
        leader, follower = pair((0.02, -0.04), (0.01, 0.03), jitter)
        res = run_session(leader, follower, ChannelModel(2.0, snr_db=30.0), SPEC, rng=SimRng(seed))
        assert res.ok
        bound = SAMPLE_M + C * sum(abs(v) for v in res.jitter.values())
        assert abs(res.range_leader.raw - res.oracle_range.raw) <= bound + 1e-6 * C


def test_multipath_monte_carlo():
    expected = load_fixture("protocol_multipath.json")
    ch = ChannelModel(3.6, snr_db=20.0, multipath=((90 / FS, 0.7),))
    errors, ok = [], 0
    for seed in range(expected["trials"]):
        res = run_pair(*pair(), ch, SPEC, rng=SimRng(seed))
        if res.ok:
            ok += 1
            errors.append(abs(res.range_leader.raw - 3.6))
    assert ok / expected["trials"] >= expected["min_ok_fraction"]
    assert np.median(errors) <= expected["max_median_abs_error_m"]


def test_detection_failure_status():
    quiet = ChannelModel(1.0, direct_gain=0.0, snr_db=None)
    res = run_session(*pair(), quiet, SPEC, rng=SimRng(0))
    assert res.status is SessionStatus.DETECTION_FAILED
    assert res.range_leader is None and res.error


def test_out_of_window_status():
    leader, follower = pair(loopbacks=(0.0, 0.2))
    res = run_session(leader, follower, ChannelModel(1.0), SPEC, rng=SimRng(0))
    assert res.status is SessionStatus.OUT_OF_WINDOW


def test_trace_ordered_and_within_budget():
    cfg = ProtocolConfig()
    res = run_session(*pair(), ChannelModel(1.0), SPEC, cfg, rng=SimRng(4))
    times = [e.global_time for e in res.trace]
    assert times == sorted(times)
    assert times[-1] - times[0] <= cfg.session_budget
    names = {e.name for e in res.trace}
    assert {"start_sent", "leader_emit", "follower_emit", "exchange_complete"} <= names
    kinds = [m.kind for m in res.messages]
    assert kinds == [MessageKind.START, MessageKind.MEASUREMENT_REPORT, MessageKind.MEASUREMENT_REPORT]


def test_session_deterministic():
    ch = ChannelModel(2.0, snr_db=20.0, multipath=((0.002, 0.4),))
    a = run_session(*pair((0.01, 0.02), (0.01, 0.02), 1e-4), ch, SPEC, rng=SimRng(9))
    b = run_session(*pair((0.01, 0.02), (0.01, 0.02), 1e-4), ch, SPEC, rng=SimRng(9))
    assert a.range_leader == b.range_leader
    assert a.jitter == b.jitter
    assert [e.as_record() for e in a.trace] == [e.as_record() for e in b.trace]
    assert np.array_equal(a.recordings["leader"].samples, b.recordings["leader"].samples)


def test_position_swap_symmetry():
    ch = ChannelModel(1.5)
    models = (DeviceModel(0.01, 0.03), DeviceModel(0.03, -0.02))
    first = run_pair(Device(ID_A, models[0]), Device(ID_B, models[1]), ch, SPEC, rng=SimRng(5))
    swapped = run_pair(Device(ID_B, models[0]), Device(ID_A, models[1]), ch, SPEC, rng=SimRng(5))
    assert first.ok and swapped.ok
    assert abs(first.range_leader.raw - swapped.range_leader.raw) <= SAMPLE_M + 1e-9


def test_lfm_session():
    spec = WaveformSpec.laptop()
    cfg = ProtocolConfig(record_window=0.6)
    res = run_pair(*pair(), ChannelModel(1.2, snr_db=30.0), spec, cfg, rng=SimRng(6))
    assert res.ok
    assert abs(res.range_leader.raw - 1.2) <= 2 * SAMPLE_M


# --- one-to-many exchange -----------------------------------------------------


def _devices(n):
    ids = [ID_A, ID_B] + [DeviceId(str(uuid.UUID(int=0x1234 + k, version=4))) for k in range(n - 2)]
    return [Device(i, DeviceModel(0.01 + 0.005 * k, 0.02 * k)) for k, i in enumerate(ids)]


def _channels(n, d, **kw):
    return [[ChannelModel(d, **kw) for _ in range(n)] for _ in range(n)]


def test_multi_device_two_matches_session():
    devices = _devices(2)
    res = run_multi_device(devices, _channels(2, 1.5), SPEC, rng=SimRng(1))
    (p,) = res.pairs
    assert p.status is PairStatus.OK
    session = run_session(devices[0], devices[1], ChannelModel(1.5), SPEC, rng=SimRng(1))
    assert abs(p.estimate.raw - session.range_leader.raw) <= SAMPLE_M + 1e-9


def test_multi_device_three_at_two_meters():
    res = run_multi_device(_devices(3), _channels(3, 2.0), SPEC, rng=SimRng(2), backoffs=[0.0, 0.24])
    assert len(res.pairs) == 2
    for p in res.pairs:
        assert p.status is PairStatus.OK
        assert abs(p.estimate.raw - 2.0) <= SAMPLE_M
    assert res.broadcast.kind is MessageKind.BROADCAST
    assert len(res.broadcast.payload) == 2


def test_multi_device_collision():
    res = run_multi_device(_devices(3), _channels(3, 2.0), SPEC, rng=SimRng(3), backoffs=[0.12, 0.12])
    assert [p.status for p in res.pairs] == [PairStatus.COLLISION, PairStatus.COLLISION]


def test_multi_device_limits():
    with pytest.raises(ValueError):
        run_multi_device(_devices(2)[:1], _channels(1, 1.0), SPEC)
    with pytest.raises(ValueError):
        run_multi_device(_devices(2), _channels(2, 1.0), WaveformSpec.laptop())
