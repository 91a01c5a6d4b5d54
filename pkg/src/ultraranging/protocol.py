"""Event-level simulation of a leader/follower ranging session.

Global time starts at 0 when the leader issues the start command on the
control channel. A device with clock offset ``D`` reads local time
``g - D`` at global time ``g``. Both devices record ``record_window``
seconds starting at the moment they see the start command, so a sound that
reaches a device's microphone at global time ``g`` lands at buffer offset
``g + rx_delay - record_start``.

The simulator keeps the exact global arrival times as an oracle next to the
DSP-detected timestamps, which lets tests separate quantisation and
detector error from protocol arithmetic.
"""
from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .channel import (
    ChannelModel,
    DeviceModel,
    SimRng,
    add_buffers,
    apply_device_response,
    awgn_sigma,
    inband_power,
    mix,
    propagate,
)
from .detector import (
    DEFAULT_GUARD,
    DetectionError,
    DetectorConfig,
    FrequencyOffsetError,
    detect_from,
    detect_successive,
    detect_own_and_remote,
    excise,
)
from .ranging import (
    RangeEstimate,
    Role,
    TimingRecord,
    range_broadcast,
    range_from_differences,
    range_loopback_form,
)
from .waveform import (
    AudioBuffer,
    DeviceId,
    WaveformKind,
    WaveformSpec,
    generate_lfm_chirp,
    generate_pn_waveform,
    hash_device_id,
)

REPORT_RESOLUTION = 1e-6


class SessionStatus(str, enum.Enum):
    OK = "ok"
    DETECTION_FAILED = "detection_failed"
    OUT_OF_WINDOW = "out_of_window"


class MessageKind(str, enum.Enum):
    START = "start"
    MEASUREMENT_REPORT = "measurement_report"
    BROADCAST = "broadcast"


@dataclass(frozen=True)
class Device:
    id: DeviceId
    model: DeviceModel = DeviceModel()

    def __post_init__(self):
        if not isinstance(self.id, DeviceId):
            object.__setattr__(self, "id", DeviceId.parse(self.id))


@dataclass(frozen=True)
class ProtocolConfig:
    leader_tx_delay: float = 0.050
    follower_tx_delay: float = 0.250
    record_window: float = 0.400
    processing_budget: float = 0.600
    exchange_budget: float = 0.500
    ble_latency_max: float = 0.050

    def __post_init__(self):
        if not 0 <= self.leader_tx_delay < self.follower_tx_delay:
            raise ValueError("need 0 <= leader_tx_delay < follower_tx_delay")
        for name in ("record_window", "processing_budget", "exchange_budget"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.ble_latency_max < 0:
            raise ValueError("ble_latency_max must be non-negative")

    def validate_for(self, spec: WaveformSpec, max_distance: float, sound_speed: float) -> None:
        """The follower's pulse must fit in its own window at the largest distance."""
        need = self.follower_tx_delay + spec.pulse_width + max_distance / sound_speed
        if need >= self.record_window:
            raise ValueError(
                f"follower pulse ends at {need:.4f} s, beyond the "
                f"{self.record_window} s record window"
            )

    @property
    def session_budget(self) -> float:
        return (
            self.ble_latency_max
            + self.follower_tx_delay
            + self.record_window
            + self.processing_budget
            + self.exchange_budget
        )


@dataclass(frozen=True)
class ControlMessage:
    kind: MessageKind
    sender: DeviceId
    payload: object = None

    def __post_init__(self):
        values = []
        if isinstance(self.payload, dict):
            values = list(self.payload.values())
        elif self.payload is not None:
            values = [self.payload]
        if not all(math.isfinite(v) for v in values):
            raise ValueError("control payload must be finite")


@dataclass(frozen=True)
class TraceEvent:
    name: str
    global_time: float
    local_times: dict

    def as_record(self) -> dict:
        return {"event": self.name, "global_time": self.global_time, "local_times": dict(self.local_times)}


@dataclass
class EventTimeline:
    events: list = field(default_factory=list)

    def add(self, name: str, global_time: float, **local_times: float) -> None:
        self.events.append(TraceEvent(name, float(global_time), local_times))

    def ordered(self) -> list:
        return sorted(self.events, key=lambda e: e.global_time)


@dataclass
class SessionResult:
    status: SessionStatus
    leader_id: DeviceId
    follower_id: DeviceId
    true_distance: float
    range_leader: RangeEstimate | None
    range_follower: RangeEstimate | None
    leader_timing: TimingRecord | None
    follower_timing: TimingRecord | None
    oracle_leader: TimingRecord
    oracle_follower: TimingRecord
    detections: dict
    trace: list
    messages: list
    jitter: dict
    error: str = ""
    sound_speed: float = 346.0
    recordings: dict = field(default_factory=dict)

    @property
    def oracle_range(self) -> RangeEstimate:
        return range_loopback_form(self.oracle_leader, self.oracle_follower, self.sound_speed)

    @property
    def ok(self) -> bool:
        return self.status is SessionStatus.OK


def select_leader(a: DeviceId | str, b: DeviceId | str) -> tuple[DeviceId, DeviceId]:
    """Lower FNV-1a hash leads; equal hashes fall back to canonical string order."""
    a = a if isinstance(a, DeviceId) else DeviceId.parse(a)
    b = b if isinstance(b, DeviceId) else DeviceId.parse(b)
    if a == b:
        raise ValueError("a device cannot range against itself")
    key_a = (hash_device_id(a), a.uuid)
    key_b = (hash_device_id(b), b.uuid)
    return (a, b) if key_a < key_b else (b, a)


def reference_waveforms(
    leader: DeviceId, follower: DeviceId, spec: WaveformSpec
) -> tuple[AudioBuffer, AudioBuffer]:
    """Transmit references; chirp mode gives the leader the up-sweep."""
    if spec.kind is WaveformKind.PN_NOISE:
        return generate_pn_waveform(leader, spec), generate_pn_waveform(follower, spec)
    up = dataclasses.replace(spec, kind=WaveformKind.LFM_UP)
    down = dataclasses.replace(spec, kind=WaveformKind.LFM_DOWN)
    return generate_lfm_chirp(up), generate_lfm_chirp(down)


def _emitted(ref: AudioBuffer, model: DeviceModel) -> AudioBuffer:
    out = ref.with_samples(ref.samples * model.volume)
    if model.response is not None:
        out = apply_device_response(out, model.response)
    return out


def _quantize_report(value: float) -> float:
    return round(value / REPORT_RESOLUTION) * REPORT_RESOLUTION


def _record(
    own_tx: AudioBuffer,
    own_offset: float,
    remote_tx: AudioBuffer,
    remote_offset: float,
    ch: ChannelModel,
    window: float,
    spec: WaveformSpec,
    rng: SimRng,
) -> AudioBuffer:
    fs = spec.sample_rate
    own = mix([(own_tx, own_offset)], window, fs) if own_offset >= 0 else AudioBuffer(
        np.zeros(int(round(window * fs))), fs, frozenset({"truncated"})
    )
    remote = propagate(
        remote_tx,
        ch,
        remote_offset,
        rng,
        window=window,
        band=(spec.center_freq, max(spec.bandwidth, 1.0)),
    )
    return add_buffers(own, remote)


def run_session(
    leader: Device,
    follower: Device,
    ch: ChannelModel,
    spec: WaveformSpec,
    cfg: ProtocolConfig = ProtocolConfig(),
    dcfg: DetectorConfig = DetectorConfig(),
    rng: SimRng = SimRng(0),
    *,
    guard: int = DEFAULT_GUARD,
) -> SessionResult:
    """Simulate one start-command / two-pulse / report-exchange session."""
    gen = rng.child(1).generator()
    ble_delay = float(gen.uniform(0.0, cfg.ble_latency_max)) if cfg.ble_latency_max > 0 else 0.0
    fs = spec.sample_rate
    c = float(ch.sound_speed)
    tof = ch.delay
    lm, fm = leader.model, follower.model

    rec_start_l = 0.0
    rec_start_f = ble_delay
    local_rec_l = rec_start_l - lm.clock_offset
    local_rec_f = rec_start_f - fm.clock_offset
    t1_nominal = local_rec_l + cfg.leader_tx_delay
    t3_nominal = local_rec_f + cfg.follower_tx_delay
    emit_l = lm.clock_offset + t1_nominal + lm.tx_delay
    emit_f = fm.clock_offset + t3_nominal + fm.tx_delay

    # exact buffer offsets (seconds) of each pulse start
    off_l_own = emit_l + lm.rx_delay - rec_start_l
    off_l_remote = emit_f + tof + lm.rx_delay - rec_start_l
    off_f_own = emit_f + fm.rx_delay - rec_start_f
    off_f_remote = emit_l + tof + fm.rx_delay - rec_start_f

    oracle_leader = TimingRecord(
        Role.LEADER, t1_nominal, local_rec_l + off_l_own, local_rec_l + off_l_remote, lm.clock_offset
    )
    oracle_follower = TimingRecord(
        Role.FOLLOWER, t3_nominal, local_rec_f + off_f_own, local_rec_f + off_f_remote, fm.clock_offset
    )

    def g2l(g):
        return {"leader": g - lm.clock_offset, "follower": g - fm.clock_offset}

    tl = EventTimeline()
    tl.add("start_sent", 0.0, **g2l(0.0))
    tl.add("leader_record_start", rec_start_l, **g2l(rec_start_l))
    tl.add("start_received", rec_start_f, **g2l(rec_start_f))
    tl.add("follower_record_start", rec_start_f, **g2l(rec_start_f))
    tl.add("leader_emit", emit_l, **g2l(emit_l))
    tl.add("follower_emit", emit_f, **g2l(emit_f))
    tl.add("leader_pulse_at_follower", emit_l + tof, **g2l(emit_l + tof))
    tl.add("follower_pulse_at_leader", emit_f + tof, **g2l(emit_f + tof))
    rec_end_l = rec_start_l + cfg.record_window
    rec_end_f = rec_start_f + cfg.record_window
    tl.add("leader_record_end", rec_end_l, **g2l(rec_end_l))
    tl.add("follower_record_end", rec_end_f, **g2l(rec_end_f))

    messages = [ControlMessage(MessageKind.START, leader.id)]
    result = SessionResult(
        status=SessionStatus.OK,
        leader_id=leader.id,
        follower_id=follower.id,
        true_distance=ch.distance,
        range_leader=None,
        range_follower=None,
        leader_timing=None,
        follower_timing=None,
        oracle_leader=oracle_leader,
        oracle_follower=oracle_follower,
        detections={},
        trace=[],
        messages=messages,
        jitter={},
        sound_speed=c,
    )

    window_n = int(round(cfg.record_window * fs))
    starts = [off_l_own, off_l_remote, off_f_own, off_f_remote]
    if any(int(round(s * fs)) < 0 or int(round(s * fs)) >= window_n for s in starts):
        result.status = SessionStatus.OUT_OF_WINDOW
        result.error = "a pulse starts outside its record window"
        result.trace = tl.ordered()
        return result

    ref_l, ref_f = reference_waveforms(leader.id, follower.id, spec)
    tx_l, tx_f = _emitted(ref_l, lm), _emitted(ref_f, fm)
    ch_to_l = ch
    ch_to_f = dataclasses.replace(ch, freq_offset=-ch.freq_offset)
    buf_l = _record(tx_l, off_l_own, tx_f, off_l_remote - tof, ch_to_l, cfg.record_window, spec, rng.child(2))
    buf_f = _record(tx_f, off_f_own, tx_l, off_f_remote - tof, ch_to_f, cfg.record_window, spec, rng.child(3))
    result.recordings = {"leader": buf_l, "follower": buf_f}

    nominal_fc = spec.center_freq if spec.kind is WaveformKind.PN_NOISE else None
    try:
        det_l = detect_own_and_remote(
            buf_l, ref_l, ref_f, dcfg, nominal_fc, guard, int(cfg.leader_tx_delay * fs)
        )
        det_f = detect_own_and_remote(
            buf_f, ref_f, ref_l, dcfg, nominal_fc, guard, int(cfg.follower_tx_delay * fs)
        )
    except (DetectionError, FrequencyOffsetError) as exc:
        result.status = SessionStatus.DETECTION_FAILED
        result.error = str(exc)
        result.trace = tl.ordered()
        return result
    result.detections = {
        "leader_own": det_l.own,
        "leader_remote": det_l.remote,
        "follower_own": det_f.own,
        "follower_remote": det_f.remote,
    }

    jgen = rng.child(4).generator()
    jit = {
        "T5": float(jgen.normal(0.0, lm.timestamp_jitter_std)) if lm.timestamp_jitter_std else 0.0,
        "T4": float(jgen.normal(0.0, lm.timestamp_jitter_std)) if lm.timestamp_jitter_std else 0.0,
        "T6": float(jgen.normal(0.0, fm.timestamp_jitter_std)) if fm.timestamp_jitter_std else 0.0,
        "T2": float(jgen.normal(0.0, fm.timestamp_jitter_std)) if fm.timestamp_jitter_std else 0.0,
    }
    result.jitter = jit
    leader_timing = TimingRecord(
        Role.LEADER,
        t1_nominal,
        local_rec_l + det_l.own.arrival_index / fs + jit["T5"],
        local_rec_l + det_l.remote.arrival_index / fs + jit["T4"],
        lm.clock_offset,
    )
    follower_timing = TimingRecord(
        Role.FOLLOWER,
        t3_nominal,
        local_rec_f + det_f.own.arrival_index / fs + jit["T6"],
        local_rec_f + det_f.remote.arrival_index / fs + jit["T2"],
        fm.clock_offset,
    )
    result.leader_timing = leader_timing
    result.follower_timing = follower_timing

    done_l = rec_end_l + cfg.processing_budget
    done_f = rec_end_f + cfg.processing_budget
    tl.add("leader_processing_done", done_l, **g2l(done_l))
    tl.add("follower_processing_done", done_f, **g2l(done_f))

    report_l = _quantize_report(leader_timing.remote_minus_own())
    report_f = _quantize_report(follower_timing.remote_minus_own())
    messages.append(ControlMessage(MessageKind.MEASUREMENT_REPORT, leader.id, report_l))
    messages.append(ControlMessage(MessageKind.MEASUREMENT_REPORT, follower.id, report_f))
    tl.add("leader_report_sent", done_l, **g2l(done_l))
    tl.add("follower_report_sent", done_f, **g2l(done_f))
    done = max(done_l, done_f) + cfg.exchange_budget
    tl.add("exchange_complete", done, **g2l(done))

    result.range_leader = range_from_differences(report_l, report_f, c)
    result.range_follower = range_from_differences(report_l, report_f, c)
    tl.add("range_computed", done, **g2l(done))
    result.trace = tl.ordered()
    return result


def run_pair(a: Device, b: Device, ch, spec, cfg=ProtocolConfig(), dcfg=DetectorConfig(), rng=SimRng(0), **kw):
    """Elect a leader between ``a`` and ``b`` then run :func:`run_session`."""
    leader_id, _ = select_leader(a.id, b.id)
    leader, follower = (a, b) if leader_id == a.id else (b, a)
    return run_session(leader, follower, ch, spec, cfg, dcfg, rng, **kw)


# --- one-to-many extension -------------------------------------------------


@dataclass(frozen=True)
class MultiDeviceConfig:
    """Timing for the initiator-broadcast exchange.

    Responders reply ``response_delay + slot*slot_width`` after the start
    command, with ``slot`` drawn uniformly from ``range(n_slots)``. Each
    pulse is detected within ``analysis_segment`` seconds of recording so
    the threshold sees the same mean power as a two-device session.
    """

    leader_tx_delay: float = 0.050
    response_delay: float = 0.200
    slot_width: float = 0.120
    n_slots: int = 8
    ble_latency_max: float = 0.050
    margin: float = 0.050
    analysis_segment: float = 0.400

    def record_window(self, spec: WaveformSpec, max_delay: float) -> float:
        return (
            self.response_delay
            + self.n_slots * self.slot_width
            + spec.pulse_width
            + self.ble_latency_max
            + max_delay
            + self.margin
        )


class PairStatus(str, enum.Enum):
    OK = "ok"
    COLLISION = "collision"
    DETECTION_FAILED = "detection_failed"


@dataclass(frozen=True)
class PairRange:
    initiator: DeviceId
    responder: DeviceId
    status: PairStatus
    estimate: RangeEstimate | None
    true_distance: float


@dataclass
class MultiDeviceResult:
    pairs: list
    backoffs: list
    broadcast: ControlMessage | None
    trace: list

    def by_responder(self) -> dict:
        return {p.responder: p for p in self.pairs}


def run_multi_device(
    devices: list,
    pairwise_channels,
    spec: WaveformSpec,
    cfg: MultiDeviceConfig = MultiDeviceConfig(),
    dcfg: DetectorConfig = DetectorConfig(),
    rng: SimRng = SimRng(0),
    *,
    backoffs: list | None = None,
    guard: int = DEFAULT_GUARD,
) -> MultiDeviceResult:
    """``devices[0]`` pings, every other device answers, the initiator broadcasts.

    ``pairwise_channels[i][j]`` is the channel from device ``j`` to device
    ``i``. Responder ``k`` ends with ``0.5*c*((t4 - t1) - (t3 - t2))`` where
    ``t1``/``t3`` are the loopback arrivals of each side's own pulse.
    """
    n = len(devices)
    if not 2 <= n <= 8:
        raise ValueError("multi-device exchange supports 2..8 devices")
    if spec.kind is not WaveformKind.PN_NOISE:
        raise ValueError("multi-device exchange needs per-device PN waveforms")
    fs = spec.sample_rate
    gen = rng.child(11).generator()
    ble = [0.0] + [float(gen.uniform(0, cfg.ble_latency_max)) for _ in range(n - 1)]
    if backoffs is None:
        backoffs = [0.0] + [float(gen.integers(cfg.n_slots)) * cfg.slot_width for _ in range(n - 1)]
    else:
        backoffs = [0.0] + [float(b) for b in backoffs]
        if len(backoffs) != n:
            raise ValueError("need one backoff per responder")

    models = [d.model for d in devices]
    max_delay = max(
        pairwise_channels[i][j].delay for i in range(n) for j in range(n) if i != j
    ) + max(m.loopback_delay for m in models)
    window = cfg.record_window(spec, max_delay) + max(backoffs) - cfg.n_slots * cfg.slot_width
    window = max(window, cfg.record_window(spec, max_delay))
    refs = [generate_pn_waveform(d.id, spec) for d in devices]
    txs = [_emitted(r, m) for r, m in zip(refs, models)]

    emit = [cfg.leader_tx_delay + models[0].tx_delay]
    for k in range(1, n):
        emit.append(ble[k] + cfg.response_delay + backoffs[k] + models[k].tx_delay)

    tl = EventTimeline()
    tl.add("start_sent", 0.0)
    for k in range(n):
        tl.add(f"emit_{k}", emit[k])

    band = (spec.center_freq, spec.bandwidth)

    def recording(i: int, links_of_interest: list) -> AudioBuffer:
        parts = [(txs[i], emit[i] + models[i].rx_delay - ble[i])]
        own = mix(parts, window, fs)
        total = [own]
        sigmas = []
        for j in range(n):
            if j == i:
                continue
            ch = pairwise_channels[i][j]
            quiet = dataclasses.replace(ch, snr_db=None)
            total.append(
                propagate(txs[j], quiet, emit[j] + models[i].rx_delay - ble[i], window=window)
            )
            if j in links_of_interest and ch.snr_db is not None:
                p = inband_power(ch.direct_gain * txs[j].samples, fs, *band)
                sigmas.append(awgn_sigma(p, ch.snr_db, fs, spec.bandwidth))
        buf = add_buffers(*total)
        if sigmas:
            noise = min(sigmas) * rng.child(100 + i).generator().standard_normal(len(buf))
            buf = buf.with_samples(buf.samples + noise)
        return buf

    pairs = []
    segment = int(round(cfg.analysis_segment * fs))
    # responders measure their turnaround t3 - t2 on their own clocks
    turnaround = {}
    for k in range(1, n):
        buf = recording(k, [0])
        start = int((cfg.response_delay + backoffs[k]) * fs)
        try:
            own = detect_from(buf, refs[k], spec.center_freq, dcfg, start, start + segment)
            cleaned = excise(buf, own.arrival_index, len(refs[k]), guard)
            remote = detect_successive(
                cleaned, {0: refs[0]}, dcfg, spec.center_freq, guard, segment
            )[0]
        except (DetectionError, FrequencyOffsetError):
            remote = None
        turnaround[k] = (
            None
            if remote is None
            else _quantize_report((own.arrival_index - remote.arrival_index) / fs)
        )

    buf0 = recording(0, list(range(1, n)))
    round_trip = {k: None for k in range(1, n)}
    try:
        start = int(cfg.leader_tx_delay * fs)
        own0 = detect_from(buf0, refs[0], spec.center_freq, dcfg, start, start + segment)
    except DetectionError:
        own0 = None
    if own0 is not None:
        cleaned = excise(buf0, own0.arrival_index, len(refs[0]), guard)
        found = detect_successive(
            cleaned, {k: refs[k] for k in range(1, n)}, dcfg, spec.center_freq, guard, segment
        )
        for k, det in found.items():
            if det is not None:
                round_trip[k] = _quantize_report((det.arrival_index - own0.arrival_index) / fs)

    arrivals_at_0 = {k: emit[k] + pairwise_channels[0][k].delay for k in range(1, n)}
    collided = set()
    for a in range(1, n):
        for b in range(a + 1, n):
            if abs(arrivals_at_0[a] - arrivals_at_0[b]) < spec.pulse_width:
                collided.update((a, b))

    payload = {devices[k].id.uuid: round_trip[k] for k in range(1, n) if round_trip[k] is not None}
    broadcast = ControlMessage(MessageKind.BROADCAST, devices[0].id, payload)
    t_bcast = window + cfg.slot_width
    tl.add("broadcast", t_bcast)

    for k in range(1, n):
        ch = pairwise_channels[0][k]
        if k in collided:
            status, est = PairStatus.COLLISION, None
        elif round_trip[k] is None or turnaround[k] is None:
            status, est = PairStatus.DETECTION_FAILED, None
        else:
            status = PairStatus.OK
            est = range_broadcast(round_trip[k], turnaround[k], ch.sound_speed)
        pairs.append(PairRange(devices[0].id, devices[k].id, status, est, ch.distance))
    return MultiDeviceResult(pairs, backoffs[1:], broadcast, tl.ordered())
