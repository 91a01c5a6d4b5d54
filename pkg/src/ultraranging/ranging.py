"""Two-way time-transfer range arithmetic.

Timestamp naming follows the leader/follower exchange:

    leader:   T1 nominal send, T5 hears itself, T4 hears follower
    follower: T3 nominal send, T6 hears itself, T2 hears leader

Only same-clock differences are ever combined, so per-device clock offsets
and transmit/receive latencies drop out.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

DEFAULT_SOUND_SPEED = 346.0
FOOT = 0.3048


class IncompleteRecordError(ValueError):
    """A timing record lacks a timestamp needed for the range formula."""


class SoundSpeed(float):
    """Speed of sound in m/s, restricted to air between about -40 and 60 C."""

    def __new__(cls, meters_per_second: float = DEFAULT_SOUND_SPEED):
        value = float(meters_per_second)
        if not 300.0 < value < 370.0:
            raise ValueError(f"speed of sound {value} m/s outside (300, 370)")
        return super().__new__(cls, value)

    @property
    def meters_per_second(self) -> float:
        return float(self)


class Role(str, enum.Enum):
    LEADER = "leader"
    FOLLOWER = "follower"


class RangeMethod(str, enum.Enum):
    FULL_FORM = "full_form"
    LOOPBACK_FORM = "loopback_form"
    SAMPLE_COUNT = "sample_count"
    BROADCAST = "broadcast"


@dataclass(frozen=True)
class TimingRecord:
    """Local-clock timestamps observed by one device.

    ``clock_offset`` is simulation ground truth and is never read by the
    estimators.
    """

    role: Role
    tx_nominal: float | None
    own_loopback_arrival: float | None
    remote_arrival: float | None
    clock_offset: float = 0.0

    def require(self) -> tuple[float, float, float]:
        values = (self.tx_nominal, self.own_loopback_arrival, self.remote_arrival)
        if any(v is None or not math.isfinite(v) for v in values):
            raise IncompleteRecordError(f"{self.role.value} record is incomplete: {values}")
        return values  # type: ignore[return-value]

    def loopback_delay(self) -> float:
        tx, own, _ = self.require()
        return own - tx

    def remote_minus_own(self) -> float:
        _, own, remote = self.require()
        return remote - own

    def shifted(self, delta: float) -> "TimingRecord":
        """Same record read off a clock that is ``delta`` seconds ahead."""
        return TimingRecord(
            self.role,
            None if self.tx_nominal is None else self.tx_nominal + delta,
            None if self.own_loopback_arrival is None else self.own_loopback_arrival + delta,
            None if self.remote_arrival is None else self.remote_arrival + delta,
            self.clock_offset - delta,
        )


@dataclass(frozen=True)
class RangeEstimate:
    raw: float
    method: RangeMethod

    def __post_init__(self):
        if not math.isfinite(self.raw):
            raise ValueError("range estimate must be finite")

    @property
    def meters(self) -> float:
        return self.clamped

    @property
    def clamped(self) -> float:
        return max(self.raw, 0.0)

    @property
    def feet(self) -> float:
        return self.clamped / FOOT


def speed_of_sound(temperature_celsius: float) -> SoundSpeed:
    """Dry-air model ``331.3 * sqrt(1 + T/273.15)``, valid for -40..60 C."""
    if not -40.0 <= temperature_celsius <= 60.0:
        raise ValueError(f"temperature {temperature_celsius} C outside [-40, 60]")
    return SoundSpeed(331.3 * math.sqrt(1.0 + temperature_celsius / 273.15))


def range_loopback_form(
    leader: TimingRecord, follower: TimingRecord, c: float = DEFAULT_SOUND_SPEED
) -> RangeEstimate:
    """``c/2 * ((T4 - T5) + (T2 - T6))``."""
    return range_from_differences(leader.remote_minus_own(), follower.remote_minus_own(), c)


def range_from_differences(
    leader_diff: float, follower_diff: float, c: float = DEFAULT_SOUND_SPEED
) -> RangeEstimate:
    """Range from the two exchanged same-clock differences ``T4-T5`` and ``T2-T6``."""
    return RangeEstimate(0.5 * float(c) * (leader_diff + follower_diff), RangeMethod.LOOPBACK_FORM)


def range_full_form(
    t1: float,
    t4: float,
    loopback_leader: float,
    t2: float,
    t3: float,
    loopback_follower: float,
    c: float = DEFAULT_SOUND_SPEED,
) -> RangeEstimate:
    """``c/2 * ([(T4-T1) - loop_L] - [(T3-T2) + loop_F])``.

    ``c/2`` scales the whole difference; this is what summing the two one-way
    equations gives and it reduces exactly to :func:`range_loopback_form`.
    """
    if loopback_leader < 0 or loopback_follower < 0:
        raise ValueError("loopback delays must be non-negative")
    leader_term = (t4 - t1) - loopback_leader
    follower_term = (t3 - t2) + loopback_follower
    return RangeEstimate(0.5 * float(c) * (leader_term - follower_term), RangeMethod.FULL_FORM)


def range_sample_count(
    own_arrival_idx: float,
    remote_arrival_idx: float,
    peer_own_idx: float,
    peer_remote_idx: float,
    fs: float,
    c: float = DEFAULT_SOUND_SPEED,
) -> RangeEstimate:
    """Sample-counting range from two recordings that each hold both pulses."""
    diff = (remote_arrival_idx - own_arrival_idx) + (peer_remote_idx - peer_own_idx)
    return RangeEstimate(0.5 * float(c) * diff / fs, RangeMethod.SAMPLE_COUNT)


def range_broadcast(
    initiator_round_trip: float, responder_turnaround: float, c: float = DEFAULT_SOUND_SPEED
) -> RangeEstimate:
    """``0.5 * c * ((t4 - t1) - (t3 - t2))`` for the one-to-many exchange."""
    return RangeEstimate(
        0.5 * float(c) * (initiator_round_trip - responder_turnaround), RangeMethod.BROADCAST
    )
