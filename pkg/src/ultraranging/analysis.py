"""Theoretical bounds and campaign scoring."""
from __future__ import annotations

import enum
import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .ranging import DEFAULT_SOUND_SPEED, FOOT, RangeEstimate, SoundSpeed

DEFAULT_THRESHOLDS = (6 * FOOT, 8 * FOOT)
DEFAULT_SLACK = FOOT
# true distances are compared with a tolerance so 1.8288 and 6 * FOOT agree
_EPS = 1e-9


@dataclass(frozen=True)
class CrlbQuery:
    """``integrated_snr_db`` is E/(N0/2) in dB; ``bandwidth`` is a rectangular width in Hz."""

    integrated_snr_db: float
    bandwidth: float
    sound_speed: float = DEFAULT_SOUND_SPEED
    jitter_std: float = 0.0

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")
        if self.jitter_std < 0:
            raise ValueError("jitter_std must be non-negative")
        object.__setattr__(self, "sound_speed", SoundSpeed(self.sound_speed))


def mean_square_bandwidth(bandwidth: float) -> float:
    """F^2 = (2 pi)^2 B^2 / 12 for a flat spectrum of width B, in (rad/s)^2."""
    return (2 * math.pi) ** 2 * bandwidth**2 / 12.0


def crlb_range_std(q: CrlbQuery) -> float:
    """Range standard deviation bound in meters, optionally floored by timestamp jitter."""
    snr = 10 ** (q.integrated_snr_db / 10)
    sigma = float(q.sound_speed) / math.sqrt(snr * mean_square_bandwidth(q.bandwidth))
    if q.jitter_std:
        sigma = math.hypot(sigma, float(q.sound_speed) * q.jitter_std)
    return sigma


def processing_gain_db(pulse_width: float, bandwidth: float) -> float:
    """10 log10 of the time-bandwidth product."""
    if pulse_width <= 0 or bandwidth <= 0:
        raise ValueError("pulse_width and bandwidth must be positive")
    return 10 * math.log10(pulse_width * bandwidth)


def integrated_snr_db(inband_snr_db: float, pulse_width: float, bandwidth: float) -> float:
    """In-band SNR plus processing gain."""
    return inband_snr_db + processing_gain_db(pulse_width, bandwidth)


class SnrVerdict(str, enum.Enum):
    BELOW_THRESHOLD = "below_threshold"
    MARGINAL = "marginal"
    UNAMBIGUOUS = "unambiguous"


def unambiguous_snr_check(integrated_snr_db: float) -> SnrVerdict:
    """Below 13 dB, 13 to 16 dB inclusive, or above 16 dB."""
    if integrated_snr_db < 13.0:
        return SnrVerdict.BELOW_THRESHOLD
    if integrated_snr_db <= 16.0:
        return SnrVerdict.MARGINAL
    return SnrVerdict.UNAMBIGUOUS


@dataclass(frozen=True)
class ThresholdRates:
    threshold: float
    misses: int
    false_alarms: int
    n_trials: int

    @property
    def miss_rate(self) -> float:
        return self.misses / self.n_trials

    @property
    def false_alarm_rate(self) -> float:
        return self.false_alarms / self.n_trials


@dataclass(frozen=True)
class DistanceStats:
    """Error statistics at one true distance; mean and std cover successful trials only."""

    n_trials: int
    n_ok: int
    mean_error: float
    std_error: float


@dataclass(frozen=True)
class MetricsReport:
    thresholds: tuple
    within_1ft_fraction: float
    per_distance: dict = field(default_factory=dict)
    slack: float = DEFAULT_SLACK

    def rates(self, threshold: float) -> ThresholdRates:
        for r in self.thresholds:
            if math.isclose(r.threshold, threshold, abs_tol=1e-9):
                return r
        raise KeyError(threshold)

    def to_dict(self) -> dict:
        return {
            "slack_m": self.slack,
            "within_1ft_fraction": self.within_1ft_fraction,
            "thresholds": [
                {
                    "threshold_m": r.threshold,
                    "threshold_ft": r.threshold / FOOT,
                    "miss_rate": r.miss_rate,
                    "false_alarm_rate": r.false_alarm_rate,
                    "misses": r.misses,
                    "false_alarms": r.false_alarms,
                    "n_trials": r.n_trials,
                }
                for r in self.thresholds
            ],
            "per_distance": [
                {
                    "distance_m": d,
                    "n_trials": s.n_trials,
                    "n_ok": s.n_ok,
                    "mean_error_m": None if math.isnan(s.mean_error) else s.mean_error,
                    "std_error_m": None if math.isnan(s.std_error) else s.std_error,
                }
                for d, s in sorted(self.per_distance.items())
            ],
        }


def score_campaign(
    trials,
    thresholds=DEFAULT_THRESHOLDS,
    slack: float = DEFAULT_SLACK,
) -> MetricsReport:
    """Score ``(true_distance, RangeEstimate | None)`` pairs; ``None`` is a failed exchange.

    At threshold ``t`` a trial is a miss when the truth is within ``t`` and
    the exchange failed or measured at least ``t + slack``; it is a false
    alarm when the truth is beyond ``t + slack`` and the measurement is
    below it. Rates and ``within_1ft_fraction`` are over all trials, so a
    failure never counts as within one foot.
    """
    trials = list(trials)
    if not trials:
        raise ValueError("no trials to score")
    if slack < 0:
        raise ValueError("slack must be non-negative")

    measured = []
    for true, est in trials:
        if est is not None and not isinstance(est, RangeEstimate):
            raise TypeError("estimates must be RangeEstimate or None")
        measured.append((float(true), None if est is None else est.clamped))

    rates = []
    for t in thresholds:
        edge = t + slack
        misses = sum(
            1 for true, m in measured if true <= t + _EPS and (m is None or m >= edge)
        )
        false_alarms = sum(
            1 for true, m in measured if true > edge + _EPS and m is not None and m < edge
        )
        rates.append(ThresholdRates(float(t), misses, false_alarms, len(measured)))

    within = sum(1 for true, m in measured if m is not None and abs(m - true) <= FOOT + _EPS)

    groups = defaultdict(list)
    for true, m in measured:
        groups[true].append(m)
    per_distance = {}
    for true, values in groups.items():
        errors = np.array([m - true for m in values if m is not None])
        per_distance[true] = DistanceStats(
            n_trials=len(values),
            n_ok=len(errors),
            mean_error=float(errors.mean()) if len(errors) else math.nan,
            std_error=float(errors.std()) if len(errors) else math.nan,
        )
    return MetricsReport(tuple(rates), within / len(measured), per_distance, slack)
