"""Seeded Monte Carlo campaigns over a scenario's distance sweep.

Trial ``t`` at distance index ``k`` has ordinal ``k * trials_per_distance + t``
and seed ``splitmix64(master_seed + ordinal * 0x9E3779B97F4A7C15)``, so any
trial can be rerun alone and trials may run in any order or in parallel.
"""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

from ._pycore import GOLDEN_GAMMA, MASK64
from .analysis import DEFAULT_SLACK, DEFAULT_THRESHOLDS, MetricsReport, score_campaign
from .channel import SimRng
from .config import ScenarioConfig
from .kernels import splitmix64
from .protocol import Device, run_multi_device, run_pair

CSV_COLUMNS = (
    "distance_m",
    "trial",
    "seed",
    "status",
    "leader_id",
    "follower_id",
    "estimate_raw_m",
    "estimate_m",
    "error_m",
)


def trial_seed(master_seed: int, ordinal: int) -> int:
    _, out = splitmix64((master_seed + ordinal * GOLDEN_GAMMA) & MASK64)
    return out


@dataclass(frozen=True)
class TrialRow:
    distance: float
    trial: int
    seed: int
    status: str
    leader_id: str
    follower_id: str
    estimate: object  # RangeEstimate | None

    def as_csv(self) -> list:
        est = self.estimate
        return [
            _fmt(self.distance),
            self.trial,
            self.seed,
            self.status,
            self.leader_id,
            self.follower_id,
            "" if est is None else _fmt(est.raw),
            "" if est is None else _fmt(est.clamped),
            "" if est is None else _fmt(est.clamped - self.distance),
        ]


def _fmt(x: float) -> str:
    return f"{x:.9f}"


@dataclass(frozen=True)
class CampaignReport:
    scenario: str
    metrics: MetricsReport
    rows: tuple

    def csv_text(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in self.rows:
            writer.writerow(row.as_csv())
        return out.getvalue()

    def summary(self) -> dict:
        statuses = {}
        for row in self.rows:
            statuses[row.status] = statuses.get(row.status, 0) + 1
        return {
            "scenario": self.scenario,
            "n_rows": len(self.rows),
            "status_counts": dict(sorted(statuses.items())),
            "metrics": self.metrics.to_dict(),
        }

    def summary_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True) + "\n"


def _trial_devices(cfg: ScenarioConfig, rng: SimRng) -> list:
    rnd = cfg.randomize
    if rnd.clock_offset_max == 0 and rnd.loopback_delay_range is None:
        return list(cfg.devices)
    gen = rng.child(50).generator()
    devices = []
    for dev in cfg.devices:
        model = dev.model
        if rnd.clock_offset_max:
            model = dataclasses.replace(
                model, clock_offset=float(gen.uniform(-rnd.clock_offset_max, rnd.clock_offset_max))
            )
        if rnd.loopback_delay_range is not None:
            model = dataclasses.replace(model, loopback_delay=float(gen.uniform(*rnd.loopback_delay_range)))
        devices.append(Device(dev.id, model))
    return devices


def _circle_channels(cfg: ScenarioConfig, radius: float, n: int):
    """Initiator at the origin, responders evenly spaced on a circle of ``radius``."""
    pos = [(0.0, 0.0)] + [
        (radius * math.cos(2 * math.pi * k / (n - 1)), radius * math.sin(2 * math.pi * k / (n - 1)))
        for k in range(n - 1)
    ]
    return [
        [None if i == j else cfg.channel_at(math.dist(pos[i], pos[j])) for j in range(n)]
        for i in range(n)
    ]


def run_trial(cfg: ScenarioConfig, distance: float, trial: int, ordinal: int) -> list:
    seed = trial_seed(cfg.seed, ordinal)
    rng = SimRng(seed)
    devices = _trial_devices(cfg, rng)
    if cfg.mode == "pair":
        res = run_pair(
            devices[0], devices[1], cfg.channel_at(distance), cfg.waveform, cfg.protocol, cfg.detector, rng
        )
        return [
            TrialRow(
                distance, trial, seed, res.status.value, str(res.leader_id), str(res.follower_id), res.range_leader
            )
        ]
    channels = _circle_channels(cfg, distance, len(devices))
    res = run_multi_device(devices, channels, cfg.waveform, cfg.broadcast, cfg.detector, rng)
    return [
        TrialRow(distance, trial, seed, p.status.value, str(p.initiator), str(p.responder), p.estimate)
        for p in res.pairs
    ]


def _run_indexed(args):
    cfg, distance, trial, ordinal = args
    return ordinal, run_trial(cfg, distance, trial, ordinal)


def run_campaign(
    cfg: ScenarioConfig,
    *,
    jobs: int = 1,
    thresholds=DEFAULT_THRESHOLDS,
    slack: float = DEFAULT_SLACK,
) -> CampaignReport:
    """Run every trial and score the results; ``jobs > 1`` uses worker processes."""
    work = [
        (cfg, d, t, k * cfg.trials_per_distance + t)
        for k, d in enumerate(cfg.distances)
        for t in range(cfg.trials_per_distance)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            done = list(pool.map(_run_indexed, work))
    else:
        done = [_run_indexed(w) for w in work]
    done.sort(key=lambda item: item[0])
    rows = [row for _, trial_rows in done for row in trial_rows]
    # sort key is (distance, trial); the stable sort keeps responder order
    rows.sort(key=lambda r: (r.distance, r.trial))
    metrics = score_campaign([(r.distance, r.estimate) for r in rows], thresholds, slack)
    return CampaignReport(cfg.name, metrics, tuple(rows))
