import copy
import csv
import io
import math

import pytest

from conftest import load_fixture
from ultraranging.campaign import CSV_COLUMNS, run_campaign, trial_seed
from ultraranging.config import load_preset, parse_scenario
from ultraranging.ranging import FOOT

MASK = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15

SMALL = {
    "name": "small",
    "seed": 99,
    "trials_per_distance": 3,
    "distances_m": [1.2192, 0.6096],
    "channel": {"snr_db": 25.0},
    "devices": [
        {"id": "3f2b8c1e-7d4a-4b6e-9a51-2c8d0e6f1a73", "loopback_delay": 0.02},
        {"id": "a9c04d17-52e8-4f3b-8b6a-71d5e2f09c48", "loopback_delay": 0.03},
    ],
    "randomize": {"clock_offset_max": 0.1, "loopback_delay_range": [0.005, 0.05]},
}


def reference_seed(master, ordinal):
    z = (master + (ordinal + 1) * GAMMA) & MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return z ^ (z >> 31)


def test_trial_seed_matches_reference():
    for master in (0, 1, 20201, MASK):
        for ordinal in (0, 1, 7, 1000):
            assert trial_seed(master, ordinal) == reference_seed(master, ordinal)
    seeds = {trial_seed(42, k) for k in range(500)}
    assert len(seeds) == 500


def test_rows_sorted_and_counted():
    report = run_campaign(parse_scenario(SMALL))
    assert len(report.rows) == 6
    assert [(r.distance, r.trial) for r in report.rows] == sorted((r.distance, r.trial) for r in report.rows)
    assert report.rows[0].distance == 0.6096
    # the 0.6096 m trials are the second distance in the sweep, so their ordinals start at 3
    assert report.rows[0].seed == trial_seed(99, 3)


def test_csv_schema_and_values():
    report = run_campaign(parse_scenario(SMALL))
    rows = list(csv.reader(io.StringIO(report.csv_text())))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert len(rows) == 7
    for row in rows[1:]:
        rec = dict(zip(CSV_COLUMNS, row))
        assert rec["status"] == "ok"
        err = float(rec["estimate_m"]) - float(rec["distance_m"])
        assert math.isclose(float(rec["error_m"]), err, abs_tol=2e-9)
        assert abs(err) < FOOT


def test_parallel_matches_serial():
    cfg = parse_scenario(SMALL)
    serial = run_campaign(cfg)
    parallel = run_campaign(cfg, jobs=2)
    assert serial.csv_text() == parallel.csv_text()
    assert serial.summary_json() == parallel.summary_json()


def test_seed_changes_results():
    other = copy.deepcopy(SMALL)
    other["seed"] = 100
    a = run_campaign(parse_scenario(SMALL)).csv_text()
    b = run_campaign(parse_scenario(other)).csv_text()
    assert a != b


def test_summary_contents():
    summary = run_campaign(parse_scenario(SMALL)).summary()
    assert summary["scenario"] == "small"
    assert summary["n_rows"] == 6
    assert summary["status_counts"] == {"ok": 6}
    assert [t["threshold_ft"] for t in summary["metrics"]["thresholds"]] == pytest.approx([6.0, 8.0])
    assert len(summary["metrics"]["per_distance"]) == 2


def test_broadcast_rows_per_responder():
    raw = copy.deepcopy(SMALL)
    raw.update(mode="broadcast", trials_per_distance=1, distances_m=[1.0])
    raw["devices"].append({"id": "0b7e8f1c-2d3a-4e5f-8a9b-0c1d2e3f4a5b", "loopback_delay": 0.01})
    raw["broadcast"] = {"n_slots": 4}
    report = run_campaign(parse_scenario(raw))
    assert len(report.rows) == 2
    assert {r.follower_id for r in report.rows} == {
        "a9c04d17-52e8-4f3b-8b6a-71d5e2f09c48",
        "0b7e8f1c-2d3a-4e5f-8a9b-0c1d2e3f4a5b",
    }
    for r in report.rows:
        if r.status == "ok":
            assert abs(r.estimate.raw - 1.0) <= 0.05


@pytest.mark.parametrize("name", ["outdoor-clean", "indoor-multipath"])
def test_presets_match_oracle_run(name):
    expected = load_fixture("preset_oracle.json")[name]
    report = run_campaign(load_preset(name), jobs=2)
    metrics = report.metrics
    assert len(report.rows) == expected["rows"]
    assert report.summary()["status_counts"] == expected["status_counts"]
    assert metrics.within_1ft_fraction == expected["within_1ft_fraction"]
    assert metrics.rates(6 * FOOT).false_alarm_rate == expected["false_alarm_rate_6ft"]
    assert metrics.rates(8 * FOOT).miss_rate == expected["miss_rate_8ft"]
    assert len(metrics.per_distance) == 6

