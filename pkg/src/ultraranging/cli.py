"""``ultraranging`` command line: gen | detect | simulate | crlb | trace.

Exit codes: 0 success, 2 invalid input, 3 file I/O failure, 4 a pulse was
not found (``detect`` only).
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import math
import sys
import wave
from pathlib import Path

from .analysis import CrlbQuery, crlb_range_std
from .audio_io import read_wav, write_wav
from .campaign import run_campaign, trial_seed
from .channel import SimRng
from .config import PRESETS, ConfigError, ScenarioConfig, load_preset, load_scenario
from .detector import DetectorConfig, detect_successive
from .protocol import reference_waveforms, run_pair, select_leader
from .ranging import DEFAULT_SOUND_SPEED, FOOT, range_sample_count
from .waveform import DeviceId, InvalidSpecError, WaveformKind, WaveformSpec, generate_waveform

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_IO = 3
EXIT_NO_DETECTION = 4


class NoDetection(RuntimeError):
    pass


def _emit(args, payload: dict, text: str) -> None:
    if args.json:
        sys.stdout.write(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    else:
        sys.stdout.write(text.rstrip("\n") + "\n")


# --- waveform options ------------------------------------------------------


def _add_waveform_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("waveform (defaults: phone PN, or laptop values for chirps)")
    g.add_argument("--kind", choices=[k.value for k in WaveformKind], default="pn_noise")
    g.add_argument("--pulse-width", type=float)
    g.add_argument("--center-freq", type=float)
    g.add_argument("--sample-rate", type=float)
    g.add_argument("--bandwidth", type=float)
    g.add_argument("--ramp", type=float)
    g.add_argument("--tone-level", type=float)


def _waveform_from_args(args) -> WaveformSpec:
    kind = WaveformKind(args.kind)
    base = WaveformSpec.smartphone() if kind is WaveformKind.PN_NOISE else WaveformSpec.laptop(kind)
    overrides = {
        name: getattr(args, name)
        for name in ("pulse_width", "center_freq", "sample_rate", "bandwidth", "ramp", "tone_level")
        if getattr(args, name) is not None
    }
    return dataclasses.replace(base, **overrides)


def _scenario_from_args(args) -> ScenarioConfig:
    if (args.config is None) == (args.preset is None):
        raise ConfigError("config", "give exactly one of a config path or --preset")
    cfg = load_preset(args.preset) if args.preset else load_scenario(args.config)
    changes = {}
    if getattr(args, "seed", None) is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("seed", "expected an integer in [0, 2**64)")
        changes["seed"] = args.seed
    if getattr(args, "trials", None) is not None:
        if args.trials < 1:
            raise ConfigError("trials_per_distance", "expected a positive integer")
        changes["trials_per_distance"] = args.trials
    return dataclasses.replace(cfg, **changes) if changes else cfg


# --- subcommands -----------------------------------------------------------


def cmd_gen(args) -> int:
    spec = _waveform_from_args(args)
    if spec.kind is WaveformKind.PN_NOISE and args.id is None:
        raise ConfigError("id", "PN waveforms need a device id")
    dev = DeviceId.parse(args.id) if args.id is not None else None
    buf = generate_waveform(dev, spec)
    write_wav(args.out, buf)
    payload = {
        "path": str(args.out),
        "frames": len(buf),
        "sample_rate": spec.sample_rate,
        "kind": spec.kind.value,
        "id": None if dev is None else str(dev),
    }
    _emit(args, payload, f"wrote {len(buf)} frames at {spec.sample_rate:g} Hz to {args.out}")
    return EXIT_OK


def detect_recordings(rec_a, rec_b, id_a: DeviceId, id_b: DeviceId, spec, dcfg, c, guard=240) -> dict:
    """Four correlations (A·refA, A·refB, B·refA, B·refB) and the sample-count range.

    ``rec_a`` was recorded by device ``id_a``. Chirp scenarios give the
    elected leader the up-sweep, so ``spec.kind`` only selects PN or chirp.
    """
    if rec_a.sample_rate != spec.sample_rate or rec_b.sample_rate != spec.sample_rate:
        raise ConfigError("sample_rate", "recording rate differs from the waveform sample rate")
    if spec.kind is WaveformKind.PN_NOISE:
        refs = {"A": generate_waveform(id_a, spec), "B": generate_waveform(id_b, spec)}
        tone = spec.center_freq
    else:
        leader, _ = select_leader(id_a, id_b)
        up, down = reference_waveforms(id_a, id_b, spec)
        refs = {"A": up, "B": down} if leader == id_a else {"A": down, "B": up}
        tone = None
    found = {}
    for name, buf in (("A", rec_a), ("B", rec_b)):
        segment = len(buf) if tone is not None else None
        dets = detect_successive(buf, refs, dcfg, tone, guard, segment)
        for ref_name, det in dets.items():
            found[f"{name}*ref{ref_name}"] = det
    missing = [k for k, v in found.items() if v is None]
    if missing:
        raise NoDetection("no detection in correlation " + ", ".join(missing))
    est = range_sample_count(
        found["A*refA"].arrival_index,
        found["A*refB"].arrival_index,
        found["B*refB"].arrival_index,
        found["B*refA"].arrival_index,
        spec.sample_rate,
        c,
    )
    return {
        "range_m": est.raw,
        "range_ft": est.raw / FOOT,
        "clamped_m": est.clamped,
        "detections": {
            k: {"arrival_index": v.arrival_index, "snr_db": v.snr_db} for k, v in sorted(found.items())
        },
    }


def cmd_detect(args) -> int:
    spec = _waveform_from_args(args)
    dcfg = DetectorConfig(threshold_factor=args.threshold_factor)
    id_a, id_b = DeviceId.parse(args.id_a), DeviceId.parse(args.id_b)
    if id_a == id_b:
        raise ConfigError("id_b", "the two devices must differ")
    rec_a, rec_b = read_wav(args.recording_a), read_wav(args.recording_b)
    result = detect_recordings(rec_a, rec_b, id_a, id_b, spec, dcfg, args.sound_speed)
    lines = [f"range {result['range_m']:.4f} m ({result['range_ft']:.3f} ft)"]
    for name, det in result["detections"].items():
        lines.append(f"  {name}: sample {det['arrival_index']}, SNR {det['snr_db']:.1f} dB")
    _emit(args, result, "\n".join(lines))
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _scenario_from_args(args)
    report = run_campaign(cfg, jobs=args.jobs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "trials.csv").write_text(report.csv_text(), encoding="utf-8")
    (out / "summary.json").write_text(report.summary_json(), encoding="utf-8")
    summary = report.summary()
    lines = [f"{cfg.name}: {len(report.rows)} rows written to {out}"]
    lines.append(f"  within 1 ft: {report.metrics.within_1ft_fraction:.3f}")
    for r in report.metrics.thresholds:
        lines.append(
            f"  {r.threshold / FOOT:.0f} ft: miss {r.miss_rate:.3f}, false alarm {r.false_alarm_rate:.3f}"
        )
    _emit(args, summary, "\n".join(lines))
    return EXIT_OK


def _grid(lo: float, hi: float, step: float) -> list:
    if step <= 0 or hi < lo:
        raise ConfigError("snr", "need step > 0 and max >= min")
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return [round(lo + i * step, 10) for i in range(n)]


def crlb_table(snrs, bandwidths, jitter: float, c: float = DEFAULT_SOUND_SPEED) -> list:
    return [
        (snr, bw, crlb_range_std(CrlbQuery(snr, bw, c, jitter)))
        for bw in bandwidths
        for snr in snrs
    ]


def cmd_crlb(args) -> int:
    if not args.bandwidth:
        raise ConfigError("bandwidth", "give at least one bandwidth")
    rows = crlb_table(_grid(args.snr_min, args.snr_max, args.snr_step), args.bandwidth, args.jitter, args.sound_speed)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["snr_db", "bandwidth_hz", "sigma_r_m"])
    for snr, bw, sigma in rows:
        writer.writerow([f"{snr:g}", f"{bw:g}", f"{sigma:.9e}"])
    if args.out:
        Path(args.out).write_text(buf.getvalue(), encoding="utf-8")
    payload = {"rows": [{"snr_db": s, "bandwidth_hz": b, "sigma_r_m": v} for s, b, v in rows]}
    if args.out:
        _emit(args, payload, f"wrote {len(rows)} rows to {args.out}")
    elif args.json:
        _emit(args, payload, "")
    else:
        sys.stdout.write(buf.getvalue())
    return EXIT_OK


def cmd_trace(args) -> int:
    cfg = _scenario_from_args(args)
    if cfg.mode != "pair":
        raise ConfigError("mode", "trace export covers pair sessions")
    distance = cfg.distances[0] if args.distance is None else args.distance
    if not distance >= 0:
        raise ConfigError("distance", "must be non-negative")
    seed = trial_seed(cfg.seed, args.trial)
    a, b = cfg.devices
    res = run_pair(a, b, cfg.channel_at(distance), cfg.waveform, cfg.protocol, cfg.detector, SimRng(seed))
    lines = [json.dumps(ev.as_record(), sort_keys=True) for ev in res.trace]
    Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    written = {}
    if args.recordings:
        rec_dir = Path(args.recordings)
        rec_dir.mkdir(parents=True, exist_ok=True)
        for role, dev_id in (("leader", res.leader_id), ("follower", res.follower_id)):
            if role in res.recordings:
                path = rec_dir / f"{role}.wav"
                write_wav(path, res.recordings[role])
                written[role] = {"path": str(path), "id": str(dev_id)}
    payload = {
        "status": res.status.value,
        "seed": seed,
        "distance_m": distance,
        "leader_id": str(res.leader_id),
        "follower_id": str(res.follower_id),
        "range_m": None if res.range_leader is None else res.range_leader.raw,
        "oracle_range_m": res.oracle_range.raw,
        "events": len(lines),
        "recordings": written,
    }
    text = f"{res.status.value}: {len(lines)} events written to {args.out}"
    if res.range_leader is not None:
        text += f"; range {res.range_leader.raw:.4f} m"
    _emit(args, payload, text)
    return EXIT_OK


# --- entry point -----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ultraranging", description=__doc__.splitlines()[0])
    parser.add_argument("--json", action="store_true", help="structured JSON on stdout")
    sub = parser.add_subparsers(dest="command", required=True)
    json_flag = argparse.ArgumentParser(add_help=False)
    json_flag.add_argument("--json", action="store_true", default=argparse.SUPPRESS, help=argparse.SUPPRESS)

    p = sub.add_parser("gen", help="write a transmit waveform as 16-bit WAV", parents=[json_flag])
    p.add_argument("--id", help="device UUID (required for PN)")
    p.add_argument("--out", required=True)
    _add_waveform_args(p)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("detect", help="range from two recordings that each hold both pulses", parents=[json_flag])
    p.add_argument("recording_a")
    p.add_argument("recording_b")
    p.add_argument("--id-a", required=True, help="UUID of the device that made recording_a")
    p.add_argument("--id-b", required=True, help="UUID of the device that made recording_b")
    p.add_argument("--sound-speed", type=float, default=DEFAULT_SOUND_SPEED)
    p.add_argument("--threshold-factor", type=float, default=DetectorConfig.threshold_factor)
    _add_waveform_args(p)
    p.set_defaults(func=cmd_detect)

    for name, func, helptext in (
        ("simulate", cmd_simulate, "run a scenario campaign, writing trials.csv and summary.json"),
        ("trace", cmd_trace, "export one session's event trace as JSON lines"),
    ):
        p = sub.add_parser(name, help=helptext, parents=[json_flag])
        p.add_argument("config", nargs="?", help="scenario YAML file")
        p.add_argument("--preset", choices=PRESETS)
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--out", required=True, help="output directory" if name == "simulate" else "trace file")
        p.set_defaults(func=func)
        if name == "simulate":
            p.add_argument("--trials", type=int, help="override trials per distance")
            p.add_argument("--jobs", type=int, default=1, help="worker processes")
        else:
            p.add_argument("--distance", type=float, help="meters (default: first in the sweep)")
            p.add_argument("--trial", type=int, default=0, help="trial ordinal used for the seed")
            p.add_argument("--recordings", help="directory for leader.wav and follower.wav")

    p = sub.add_parser("crlb", help="range-error bound table as CSV", parents=[json_flag])
    p.add_argument("--snr-min", type=float, default=0.0, help="integrated SNR, dB")
    p.add_argument("--snr-max", type=float, default=60.0)
    p.add_argument("--snr-step", type=float, default=2.0)
    p.add_argument("--bandwidth", type=float, nargs="+", default=[500.0, 2000.0], help="Hz")
    p.add_argument("--jitter", type=float, default=0.0, help="timestamp jitter std, seconds")
    p.add_argument("--sound-speed", type=float, default=DEFAULT_SOUND_SPEED)
    p.add_argument("--out", help="CSV path (default: stdout)")
    p.set_defaults(func=cmd_crlb)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NoDetection as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_NO_DETECTION
    except (OSError, wave.Error, EOFError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_IO
    except (ConfigError, InvalidSpecError, ValueError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
