"""Mono 16-bit PCM WAV files."""
from __future__ import annotations

import wave
from pathlib import Path

import numpy as np

from .waveform import AudioBuffer

FULL_SCALE = 32767


def write_wav(path: str | Path, buf: AudioBuffer) -> None:
    """Write ``round(x * 32767)`` after clipping to [-1, 1]."""
    rate = buf.sample_rate
    if rate != int(rate):
        raise ValueError("WAV needs an integer sample rate")
    pcm = np.round(np.clip(buf.samples, -1.0, 1.0) * FULL_SCALE).astype("<i2")
    with open(path, "wb") as raw, wave.open(raw, "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(int(rate))
        fh.writeframes(pcm.tobytes())


def read_wav(path: str | Path) -> AudioBuffer:
    """Read a mono 16-bit file back to floats in [-1, 1]."""
    with open(path, "rb") as raw, wave.open(raw, "rb") as fh:
        if fh.getnchannels() != 1 or fh.getsampwidth() != 2:
            raise wave.Error(f"{path}: expected mono 16-bit PCM")
        rate = fh.getframerate()
        data = fh.readframes(fh.getnframes())
    samples = np.frombuffer(data, dtype="<i2").astype(np.float64) / FULL_SCALE
    return AudioBuffer(samples, float(rate))
