"""WAV reading/writing with a fixed 32 kHz contract.

Integer PCM is scaled to [-1, 1) by ``1 / 2**(bits-1)`` (PCM16: 1/32768).
Float32 files round-trip bit-exactly. There is deliberately no resampler;
convert other rates beforehand, e.g. ``sox in.wav -r 32000 out.wav``.
"""

from __future__ import annotations

import os
import warnings
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from . import SAMPLE_RATE


class WavError(ValueError):
    pass


class SampleRateError(WavError):
    pass


def read_wav(path: str | os.PathLike, expected_rate: int | None = SAMPLE_RATE) -> tuple[np.ndarray, int]:
    """Return ``(samples, rate)`` with samples shaped (channels, n)."""
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", wavfile.WavFileWarning)
            rate, data = wavfile.read(os.fspath(path))
    except FileNotFoundError:
        raise
    except Exception as exc:  # scipy raises ValueError/struct errors on bad headers
        raise WavError(f"{path}: cannot parse WAV ({exc})") from exc
    if expected_rate is not None and rate != expected_rate:
        raise SampleRateError(f"{path}: sample rate {rate} Hz, expected {expected_rate} Hz")
    if data.dtype == np.float32 or data.dtype == np.float64:
        out = data
    elif data.dtype == np.int16:
        out = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        # scipy left-justifies 24-bit PCM into int32, so one scale covers both
        out = data.astype(np.float64) / 2147483648.0
    elif data.dtype == np.uint8:
        out = (data.astype(np.float64) - 128.0) / 128.0
    else:
        raise WavError(f"{path}: unsupported sample type {data.dtype}")
    out = np.atleast_2d(out.T) if out.ndim == 2 else out[None, :]
    return out, rate


def read_mono(path, expected_rate: int | None = SAMPLE_RATE) -> np.ndarray:
    data, _ = read_wav(path, expected_rate)
    if data.shape[0] != 1:
        raise WavError(f"{path}: expected mono, got {data.shape[0]} channels")
    return data[0]


def write_wav(path: str | os.PathLike, samples, rate: int = SAMPLE_RATE) -> Path:
    """Write float32 WAV; ``samples`` is (n,) or (channels, n)."""
    data = np.asarray(samples)
    if not np.all(np.isfinite(data)):
        raise WavError("refusing to write non-finite samples")
    data = data.astype(np.float32)
    if data.ndim == 2:
        data = data.T
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".part")
    wavfile.write(tmp, rate, data)
    os.replace(tmp, path)
    return path
