"""Binaural front end: STFT, log-Mel, IPD planes and the (4, 1024, 128) tensor."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import CLIP_SAMPLES, SAMPLE_RATE

N_FFT = 1024
HOP = 320
N_MELS = 128
F_MIN = 20.0
F_MAX = 16000.0
LOG_FLOOR = 1e-10
IPD_MAG_FLOOR = 1e-12
T_PAD = 1024
PATCH = 16


class FeatureError(ValueError):
    pass


@dataclass(frozen=True)
class Stft:
    frames: np.ndarray  # complex (T, N/2 + 1)
    n_fft: int = N_FFT
    hop: int = HOP
    sample_rate: int = SAMPLE_RATE

    @property
    def power(self) -> np.ndarray:
        return self.frames.real ** 2 + self.frames.imag ** 2


@lru_cache(maxsize=8)
def hann(n: int) -> np.ndarray:
    """Periodic Hann window."""
    w = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)
    w.flags.writeable = False
    return w


def n_frames(n_samples: int, n_fft: int = N_FFT, hop: int = HOP) -> int:
    return (n_samples - n_fft) // hop + 1


def stft(wave, n_fft: int = N_FFT, hop: int = HOP, sample_rate: int = SAMPLE_RATE) -> Stft:
    """Frame ``t`` covers samples ``[t*hop, t*hop + n_fft)``; no centre padding."""
    x = np.asarray(wave, dtype=float)
    if x.ndim != 1:
        raise FeatureError("stft expects a mono waveform")
    if x.size < n_fft:
        raise FeatureError(f"input of {x.size} samples is shorter than one {n_fft}-point window")
    frames = sliding_window_view(x, n_fft)[::hop]
    return Stft(np.fft.rfft(frames * hann(n_fft), axis=-1), n_fft, hop, sample_rate)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=float) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=float) / 2595.0) - 1.0)


@dataclass(frozen=True)
class MelFilterbank:
    weights: np.ndarray  # (M, F)
    centers_hz: np.ndarray
    sample_rate: int
    f_min: float
    f_max: float


@lru_cache(maxsize=8)
def mel_filterbank(sample_rate: int = SAMPLE_RATE, n_fft: int = N_FFT, n_mels: int = N_MELS,
                   f_min: float = F_MIN, f_max: float = F_MAX) -> MelFilterbank:
    """HTK-scale triangles with unit peaks, centres equally spaced in Mel."""
    if n_mels < 1:
        raise FeatureError("n_mels must be >= 1")
    if not 0.0 <= f_min < f_max <= sample_rate / 2:
        raise FeatureError(f"invalid Mel range ({f_min}, {f_max}) for rate {sample_rate}")
    edges = mel_to_hz(np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_mels + 2))
    freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    lower, centre, upper = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs - lower) / (centre - lower)
    falling = (upper - freqs) / (upper - centre)
    w = np.clip(np.minimum(rising, falling), 0.0, None)
    empty = ~np.any(w > 0, axis=1)
    if np.any(empty):
        raise FeatureError(f"{int(empty.sum())} Mel filters cover no FFT bin; lower n_mels")
    w.flags.writeable = False
    return MelFilterbank(w, edges[1:-1], sample_rate, f_min, f_max)


def mel_spectrogram(spec: Stft, fb: MelFilterbank) -> np.ndarray:
    """Natural-log Mel power, floored at 1e-10 before the log."""
    if spec.frames.shape[1] != fb.weights.shape[1]:
        raise FeatureError(f"STFT has {spec.frames.shape[1]} bins, filterbank expects {fb.weights.shape[1]}")
    return np.log(np.maximum(spec.power @ fb.weights.T, LOG_FLOOR))


def ipd(left: Stft, right: Stft) -> np.ndarray:
    """Phase of right/left per bin in (-pi, pi]; bins with |left| < 1e-12 are 0."""
    if left.frames.shape != right.frames.shape:
        raise FeatureError("STFT shapes differ")
    x1, x2 = left.frames, right.frames
    angle = np.angle(x2 * np.conj(x1))
    angle[angle == -np.pi] = np.pi
    angle[np.abs(x1) < IPD_MAG_FLOOR] = 0.0
    return angle


def assemble_features(channels, sample_rate: int = SAMPLE_RATE, fb: MelFilterbank | None = None,
                      dtype=np.float32) -> np.ndarray:
    """Planes [S_left, S_right, cos(IPD) melW, sin(IPD) melW], frames zero-padded to 1024."""
    x = np.asarray(channels)
    if x.ndim != 2 or x.shape[0] != 2:
        raise FeatureError(f"need a 2-channel (left, right) clip, got shape {x.shape}")
    if sample_rate != SAMPLE_RATE:
        raise FeatureError(f"sample rate {sample_rate}, expected {SAMPLE_RATE}")
    if x.shape[1] != CLIP_SAMPLES:
        raise FeatureError(f"clip must be {CLIP_SAMPLES} samples, got {x.shape[1]}")
    fb = fb or mel_filterbank()
    left, right = stft(x[0]), stft(x[1])
    phase = ipd(left, right)
    t = left.frames.shape[0]
    z = np.zeros((4, T_PAD, fb.weights.shape[0]), dtype=np.float64)
    z[:2] = math.log(LOG_FLOOR)
    z[0, :t] = mel_spectrogram(left, fb)
    z[1, :t] = mel_spectrogram(right, fb)
    z[2, :t] = np.cos(phase) @ fb.weights.T
    z[3, :t] = np.sin(phase) @ fb.weights.T
    return z.astype(dtype)


def patch_grid(shape=(T_PAD, N_MELS), patch: int = PATCH) -> np.ndarray:
    """(rows, cols, 4) array of ``[t_start, t_stop, m_start, m_stop]`` per patch."""
    t, m = shape
    if t % patch or m % patch:
        raise FeatureError(f"shape {shape} not divisible by patch size {patch}")
    ti, mi = np.meshgrid(np.arange(t // patch), np.arange(m // patch), indexing="ij")
    return np.stack([ti * patch, (ti + 1) * patch, mi * patch, (mi + 1) * patch], axis=-1)


def patchify(z: np.ndarray, patch: int = PATCH) -> np.ndarray:
    """Split (C, T, M) into (T/p * M/p, C, p, p) tokens, row-major over (time, mel)."""
    c, t, m = z.shape
    patch_grid((t, m), patch)
    blocks = z.reshape(c, t // patch, patch, m // patch, patch)
    return blocks.transpose(1, 3, 0, 2, 4).reshape(-1, c, patch, patch)


@dataclass(frozen=True)
class TargetLabels:
    categories: np.ndarray  # multi-hot over the ontology
    distance_class: int
    azimuth_class: int
    elevation_class: int


def azimuth_class(azimuth_deg: float) -> int:
    return int(math.floor(azimuth_deg % 360.0)) % 360


def elevation_class(elevation_deg: float) -> int:
    return min(int(math.floor(elevation_deg + 90.0)), 180)


def distance_class(distance_bin: float) -> int:
    k = int(round(distance_bin / 0.5)) - 1
    if not 0 <= k <= 19:
        raise FeatureError(f"distance bin {distance_bin} outside 0.5-10 m")
    return k


def encode_targets(source, ontology_ids) -> TargetLabels:
    """Classes for a placed source; ``ontology_ids`` fixes the multi-hot order."""
    ids = list(ontology_ids)
    hot = np.zeros(len(ids), dtype=np.int8)
    for c in source.categories:
        try:
            hot[ids.index(c)] = 1
        except ValueError:
            raise FeatureError(f"unknown category {c!r}") from None
    g = source.geometry
    return TargetLabels(hot, distance_class(source.distance_bin),
                        azimuth_class(g.azimuth_deg), elevation_class(g.elevation_deg))


def class_centers(t: TargetLabels) -> tuple[float, float, float]:
    """(azimuth, elevation, distance) at the centre of each class."""
    az = t.azimuth_class + 0.5
    return (az - 360.0 if az > 180.0 else az, t.elevation_class - 90.0 + 0.5,
            (t.distance_class + 1) * 0.5)


def export_features(z: np.ndarray, path) -> Path:
    """Little-endian float32, plane-major (C, T, M), plus a ``.json`` sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    z.astype("<f4").tofile(path)
    meta = {"shape": list(z.shape), "dtype": "float32", "byte_order": "little", "layout": "C,T,M",
            "planes": ["logmel_left", "logmel_right", "cos_ipd_mel", "sin_ipd_mel"],
            "sample_rate": SAMPLE_RATE, "n_fft": N_FFT, "hop": HOP, "n_mels": N_MELS,
            "f_min": F_MIN, "f_max": F_MAX, "log_floor": LOG_FLOOR, "window": "hann-periodic",
            "frames_valid": n_frames(CLIP_SAMPLES)}
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(meta, indent=2) + "\n")
    return path


def load_features(path) -> np.ndarray:
    path = Path(path)
    meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    return np.fromfile(path, dtype="<f4").reshape(meta["shape"])
