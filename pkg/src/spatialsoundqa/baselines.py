"""Classical predictors: GCC-PHAT TDOA, least-squares DoA, inverse Woodworth and
energy-based distance. They produce prediction files for the metric suite."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from itertools import combinations
from pathlib import Path

import numpy as np
from scipy import fft as sp_fft
from scipy.optimize import brentq

from . import SAMPLE_RATE, SPEED_OF_SOUND
from .metrics import Prediction
from .qa import localization_answer
from .render import scene_from_record
from .rng import stream
from .room import ReceiverSpec, RoomSpec, SourceSpec, simulate_rir, woodworth_itd
from .scene import MAX_DISTANCE, OctantLabel, distance_bin
from .wavio import read_wav

PHAT_FLOOR = 1e-6  # relative floor on |cross-spectrum| before whitening
ONSET_FRACTION = 0.1
DIRECT_WINDOW_S = 0.0025
MIN_DISTANCE = 0.5


class BaselineError(ValueError):
    pass


@dataclass(frozen=True)
class TdoaEstimate:
    pair: tuple[int, int]
    delay_seconds: float  # arrival at mic j minus arrival at mic i
    peak_confidence: float


def _spectra(x, max_lag: int):
    """Zero-padded spectra long enough for lags up to ``max_lag`` without wrap-around."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    nfft = sp_fft.next_fast_len(x.shape[1] + max_lag + 1, real=True)
    return sp_fft.rfft(x, nfft, axis=-1), nfft


def _gcc_peak(sa, sb, nfft: int, max_lag: int, sample_rate: int, pair) -> TdoaEstimate:
    r = sb * np.conj(sa)
    mag = np.abs(r)
    r /= np.maximum(mag, PHAT_FLOOR * mag.max())
    cc = sp_fft.irfft(r, nfft)
    cc = np.concatenate([cc[-max_lag:], cc[:max_lag + 1]]) if max_lag else cc[:1]
    k = int(np.argmax(cc))
    frac = 0.0
    if 0 < k < cc.size - 1:
        y0, y1, y2 = cc[k - 1], cc[k], cc[k + 1]
        den = y0 - 2 * y1 + y2
        if den < 0:
            frac = float(np.clip(0.5 * (y0 - y2) / den, -0.5, 0.5))
    peak = cc[k]
    rest = np.concatenate([cc[:max(k - 1, 0)], cc[k + 2:]])
    second = float(rest.max()) if rest.size else 0.0
    conf = float(np.clip(1.0 - max(second, 0.0) / peak, 0.0, 1.0)) if peak > 0 else 0.0
    return TdoaEstimate(tuple(pair), (k - max_lag + frac) / sample_rate, conf)


def gcc_phat(xi, xj, max_lag: int | None = None, sample_rate: int = SAMPLE_RATE,
             pair=(0, 1)) -> TdoaEstimate:
    """Delay of ``xj`` relative to ``xi`` from the PHAT-weighted cross-correlation.

    The integer peak is refined by a parabola through its neighbours. The
    confidence is ``1 - second_peak / peak`` with the second peak taken more
    than one sample away from the main one.
    """
    a, b = np.asarray(xi, dtype=float), np.asarray(xj, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise BaselineError("gcc_phat needs two 1-D signals of equal length")
    if not np.any(a) or not np.any(b):
        raise BaselineError("silent input")
    max_lag = a.size - 1 if max_lag is None else int(min(max_lag, a.size - 1))
    spec, nfft = _spectra(np.stack([a, b]), max_lag)
    return _gcc_peak(spec[0], spec[1], nfft, max_lag, sample_rate, pair)


@dataclass(frozen=True)
class DoaEstimate:
    direction: np.ndarray  # unit vector, array frame
    residual: float
    rank: int
    ambiguous: bool
    low_confidence: bool


def pair_matrix(mics, pairs) -> np.ndarray:
    m = np.asarray(mics, dtype=float)
    return np.array([m[i] - m[j] for i, j in pairs])


def estimate_doa(mics, pairs, tdoas, c: float = SPEED_OF_SOUND, rel_tol: float = 0.1) -> DoaEstimate:
    """Far-field least squares ``(p_i - p_j) . u = c * tau_ij`` for unit ``u``.

    ``tau_ij`` is the arrival at mic j minus mic i. When every TDOA is zero the
    system carries no direction and +x (broadside reference) is returned with
    ``ambiguous`` set. ``low_confidence`` flags rank < 3 or a residual above
    ``rel_tol`` of ``|c tau|``.
    """
    d = pair_matrix(mics, pairs)
    rhs = c * np.asarray(tdoas, dtype=float)
    if d.shape[0] != rhs.size or d.shape[0] == 0:
        raise BaselineError("need one TDOA per microphone pair")
    u, _, rank, _ = np.linalg.lstsq(d, rhs, rcond=None)
    residual = float(np.linalg.norm(d @ u - rhs))
    norm = float(np.linalg.norm(u))
    ambiguous = norm < 1e-12
    direction = np.array([1.0, 0.0, 0.0]) if ambiguous else u / norm
    scale = float(np.linalg.norm(rhs))
    low = rank < 3 or ambiguous or (scale > 0 and residual > rel_tol * scale)
    return DoaEstimate(direction, residual, int(rank), ambiguous, bool(low))


def array_doa(channels, mics, sample_rate: int = SAMPLE_RATE, c: float = SPEED_OF_SOUND) -> DoaEstimate:
    """GCC-PHAT on every microphone pair followed by :func:`estimate_doa`."""
    x = np.asarray(channels, dtype=float)
    mics = np.asarray(mics, dtype=float)
    if x.shape[0] != mics.shape[0]:
        raise BaselineError(f"{x.shape[0]} channels for {mics.shape[0]} microphones")
    pairs = list(combinations(range(len(mics)), 2))
    span = max(np.linalg.norm(mics[i] - mics[j]) for i, j in pairs)
    lag = int(math.ceil(span / c * sample_rate)) + 2
    if not np.all(np.any(x, axis=1)):
        raise BaselineError("silent input")
    spec, nfft = _spectra(x, lag)
    taus = [_gcc_peak(spec[i], spec[j], nfft, lag, sample_rate, (i, j)).delay_seconds for i, j in pairs]
    return estimate_doa(mics, pairs, taus, c)


@dataclass(frozen=True)
class LateralEstimate:
    lateral_deg: float  # positive to the left
    lr: str
    clamped: bool


def lateral_angle_binaural(itd: float, head_radius: float = 0.0875,
                           c: float = SPEED_OF_SOUND) -> LateralEstimate:
    """Invert ``itd = (a/c)(g + sin g)``; ``itd = t_right - t_left`` (> 0 means left)."""
    limit = float(woodworth_itd(math.pi / 2, head_radius, c))
    mag = abs(float(itd))
    clamped = mag > limit
    if clamped:
        gamma = math.pi / 2
    elif mag == 0.0:
        gamma = 0.0
    else:
        gamma = brentq(lambda g: float(woodworth_itd(g, head_radius, c)) - mag, 0.0, math.pi / 2,
                       xtol=1e-12)
    sign = 1.0 if itd > 0 else -1.0
    return LateralEstimate(sign * math.degrees(gamma), "left" if itd > 0 else "right", clamped)


# --- distance -----------------------------------------------------------------

def onset_index(x) -> int:
    """First sample whose magnitude exceeds 10% of the global peak (any channel)."""
    env = np.max(np.abs(np.atleast_2d(x)), axis=0)
    peak = float(env.max()) if env.size else 0.0
    if peak == 0.0:
        raise BaselineError("onset not detected: signal is silent")
    return int(np.argmax(env > ONSET_FRACTION * peak))


def direct_energy(ir, sample_rate: int = SAMPLE_RATE) -> float:
    """Mean per-channel energy in the 2.5 ms after onset."""
    h = np.atleast_2d(np.asarray(ir, dtype=float))
    k = onset_index(h)
    w = max(1, int(round(DIRECT_WINDOW_S * sample_rate)))
    return float(np.mean(np.sum(h[:, k:k + w] ** 2, axis=1)))


def total_energy(x) -> float:
    """Mean per-channel energy; for unit-energy dry clips this tracks 1/r^2."""
    h = np.atleast_2d(np.asarray(x, dtype=float))
    return float(np.mean(np.sum(h ** 2, axis=1)))


MEASURES = {"direct": direct_energy, "total": total_energy}


@dataclass(frozen=True)
class CalibrationCurve:
    """``energy_db = c0 + c1 * log10(r)``, valid on ``[r_min, r_max]``."""

    c0: float
    c1: float
    measure: str = "total"
    r_min: float = MIN_DISTANCE
    r_max: float = MAX_DISTANCE

    def __post_init__(self):
        if not self.c1 < 0:
            raise BaselineError("calibration must be strictly decreasing in distance")
        if self.measure not in MEASURES:
            raise BaselineError(f"unknown energy measure {self.measure!r}")

    def distance(self, energy_db: float) -> float:
        r = 10.0 ** ((energy_db - self.c0) / self.c1)
        return float(min(max(r, MIN_DISTANCE), MAX_DISTANCE))

    def energy_db(self, r: float) -> float:
        return self.c0 + self.c1 * math.log10(r)

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(asdict(self), indent=2) + "\n")
        return path

    @classmethod
    def load(cls, path) -> "CalibrationCurve":
        return cls(**json.loads(Path(path).read_text()))


def fit_calibration(distances, energies, measure: str = "total") -> CalibrationCurve:
    r = np.asarray(distances, dtype=float)
    e = np.asarray(energies, dtype=float)
    if r.size < 5 or np.unique(r).size < 2:
        raise BaselineError("need at least 5 calibration points at 2+ distances")
    if np.any(e <= 0) or np.any(r <= 0):
        raise BaselineError("energies and distances must be positive")
    c1, c0 = np.polyfit(np.log10(r), 10.0 * np.log10(e), 1)
    return CalibrationCurve(float(c0), float(c1), measure, float(r.min()), float(r.max()))


def calibrate_room(room: RoomSpec, receiver: ReceiverSpec, distances=(0.5, 1.0, 2.0, 3.0, 4.0, 5.0),
                   directions: int = 4, seed: int = 0, measure: str = "total") -> CalibrationCurve:
    """Fit a curve from simulated IRs at known distances around ``receiver``.

    Distances with no admissible position inside the room are skipped.
    """
    rng = stream(seed, "calibration", room.name)
    rot = receiver.rotation()
    r_pts, e_pts = [], []
    for d in distances:
        for _ in range(directions):
            for _ in range(1000):
                u = rng.standard_normal(3)
                u /= np.linalg.norm(u)
                p = np.asarray(receiver.position) + rot @ (d * u)
                if room.contains(p, 0.05):
                    break
            else:
                break
            ir = simulate_rir(room, SourceSpec(tuple(p)), receiver)
            r_pts.append(d)
            e_pts.append(MEASURES[measure](ir.channels))
    return fit_calibration(r_pts, e_pts, measure)


def estimate_distance(x, calibration: CalibrationCurve, sample_rate: int = SAMPLE_RATE) -> float:
    """Distance from an IR (``direct`` measure) or a normalised clip (``total``)."""
    fn = MEASURES[calibration.measure]
    e = fn(x, sample_rate) if calibration.measure == "direct" else fn(x)
    if e <= 0:
        raise BaselineError("zero energy")
    return calibration.distance(10.0 * math.log10(e))


# --- manifest runner ---------------------------------------------------------------

AXIS_CHOICES = (("front", "behind"), ("above", "below"))


def predict_record(record: dict, channels: np.ndarray, mode: str, calibration: CalibrationCurve,
                   seed: int = 0) -> Prediction | None:
    """Prediction for a single-source localisation record; ``None`` means abstain."""
    if record["qtype"] != "B" or len(record["truth"]["sources"]) != 1:
        return None
    rc = record["scene"]["receiver"]
    dist = estimate_distance(channels, calibration)
    if mode == "tetrahedral":
        est = array_doa(channels, rc["array"])
        octant = OctantLabel.from_vector(est.direction).words()
        return Prediction(record["id"], localization_answer(octant, distance_bin(dist)),
                          doa=[float(v) for v in est.direction], distance_m=dist)
    if mode == "binaural":
        radius = rc["head_radius"] or 0.0875
        lag = int(math.ceil(woodworth_itd(math.pi / 2, radius) * SAMPLE_RATE)) + 2
        itd = gcc_phat(channels[0], channels[1], lag).delay_seconds
        lat = lateral_angle_binaural(itd, radius)
        rng = stream(seed, "baseline-guess", record["id"])
        fb, ud = (pair[int(rng.integers(2))] for pair in AXIS_CHOICES)
        return Prediction(record["id"], localization_answer((lat.lr, fb, ud), distance_bin(dist)),
                          distance_m=dist)
    raise BaselineError(f"unknown baseline mode {mode!r}")


def record_calibration(record: dict, cache: dict, seed: int = 0) -> CalibrationCurve:
    """Calibration for the record's room, simulated once per room name and array."""
    room, receiver, _ = scene_from_record(record)
    key = (room.name, room.dimensions, receiver.array)
    if key not in cache:
        cache[key] = calibrate_room(room, receiver, seed=seed)
    return cache[key]


def run_baseline(records, audio_root, mode: str, calibration: CalibrationCurve | None = None,
                 seed: int = 0) -> list[Prediction]:
    """Predictions for every single-source localisation record with audio on disk.

    Without ``calibration`` a curve is fitted per room from simulated IRs.
    Other records are skipped (abstentions score as missing).
    """
    out = []
    root = Path(audio_root)
    expected = 4 if mode == "tetrahedral" else 2
    cache: dict = {}
    for r in records:
        if r["qtype"] != "B":
            continue
        path = root / r["audio_path"]
        if not path.exists():
            raise BaselineError(f"missing audio for {r['id']}: {path}")
        x, _ = read_wav(path)
        if x.shape[0] != expected:
            raise BaselineError(f"{r['id']}: {mode} mode needs {expected} channels, got {x.shape[0]}")
        cal = calibration or record_calibration(r, cache, seed)
        p = predict_record(r, x, mode, cal, seed)
        if p is not None:
            out.append(p)
    return out
