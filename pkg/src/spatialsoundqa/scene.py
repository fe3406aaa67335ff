"""Scene assembly: normalisation, RIR convolution, mixing, placement and labels."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import oaconvolve

from . import CLIP_SAMPLES, SAMPLE_RATE
from .room import (ImpulseResponse, ReceiverSpec, RelativeGeometry, RoomSpec,
                   SourceSpec)

DISTANCE_STEP = 0.5
MAX_DISTANCE = 10.0
WALL_MARGIN = 0.3
MIN_RECEIVER_DISTANCE = 0.5
AXIS_MARGIN_DEG = 5.0
MAX_ATTEMPTS = 1000

AXES = ("lr", "fb", "ud")
AXIS_WORDS = {"lr": ("left", "right"), "fb": ("front", "behind"), "ud": ("above", "below")}
# receiver-frame coordinate index and the word meaning "positive"
AXIS_COORD = {"lr": 1, "fb": 0, "ud": 2}


class SceneError(ValueError):
    pass


@dataclass(frozen=True)
class OctantLabel:
    lr: str
    fb: str
    ud: str

    def __post_init__(self):
        for axis in AXES:
            if getattr(self, axis) not in AXIS_WORDS[axis]:
                raise ValueError(f"bad {axis} label {getattr(self, axis)!r}")

    def words(self) -> tuple[str, str, str]:
        return (self.lr, self.fb, self.ud)

    def __str__(self):
        return ", ".join(self.words())

    @classmethod
    def from_vector(cls, v) -> "OctantLabel":
        # a zero coordinate falls on the right/behind/below side
        x, y, z = (float(c) for c in v)
        return cls("left" if y > 0 else "right", "front" if x > 0 else "behind",
                   "above" if z > 0 else "below")


@dataclass
class ClipSource:
    samples: np.ndarray
    categories: tuple[str, ...]
    clip_id: str = ""
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.ndim != 1:
            raise SceneError("clip must be mono")
        if self.sample_rate != SAMPLE_RATE:
            raise SceneError(f"clip sample rate {self.sample_rate}, expected {SAMPLE_RATE}")
        if not np.all(np.isfinite(self.samples)):
            raise SceneError("clip contains non-finite samples")
        if not self.categories:
            raise SceneError("clip needs at least one category")
        self.categories = tuple(self.categories)


@dataclass
class PlacedSource:
    categories: tuple[str, ...]
    geometry: RelativeGeometry
    octant: OctantLabel
    distance_bin: float
    clip_id: str = ""

    @classmethod
    def from_geometry(cls, categories, geometry: RelativeGeometry, clip_id=""):
        octant, dbin = spatial_labels(geometry)
        return cls(tuple(categories), geometry, octant, dbin, clip_id)


@dataclass
class SpatialClip:
    channels: np.ndarray  # (n_channels, CLIP_SAMPLES)
    sources: list[PlacedSource]
    room_id: str = ""
    receiver: ReceiverSpec | None = None
    rng_seed: int | None = None
    sample_rate: int = SAMPLE_RATE
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.channels = np.atleast_2d(self.channels)
        if self.channels.shape[1] != CLIP_SAMPLES:
            raise SceneError(f"scene must be {CLIP_SAMPLES} samples, got {self.channels.shape[1]}")
        if not 1 <= len(self.sources) <= 2:
            raise SceneError("scene must hold 1 or 2 sources")
        if len(self.sources) == 2:
            check_pair(self.sources[0], self.sources[1])


def check_pair(a: PlacedSource, b: PlacedSource):
    shared = set(a.categories) & set(b.categories)
    if shared:
        raise SceneError(f"sources share categories {sorted(shared)}")
    if a.octant == b.octant:
        raise SceneError(f"sources share octant ({a.octant})")


def loudness_normalize(wave) -> np.ndarray:
    """Scale to unit total energy (sum of squares == 1)."""
    x = np.asarray(wave, dtype=float)
    energy = float(np.dot(x.ravel(), x.ravel()))
    if energy == 0.0:
        raise SceneError("cannot normalise a silent clip")
    return x / math.sqrt(energy)


def fit_length(x: np.ndarray, n: int = CLIP_SAMPLES) -> np.ndarray:
    """Trim or zero-pad the last axis to ``n`` samples."""
    if x.shape[-1] >= n:
        return x[..., :n]
    pad = [(0, 0)] * (x.ndim - 1) + [(0, n - x.shape[-1])]
    return np.pad(x, pad)


def spatialize(clip: ClipSource, ir: ImpulseResponse, clip_id: str | None = None) -> SpatialClip:
    """Convolve the clip with every IR channel, then trim/pad to 10 s."""
    if ir.sample_rate != clip.sample_rate:
        raise SceneError(f"IR rate {ir.sample_rate} != clip rate {clip.sample_rate}")
    if ir.n_channels == 0:
        raise SceneError("IR has no channels")
    n = min(clip.samples.size + ir.channels.shape[1] - 1, CLIP_SAMPLES)
    # only the first n output samples are kept, so longer inputs can be cut first
    src = clip.samples[:n]
    h = ir.channels[:, :n]
    out = np.stack([oaconvolve(src, ch)[:n] for ch in h])
    source = PlacedSource.from_geometry(clip.categories, ir.geometry, clip_id or clip.clip_id)
    return SpatialClip(fit_length(out), [source])


def mix_scene(a: SpatialClip, b: SpatialClip) -> SpatialClip:
    if a.channels.shape != b.channels.shape:
        raise SceneError(f"channel layout mismatch {a.channels.shape} vs {b.channels.shape}")
    if a.room_id != b.room_id or a.receiver != b.receiver:
        raise SceneError("scenes must share room and receiver")
    if len(a.sources) + len(b.sources) > 2:
        raise SceneError("at most two sources per scene")
    sources = a.sources + b.sources
    if len(sources) == 2:
        check_pair(*sources)
    return SpatialClip(a.channels + b.channels, sources, a.room_id, a.receiver, a.rng_seed,
                       meta=dict(a.meta))


def distance_bin(distance: float) -> float:
    """Nearest multiple of 0.5 m (ties up), clamped to [0.5, 10]."""
    if not 0.0 < distance <= MAX_DISTANCE:
        raise SceneError(f"distance {distance} m outside (0, {MAX_DISTANCE}]")
    b = math.floor(distance / DISTANCE_STEP + 0.5) * DISTANCE_STEP
    return min(max(b, DISTANCE_STEP), MAX_DISTANCE)


def spatial_labels(g: RelativeGeometry) -> tuple[OctantLabel, float]:
    return OctantLabel.from_vector(g.vector), distance_bin(g.distance_m)


def axis_margin_ok(v, margin_deg: float = AXIS_MARGIN_DEG) -> bool:
    """True when the direction is at least ``margin_deg`` from all three axis planes."""
    u = np.asarray(v, dtype=float) / np.linalg.norm(v)
    return bool(np.all(np.abs(u) >= math.sin(math.radians(margin_deg))))


@dataclass(frozen=True)
class DistanceDistribution:
    """Histogram over distance bins; a placement picks a bin then a distance in it."""

    bins: tuple[float, ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        if len(self.bins) != len(self.weights) or not self.bins:
            raise ValueError("bins and weights must be non-empty and aligned")
        w = np.asarray(self.weights, dtype=float)
        if np.any(w < 0) or w.sum() <= 0:
            raise ValueError("weights must be non-negative with positive sum")
        for b in self.bins:
            if distance_bin(b) != b:
                raise ValueError(f"{b} is not a distance bin")
        object.__setattr__(self, "weights", tuple(float(x) for x in w / w.sum()))
        object.__setattr__(self, "bins", tuple(float(b) for b in self.bins))

    @property
    def support(self) -> list[float]:
        return [b for b, w in zip(self.bins, self.weights) if w > 0]

    def sample_bin(self, rng) -> float:
        return float(self.sample_bins(rng, 1)[0])

    def sample_bins(self, rng, size: int) -> np.ndarray:
        cdf = np.cumsum(self.weights)
        idx = np.searchsorted(cdf / cdf[-1], rng.random(size), side="right")
        return np.asarray(self.bins)[np.minimum(idx, len(self.bins) - 1)]

    def to_dict(self) -> dict:
        return {"bins": list(self.bins), "weights": list(self.weights)}


# Right-skewed, peaking between 1 and 2 m.
DEFAULT_DISTANCES = DistanceDistribution(
    (0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5),
    (0.06, 0.16, 0.20, 0.18, 0.14, 0.10, 0.07, 0.05, 0.04),
)


BATCH = 50


def _valid_mask(room: RoomSpec, receiver: ReceiverSpec, p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Placement-rule mask for world points ``p`` (n, 3) and their receiver-frame vectors."""
    dims = np.asarray(room.dimensions)
    inside = np.all((p > WALL_MARGIN) & (p < dims - WALL_MARGIN), axis=1)
    v = (p - np.asarray(receiver.position)) @ receiver.rotation()
    d = np.linalg.norm(v, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        off_axis = np.all(np.abs(v) >= math.sin(math.radians(AXIS_MARGIN_DEG)) * d[:, None], axis=1)
    return inside & (d >= MIN_RECEIVER_DISTANCE) & (d <= MAX_DISTANCE) & off_axis, v


def place_sources(room: RoomSpec, receiver: ReceiverSpec, k: int, rng: np.random.Generator,
                  distances: DistanceDistribution | None = None,
                  accept=None) -> list[SourceSpec]:
    """Draw ``k`` source positions satisfying the placement rules.

    Without ``distances``, positions are uniform over the admissible volume.
    With it, each source picks a distance bin from the histogram, a distance
    uniform within +-0.25 m of the bin, and a uniformly random direction.
    ``accept(vectors)`` may veto a complete draw (e.g. QA well-posedness).
    Candidates are drawn in batches of 50 attempts, up to 1000 attempts.
    """
    if k not in (1, 2):
        raise SceneError("k must be 1 or 2")
    lo = np.full(3, WALL_MARGIN)
    hi = np.asarray(room.dimensions) - WALL_MARGIN
    if np.any(hi <= lo):
        raise SceneError(f"room {room.dimensions} too small for the wall margin")
    centre = np.asarray(receiver.position)
    rot = receiver.rotation()
    for _ in range(MAX_ATTEMPTS // BATCH):
        m = BATCH * k
        if distances is None:
            p = rng.uniform(lo, hi, size=(m, 3))
        else:
            b = distances.sample_bins(rng, m)
            d = rng.uniform(np.maximum(b - 0.25, MIN_RECEIVER_DISTANCE), np.minimum(b + 0.25, MAX_DISTANCE))
            u = rng.standard_normal((m, 3))
            u /= np.linalg.norm(u, axis=1, keepdims=True)
            p = centre + (d[:, None] * u) @ rot.T
        ok, v = _valid_mask(room, receiver, p)
        ok, p, v = ok.reshape(BATCH, k), p.reshape(BATCH, k, 3), v.reshape(BATCH, k, 3)
        for t in np.flatnonzero(ok.all(axis=1)):
            vectors = list(v[t])
            if k == 2 and OctantLabel.from_vector(vectors[0]) == OctantLabel.from_vector(vectors[1]):
                continue
            if accept is not None and not accept(vectors):
                continue
            return [SourceSpec(tuple(float(c) for c in q)) for q in p[t]]
    raise SceneError(f"could not place {k} source(s) in {MAX_ATTEMPTS} attempts")
