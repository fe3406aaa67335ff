"""Shoebox room acoustics: image-source RIRs, receiver-frame geometry, RT60.

Receiver frame convention: +x front, +y left, +z up. The receiver heading
rotates the frame about the vertical axis; heading 0 faces world +x,
heading 90 faces world +y.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

from . import SAMPLE_RATE, SPEED_OF_SOUND

MAX_ORDER_GUARD = 10
KERNEL_HALF_WIDTH = 40  # 81-tap fractional delay kernel
SHADOW_CUTOFF_HZ = 1500.0
MIN_SOURCE_MIC_DISTANCE = 1e-3


class GeometryError(ValueError):
    """Invalid source/receiver placement."""


@dataclass(frozen=True)
class RoomSpec:
    dimensions: tuple[float, float, float]
    # order: x=0, x=Lx, y=0, y=Ly, z=0 (floor), z=Lz (ceiling)
    absorption: tuple[float, float, float, float, float, float] = (0.5,) * 6
    speed_of_sound: float = SPEED_OF_SOUND
    max_order: int = 10
    sample_rate: int = SAMPLE_RATE
    name: str = ""

    def __post_init__(self):
        dims = tuple(float(d) for d in self.dimensions)
        if len(dims) != 3 or min(dims) <= 0:
            raise ValueError(f"room dimensions must be 3 positive values, got {self.dimensions}")
        # a scalar applies the same coefficient to all six walls
        if np.ndim(self.absorption) == 0:
            alpha = (float(self.absorption),) * 6
        else:
            alpha = tuple(float(a) for a in self.absorption)
        if len(alpha) != 6 or any(not 0.0 <= a <= 1.0 for a in alpha):
            raise ValueError(f"need 6 absorption coefficients in [0, 1], got {self.absorption}")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if self.max_order < 0:
            raise ValueError("max_order must be >= 0")
        object.__setattr__(self, "dimensions", dims)
        object.__setattr__(self, "absorption", alpha)

    @property
    def volume(self) -> float:
        lx, ly, lz = self.dimensions
        return lx * ly * lz

    @property
    def surface_areas(self) -> np.ndarray:
        lx, ly, lz = self.dimensions
        return np.array([ly * lz, ly * lz, lx * lz, lx * lz, lx * ly, lx * ly])

    @property
    def reflection_coefficients(self) -> np.ndarray:
        return np.sqrt(1.0 - np.asarray(self.absorption))

    def contains(self, point, margin: float = 0.0) -> bool:
        p = np.asarray(point, dtype=float)
        dims = np.asarray(self.dimensions)
        return bool(np.all(p > margin) and np.all(p < dims - margin))


@dataclass(frozen=True)
class ReceiverSpec:
    position: tuple[float, float, float]
    heading_deg: float = 0.0
    array: tuple[tuple[float, float, float], ...] = ((0.0, 0.0, 0.0),)
    head_radius: float | None = None  # spherical head model when set

    def __post_init__(self):
        object.__setattr__(self, "position", tuple(float(v) for v in self.position))
        arr = tuple(tuple(float(v) for v in mic) for mic in self.array)
        if not arr or any(len(m) != 3 for m in arr):
            raise ValueError("receiver array must be a non-empty list of 3-vectors")
        object.__setattr__(self, "array", arr)
        if self.head_radius is not None:
            if self.head_radius <= 0:
                raise ValueError("head radius must be positive")
            if any(abs(m[1]) == 0 for m in arr):
                raise ValueError("spherical-head ears need a lateral (y) offset")

    @classmethod
    def binaural(cls, position, heading_deg=0.0, head_radius=0.0875) -> "ReceiverSpec":
        """Two-ear receiver; channel 0 is the left ear, channel 1 the right."""
        a = float(head_radius)
        return cls(position, heading_deg, ((0.0, a, 0.0), (0.0, -a, 0.0)), a)

    @classmethod
    def tetrahedral(cls, position, heading_deg=0.0, edge=0.1) -> "ReceiverSpec":
        return cls(position, heading_deg, tuple(map(tuple, tetrahedron(edge))))

    @property
    def n_mics(self) -> int:
        return len(self.array)

    def rotation(self) -> np.ndarray:
        """Columns are the receiver's front, left, up axes in world coordinates."""
        th = math.radians(self.heading_deg)
        c, s = math.cos(th), math.sin(th)
        return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])

    def mic_world_positions(self) -> np.ndarray:
        return np.asarray(self.position) + np.asarray(self.array) @ self.rotation().T


@dataclass(frozen=True)
class SourceSpec:
    position: tuple[float, float, float]

    def __post_init__(self):
        object.__setattr__(self, "position", tuple(float(v) for v in self.position))


@dataclass(frozen=True)
class RelativeGeometry:
    azimuth_deg: float
    elevation_deg: float
    distance_m: float

    @property
    def direction(self) -> np.ndarray:
        """Unit vector in the receiver frame."""
        az, el = math.radians(self.azimuth_deg), math.radians(self.elevation_deg)
        return np.array([math.cos(el) * math.cos(az), math.cos(el) * math.sin(az), math.sin(el)])

    @property
    def vector(self) -> np.ndarray:
        return self.distance_m * self.direction

    @classmethod
    def from_vector(cls, v) -> "RelativeGeometry":
        v = np.asarray(v, dtype=float)
        d = float(np.linalg.norm(v))
        if d == 0.0:
            raise GeometryError("zero displacement has no direction")
        az = math.degrees(math.atan2(v[1], v[0]))
        if az <= -180.0:
            az += 360.0
        el = math.degrees(math.asin(max(-1.0, min(1.0, v[2] / d))))
        return cls(az, el, d)

    def to_dict(self) -> dict:
        return {"azimuth_deg": self.azimuth_deg, "elevation_deg": self.elevation_deg,
                "distance_m": self.distance_m}


@dataclass(frozen=True)
class ImpulseResponse:
    channels: np.ndarray  # (n_mics, n_samples)
    sample_rate: int
    geometry: RelativeGeometry | None = None
    order_used: int = 0
    arrivals: list = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        ch = np.atleast_2d(np.asarray(self.channels, dtype=float))
        if not np.all(np.isfinite(ch)):
            raise ValueError("impulse response contains non-finite samples")
        object.__setattr__(self, "channels", ch)

    @property
    def n_channels(self) -> int:
        return self.channels.shape[0]


def tetrahedron(edge: float = 0.1) -> np.ndarray:
    """Vertices of a regular tetrahedron centred at the origin."""
    v = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float)
    return v * edge / (2.0 * math.sqrt(2.0))


def to_receiver_frame(world_vector, receiver: ReceiverSpec) -> np.ndarray:
    return np.asarray(world_vector, dtype=float) @ receiver.rotation()


def relative_geometry(source: SourceSpec, receiver: ReceiverSpec) -> RelativeGeometry:
    delta = np.asarray(source.position) - np.asarray(receiver.position)
    return RelativeGeometry.from_vector(to_receiver_frame(delta, receiver))


def woodworth_itd(lateral_rad, head_radius: float, c: float = SPEED_OF_SOUND):
    """Interaural time difference (s) of a spherical head; odd in the angle."""
    g = np.asarray(lateral_rad, dtype=float)
    return head_radius / c * (g + np.sin(g))


def _axis_images(coord: float, length: float, order: int):
    """Image coordinates along one axis with lattice index ``|n| <= order``.

    Image ``(n, p)`` sits at ``(1 - 2p) * coord + 2 n length`` and has hit the
    wall at 0 ``|n - p|`` times and the wall at ``length`` ``|n|`` times.
    """
    n = np.tile(np.arange(-order, order + 1), 2)
    p = np.repeat([0, 1], 2 * order + 1)
    return (1 - 2 * p) * coord + 2 * n * length, np.abs(n - p), np.abs(n)


def image_sources(room: RoomSpec, source_position) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Image sources of a shoebox, bounded per axis by ``room.max_order``.

    The bound applies to the lattice index on each axis independently (a
    box of ``(2(2R+1))**3`` images), not to the total reflection count.
    Returns positions (K, 3), reflection gains (K,) and reflection counts (K,).
    """
    if room.max_order > MAX_ORDER_GUARD:
        raise ValueError(f"max_order {room.max_order} exceeds guard {MAX_ORDER_GUARD}")
    beta = room.reflection_coefficients
    R = room.max_order
    axes = [_axis_images(source_position[i], room.dimensions[i], R) for i in range(3)]
    pos = np.stack(np.meshgrid(axes[0][0], axes[1][0], axes[2][0], indexing="ij"), -1).reshape(-1, 3)
    gains = []
    hits = []
    for (_, low, high), b_low, b_high in zip(axes, beta[0::2], beta[1::2]):
        # 0 ** 0 == 1 keeps the direct path of an anechoic room
        gains.append(b_low ** low * b_high ** high)
        hits.append(low + high)
    gain = np.einsum("i,j,k->ijk", *gains).ravel()
    order = (hits[0][:, None, None] + hits[1][None, :, None] + hits[2][None, None, :]).ravel()
    return pos, gain, order


def _check_inside(room: RoomSpec, point, what: str):
    if not room.contains(point):
        raise GeometryError(f"{what} {tuple(point)} is outside room {room.dimensions}")


def image_arrivals(room: RoomSpec, source: SourceSpec, receiver: ReceiverSpec) -> list[dict]:
    """Per-microphone arrivals: delay (s), gain and head-shadow amount.

    Zero-gain images (fully absorbing walls) are dropped.
    """
    _check_inside(room, source.position, "source")
    _check_inside(room, receiver.position, "receiver")
    mics = receiver.mic_world_positions()
    for m in mics:
        if np.linalg.norm(np.asarray(source.position) - m) < MIN_SOURCE_MIC_DISTANCE:
            raise GeometryError("source coincides with a microphone")
    pos, gain, order = image_sources(room, np.asarray(source.position))
    live = gain > 0
    pos, gain, order = pos[live], gain[live], order[live]
    c = room.speed_of_sound
    out = []
    if receiver.head_radius is None:
        for m in mics:
            dist = np.linalg.norm(pos - m, axis=1)
            out.append({"delay": dist / c, "gain": gain / dist, "order": order,
                        "shadow": np.zeros_like(dist)})
        return out

    a = receiver.head_radius
    center = np.asarray(receiver.position)
    rel = to_receiver_frame(pos - center, receiver)
    dist = np.linalg.norm(rel, axis=1)
    if np.any(dist <= a):
        raise GeometryError("source inside the head sphere")
    u = rel / dist[:, None]
    for offset in receiver.array:
        ear = np.asarray(offset) / np.linalg.norm(offset)
        psi = np.arcsin(np.clip(u @ ear, -1.0, 1.0))  # > 0 on the ear's own side
        extra = np.where(psi >= 0, -a / c * np.sin(psi), a / c * np.abs(psi))
        shadow = np.clip(-psi, 0.0, None) / (np.pi / 2)
        out.append({"delay": dist / c + extra, "gain": gain / dist, "order": order,
                    "shadow": shadow})
    return out


def fractional_delay_kernel(delays_samples: np.ndarray, half_width: int = KERNEL_HALF_WIDTH):
    """Hann-windowed sinc taps; returns (start indices, taps of shape (K, 2*hw+1)).

    Tap ``k`` of an arrival at ``d`` samples sits at ``round(d) - hw + k``.
    Angle-addition identities keep trig evaluation per arrival, not per tap.
    """
    d = np.asarray(delays_samples, dtype=float)
    centre = np.round(d)
    frac = (d - centre)[:, None]
    k = np.arange(-half_width, half_width + 1, dtype=float)[None, :]
    x = k - frac
    # sin(pi (k - f)) = -(-1)^k sin(pi f)
    sign = np.where(k % 2 == 0, -1.0, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        sinc = sign * np.sin(np.pi * frac) / (np.pi * x)
    sinc = np.where(x == 0.0, 1.0, sinc)
    w = np.pi / (half_width + 1)
    win = 0.5 * (1.0 + np.cos(w * k) * np.cos(w * frac) + np.sin(w * k) * np.sin(w * frac))
    return centre.astype(np.int64) - half_width, sinc * win


def _render_channel(start, taps, weights, n):
    """Overlap-add weighted kernels into a length-``n`` buffer."""
    width = taps.shape[1]
    pad = np.zeros(n + 2 * width)
    idx = (start + width)[:, None] + np.arange(width)[None, :]
    keep = (idx[:, 0] >= 0) & (idx[:, -1] < pad.size)
    pad += np.bincount(idx[keep].ravel(), (taps[keep] * weights[keep, None]).ravel(),
                       minlength=pad.size)[: pad.size]
    return pad[width: width + n]


def simulate_rir(room: RoomSpec, source: SourceSpec, receiver: ReceiverSpec,
                 length: int | None = None) -> ImpulseResponse:
    """Render a multichannel RIR by summing fractionally delayed image arrivals.

    With a spherical head, shadowed (contralateral) arrivals are routed through a
    one-pole 1.5 kHz low-pass, blended with the dry path by the shadow amount.
    """
    arrivals = image_arrivals(room, source, receiver)
    fs = room.sample_rate
    hw = KERNEL_HALF_WIDTH
    tail = 64 if receiver.head_radius is not None else 0
    needed = max(int(np.ceil(a["delay"].max() * fs)) for a in arrivals) + hw + 2 + tail
    n = needed if length is None else max(int(length), 1)
    pole = math.exp(-2.0 * math.pi * SHADOW_CUTOFF_HZ / fs)
    channels = np.zeros((len(arrivals), n))
    for ch, arr in enumerate(arrivals):
        start, taps = fractional_delay_kernel(arr["delay"] * fs, hw)
        channels[ch] = _render_channel(start, taps, arr["gain"] * (1.0 - arr["shadow"]), n)
        if np.any(arr["shadow"] > 0):
            wet = _render_channel(start, taps, arr["gain"] * arr["shadow"], n)
            channels[ch] += lfilter([1.0 - pole], [1.0, -pole], wet)
    return ImpulseResponse(channels, fs, relative_geometry(source, receiver),
                           room.max_order, arrivals)


def schroeder_decay(ir: ImpulseResponse | np.ndarray) -> np.ndarray:
    """Energy decay curve in dB (0 dB at t=0), summed over channels."""
    h = ir.channels if isinstance(ir, ImpulseResponse) else np.atleast_2d(ir)
    energy = np.sum(np.asarray(h, dtype=float) ** 2, axis=0)
    edc = np.cumsum(energy[::-1])[::-1]
    if edc[0] <= 0:
        raise ValueError("silent impulse response")
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(edc / edc[0])


def rt60_schroeder(ir: ImpulseResponse | np.ndarray, sample_rate: int | None = None,
                   fit_range=(-5.0, -35.0)) -> float:
    """T30-based RT60: line fit of the EDC between -5 and -35 dB, extrapolated to 60 dB."""
    fs = ir.sample_rate if isinstance(ir, ImpulseResponse) else sample_rate
    if fs is None:
        raise ValueError("sample_rate required for raw arrays")
    edc = schroeder_decay(ir)
    hi, lo = fit_range
    i0 = int(np.argmax(edc <= hi))
    i1 = int(np.argmax(edc <= lo))
    if edc[i1] > lo or i1 <= i0 + 1:
        raise ValueError("decay does not span the fit range")
    t = np.arange(i0, i1 + 1) / fs
    slope, _ = np.polyfit(t, edc[i0:i1 + 1], 1)
    return -60.0 / slope


def rt60_sabine(room: RoomSpec) -> float:
    """0.161 V / sum(alpha_i S_i); a fully absorbing room returns 0 by convention."""
    alpha = np.asarray(room.absorption)
    if np.all(alpha == 1.0):
        return 0.0
    absorption_area = float(np.dot(alpha, room.surface_areas))
    if absorption_area <= 0:
        raise ValueError("Sabine RT60 undefined for a room without absorption")
    return 0.161 * room.volume / absorption_area


def rt60(item: ImpulseResponse | RoomSpec, method: str = "schroeder") -> float:
    if method == "schroeder":
        if not isinstance(item, ImpulseResponse):
            raise TypeError("schroeder RT60 needs an ImpulseResponse")
        return rt60_schroeder(item)
    if method == "sabine":
        if not isinstance(item, RoomSpec):
            raise TypeError("sabine RT60 needs a RoomSpec")
        return rt60_sabine(item)
    raise ValueError(f"unknown RT60 method {method!r}")
