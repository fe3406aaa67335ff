import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spatialsoundqa import SPEED_OF_SOUND
from spatialsoundqa.presets import (anechoic_entry, load_presets, preset_room, room_variants,
                                    sabine_absorption)
from spatialsoundqa.room import (GeometryError, ImpulseResponse, ReceiverSpec, RelativeGeometry,
                                 RoomSpec, SourceSpec, fractional_delay_kernel, image_arrivals,
                                 image_sources, relative_geometry, rt60_sabine, rt60_schroeder,
                                 schroeder_decay, simulate_rir, tetrahedron, to_receiver_frame,
                                 woodworth_itd)

FS = 32000


def brute_force_images(dims, src, alpha, R):
    """Independent enumeration: images (1-2p)(s + 2 r L)... per axis, written as nested loops.

    Along one axis, image (r, p) sits at (1 - 2p) * s + 2 r L and has struck the
    low wall |r - p| times and the high wall |r| times.
    """
    beta = [math.sqrt(1.0 - a) for a in alpha]
    out = []
    for rx, ry, rz in itertools.product(range(-R, R + 1), repeat=3):
        for px, py, pz in itertools.product((0, 1), repeat=3):
            pos, g = [], 1.0
            for axis, (r, p) in enumerate(((rx, px), (ry, py), (rz, pz))):
                pos.append((1 - 2 * p) * src[axis] + 2 * r * dims[axis])
                g *= beta[2 * axis] ** abs(r - p) * beta[2 * axis + 1] ** abs(r)
            out.append((tuple(pos), g))
    return out


def random_room(rng, R):
    dims = tuple(rng.uniform(2.5, 7.0, 3))
    alpha = tuple(rng.uniform(0.1, 0.8, 6))
    src = tuple(rng.uniform(0.3, 1.0, 3) * np.asarray(dims) * 0.8 + 0.1)
    mic = tuple(rng.uniform(0.2, 0.8, 3) * np.asarray(dims))
    return RoomSpec(dims, alpha, max_order=R), src, mic


@pytest.mark.parametrize("seed", range(5))
def test_image_arrivals_match_brute_force(seed):
    rng = np.random.default_rng(seed)
    R = int(rng.integers(1, 4))
    room, src, mic = random_room(rng, R)
    arr = image_arrivals(room, SourceSpec(src), ReceiverSpec(mic))[0]
    ref = []
    for pos, g in brute_force_images(room.dimensions, src, room.absorption, R):
        d = math.dist(pos, mic)
        ref.append((d / SPEED_OF_SOUND * FS, g / d))
    ref.sort()
    got = sorted(zip(arr["delay"] * FS, arr["gain"]))
    assert len(got) == len(ref)
    for (td, tg), (rd, rg) in zip(got, ref):
        assert abs(td - rd) < 1e-6
        assert abs(tg - rg) <= 1e-6 * abs(rg)


def test_rendered_direct_path_lands_on_its_delay():
    room = RoomSpec((6.0, 5.0, 3.0), (1.0,) * 6, max_order=0)
    src, mic = (1.0, 1.2, 1.5), (4.3, 3.1, 1.2)
    ir = simulate_rir(room, SourceSpec(src), ReceiverSpec(mic))
    expected = math.dist(src, mic) / SPEED_OF_SOUND * FS
    k = int(np.argmax(np.abs(ir.channels[0])))
    y0, y1, y2 = ir.channels[0, k - 1:k + 2]
    peak = k + 0.5 * (y0 - y2) / (y0 - 2 * y1 + y2)
    assert abs(peak - expected) < 0.5
    assert ir.channels[0].sum() == pytest.approx(1.0 / math.dist(src, mic), rel=1e-3)


def test_image_count_and_direct_gain():
    room = RoomSpec((4.0, 3.0, 2.5), (0.3,) * 6, max_order=2)
    pos, gain, order = image_sources(room, np.array([1.0, 1.0, 1.0]))
    assert pos.shape == ((2 * 5) ** 3, 3)
    direct = np.flatnonzero(order == 0)
    assert direct.size == 1 and gain[direct[0]] == 1.0
    np.testing.assert_allclose(pos[direct[0]], [1.0, 1.0, 1.0])


def test_first_order_image_gain_is_reflection_coefficient():
    room = RoomSpec((4.0, 3.0, 2.5), (0.36, 0.0, 0.0, 0.0, 0.0, 0.0), max_order=1)
    pos, gain, order = image_sources(room, np.array([1.0, 1.0, 1.0]))
    i = np.flatnonzero(np.all(np.isclose(pos, [-1.0, 1.0, 1.0]), axis=1))[0]
    assert order[i] == 1 and gain[i] == pytest.approx(0.8)


def test_max_order_guard():
    with pytest.raises(ValueError):
        image_sources(RoomSpec((3, 3, 3), max_order=11), np.array([1.0, 1.0, 1.0]))


def test_invalid_room_parameters():
    with pytest.raises(ValueError):
        RoomSpec((3, 0, 3))
    with pytest.raises(ValueError):
        RoomSpec((3, 3, 3), (0.5,) * 5)
    with pytest.raises(ValueError):
        RoomSpec((3, 3, 3), (1.2,) * 6)


def test_geometry_errors():
    room = RoomSpec((4.0, 4.0, 3.0), max_order=1)
    with pytest.raises(GeometryError):
        simulate_rir(room, SourceSpec((5.0, 1.0, 1.0)), ReceiverSpec((2.0, 2.0, 1.5)))
    with pytest.raises(GeometryError):
        simulate_rir(room, SourceSpec((2.0, 2.0, 1.5)), ReceiverSpec((2.0, 2.0, 1.5)))
    with pytest.raises(GeometryError):
        simulate_rir(room, SourceSpec((2.0, 2.05, 1.5)), ReceiverSpec.binaural((2.0, 2.0, 1.5)))


def test_fractional_delay_kernel_matches_windowed_sinc():
    d = np.array([10.0, 10.3, 57.75, 3.5])
    start, taps = fractional_delay_kernel(d, 40)
    for i, di in enumerate(d):
        n = start[i] + np.arange(81)
        x = n - di
        ref = np.sinc(x) * 0.5 * (1 + np.cos(np.pi * x / 41))
        np.testing.assert_allclose(taps[i], ref, atol=1e-12)
    # integer delay is a unit impulse
    np.testing.assert_allclose(taps[0], np.eye(81)[40], atol=1e-12)


def test_receiver_frame_and_relative_geometry():
    rx = ReceiverSpec((2.0, 2.0, 1.5), heading_deg=90.0)
    # heading 90 faces world +y, so world +y is "front" and world -x is "left"
    np.testing.assert_allclose(to_receiver_frame([0.0, 1.0, 0.0], rx), [1.0, 0.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(to_receiver_frame([-1.0, 0.0, 0.0], rx), [0.0, 1.0, 0.0], atol=1e-12)
    g = relative_geometry(SourceSpec((1.0, 2.0, 1.5)), rx)
    assert g.azimuth_deg == pytest.approx(90.0)
    assert g.elevation_deg == pytest.approx(0.0)
    assert g.distance_m == pytest.approx(1.0)


@given(st.floats(-179.0, 180.0), st.floats(-89.0, 89.0), st.floats(0.1, 20.0))
def test_relative_geometry_round_trip(az, el, d):
    g = RelativeGeometry(az, el, d)
    back = RelativeGeometry.from_vector(g.vector)
    assert back.azimuth_deg == pytest.approx(az, abs=1e-7)
    assert back.elevation_deg == pytest.approx(el, abs=1e-7)
    assert back.distance_m == pytest.approx(d)


def test_tetrahedron_geometry():
    v = tetrahedron(0.1)
    np.testing.assert_allclose(v.mean(axis=0), 0.0, atol=1e-15)
    edges = [np.linalg.norm(v[i] - v[j]) for i, j in itertools.combinations(range(4), 2)]
    np.testing.assert_allclose(edges, 0.1)


def test_spherical_head_itd_follows_woodworth():
    room = RoomSpec((10.0, 10.0, 6.0), (1.0,) * 6, max_order=0)
    a = 0.0875
    rx = ReceiverSpec.binaural((5.0, 5.0, 3.0), head_radius=a)
    for lat in (0.0, 20.0, 40.0, 70.0):
        t = math.radians(lat)
        src = SourceSpec((5.0 + 3 * math.cos(t), 5.0 + 3 * math.sin(t), 3.0))
        left, right = image_arrivals(room, src, rx)
        itd = right["delay"][0] - left["delay"][0]
        assert itd == pytest.approx(float(woodworth_itd(t, a)), abs=1e-12)
        assert left["shadow"][0] == 0.0
        assert right["shadow"][0] == pytest.approx(lat / 90.0)


def test_head_shadow_lowers_contralateral_high_frequencies():
    room = RoomSpec((10.0, 10.0, 6.0), (1.0,) * 6, max_order=0)
    rx = ReceiverSpec.binaural((5.0, 5.0, 3.0))
    ir = simulate_rir(room, SourceSpec((5.0, 8.0, 3.0)), rx)  # hard left
    spec = np.abs(np.fft.rfft(ir.channels, 4096))
    f = np.fft.rfftfreq(4096, 1 / FS)
    hi = f > 6000
    assert spec[1, hi].mean() < 0.3 * spec[0, hi].mean()


def test_schroeder_rt60_on_synthetic_exponential():
    rt = 0.20
    tau = rt / (3 * math.log(10))  # amplitude time constant for a 60 dB energy drop in rt
    t = np.arange(int(0.6 * FS)) / FS
    noise = np.random.default_rng(0).standard_normal(t.size)
    h = noise * np.exp(-t / tau)
    assert rt60_schroeder(h, FS) == pytest.approx(rt, rel=0.02)
    edc = schroeder_decay(h)
    assert edc[0] == 0.0 and np.all(np.diff(edc) <= 1e-12)


def test_schroeder_needs_sample_rate_and_decay():
    with pytest.raises(ValueError):
        rt60_schroeder(np.ones(10))
    with pytest.raises(ValueError):
        rt60_schroeder(np.r_[1.0, np.zeros(10)], FS)


def test_sabine_formula_and_edge_cases():
    room = RoomSpec((5.0, 4.0, 3.0), (0.25,) * 6)
    s = 2 * (5 * 4 + 5 * 3 + 4 * 3)
    assert rt60_sabine(room) == pytest.approx(0.161 * 60 / (0.25 * s))
    assert rt60_sabine(RoomSpec((5.0, 4.0, 3.0), (1.0,) * 6)) == 0.0
    with pytest.raises(ValueError):
        rt60_sabine(RoomSpec((5.0, 4.0, 3.0), (0.0,) * 6))


@pytest.mark.parametrize("alpha", [0.2, 0.3, 0.4, 0.5])
def test_schroeder_tracks_sabine(alpha):
    room = RoomSpec((5.0, 4.0, 3.0), (alpha,) * 6, max_order=10)
    ir = simulate_rir(room, SourceSpec((1.3, 1.1, 1.4)), ReceiverSpec((3.6, 2.7, 1.6)))
    assert rt60_schroeder(ir) == pytest.approx(rt60_sabine(room), rel=0.2)


def test_high_absorption_decay_lies_between_eyring_and_sabine():
    room = RoomSpec((5.0, 4.0, 3.0), (0.6,) * 6, max_order=10)
    ir = simulate_rir(room, SourceSpec((1.3, 1.1, 1.4)), ReceiverSpec((3.6, 2.7, 1.6)))
    eyring = 0.161 * room.volume / (-room.surface_areas.sum() * math.log(1 - 0.6))
    assert eyring < rt60_schroeder(ir) < rt60_sabine(room)


def test_presets_cover_the_nine_room_types():
    presets = load_presets()
    assert presets["schema_version"] == 1
    names = [r["category"] for r in presets["rooms"]]
    assert len(names) == 9 and len(set(names)) == 9
    for r in presets["rooms"]:
        assert 0.17 <= r["target_rt60_s"] <= 0.23


def test_room_variants_keep_sabine_on_design_target():
    presets = load_presets()
    rooms = room_variants(presets, per_category=3, seed=4)
    assert len(rooms) == 27
    design = {r["category"]: r["design_rt60_s"] for r in presets["rooms"]}
    for room in rooms:
        assert rt60_sabine(room) == pytest.approx(design[room.name.rsplit("_", 1)[0]], rel=1e-9)
    again = room_variants(presets, per_category=3, seed=4)
    assert rooms == again


def test_sabine_absorption_inverts_sabine():
    a = sabine_absorption((5.0, 4.0, 3.0), 0.2)
    assert rt60_sabine(RoomSpec((5.0, 4.0, 3.0), (a,) * 6)) == pytest.approx(0.2)


def test_anechoic_room_is_direct_path_only():
    room = preset_room(anechoic_entry())
    ir = simulate_rir(room, SourceSpec((2.0, 2.0, 2.0)), ReceiverSpec((5.0, 5.0, 2.0)))
    assert len(ir.arrivals[0]["delay"]) == 1


@settings(max_examples=20, deadline=None)
@given(st.floats(0.3, 3.7), st.floats(0.3, 2.7), st.floats(0.3, 2.2))
def test_rir_is_finite_and_causal(x, y, z):
    room = RoomSpec((4.0, 3.0, 2.5), (0.4,) * 6, max_order=2)
    rx = ReceiverSpec((2.0, 1.5, 1.25))
    if math.dist((x, y, z), rx.position) < 0.05:
        return
    ir = simulate_rir(room, SourceSpec((x, y, z)), rx)
    assert isinstance(ir, ImpulseResponse)
    assert np.all(np.isfinite(ir.channels))
    first = math.dist((x, y, z), rx.position) / SPEED_OF_SOUND * FS
    assert np.max(np.abs(ir.channels[0, :max(int(first) - 45, 0)]), initial=0.0) < 1e-12


def test_total_energy_falls_as_absorption_rises():
    src, rx = SourceSpec((1.2, 0.9, 1.1)), ReceiverSpec((2.9, 2.2, 1.4))
    energies = [float(np.sum(simulate_rir(RoomSpec((4.0, 3.0, 2.5), a, max_order=4), src, rx).channels ** 2))
                for a in (0.1, 0.3, 0.5, 0.7, 0.9)]
    assert all(e1 > e2 for e1, e2 in zip(energies, energies[1:]))
