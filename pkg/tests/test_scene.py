import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spatialsoundqa import CLIP_SAMPLES
from spatialsoundqa.room import (ImpulseResponse, ReceiverSpec, RelativeGeometry, RoomSpec,
                                 relative_geometry)
from spatialsoundqa.scene import (DEFAULT_DISTANCES, ClipSource, DistanceDistribution, OctantLabel,
                                  PlacedSource, SceneError, SpatialClip, axis_margin_ok,
                                  distance_bin, fit_length, loudness_normalize, mix_scene,
                                  place_sources, spatial_labels, spatialize)


def naive_convolve(x, h):
    y = np.zeros(len(x) + len(h) - 1)
    for i, v in enumerate(h):
        y[i:i + len(x)] += v * x
    return y


def test_spatialize_matches_naive_convolution(rng):
    x = rng.standard_normal(4000)
    h = rng.standard_normal((2, 300)) * np.exp(-np.arange(300) / 60.0)
    geom = RelativeGeometry(30.0, 10.0, 2.0)
    out = spatialize(ClipSource(x, ("speech",)), ImpulseResponse(h, 32000, geom))
    assert out.channels.shape == (2, CLIP_SAMPLES)
    for ch in range(2):
        ref = naive_convolve(x, h[ch])
        np.testing.assert_allclose(out.channels[ch, :ref.size], ref, atol=1e-9)
        assert not np.any(out.channels[ch, ref.size:])


def test_spatialize_truncates_long_clips(rng):
    x = rng.standard_normal(CLIP_SAMPLES + 5000)
    h = np.zeros((1, 50))
    h[0, 10] = 0.5
    out = spatialize(ClipSource(x, ("a",)), ImpulseResponse(h, 32000, RelativeGeometry(0.0, 10.0, 1.0)))
    np.testing.assert_allclose(out.channels[0, 10:], 0.5 * x[:CLIP_SAMPLES - 10])


def test_loudness_normalize(rng):
    y = loudness_normalize(rng.standard_normal(1000) * 7)
    assert float(np.sum(y ** 2)) == pytest.approx(1.0)
    with pytest.raises(SceneError):
        loudness_normalize(np.zeros(10))


def test_fit_length():
    assert fit_length(np.ones((2, 10)), 4).shape == (2, 4)
    padded = fit_length(np.ones(3), 6)
    np.testing.assert_array_equal(padded, [1, 1, 1, 0, 0, 0])


@pytest.mark.parametrize("d,expected", [(0.1, 0.5), (0.74, 0.5), (0.75, 1.0), (2.6, 2.5),
                                        (3.0, 3.0), (9.9, 10.0), (10.0, 10.0)])
def test_distance_bin(d, expected):
    assert distance_bin(d) == expected


@pytest.mark.parametrize("d", [0.0, -1.0, 10.01])
def test_distance_bin_rejects_out_of_range(d):
    with pytest.raises(SceneError):
        distance_bin(d)


def test_octant_signs_and_zero_convention():
    assert OctantLabel.from_vector([1, 1, 1]).words() == ("left", "front", "above")
    assert OctantLabel.from_vector([-1, -1, -1]).words() == ("right", "behind", "below")
    assert OctantLabel.from_vector([0, 0, 0]).words() == ("right", "behind", "below")
    assert str(OctantLabel("left", "behind", "below")) == "left, behind, below"
    with pytest.raises(ValueError):
        OctantLabel("up", "front", "above")


def test_spatial_labels_from_geometry():
    octant, b = spatial_labels(RelativeGeometry(135.0, -20.0, 2.4))
    assert octant.words() == ("left", "behind", "below")
    assert b == 2.5


def test_axis_margin():
    assert axis_margin_ok([1.0, 1.0, 1.0])
    assert not axis_margin_ok([1.0, 0.01, 1.0])


def _placed(cats, az, el=10.0, d=2.0):
    return PlacedSource.from_geometry(cats, RelativeGeometry(az, el, d))


def test_mix_scene_rules():
    ch = np.zeros((2, CLIP_SAMPLES))
    a = SpatialClip(ch + 1, [_placed(("dog",), 45.0)])
    b = SpatialClip(ch + 2, [_placed(("cat",), -45.0)])
    mixed = mix_scene(a, b)
    assert np.all(mixed.channels == 3) and len(mixed.sources) == 2
    with pytest.raises(SceneError, match="share categories"):
        mix_scene(a, SpatialClip(ch, [_placed(("dog",), -45.0)]))
    with pytest.raises(SceneError, match="octant"):
        mix_scene(a, SpatialClip(ch, [_placed(("cat",), 50.0)]))
    with pytest.raises(SceneError):
        mix_scene(a, SpatialClip(np.zeros((4, CLIP_SAMPLES)), [_placed(("cat",), -45.0)]))
    with pytest.raises(SceneError):
        mix_scene(mixed, SpatialClip(ch, [_placed(("bird",), -135.0)]))


def test_clip_source_validation():
    with pytest.raises(SceneError):
        ClipSource(np.ones((2, 5)), ("a",))
    with pytest.raises(SceneError):
        ClipSource(np.ones(5), ("a",), sample_rate=44100)
    with pytest.raises(SceneError):
        ClipSource(np.array([1.0, np.nan]), ("a",))
    with pytest.raises(SceneError):
        ClipSource(np.ones(5), ())


def test_distance_distribution():
    dd = DistanceDistribution((0.5, 1.0, 1.5), (1, 2, 1))
    assert dd.weights == (0.25, 0.5, 0.25)
    assert dd.support == [0.5, 1.0, 1.5]
    draws = dd.sample_bins(np.random.default_rng(0), 40000)
    assert np.mean(draws == 1.0) == pytest.approx(0.5, abs=0.01)
    with pytest.raises(ValueError):
        DistanceDistribution((0.7,), (1.0,))
    with pytest.raises(ValueError):
        DistanceDistribution((0.5,), (-1.0,))
    # the default distribution peaks between 1 and 2 m
    peak = DEFAULT_DISTANCES.bins[int(np.argmax(DEFAULT_DISTANCES.weights))]
    assert 1.0 <= peak <= 2.0


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([1, 2]), st.booleans())
def test_placement_rules_hold(seed, k, use_dist):
    room = RoomSpec((6.0, 5.0, 3.0), max_order=1)
    rx = ReceiverSpec.binaural((3.0, 2.5, 1.5), heading_deg=37.0)
    rng = np.random.default_rng(seed)
    srcs = place_sources(room, rx, k, rng, DEFAULT_DISTANCES if use_dist else None)
    assert len(srcs) == k
    labels = []
    for s in srcs:
        assert room.contains(s.position, 0.3)
        g = relative_geometry(s, rx)
        assert 0.5 <= g.distance_m <= 10.0
        assert axis_margin_ok(g.vector)
        labels.append(spatial_labels(g)[0])
    if k == 2:
        assert labels[0] != labels[1]


def test_placement_honours_accept_and_is_deterministic():
    room = RoomSpec((6.0, 5.0, 3.0), max_order=1)
    rx = ReceiverSpec((3.0, 2.5, 1.5))

    def far_apart(v):
        return math.dist(v[0], v[1]) > 3.0

    a = place_sources(room, rx, 2, np.random.default_rng(3), accept=far_apart)
    b = place_sources(room, rx, 2, np.random.default_rng(3), accept=far_apart)
    assert a == b
    assert math.dist(a[0].position, a[1].position) > 3.0
    with pytest.raises(SceneError):
        place_sources(room, rx, 2, np.random.default_rng(3), accept=lambda v: False)
    with pytest.raises(SceneError):
        place_sources(room, rx, 3, np.random.default_rng(3))
