import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from tomomatch.errors import EmptyCloud, EmptySlice, OutOfBounds
from tomomatch.geometry import PointCloud, Transform4DoF, apply_transform, voxel_filter
from tomomatch.synthetic import gen_environment, single_room
from tomomatch.tomography import (
    Slice,
    band_edges,
    band_index,
    extract_slice,
    pixel_to_metric,
    rasterize,
    slice_heights,
    slice_map,
    slice_members,
    write_slice_index,
)


def sl(xy):
    xy = np.asarray(xy, dtype=float)
    return Slice(0.0, 0.05, np.column_stack([xy, np.zeros(len(xy))]))


def test_heights_example():
    c = PointCloud([[0, 0, 0.0], [0, 0, 0.4], [0, 0, 1.0]])
    assert slice_heights(c, 0.5) == pytest.approx([0.0, 0.5, 1.0])


def test_single_point_one_band():
    assert slice_heights(PointCloud([[1, 1, 2.3]]), 0.1) == [2.3]


def test_thin_span_single_height():
    c = PointCloud([[0, 0, 1.0], [0, 0, 1.04]])
    assert slice_heights(c, 0.1) == [1.0]


def test_empty_cloud_raises():
    with pytest.raises(EmptyCloud):
        slice_heights(PointCloud(np.empty((0, 3))), 0.1)


def test_band_bounds_half_open():
    h, t = 1.0, 0.25
    c = PointCloud([[0, 0, h + t], [0, 0, h - t], [0, 0, h]])
    zs = sorted(extract_slice(c, h, t).points[:, 2])
    assert zs == [h, h + t]


def test_empty_band():
    assert len(extract_slice(PointCloud([[0, 0, 5.0]]), 0.0, 0.1)) == 0


def partition_check(cloud, g):
    """Band test for every point against every band, using the shared edges."""
    hs = np.array(slice_heights(cloud, g))
    k = np.arange(len(hs))
    lo, hi = band_edges(hs[0], k - 1, g), band_edges(hs[0], k, g)
    z = cloud.points[:, 2][:, None]
    member = (z > lo[None]) & (z <= hi[None])
    return member.sum(axis=1)


@given(st.integers(1, 400), st.floats(0.01, 1.0), st.integers(0, 2**32 - 1))
def test_partition_property(n, g, seed):
    rng = np.random.default_rng(seed)
    c = PointCloud(rng.uniform(-3, 3, (n, 3)) * rng.uniform(0.01, 3))
    counts = partition_check(c, g)
    assert (counts == 1).all()
    hs = slice_heights(c, g)
    np.testing.assert_allclose(np.diff(hs), g, rtol=1e-9, atol=1e-12)
    assert hs[0] == c.points[:, 2].min()
    assert hs[-1] + g / 2 >= c.points[:, 2].max()


@given(st.integers(1, 300), st.floats(0.01, 1.0), st.integers(0, 2**32 - 1), st.booleans())
def test_band_index_matches_edges(n, g, seed, on_edges):
    rng = np.random.default_rng(seed)
    z = rng.uniform(-2, 2, n)
    if on_edges:
        z = z[0] + rng.integers(0, 40, n) * (g / 2)
    z_min = float(z.min())
    k = band_index(z, z_min, g)
    assert (z > band_edges(z_min, k - 1, g)).all() and (z <= band_edges(z_min, k, g)).all()


def test_band_edges_shared():
    hs = band_edges(0.1, np.arange(-1, 50), 0.07)
    np.testing.assert_allclose(np.diff(hs), 0.07)
    np.testing.assert_allclose(hs, 0.1 + (np.arange(-1, 50) + 0.5) * 0.07)


@given(st.integers(1, 300), st.floats(0.01, 1.0), st.integers(0, 2**32 - 1))
def test_band_index_agrees_with_extract_slice(n, g, seed):
    rng = np.random.default_rng(seed)
    c = PointCloud(rng.uniform(-2, 2, (n, 3)))
    hs = slice_heights(c, g)
    k = band_index(c.points[:, 2], hs[0], g)
    for i, h in enumerate(hs):
        expect = np.sort(extract_slice(c, h, g / 2).points[:, 2])
        np.testing.assert_array_equal(np.sort(c.points[k == i, 2]), expect)


def test_band_edges_exact():
    g = 0.1
    z = np.array([0.0, 0.05, 0.0500001, 0.15, 0.1500001])
    assert band_index(z, 0.0, g).tolist() == [0, 0, 1, 1, 2]


def test_rasterize_single_point():
    img = rasterize(sl([[1.3, -2.0]]), 0.1)
    assert (img.width, img.height) == (1, 1) and img.bits[0, 0]
    assert (img.origin_x, img.origin_y) == (1.3, -2.0)


def test_rasterize_two_points_one_grid_apart():
    img = rasterize(sl([[0.0, 0.0], [0.1, 0.0]]), 0.1)
    assert (img.width, img.height) == (2, 1) and img.bits.all()


def test_rasterize_close_points_share_pixel():
    img = rasterize(sl([[0.0, 0.0], [0.04, 0.0]]), 0.1)
    assert (img.width, img.height) == (1, 1) and img.occupied == 1


def test_rasterize_empty():
    with pytest.raises(EmptySlice):
        rasterize(sl(np.empty((0, 2))), 0.1)


def test_rasterize_matches_floor_oracle(rng):
    g = 0.07
    xy = rng.uniform(-1, 2, (400, 2))
    img = rasterize(sl(xy), g)
    ox, oy = xy.min(axis=0)
    expect = {(math.floor((x - ox) / g), math.floor((y - oy) / g)) for x, y in xy}
    got = {(u, v) for v, u in zip(*np.nonzero(img.bits))}
    assert got == expect
    assert img.width * img.height == img.bits.size
    assert img.occupied <= len(xy)


@given(st.integers(-50, 50), st.integers(-50, 50), st.integers(0, 1000))
def test_rasterize_translation_consistent(a, b, seed):
    g = 0.25
    rng = np.random.default_rng(seed)
    xy = rng.integers(0, 40, (60, 2)) * g + 0.03
    base = rasterize(sl(xy), g)
    moved = rasterize(sl(xy + [a * g, b * g]), g)
    np.testing.assert_array_equal(base.bits, moved.bits)
    assert moved.origin_x == pytest.approx(base.origin_x + a * g, abs=1e-9)
    assert moved.origin_y == pytest.approx(base.origin_y + b * g, abs=1e-9)


def test_pixel_to_metric_centre():
    img = rasterize(sl([[0.0, 0.0], [0.5, 0.5]]), 0.1)
    assert pixel_to_metric(img, 0, 0) == pytest.approx((0.05, 0.05))


def test_pixel_to_metric_out_of_bounds():
    img = rasterize(sl([[0.0, 0.0]]), 0.1)
    with pytest.raises(OutOfBounds):
        pixel_to_metric(img, 1, 0)
    with pytest.raises(OutOfBounds):
        pixel_to_metric(img, 0, -1)


def test_pixel_roundtrip_within_quantization(rng):
    g = 0.05
    xy = rng.uniform(-3, 3, (500, 2))
    img = rasterize(sl(xy), g)
    for x, y in xy:
        u = math.floor((x - img.origin_x) / g)
        v = math.floor((y - img.origin_y) / g)
        mx, my = pixel_to_metric(img, u, v)
        assert math.hypot(mx - x, my - y) <= g / math.sqrt(2) + 1e-12


def test_slice_map_two_story_entry_count():
    g = 0.05
    room = gen_environment(single_room(2, density=800))
    top = room.points.max(axis=0)[2]
    stacked = PointCloud(np.vstack([room.points, apply_transform(room, Transform4DoF(0, 0, top + 0.3, 0)).points]))
    cloud = voxel_filter(stacked, g)
    sset = slice_map(cloud, g, max_features=50, keep_images=False)
    hs = slice_heights(cloud, g)
    nonempty = [k for k, h in enumerate(hs) if len(extract_slice(cloud, h, g / 2))]
    assert sset.indices() == nonempty
    assert len(sset) < len(hs)
    np.testing.assert_allclose(sset.heights(), [hs[k] for k in nonempty])


def test_slice_map_planar_cloud(rng):
    c = PointCloud(np.column_stack([rng.uniform(0, 2, (200, 2)), np.full(200, 0.7)]))
    sset = slice_map(c, 0.05)
    assert len(sset) == 1 and sset.heights() == [0.7]


def test_slice_members_union_is_cloud(rng):
    c = PointCloud(rng.normal(size=(2000, 3)))
    members = slice_members(c, 0.13)
    idx = np.concatenate(list(members.values()))
    assert np.array_equal(np.sort(idx), np.arange(len(c)))


def test_slice_map_images_match_members(rng):
    g = 0.1
    c = voxel_filter(PointCloud(rng.uniform(0, 3, (3000, 3))), g)
    sset = slice_map(c, g, max_features=20)
    members = slice_members(c, g)
    for e in sset.entries:
        img = rasterize(sl(c.points[members[e.index], :2]), g)
        np.testing.assert_array_equal(e.image.bits, img.bits)


def test_slice_map_parallel_identical(rng):
    g = 0.05
    c = voxel_filter(gen_environment(single_room(1, density=800)), g)
    a = slice_map(c, g, max_features=200, workers=1)
    b = slice_map(c, g, max_features=200, workers=3)
    assert a.indices() == b.indices()
    for ea, eb in zip(a.entries, b.entries):
        np.testing.assert_array_equal(ea.features.descriptors, eb.features.descriptors)
        np.testing.assert_array_equal(ea.features.metric_xy, eb.features.metric_xy)


def test_write_slice_index(tmp_path, rng):
    c = PointCloud(rng.uniform(0, 1, (300, 3)))
    sset = slice_map(c, 0.2, max_features=10)
    path = write_slice_index(sset, tmp_path / "out")
    index = json.loads(path.read_text())
    assert len(index["slices"]) == len(sset)
    first = index["slices"][0]
    raw = (tmp_path / "out" / first["file"]).read_bytes()
    assert raw.startswith(f"P5\n{first['width']} {first['height_px']}\n255\n".encode())
