import math
from itertools import product

import numpy as np
import pytest
from hypothesis import given, strategies as st

from tomomatch.errors import NonFiniteCoordinate, NonPositiveGrid, ParseError
from tomomatch.geometry import (
    PointCloud,
    Transform4DoF,
    apply_transform,
    compose,
    invert,
    load_cloud,
    save_cloud,
    voxel_filter,
    wrap_angle,
)

finite = st.floats(-50, 50, allow_nan=False)
angles = st.floats(-10, 10, allow_nan=False)
transforms = st.builds(Transform4DoF, finite, finite, finite, angles)


def binning_oracle(points, g):
    """Centroid per cell with plain Python dictionaries."""
    cells = {}
    for p in points:
        key = tuple(math.floor(c / g) for c in p)
        cells.setdefault(key, []).append(p)
    return {k: np.mean(v, axis=0) for k, v in cells.items()}


def test_voxel_filter_empty():
    out = voxel_filter(PointCloud(np.empty((0, 3))), 0.1)
    assert out.is_empty and out.grid_size == 0.1


def test_voxel_filter_two_points_in_one_cell():
    out = voxel_filter(PointCloud([[0.01, 0.01, 0.01], [0.02, 0.03, 0.02]]), 0.1)
    np.testing.assert_allclose(out.points, [[0.015, 0.02, 0.015]], atol=1e-15)


def test_voxel_filter_cube_corners_unchanged():
    corners = np.array(list(product([0.0, 1.0], repeat=3)))
    out = voxel_filter(PointCloud(corners), 0.1)
    assert len(out) == 8
    assert {tuple(p) for p in out.points} == {tuple(p) for p in corners}


def test_voxel_filter_rejects_bad_grid():
    with pytest.raises(NonPositiveGrid):
        voxel_filter(PointCloud([[0, 0, 0]]), 0.0)


def test_voxel_filter_matches_oracle(rng):
    pts = rng.uniform(-1, 1, (3000, 3))
    g = 0.17
    expect = binning_oracle(pts, g)
    out = voxel_filter(PointCloud(pts), g)
    assert len(out) == len(expect)
    got = {tuple(math.floor(c / g) for c in p): p for p in out.points}
    for k, centroid in expect.items():
        np.testing.assert_allclose(got[k], centroid, atol=1e-12)


def test_voxel_boundary_goes_to_higher_cell():
    out = voxel_filter(PointCloud([[0.1, 0.0, 0.0], [0.0999, 0.0, 0.0]]), 0.1)
    assert len(out) == 2


@given(st.lists(st.tuples(finite, finite, finite), min_size=1, max_size=200), st.floats(0.05, 5))
def test_voxel_filter_idempotent_cardinality(pts, g):
    once = voxel_filter(PointCloud(pts), g)
    assert len(voxel_filter(once, g)) == len(once) <= len(pts)


def test_pointcloud_rejects_nonfinite():
    with pytest.raises(NonFiniteCoordinate):
        PointCloud([[0, 0, np.nan]])


def test_apply_identity_unchanged(rng):
    c = PointCloud(rng.normal(size=(50, 3)))
    np.testing.assert_array_equal(apply_transform(c, Transform4DoF.identity()).points, c.points)


def test_apply_quarter_turn_by_hand():
    out = apply_transform(PointCloud([[1.0, 0.0, 0.0]]), Transform4DoF(1, 2, 3, math.pi / 2))
    np.testing.assert_allclose(out.points, [[1.0, 3.0, 3.0]], atol=1e-12)


def test_matrix_is_yaw_only():
    m = Transform4DoF(1, 2, 3, 0.3).matrix()
    c, s = math.cos(0.3), math.sin(0.3)
    np.testing.assert_array_equal(m, [[c, -s, 0, 1], [s, c, 0, 2], [0, 0, 1, 3], [0, 0, 0, 1]])


@given(transforms)
def test_apply_then_invert_roundtrip(t):
    pts = np.random.default_rng(0).uniform(-10, 10, (20, 3))
    back = apply_transform(apply_transform(PointCloud(pts), t), invert(t))
    np.testing.assert_allclose(back.points, pts, atol=1e-9)


@given(transforms)
def test_apply_preserves_distances(t):
    pts = np.random.default_rng(1).uniform(-10, 10, (15, 3))
    out = apply_transform(PointCloud(pts), t).points
    d0 = np.linalg.norm(pts[:, None] - pts[None], axis=2)
    d1 = np.linalg.norm(out[:, None] - out[None], axis=2)
    np.testing.assert_allclose(d1, d0, atol=1e-9)


def test_compose_identity():
    t = Transform4DoF(1, -2, 0.5, 2.0)
    assert compose(t, Transform4DoF.identity()).as_tuple() == pytest.approx(t.as_tuple(), abs=1e-15)


def test_invert_by_hand():
    inv = invert(Transform4DoF(1, 0, 0, math.pi / 2))
    assert inv.as_tuple() == pytest.approx((0.0, 1.0, 0.0, -math.pi / 2), abs=1e-12)


def test_compose_wraps_theta():
    t = Transform4DoF(0, 0, 0, 3 * math.pi / 4)
    assert compose(t, t).theta == pytest.approx(-math.pi / 2, abs=1e-12)


def test_theta_wrapped_at_construction():
    assert Transform4DoF(0, 0, 0, -math.pi).theta == math.pi
    assert Transform4DoF(0, 0, 0, 3 * math.pi).theta == pytest.approx(math.pi)
    assert -math.pi < Transform4DoF(0, 0, 0, -7.0).theta <= math.pi


@given(transforms, transforms, transforms)
def test_compose_associative(a, b, c):
    left = compose(compose(a, b), c).matrix()
    right = compose(a, compose(b, c)).matrix()
    np.testing.assert_allclose(left, right, atol=1e-9)


@given(transforms)
def test_compose_with_inverse_is_identity(t):
    np.testing.assert_allclose(compose(t, invert(t)).matrix(), np.eye(4), atol=1e-9)


@given(transforms, transforms)
def test_compose_matches_matrix_product(a, b):
    np.testing.assert_allclose(compose(a, b).matrix(), a.matrix() @ b.matrix(), atol=1e-9)


@given(angles)
def test_wrap_angle_range(a):
    w = wrap_angle(a)
    assert -math.pi < w <= math.pi
    assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-9)


def test_load_xyz_three_lines(tmp_path):
    p = tmp_path / "c.xyz"
    p.write_text("# header\n0 0 0\n1 2 3\n\n4.5 -1 2\n")
    assert len(load_cloud(p)) == 3


def test_load_xyz_nan(tmp_path):
    p = tmp_path / "c.xyz"
    p.write_text("0 0 0\nnan 1 2\n")
    with pytest.raises(NonFiniteCoordinate):
        load_cloud(p)


def test_load_xyz_garbage(tmp_path):
    p = tmp_path / "c.xyz"
    p.write_text("0 0 0\n1 two 3\n")
    with pytest.raises(ParseError):
        load_cloud(p)


def test_ply_roundtrip_exact(tmp_path, rng):
    pts = rng.uniform(-5, 5, (100, 3)).astype(np.float32).astype(np.float64)
    save_cloud(PointCloud(pts), tmp_path / "c.ply")
    np.testing.assert_array_equal(load_cloud(tmp_path / "c.ply").points, pts)


def test_xyz_roundtrip_close(tmp_path, rng):
    pts = rng.uniform(-5, 5, (100, 3))
    save_cloud(PointCloud(pts), tmp_path / "c.xyz", format="xyz")
    np.testing.assert_allclose(load_cloud(tmp_path / "c.xyz").points, pts, atol=1e-6)


def test_ply_skips_unknown_properties(tmp_path):
    rec = np.array(
        [(1.0, 2.0, 3.0, 255, 0.5), (4.0, 5.0, 6.0, 12, 0.25)],
        dtype=[("x", "<f4"), ("y", "<f4"), ("z", "<f4"), ("red", "u1"), ("w", "<f8")],
    )
    header = (
        "ply\nformat binary_little_endian 1.0\ncomment test\nelement vertex 2\n"
        "property float x\nproperty float y\nproperty float z\nproperty uchar red\nproperty double w\n"
        "end_header\n"
    )
    p = tmp_path / "c.ply"
    p.write_bytes(header.encode() + rec.tobytes())
    np.testing.assert_array_equal(load_cloud(p).points, [[1, 2, 3], [4, 5, 6]])


def test_ply_nan_rejected(tmp_path):
    save_cloud(PointCloud([[0, 0, 0]]), tmp_path / "ok.ply")
    raw = bytearray((tmp_path / "ok.ply").read_bytes())
    raw[-4:] = np.float32(np.nan).tobytes()
    (tmp_path / "bad.ply").write_bytes(bytes(raw))
    with pytest.raises(NonFiniteCoordinate):
        load_cloud(tmp_path / "bad.ply")
