import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from reflexnav.core import Aabb3, CameraModel, aabb_iou3d, backproject, project, rot_z, wrap_angle

finite = st.floats(-50, 50, allow_nan=False)
half = st.floats(0.01, 5, allow_nan=False)


def box(c, h):
    return Aabb3(np.array(c, float), np.array(h, float))


def test_iou_identical_cubes():
    a = box([0, 0, 0], [0.5] * 3)
    assert aabb_iou3d(a, a) == 1.0


def test_iou_disjoint():
    assert aabb_iou3d(box([0, 0, 0], [0.5] * 3), box([10, 0, 0], [0.5] * 3)) == 0.0


def test_iou_half_offset_is_one_third():
    # overlap 0.5 x 1 x 1, union 1 + 1 - 0.5
    iou = aabb_iou3d(box([0, 0, 0], [0.5] * 3), box([0.5, 0, 0], [0.5] * 3))
    assert iou == pytest.approx(1 / 3, abs=1e-15)


def test_box_rejects_nonpositive_extent():
    with pytest.raises(ValueError):
        box([0, 0, 0], [0.5, 0.0, 0.5])


@given(st.tuples(finite, finite, finite), st.tuples(half, half, half),
       st.tuples(finite, finite, finite), st.tuples(half, half, half))
def test_iou_symmetric_and_bounded(c1, h1, c2, h2):
    a, b = box(c1, h1), box(c2, h2)
    x, y = aabb_iou3d(a, b), aabb_iou3d(b, a)
    assert x == pytest.approx(y, abs=1e-12)
    assert 0.0 <= x <= 1.0


@given(st.tuples(finite, finite, finite), st.tuples(half, half, half), st.floats(0.01, 1.0))
def test_iou_one_only_for_identical(c, h, shift):
    a = box(c, h)
    b = box(np.array(c) + [shift, 0, 0], h)
    assert aabb_iou3d(a, a) == pytest.approx(1.0)
    assert aabb_iou3d(a, b) < 1.0


def cam():
    return CameraModel.from_fov(320, 240, math.radians(87))


def test_principal_ray_projects_to_center():
    c = cam()
    px = project(c, np.array([0.0, 0.0, 2.0]))
    assert px == (c.cx, c.cy, 2.0)


def test_point_behind_camera_out_of_view():
    assert project(cam(), np.array([0.0, 0.0, -1.0])) is None


def test_backproject_principal_point():
    c = cam()
    np.testing.assert_allclose(backproject(c, c.cx, c.cy, 2.0), [0, 0, 2], atol=1e-15)


def test_backproject_formula():
    c = CameraModel(100.0, 100.0, 0.0, 0.0, 640, 480)
    np.testing.assert_allclose(backproject(c, 100.0, 0.0, 1.0), [1.0, 0.0, 1.0], atol=1e-15)


def test_backproject_rejects_nonpositive_depth():
    with pytest.raises(ValueError):
        backproject(cam(), 1.0, 1.0, 0.0)


def test_camera_rejects_non_orthonormal_rotation():
    with pytest.raises(ValueError):
        CameraModel(100, 100, 0, 0, 10, 10, rotation=np.diag([1.0, 1.0, 2.0]))


@given(st.floats(-0.6, 0.6), st.floats(-0.45, 0.45), st.floats(0.2, 30.0), st.floats(-math.pi, math.pi))
def test_projection_round_trip_with_pose(ax, ay, z, yaw):
    c = cam().with_pose(rot_z(yaw), np.array([1.0, -2.0, 0.5]))
    p_cam = np.array([ax * z, ay * z, z])
    p_world = c.camera_to_world(p_cam)
    px = project(c, p_world)
    assert px is not None
    back = c.camera_to_world(backproject(c, px.u, px.v, px.z))
    assert np.linalg.norm(back - p_world) < 1e-9


@given(st.floats(-math.pi, math.pi), st.integers(-20, 20))
def test_wrap_is_2pi_periodic(a, k):
    w = wrap_angle(a + 2 * math.pi * k)
    assert -math.pi < w <= math.pi
    assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-9)
    assert math.isclose(math.sin(w), math.sin(a), abs_tol=1e-9)


def test_wrap_pi_boundary():
    assert wrap_angle(math.pi) == pytest.approx(math.pi)
    assert wrap_angle(-math.pi) == pytest.approx(math.pi)
