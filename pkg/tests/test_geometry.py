import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from seat.errors import InvalidArgumentError
from seat.geometry import (
    Pose,
    quat_from_axis_angle,
    quat_geodesic,
    quat_multiply,
    quat_normalize,
    quat_rotate,
    quat_to_matrix,
    yaw_pitch_roll_quat,
)


def random_quat(rng):
    q = rng.normal(size=4)
    return q / np.linalg.norm(q)


def trace_angle(q1, q2):
    """Independent oracle: relative-rotation angle from the matrix trace."""
    r1 = Rotation.from_quat(q1).as_matrix()
    r2 = Rotation.from_quat(q2).as_matrix()
    rel = r1 @ r2.T
    c = np.clip((np.trace(rel) - 1.0) / 2.0, -1.0, 1.0)
    return float(np.arccos(c))


def test_geodesic_identity():
    q = np.array([0, 0, 0, 1.0])
    assert quat_geodesic(q, q) == 0.0


def test_geodesic_90deg_about_z():
    q = np.array([0, 0, np.sqrt(2) / 2, np.sqrt(2) / 2])
    assert quat_geodesic([0, 0, 0, 1], q) == pytest.approx(np.pi / 2, abs=1e-12)


def test_geodesic_matches_trace_oracle():
    rng = np.random.default_rng(7)
    for _ in range(500):
        q1, q2 = random_quat(rng), random_quat(rng)
        assert quat_geodesic(q1, q2) == pytest.approx(trace_angle(q1, q2), abs=1e-6)


def test_geodesic_sign_invariant_and_symmetric():
    rng = np.random.default_rng(8)
    for _ in range(200):
        q1, q2 = random_quat(rng), random_quat(rng)
        assert quat_geodesic(q1, -q1) <= 1e-9
        assert abs(quat_geodesic(q1, q2) - quat_geodesic(q2, q1)) <= 1e-9
        assert abs(quat_geodesic(q1, q2) - quat_geodesic(-q1, q2)) <= 1e-7


def test_geodesic_rejects_non_unit():
    with pytest.raises(InvalidArgumentError):
        quat_geodesic([0, 0, 0, 2.0], [0, 0, 0, 1.0])


def test_quat_multiply_matches_scipy():
    rng = np.random.default_rng(9)
    for _ in range(100):
        q1, q2 = random_quat(rng), random_quat(rng)
        got = quat_multiply(q1, q2)
        want = (Rotation.from_quat(q1) * Rotation.from_quat(q2)).as_quat()
        assert np.allclose(got, want) or np.allclose(got, -want)


def test_quat_rotate_matches_matrix():
    rng = np.random.default_rng(10)
    for _ in range(50):
        q = random_quat(rng)
        pts = rng.normal(size=(5, 3))
        assert np.allclose(quat_rotate(q, pts), Rotation.from_quat(q).apply(pts), atol=1e-12)
        assert np.allclose(quat_to_matrix(q), Rotation.from_quat(q).as_matrix(), atol=1e-12)


def test_canonicalization_w_nonnegative():
    q = quat_normalize([0.1, 0.2, 0.3, -0.5])
    assert q[3] >= 0
    assert np.linalg.norm(q) == pytest.approx(1.0, abs=1e-12)


def test_pose_compose_identity():
    rng = np.random.default_rng(11)
    p = Pose(rng.normal(size=3), random_quat(rng))
    assert p.compose(Pose.identity()).almost_equal(p)
    assert Pose.identity().compose(p).almost_equal(p)


def test_pose_inverse_roundtrip():
    rng = np.random.default_rng(12)
    for _ in range(100):
        p = Pose(rng.normal(size=3), random_quat(rng))
        ident = p.compose(p.inverse())
        assert np.linalg.norm(ident.p) <= 1e-9
        assert quat_geodesic(ident.q, [0, 0, 0, 1]) <= 1e-7
        ident2 = p.inverse().compose(p)
        assert np.linalg.norm(ident2.p) <= 1e-9


def test_hover_offset_along_local_z():
    # a pose tilted 90 deg about x: local z points along world -y
    snap = Pose([1, 2, 3], quat_from_axis_angle([1, 0, 0], np.pi / 2))
    hover = snap.compose(Pose([0, 0, 0.1]))
    assert np.allclose(hover.p, [1, 2 - 0.1, 3], atol=1e-12)
    assert quat_geodesic(hover.q, snap.q) <= 1e-12


def test_pose_compose_matches_matrix_product():
    rng = np.random.default_rng(13)
    for _ in range(50):
        a = Pose(rng.normal(size=3), random_quat(rng))
        b = Pose(rng.normal(size=3), random_quat(rng))
        assert np.allclose(a.compose(b).matrix(), a.matrix() @ b.matrix(), atol=1e-12)


def test_yaw_pitch_roll_order():
    rng = np.random.default_rng(14)
    for _ in range(50):
        y, p, r = rng.uniform(-np.pi, np.pi, size=3)
        got = yaw_pitch_roll_quat(y, p, r)
        want = Rotation.from_euler("ZYX", [y, p, r]).as_quat()
        assert np.allclose(got, want) or np.allclose(got, -want)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_pose_apply_associative(seed):
    rng = np.random.default_rng(seed)
    a = Pose(rng.normal(size=3), random_quat(rng))
    b = Pose(rng.normal(size=3), random_quat(rng))
    pt = rng.normal(size=3)
    assert np.allclose(a.compose(b).apply(pt), a.apply(b.apply(pt)), atol=1e-9)


def test_pose_dict_roundtrip():
    rng = np.random.default_rng(15)
    p = Pose(rng.normal(size=3), random_quat(rng))
    q = Pose.from_dict(p.to_dict())
    assert p.almost_equal(q, pos_tol=1e-12, rot_tol=1e-9)
